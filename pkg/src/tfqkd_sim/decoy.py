"""
Decoy-state parameter estimation.

Closed-form bounds on the vacuum yield, single-photon yield and single-photon
error from three total intensities u > v > w, and the linear-program upper
bounds on the photon-number yields Y_mn used by the phase-error estimate of
the protocol whose key basis is not phase randomised.

Decoy gains can be taken as measured or from the link model at the channel
that reproduces the measured signal gain (:class:`DecoyGains`).

Every bound is returned as a :class:`Bound` so that clamping is visible to the
caller instead of happening silently.
"""
import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from tfqkd_sim import linkmodel
from tfqkd_sim.core import (ConfigError, DegenerateDecoyError, DomainError,
                            EstimationFailure, Flag, InputError)
from tfqkd_sim.lp_solver import BoundedSimplex

logger = logging.getLogger(__name__)

Bound = namedtuple('Bound', ['value', 'raw', 'clamped'])


def _clamp(raw, upper=1.0):
    value = min(max(raw, 0.0), upper)
    return Bound(value=value, raw=raw, clamped=value != raw)


def _check_unit(name, value):
    if not 0.0 <= value <= 1.0:
        raise DomainError('{} = {} outside [0, 1]'.format(name, value))


@dataclass(frozen=True)
class DecoyInputs:
    """Total intensities mu_a + mu_b with the matching gains and QBERs."""
    u: float
    v: float
    w: float
    q_u: float
    q_v: float
    q_w: float
    e_u: float
    e_v: float
    e_w: float = 0.5

    def __post_init__(self):
        if not self.v > self.w >= 0:
            raise DegenerateDecoyError('Decoy intensities need v > w >= 0, got v={} w={}'.format(
                self.v, self.w))
        if not self.u > self.v:
            raise DegenerateDecoyError('Closed forms need u > v, got u={} v={}'.format(
                self.u, self.v))
        for name in ('q_u', 'q_v', 'q_w', 'e_u', 'e_v', 'e_w'):
            _check_unit(name, getattr(self, name))

    def with_qber_offset(self, offset):
        """Copy with ``offset`` added to the signal and decoy QBERs."""
        return DecoyInputs(self.u, self.v, self.w, self.q_u, self.q_v, self.q_w,
                           min(self.e_u + offset, 1.0), min(self.e_v + offset, 1.0), self.e_w)


def y0_lower(d):
    """
    Lower bound on the vacuum yield,
    (v Q_w e^w - w Q_v e^v) / (v - w).
    """
    if d.v == d.w:
        raise DegenerateDecoyError('v equals w, the vacuum bound is undefined')
    raw = (d.v * d.q_w * math.exp(d.w) - d.w * d.q_v * math.exp(d.v)) / (d.v - d.w)
    return _clamp(raw)


def y1_lower(d, y0=None):
    """
    Lower bound on the single-photon yield.

    :param d: DecoyInputs
    :param y0: vacuum bound to use, computed from ``d`` when omitted
    :rtype: Bound
    """
    u, v, w = d.u, d.v, d.w
    denominator = u * (u * v - u * w - v * v + w * w)
    if denominator == 0:
        raise DegenerateDecoyError('Zero denominator in the single-photon bound')
    if y0 is None:
        y0 = y0_lower(d).value
    numerator = u * u * d.q_v * math.exp(v) - u * u * d.q_w * math.exp(w) \
        - (v * v - w * w) * (d.q_u * math.exp(u) - y0)
    bound = _clamp(numerator / denominator)
    if bound.clamped:
        logger.warning('Single-photon yield bound {:.3e} clamped to {}'.format(
            bound.raw, bound.value))
    return bound


def e1_upper(d, y1):
    """
    Upper bound on the single-photon error rate, clamped to [0, 0.5].

    :raises EstimationFailure: when the single-photon yield bound is zero
    """
    if d.v == d.w:
        raise DegenerateDecoyError('v equals w, the error bound is undefined')
    if y1 <= 0:
        raise EstimationFailure('Single-photon yield bound is zero, no key can be distilled')
    raw = (d.e_v * d.q_v * math.exp(d.v) - d.e_w * d.q_w * math.exp(d.w)) / ((d.v - d.w) * y1)
    return _clamp(raw, upper=0.5)


@dataclass(frozen=True)
class DecoyBounds:
    y0: float
    y1: float
    e1: float
    flags: tuple = ()


def estimate_bounds(d):
    """y0, y1 and e1 together; clamping shows up in ``flags``."""
    flags = []
    y0 = y0_lower(d)
    if y0.clamped:
        flags.append(Flag('y0_clamped', '{:.3e}'.format(y0.raw)))
    y1 = y1_lower(d, y0.value)
    if y1.clamped:
        flags.append(Flag('y1_clamped', '{:.3e}'.format(y1.raw)))
    e1 = e1_upper(d, y1.value)
    if e1.clamped:
        flags.append(Flag('e1_clamped', '{:.3e}'.format(e1.raw)))
    return DecoyBounds(y0=y0.value, y1=y1.value, e1=e1.value, flags=tuple(flags))


def decoy_inputs_from_tallies(tallies, intensities, basis=None):
    """
    Closed-form inputs from symmetric settings uu, vv and ww of a tally set.

    Q_w is the measured ww gain when present, otherwise the vacuum gain Q0.
    """
    totals = intensities.totals()
    q_u = tallies.gain('u', 'u', basis)
    q_v = tallies.gain('v', 'v', basis)
    q_w = tallies.gain('w', 'w', basis)
    if q_w is None:
        q_w = tallies.vacuum_gain
    missing = [name for name, q in (('uu', q_u), ('vv', q_v), ('ww or Q0', q_w)) if q is None]
    if missing:
        raise InputError('Tallies lack the gains {}'.format(', '.join(missing)))
    e_u = tallies.qber('u', 'u', basis)
    e_v = tallies.qber('v', 'v', basis)
    if e_u is None or e_v is None:
        raise InputError('Tallies lack the uu/vv QBERs')
    e_w = tallies.qber('w', 'w', basis)
    return DecoyInputs(u=totals.u, v=totals.v, w=totals.w, q_u=q_u, q_v=q_v, q_w=q_w,
                       e_u=e_u, e_v=e_v, e_w=0.5 if e_w is None else e_w)


class DecoyGains(Enum):
    """Source of the decoy-setting gains fed to the bounds."""
    MEASURED = 'measured'
    FITTED = 'fitted'

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ConfigError('Unknown decoy gain source {!r}, expected one of {}'.format(
                name, ', '.join(s.value for s in cls)))


def fitted_decoy_inputs(d, det, channel=None):
    """
    Inputs whose decoy gain Q_v is the link-model gain at the channel fitted
    to the signal gain Q_u. Q_w, the QBERs and Q_u itself are kept.

    :param d: DecoyInputs with total intensities split evenly between users
    :param det: DetectorParams of the model
    :return: (DecoyInputs, fitted ChannelParams)
    """
    ch = linkmodel.fit_channel(d.q_u, d.u / 2.0, d.u / 2.0, det, channel)
    q_v = linkmodel.expected_gain(d.v / 2.0, d.v / 2.0, ch, det)
    logger.debug('Decoy gain {:.4e} replaced by {:.4e} at {:.2f} dB'.format(
        d.q_v, q_v, ch.total_loss_db))
    return replace(d, q_v=q_v), ch


def fitted_gain_table(gain_table, intensities, det, anchor=('u', 'u'), channel=None):
    """
    Model gains of every pair of ``gain_table`` at the channel fitted to the
    gain of the ``anchor`` pair.

    :param intensities: {label: per-user mean photon number}
    :return: ({(label_a, label_b): gain}, fitted ChannelParams)
    :raises InputError: when the anchor pair is missing
    """
    found = _lookup(gain_table, *anchor)
    if found is None:
        raise InputError('Gain table lacks the anchor pair {}{}'.format(*anchor))
    la, lb, q = found
    ch = linkmodel.fit_channel(q, intensities[la], intensities[lb], det, channel)
    table = {(a, b): linkmodel.expected_gain(intensities[a], intensities[b], ch, det)
             for a, b in gain_table}
    return table, ch


@dataclass(frozen=True)
class YieldMatrixBounds:
    upper: np.ndarray
    y_cut: int
    n_cut: int
    flags: tuple = field(default=())

    def __post_init__(self):
        if self.upper.shape != (self.n_cut + 1, self.n_cut + 1):
            raise DomainError('Yield matrix shape {} does not match n_cut {}'.format(
                self.upper.shape, self.n_cut))
        if np.any(self.upper < 0) or np.any(self.upper > 1):
            raise DomainError('Yield bounds must lie in [0, 1]')

    def g(self, m, n):
        """Yield bound entering the phase-error sum, 1 beyond the cut."""
        if m + n >= self.y_cut:
            return 1.0
        return float(self.upper[m, n])


def _required_pairs(labels):
    return list(combinations_with_replacement(sorted(labels), 2))


def _lookup(gain_table, la, lb):
    if (la, lb) in gain_table:
        return la, lb, gain_table[(la, lb)]
    if (lb, la) in gain_table:
        return lb, la, gain_table[(lb, la)]
    return None


def yield_matrix_upper_bounds(gain_table, intensities, n_cut, y_cut=5):
    """
    Upper bounds on Y_mn for m + n < y_cut by linear programming.

    Each measured setting pair gives one constraint
    sum_jk P(j; mu_A) P(k; mu_B) Y_jk + s = Q with slack s in [0, tail],
    where the tail is the photon-number mass beyond ``n_cut``; the yields lie
    in [0, 1].

    :param gain_table: {(label_alice, label_bob): phase-randomised gain}
    :param intensities: {label: per-user mean photon number}
    :param n_cut: photon-number truncation per user
    :param y_cut: entries with m + n >= y_cut are not optimised (set to 1)
    :rtype: YieldMatrixBounds
    :raises InputError: when a setting combination is missing
    :raises LpInfeasibleError: when the gains are mutually inconsistent
    """
    labels = sorted(intensities)
    missing = [la + lb for la, lb in _required_pairs(labels) if _lookup(gain_table, la, lb) is None]
    if missing:
        raise InputError('Gain table lacks the intensity combinations {}'.format(
            ', '.join(missing)))
    if n_cut < 0:
        raise DomainError('n_cut must be >= 0')

    photons = np.arange(n_cut + 1)
    rows, rhs, tails, names = [], [], [], []
    for (la, lb), q in sorted(gain_table.items()):
        if la not in intensities or lb not in intensities:
            raise InputError('Gain table uses unknown label in {}{}'.format(la, lb))
        p_a = poisson.pmf(photons, intensities[la])
        p_b = poisson.pmf(photons, intensities[lb])
        row = np.outer(p_a, p_b).ravel()
        rows.append(row)
        rhs.append(q)
        tails.append(max(0.0, 1.0 - row.sum()))
        names.append('q_{}{}'.format(la, lb))
    a = np.asarray(rows)
    n_yields = (n_cut + 1) ** 2
    m = len(rows)
    a_eq = np.hstack([a, np.eye(m)])
    lower = np.zeros(n_yields + m)
    upper = np.concatenate([np.ones(n_yields), tails])
    simplex = BoundedSimplex(a_eq, rhs, lower, upper, row_names=names)
    simplex.check_feasible()

    bounds = np.ones((n_cut + 1, n_cut + 1))
    flags = []
    for mm in range(min(y_cut, n_cut + 1)):
        for nn in range(min(y_cut - mm, n_cut + 1)):
            objective = np.zeros(n_yields + m)
            objective[mm * (n_cut + 1) + nn] = 1.0
            result = simplex.maximize(objective)
            value = result.objective
            if value > 1.0 or value < 0.0:
                flags.append(Flag('yield_clamped', 'Y{}{}={:.3e}'.format(mm, nn, value)))
            bounds[mm, nn] = min(max(value, 0.0), 1.0)
            logger.debug('Y_{}{} <= {:.4e} ({} pivots)'.format(mm, nn, bounds[mm, nn],
                                                              result.iterations))
    return YieldMatrixBounds(upper=bounds, y_cut=y_cut, n_cut=n_cut, flags=tuple(flags))


def _coherent_coefficients(mu, n_cut):
    k = np.arange(n_cut + 1)
    log_c = -mu / 2.0 + 0.5 * (k * math.log(mu) - gammaln(k + 1)) if mu > 0 \
        else np.where(k == 0, 0.0, -np.inf)
    return np.exp(log_c)


def phase_error_curty(bounds, mu, q_z, y_cut=None, n_cut=None):
    """
    Upper bound on the phase error rate of the key basis,

        e1x = (1/Q^z) sum_j [ sum_{m,n} c_m^(j) c_n^(j) sqrt(g_mn) ]^2,

    with c_k^(j) = e^{-mu/2} mu^{k/2} / sqrt(k!) for k of parity j and zero
    otherwise, and g_mn the LP bound below the cut and 1 above it.

    :param bounds: YieldMatrixBounds
    :param mu: per-user signal intensity of the key-basis pulses
    :param q_z: key-basis gain
    :rtype: Bound
    """
    if q_z is None or q_z <= 0:
        raise EstimationFailure('Key-basis gain is zero, the phase error is undefined')
    y_cut = bounds.y_cut if y_cut is None else y_cut
    n_cut = bounds.n_cut if n_cut is None else n_cut
    if n_cut > bounds.n_cut:
        raise DomainError('n_cut {} exceeds the solved matrix size {}'.format(n_cut, bounds.n_cut))
    coeff = _coherent_coefficients(mu, n_cut)
    idx = np.arange(n_cut + 1)
    g = np.array([[1.0 if m + n >= y_cut else bounds.upper[m, n] for n in idx] for m in idx])
    root_g = np.sqrt(g)
    total = 0.0
    for parity in (0, 1):
        c = np.where(idx % 2 == parity, coeff, 0.0)
        total += float(c.dot(root_g).dot(c)) ** 2
    bound = _clamp(total / q_z, upper=0.5)
    if bound.clamped:
        logger.warning('Phase error bound {:.4f} clamped to {}'.format(bound.raw, bound.value))
    return bound
