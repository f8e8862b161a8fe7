"""
Secret key rates of the three protocol variants and the repeaterless bound.

Each ``skr_*`` function returns a :class:`KeyRateReport`. A negative raw rate
is reported as zero with a ``negative_rate`` flag, and an estimation failure
upstream (zero single-photon yield, zero key-basis gain) becomes a zero rate
with a ``reason`` instead of an exception. Missing input data still raises.

:docformat: reStructuredText
"""
import logging
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from tfqkd_sim.core import (ALICE, BOB, NOT_SENT, ConfigError, DomainError,
                            EstimationFailure, Flag, InputError, KeyRateReport,
                            Variant, binary_entropy, db_to_transmittance)
from tfqkd_sim import decoy
from tfqkd_sim import linkmodel

logger = logging.getLogger(__name__)

REALISTIC_DETECTION_EFFICIENCY = 0.35
REALISTIC_EXTRA_LOSS_DB = 3.0


def slice_misalignment(m_slices):
    """
    Intrinsic QBER of phase slicing with ``m_slices`` sectors.

    The phase difference of a kept pair is taken as uniform in
    [-2 pi/M, 2 pi/M]; averaging sin^2(x/2) over it gives
    1/2 - sin(2 pi/M) / (4 pi/M), 1.275 % for M = 16.
    """
    if m_slices < 2:
        raise DomainError('At least two phase slices are needed, got {}'.format(m_slices))
    width = 2 * math.pi / m_slices
    return 0.5 - math.sin(width) / (2 * width)


@dataclass(frozen=True)
class RateParams:
    f_ec: float = 1.15
    m_slices: int = 16
    epsilon: float = 0.078
    clock_rate_hz: float = 1e9
    e_m: float = None

    def __post_init__(self):
        if self.f_ec < 1:
            raise ConfigError('f_ec must be >= 1, got {}'.format(self.f_ec))
        if self.m_slices < 2 or self.m_slices % 2:
            raise ConfigError('m_slices must be even and >= 2, got {}'.format(self.m_slices))
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError('epsilon must lie in [0, 1], got {}'.format(self.epsilon))
        if self.clock_rate_hz <= 0:
            raise ConfigError('clock_rate_hz must be positive')
        expected = slice_misalignment(self.m_slices)
        if self.e_m is None:
            object.__setattr__(self, 'e_m', expected)
        elif not math.isclose(self.e_m, expected, rel_tol=1e-3, abs_tol=1e-6):
            raise ConfigError('e_m {} is inconsistent with {} slices (expected {:.5f})'.format(
                self.e_m, self.m_slices, expected))

    @property
    def m_prime(self):
        return self.m_slices // 2

    @classmethod
    def from_protocol(cls, cfg, det):
        return cls(f_ec=cfg.f_ec, m_slices=cfg.phase_slices_m, epsilon=cfg.epsilon,
                   clock_rate_hz=det.clock_rate_hz)


def skc0_per_gate(eta):
    """Repeaterless capacity -log2(1 - eta) in bits per channel use."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError('Transmittance {} outside [0, 1]'.format(eta))
    if eta >= 1.0:
        return float('inf')
    return -math.log1p(-eta) / math.log(2)


def skc0_ideal(total_loss_db, clock_rate_hz=1e9):
    """Ideal repeaterless secret key capacity in bit/s."""
    return skc0_per_gate(db_to_transmittance(total_loss_db)) * clock_rate_hz


def skc0_realistic(total_loss_db, clock_rate_hz=1e9,
                   det_efficiency=REALISTIC_DETECTION_EFFICIENCY,
                   extra_loss_db=REALISTIC_EXTRA_LOSS_DB):
    """
    Repeaterless bound for a receiver with finite detection efficiency.

    :param det_efficiency: total detection efficiency of the point-to-point receiver
    :param extra_loss_db: additional loss, 3 dB for a single detector
    :return: capacity at the effective transmittance, bit/s
    """
    eta = db_to_transmittance(total_loss_db) * det_efficiency * db_to_transmittance(extra_loss_db)
    return skc0_per_gate(eta) * clock_rate_hz


def _report(variant, raw, gross, p, loss_db=None, skc0_loss_db=None, flags=(), reason=None,
            **bounds):
    flags = list(flags)
    rate = raw
    if raw < 0:
        flags.append(Flag('negative_rate', '{:.3e}'.format(raw)))
        rate = 0.0
    rate = min(rate, 1.0)
    ideal = realistic = ratio = None
    if skc0_loss_db is None:
        skc0_loss_db = loss_db
    if skc0_loss_db is not None:
        ideal = skc0_ideal(skc0_loss_db, p.clock_rate_hz)
        realistic = skc0_realistic(skc0_loss_db, p.clock_rate_hz)
        ratio = rate * p.clock_rate_hz / ideal if ideal > 0 else None
    return KeyRateReport(variant=variant, skr_bits_per_gate=rate,
                         skr_bits_per_second=rate * p.clock_rate_hz,
                         skc0_ideal_bps=ideal, skc0_realistic_bps=realistic,
                         supremacy_ratio=ratio, loss_db=loss_db, raw_bits_per_gate=raw,
                         gross_bits_per_gate=gross, clock_rate_hz=p.clock_rate_hz,
                         flags=tuple(flags), reason=reason, **bounds)


def _failed(variant, p, error, loss_db=None, skc0_loss_db=None):
    logger.warning('{} key rate is zero at {} dB: {}'.format(variant.value, loss_db, error))
    return _report(variant, 0.0, 0.0, p, loss_db, skc0_loss_db,
                   flags=(Flag('estimation_failure', None),), reason=str(error))


def skr_original(d, p, bounds=None, loss_db=None, skc0_loss_db=None, add_misalignment=True):
    """
    Rate of the original protocol with phase slicing,

        R' = { Q1 [1 - h(e1)] - f Q_u h(E_u) } / M',   Q1 = u e^{-u} y1.

    The slice misalignment E_M is added to the measured signal and decoy
    QBERs before the bounds are taken.

    :param d: DecoyInputs with total intensities
    :param p: RateParams
    :param bounds: precomputed DecoyBounds for the shifted inputs
    :rtype: KeyRateReport
    """
    variant = Variant.ORIGINAL
    shifted = d.with_qber_offset(p.e_m) if add_misalignment else d
    try:
        if bounds is None:
            bounds = decoy.estimate_bounds(shifted)
        if bounds.y1 <= 0:
            raise EstimationFailure('Single-photon yield bound is zero')
    except EstimationFailure as e:
        return _failed(variant, p, e, loss_db, skc0_loss_db)
    q1 = d.u * math.exp(-d.u) * bounds.y1
    gross = q1 * (1.0 - binary_entropy(bounds.e1)) / p.m_prime
    leak = p.f_ec * d.q_u * binary_entropy(shifted.e_u) / p.m_prime
    return _report(variant, gross - leak, gross, p, loss_db, skc0_loss_db, flags=bounds.flags,
                   y0_lower=bounds.y0, y1_lower=bounds.y1, e1_upper=bounds.e1)


SendNotSendGains = namedtuple('SendNotSendGains', ['q_u', 'q_alice', 'q_bob', 'q_0'])


def send_not_send_gains(tallies):
    """
    Key-basis gains of the send-not-send protocol: both send, only Alice,
    only Bob and nobody. Z-basis tallies are preferred over merged ones.
    """
    q_u = tallies.gain('u', 'u', 'Z')
    if q_u is None:
        q_u = tallies.gain('u', 'u')
    q_alice = tallies.single_arm_gains.get((ALICE, 'u'), tallies.gain('u', NOT_SENT, 'Z'))
    q_bob = tallies.single_arm_gains.get((BOB, 'u'), tallies.gain(NOT_SENT, 'u', 'Z'))
    q_0 = tallies.vacuum_gain
    if q_0 is None:
        q_0 = tallies.gain(NOT_SENT, NOT_SENT, 'Z')
    missing = [name for name, q in (('Q_u', q_u), ('Q_u_a', q_alice), ('Q_u_b', q_bob),
                                    ('Q_0', q_0)) if q is None]
    if missing:
        raise InputError('Send-not-send rate needs the gains {}'.format(', '.join(missing)))
    return SendNotSendGains(q_u, q_alice, q_bob, q_0)


def skr_send_not_send(tallies, bounds, p, intensities, loss_db=None, skc0_loss_db=None):
    """
    Rate of the send-not-send protocol,

        R'' = Q0z + Q1z [1 - h(e1)] - f Qz h(Ez)

    with Qz the key-basis gain mixed over who sends, Ez its error rate and
    Q0z / Q1z the vacuum and single-photon contributions built from the
    decoy bounds. No slice misalignment enters the test basis.

    :param tallies: MeasurementTallies with Q_u, single-arm gains and Q_0
    :param bounds: DecoyBounds, or None when estimation already failed
    :param intensities: per-user IntensityTriple; u_a = u_b = intensities.u
    :rtype: KeyRateReport
    :raises InputError: when a single-arm or vacuum gain is missing
    """
    variant = Variant.SEND_NOT_SEND
    gains = send_not_send_gains(tallies)
    eps = p.epsilon
    if eps in (0.0, 1.0):
        return _failed(variant, p, EstimationFailure(
            'send probability {} leaves no randomness in the key basis'.format(eps)),
            loss_db, skc0_loss_db)
    if bounds is None or bounds.y1 <= 0:
        return _failed(variant, p, EstimationFailure('Single-photon yield bound is zero'),
                       loss_db, skc0_loss_db)
    u_a = u_b = intensities.u
    u = u_a + u_b
    both = eps * eps
    one = eps * (1.0 - eps)
    none = (1.0 - eps) ** 2
    q_z = both * gains.q_u + one * (gains.q_alice + gains.q_bob) + none * gains.q_0
    if q_z <= 0:
        return _failed(variant, p, EstimationFailure('Key-basis gain is zero'),
                       loss_db, skc0_loss_db)
    e_z = min((both * gains.q_u + none * gains.q_0) / q_z, 1.0)
    q1_z = (one * (u_a * math.exp(-u_a) + u_b * math.exp(-u_b)) + both * u * math.exp(-u)) \
        * bounds.y1
    q0_z = (none + one * (math.exp(-u_a) + math.exp(-u_b)) + both * math.exp(-u)) * bounds.y0
    gross = q0_z + q1_z * (1.0 - binary_entropy(bounds.e1))
    leak = p.f_ec * q_z * binary_entropy(e_z)
    logger.debug('Send-not-send Qz={:.4e} Ez={:.4f} Q0z={:.3e} Q1z={:.3e}'.format(
        q_z, e_z, q0_z, q1_z))
    return _report(variant, gross - leak, gross, p, loss_db, skc0_loss_db, flags=bounds.flags,
                   y0_lower=bounds.y0, y1_lower=bounds.y1, e1_upper=bounds.e1)


def skr_curty(q_z, e_z, e1x, p, loss_db=None, skc0_loss_db=None, flags=()):
    """
    Rate of the protocol without key-basis phase randomisation,
    R''' = Qz [1 - h(e1x)] - f Qz h(Ez).
    """
    variant = Variant.CURTY
    if not 0.0 <= e_z <= 1.0:
        raise DomainError('Key-basis QBER {} outside [0, 1]'.format(e_z))
    e1x = min(max(e1x, 0.0), 0.5)
    gross = q_z * (1.0 - binary_entropy(e1x))
    leak = p.f_ec * q_z * binary_entropy(e_z)
    return _report(variant, gross - leak, gross, p, loss_db, skc0_loss_db, flags=flags,
                   e1x_upper=e1x)


def skr_curty_from_gains(gain_table, intensities, q_z, e_z, p, n_cut=20, y_cut=5,
                         loss_db=None, skc0_loss_db=None):
    """
    Yield-matrix LP, phase-error bound and rate in one call.

    :param gain_table: {(label_a, label_b): phase-randomised gain} for all six pairs
    :param intensities: per-user IntensityTriple
    :raises InputError: when a pair is missing
    """
    levels = intensities.as_dict()
    try:
        bounds = decoy.yield_matrix_upper_bounds(gain_table, levels, n_cut, y_cut)
        e1x = decoy.phase_error_curty(bounds, intensities.u, q_z)
    except EstimationFailure as e:
        return _failed(Variant.CURTY, p, e, loss_db, skc0_loss_db)
    flags = list(bounds.flags)
    if e1x.clamped:
        flags.append(Flag('e1x_clamped', '{:.4f}'.format(e1x.raw)))
    return _log_supremacy(skr_curty(q_z, e_z, e1x.value, p, loss_db, skc0_loss_db, flags))


def _log_supremacy(report):
    if report.skr_bits_per_second > 0 and report.supremacy_ratio is not None \
            and report.supremacy_ratio > 1:
        logger.info('{} beats the ideal repeaterless bound at {} dB (ratio {:.2f})'.format(
            report.variant.value, report.loss_db, report.supremacy_ratio))
    return report


SupremacyRow = namedtuple('SupremacyRow', [
    'loss_db', 'variant', 'skr_bps', 'skc0_ideal_bps', 'skc0_realistic_bps',
    'ratio_ideal', 'ratio_realistic', 'beats_ideal', 'beats_realistic'])


def supremacy_report(reports):
    """
    Compare every report with the ideal and realistic repeaterless bounds.

    :param reports: KeyRateReports with ``loss_db`` set; variants must share the loss grid
    :return: list of SupremacyRow ordered by variant then loss
    :raises InputError: when a report lacks its loss or the grids differ
    """
    grids = {}
    for r in reports:
        if r.loss_db is None:
            raise InputError('Supremacy comparison needs the loss of every report')
        grids.setdefault(r.variant, []).append(r.loss_db)
    distinct = {tuple(sorted(g)) for g in grids.values()}
    if len(distinct) > 1:
        raise InputError('Reports of different protocols do not share a loss grid')

    rows = []
    for r in sorted(reports, key=lambda rep: (list(Variant).index(rep.variant), rep.loss_db)):
        clock = r.clock_rate_hz or 1e9
        ideal = r.skc0_ideal_bps if r.skc0_ideal_bps is not None else skc0_ideal(r.loss_db, clock)
        realistic = r.skc0_realistic_bps if r.skc0_realistic_bps is not None \
            else skc0_realistic(r.loss_db, clock)
        rate = r.skr_bits_per_second
        ratio_ideal = rate / ideal if ideal > 0 else None
        ratio_realistic = rate / realistic if realistic > 0 else None
        positive = rate > 0
        rows.append(SupremacyRow(
            loss_db=r.loss_db, variant=r.variant.value, skr_bps=rate,
            skc0_ideal_bps=ideal, skc0_realistic_bps=realistic,
            ratio_ideal=ratio_ideal, ratio_realistic=ratio_realistic,
            beats_ideal=bool(positive and ratio_ideal is not None and ratio_ideal > 1),
            beats_realistic=bool(positive and ratio_realistic is not None and ratio_realistic > 1)))
    return rows


def analytic_point(loss_db, cfg, det, fb, p=None, channel=None):
    """
    Key rate predicted by the link model at one total loss.

    :param cfg: ProtocolConfig, its variant selects the rate formula
    :param det: DetectorParams
    :param fb: FeedbackParams
    :param p: RateParams, derived from ``cfg`` and ``det`` when omitted
    :rtype: KeyRateReport
    """
    if p is None:
        p = RateParams.from_protocol(cfg, det)
    point = linkmodel.sweep_loss(cfg, [loss_db], det, fb, channel)[0]
    tallies = point.tallies()
    if cfg.variant is Variant.CURTY:
        gain_table = {(la, lb): q for (la, lb, basis), q in tallies.gains.items() if basis == 'X'}
        q_z = tallies.gain('u', 'u', 'Z')
        e_z = tallies.qber('u', 'u', 'Z')
        return skr_curty_from_gains(gain_table, cfg.intensities, q_z, e_z, p,
                                    n_cut=cfg.n_cut, y_cut=cfg.y_cut, loss_db=loss_db)
    d = decoy.decoy_inputs_from_tallies(tallies, cfg.intensities, basis='X')
    if cfg.variant is Variant.ORIGINAL:
        return skr_original(d, p, loss_db=loss_db)
    try:
        bounds = decoy.estimate_bounds(d)
    except EstimationFailure as e:
        logger.debug('Decoy bounds failed at {} dB: {}'.format(loss_db, e))
        bounds = None
    return skr_send_not_send(tallies, bounds, p, cfg.intensities, loss_db=loss_db)


def crossovers(losses, rates, bound):
    """
    Losses where ``rates`` crosses ``bound`` by linear interpolation in log space.

    :return: list of (loss_db, direction) with direction +1 when the rate
        rises above the bound and -1 when it falls below
    """
    losses = np.asarray(losses, dtype=float)
    with np.errstate(divide='ignore'):
        diff = np.log10(np.maximum(np.asarray(rates, dtype=float), 1e-300)) \
            - np.log10(np.asarray(bound, dtype=float))
    points = []
    for i in range(len(losses) - 1):
        if np.sign(diff[i]) != np.sign(diff[i + 1]) and diff[i] != diff[i + 1]:
            t = diff[i] / (diff[i] - diff[i + 1])
            loss = losses[i] + t * (losses[i + 1] - losses[i])
            points.append((float(loss), 1 if diff[i + 1] > diff[i] else -1))
    return points
