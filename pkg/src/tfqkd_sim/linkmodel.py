"""
Closed-form expected gain and QBER of the twin-field link.

The interference at Charlie is treated as a classical field with Poissonian
detection: the D1 port sees the intensity

    I(theta) = eta_C |sqrt(mu_a eta_a) + sqrt(mu_b eta_b) e^{i theta}|^2 / 2

and clicks with probability 1 - (1 - p_noise) exp(-I). Phase-randomised gains
average this over theta on a uniform grid, which is exact to machine precision
for a periodic integrand with a few hundred nodes.

The QBER model adds three contributions: an optical floor from the finite
visibility, random outcomes of noise clicks and a persistent misalignment left
by the shot-noise limited phase feedback on the D3 reference counts.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from tfqkd_sim.core import (ALICE, BOB, NOT_SENT, ChannelParams, ConfigError,
                            DomainError, MeasurementTallies, Variant)

logger = logging.getLogger(__name__)

PHASE_NODES = 256
MAX_FIT_LOSS_DB = 200.0


class Mode(Enum):
    SINGLE_ARM_A = 'single-arm-a'
    SINGLE_ARM_B = 'single-arm-b'
    DOUBLE = 'double'


@dataclass(frozen=True)
class QberBreakdown:
    optical: float
    dark: float
    feedback: float
    total: float

    def __post_init__(self):
        for name in ('optical', 'dark', 'feedback', 'total'):
            if getattr(self, name) < 0:
                raise DomainError('QBER component {} is negative'.format(name))

    def as_dict(self):
        return {'optical': self.optical, 'dark': self.dark,
                'feedback': self.feedback, 'total': self.total}


@dataclass(frozen=True)
class FeedbackParams:
    drift_rate_rad_per_s: float = 0.7
    correction_interval_s: float = 0.1
    reference_duty: float = 0.5
    misalignment_coefficient: float = 0.7
    opll_phase_variance_rad2: float = 7.53e-3
    reference_intensity: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.reference_duty < 1.0:
            raise ConfigError('reference_duty must lie in (0, 1), got {}'.format(
                self.reference_duty))
        for name in ('drift_rate_rad_per_s', 'correction_interval_s',
                     'misalignment_coefficient', 'opll_phase_variance_rad2',
                     'reference_intensity'):
            if getattr(self, name) < 0:
                raise ConfigError('{} must be >= 0'.format(name))

    def reference_gate_rate(self, det):
        """Reference pulses per second interleaved with the encoding gates."""
        return det.clock_rate_hz * self.reference_duty / (1.0 - self.reference_duty)

    def window_counts(self, channel, det):
        """
        Expected D3 counts (c0, c1) over one correction interval.

        The reference pulses of both users have equal intensity, so c1 equals
        the interfering signal counts and c0 adds the noise clicks on top.
        """
        n_ref = self.reference_gate_rate(det) * self.correction_interval_s
        noise = det.noise_click_prob
        gain = expected_gain(self.reference_intensity, self.reference_intensity,
                             channel, det, Mode.DOUBLE)
        signal = max(gain - noise, 0.0) * n_ref
        return signal + noise * n_ref, signal


def _field_intensity(mu_a, mu_b, eta_a, eta_b, eta_c, theta):
    amplitude = math.sqrt(mu_a * eta_a) + math.sqrt(mu_b * eta_b) * np.exp(1j * theta)
    return eta_c * np.abs(amplitude) ** 2 / 2.0


def expected_gain(mu_a, mu_b, channel, det, mode=Mode.DOUBLE, nodes=PHASE_NODES):
    """
    Expected detections per encoding gate at D1.

    :param mu_a: Alice's mean photon number per pulse
    :param mu_b: Bob's mean photon number per pulse
    :param channel: ChannelParams of the link
    :param det: DetectorParams of Charlie's station
    :param mode: which users send (single arm modes zero the other flux)
    :param nodes: quadrature nodes over the relative phase
    :return: phase-averaged gain
    """
    if mu_a < 0 or mu_b < 0:
        raise DomainError('Mean photon numbers must be >= 0, got {} and {}'.format(mu_a, mu_b))
    if mode is Mode.SINGLE_ARM_A:
        mu_b = 0.0
    elif mode is Mode.SINGLE_ARM_B:
        mu_a = 0.0
    eta_a, eta_b = channel.arm_transmittances()
    theta = 2 * math.pi * np.arange(nodes) / nodes
    intensity = _field_intensity(mu_a, mu_b, eta_a, eta_b, channel.charlie_efficiency, theta)
    gain = 1.0 - (1.0 - det.noise_click_prob) * np.exp(-intensity)
    return float(np.mean(gain))


def expected_encoded_gain(mu_a, mu_b, channel, det):
    """D1 gain of phase-aligned pulses averaged over equal and opposite bits."""
    eta_a, eta_b = channel.arm_transmittances()
    theta = np.array([0.0, math.pi])
    intensity = _field_intensity(mu_a, mu_b, eta_a, eta_b, channel.charlie_efficiency, theta)
    return float(np.mean(1.0 - (1.0 - det.noise_click_prob) * np.exp(-intensity)))


def at_loss(channel, loss_db):
    """Copy of ``channel`` at another total loss, asymmetry clipped to fit."""
    return replace(channel, total_loss_db=float(loss_db),
                   asymmetry_db=max(-loss_db, min(loss_db, channel.asymmetry_db)))


def fit_channel(gain, mu_a, mu_b, det, channel=None, max_loss_db=MAX_FIT_LOSS_DB):
    """
    Channel at which the phase-averaged model gain of (mu_a, mu_b) equals ``gain``.

    Only the total loss is varied; asymmetry and station efficiency come from
    ``channel``. Gains of other settings taken at the fitted channel are
    consistent with the measured one through the link model.

    :param gain: measured gain per gate
    :param channel: template ChannelParams, symmetric with default efficiency when omitted
    :rtype: ChannelParams
    :raises DomainError: when no loss in [0, max_loss_db] reproduces ``gain``
    """
    if channel is None:
        channel = ChannelParams(total_loss_db=0.0)

    def excess(loss):
        return expected_gain(mu_a, mu_b, at_loss(channel, loss), det) - gain

    high, low = excess(0.0), excess(max_loss_db)
    if high < 0 or low > 0:
        raise DomainError('Gain {:.4e} of ({}, {}) is outside the model range [{:.4e}, {:.4e}]'
                          .format(gain, mu_a, mu_b, low + gain, high + gain))
    loss = brentq(excess, 0.0, max_loss_db, xtol=1e-9)
    logger.debug('Gain {:.4e} of ({}, {}) fitted at {:.3f} dB'.format(gain, mu_a, mu_b, loss))
    return at_loss(channel, loss)


def d3_counts(phase_offset, c0, c1):
    """
    Counts at the D3 reference detector, C = C0 + C1 (1 - cos dtheta).

    Minimum C0 at the constructive point, C0 + 2 C1 at the antifringe and
    C0 + C1 at the quadrature lock point.
    """
    if np.any(np.asarray(c0) < 0) or np.any(np.asarray(c1) < 0):
        raise DomainError('D3 count parameters must be >= 0')
    counts = c0 + c1 * (1.0 - np.cos(phase_offset))
    return float(counts) if np.ndim(counts) == 0 else counts


def feedback_phase_error(counts):
    """Shot-noise limited phase estimation error 2/sqrt(C) in radians."""
    if counts is None or counts <= 0:
        raise DomainError('Feedback starved: {} counts per correction window'.format(counts))
    return 2.0 / math.sqrt(counts)


def expected_qber(mu, channel, det, fb):
    """
    QBER of the phase-matched signal events with total intensity ``mu``.

    :param mu: mu_a + mu_b, split evenly between the users
    :rtype: QberBreakdown
    """
    optical = (1.0 - det.visibility) / 2.0 + det.modulation_error
    noise = det.noise_click_prob
    signal = max(expected_gain(mu / 2.0, mu / 2.0, channel, det) - noise, 0.0)
    dark = noise / (2.0 * (signal + noise)) if signal + noise > 0 else 0.0

    feedback = 0.0
    if fb.misalignment_coefficient > 0:
        c0, c1 = fb.window_counts(channel, det)
        counts = d3_counts(math.pi / 2, c0, c1)
        if counts > 0:
            theta_m = fb.misalignment_coefficient * feedback_phase_error(counts)
            feedback = math.sin(theta_m / 2.0) ** 2
        else:
            logger.warning('No D3 counts at {} dB, feedback cannot lock'.format(
                channel.total_loss_db))
            feedback = 0.5
    return QberBreakdown(optical=optical, dark=dark, feedback=feedback,
                         total=optical + dark + feedback)


@dataclass(frozen=True)
class SweepPoint:
    loss_db: float
    gains: dict
    qbers: dict
    single_arm_gains: dict = field(default_factory=dict)
    vacuum_gain: float = None

    def tallies(self):
        """Model tallies shaped like measured data (QBER totals only)."""
        return MeasurementTallies(
            gains=dict(self.gains),
            qbers={key: b.total for key, b in self.qbers.items()},
            single_arm_gains=dict(self.single_arm_gains),
            vacuum_gain=self.vacuum_gain)


def _combos(variant):
    if variant is Variant.CURTY:
        return [('u', 'u'), ('v', 'v'), ('w', 'w'), ('u', 'v'), ('u', 'w'), ('v', 'w')]
    return [('u', 'u'), ('v', 'v'), ('w', 'w')]


def sweep_loss(cfg, grid, det, fb, channel=None):
    """
    Model gains and QBERs over a grid of total losses.

    :param cfg: ProtocolConfig selecting the variant and intensities
    :param grid: increasing list of total losses in dB
    :param channel: template for asymmetry and station efficiency
    :return: list of SweepPoint, one per grid value
    """
    grid = list(grid)
    if not grid:
        raise ConfigError('Loss grid is empty')
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError('Loss grid must be strictly increasing')
    if channel is None:
        channel = ChannelParams(total_loss_db=0.0)
    mu = cfg.intensities
    points = []
    for loss in grid:
        ch = at_loss(channel, loss)
        gains, qbers = {}, {}
        for la, lb in _combos(cfg.variant):
            gains[(la, lb, 'X')] = expected_gain(mu.value(la), mu.value(lb), ch, det)
        for label in ('u', 'v'):
            qbers[(label, label, 'X')] = expected_qber(2 * mu.value(label), ch, det, fb)
        qbers[('w', 'w', 'X')] = QberBreakdown(0.0, 0.5, 0.0, 0.5)
        single = {}
        vacuum = None
        if cfg.variant is Variant.SEND_NOT_SEND:
            single[(ALICE, 'u')] = expected_gain(mu.u, 0.0, ch, det, Mode.SINGLE_ARM_A)
            single[(BOB, 'u')] = expected_gain(0.0, mu.u, ch, det, Mode.SINGLE_ARM_B)
            vacuum = expected_gain(0.0, 0.0, ch, det)
            gains[('u', NOT_SENT, 'Z')] = single[(ALICE, 'u')]
            gains[(NOT_SENT, 'u', 'Z')] = single[(BOB, 'u')]
            gains[(NOT_SENT, NOT_SENT, 'Z')] = vacuum
            gains[('u', 'u', 'Z')] = gains[('u', 'u', 'X')]
        elif cfg.variant is Variant.CURTY:
            gains[('u', 'u', 'Z')] = expected_encoded_gain(mu.u, mu.u, ch, det)
            qbers[('u', 'u', 'Z')] = expected_qber(2 * mu.u, ch, det, fb)
        points.append(SweepPoint(loss_db=float(loss), gains=gains, qbers=qbers,
                                 single_arm_gains=single, vacuum_gain=vacuum))
        logger.debug('Model point {} dB: Q_uu={:.4e} E_u={:.4f}'.format(
            loss, gains[('u', 'u', 'X')], qbers[('u', 'u', 'X')].total))
    return points
