"""
Shared domain types, unit conversions and entropy utilities.

Every value object here is a frozen dataclass: construct it once, validate in
``__post_init__`` and share it freely between sweeps and sessions. Rates are
kept per encoding gate internally and only turned into bit/s by multiplying
with ``clock_rate_hz`` when a report is produced.

:docformat: reStructuredText
"""
import math
from collections import namedtuple
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# Intensity labels used as keys everywhere (u: signal, v: decoy, w: vacuum
# surrogate, '0': user does not send at all).
LABELS = ('u', 'v', 'w')
NOT_SENT = '0'
ALICE = 'alice'
BOB = 'bob'


class TfqkdError(Exception):
    """Base class of every error raised by the package."""


class DomainError(TfqkdError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(TfqkdError, ValueError):
    """Invalid parameter object or configuration file."""


class InputError(TfqkdError):
    """Missing or malformed input data."""


class DegenerateDecoyError(TfqkdError):
    """Decoy intensities make a closed-form bound undefined."""


class EstimationFailure(TfqkdError):
    """A bound cannot be estimated from the data; the key rate is zero."""


class Variant(Enum):
    ORIGINAL = 'original'
    SEND_NOT_SEND = 'send-not-send'
    CURTY = 'curty'

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace('_', '-')
        aliases = {'sns': 'send-not-send', 'sendnotsend': 'send-not-send'}
        key = aliases.get(key, key)
        for variant in cls:
            if variant.value == key:
                return variant
        raise ConfigError('Unknown protocol variant {!r}, expected one of {}'.format(
            name, ', '.join(v.value for v in cls)))


class Basis(Enum):
    Z = 0
    X = 1


class Detector(Enum):
    NONE = 0
    D1 = 1
    D2 = 2
    D3 = 3


def db_to_transmittance(loss_db):
    """
    Convert a loss in decibels to a transmittance.

    :param loss_db: loss, >= 0
    :return: 10^(-loss_db/10)
    :raises DomainError: on a negative loss
    """
    loss = np.asarray(loss_db, dtype=float)
    if np.any(loss < 0) or np.any(np.isnan(loss)):
        raise DomainError('Loss must be non-negative, got {}'.format(loss_db))
    eta = np.power(10.0, -loss / 10.0)
    return float(eta) if eta.ndim == 0 else eta


def binary_entropy(x):
    """
    Binary Shannon entropy in bits, h(0) = h(1) = 0.

    :param x: probability in [0, 1] (scalar or array)
    :raises DomainError: when x leaves [0, 1]
    """
    p = np.asarray(x, dtype=float)
    if np.any(p < 0) or np.any(p > 1) or np.any(np.isnan(p)):
        raise DomainError('Binary entropy needs a probability, got {}'.format(x))
    with np.errstate(divide='ignore', invalid='ignore'):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    h = np.where((p == 0) | (p == 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def _check_probability(name, value):
    if not 0.0 <= value <= 1.0:
        raise ConfigError('{} must lie in [0, 1], got {}'.format(name, value))


@dataclass(frozen=True)
class ChannelParams:
    total_loss_db: float
    asymmetry_db: float = 0.0
    fibre_alpha_db_per_km: float = 0.16
    charlie_efficiency: float = 0.308

    def __post_init__(self):
        if self.total_loss_db < 0:
            raise ConfigError('total_loss_db must be >= 0, got {}'.format(self.total_loss_db))
        if abs(self.asymmetry_db) > self.total_loss_db:
            raise ConfigError('|asymmetry_db| {} exceeds total loss {}'.format(
                self.asymmetry_db, self.total_loss_db))
        if self.fibre_alpha_db_per_km <= 0:
            raise ConfigError('fibre_alpha_db_per_km must be positive')
        _check_probability('charlie_efficiency', self.charlie_efficiency)

    def arm_losses_db(self):
        half = self.total_loss_db / 2.0
        return half + self.asymmetry_db / 2.0, half - self.asymmetry_db / 2.0

    def arm_transmittances(self):
        loss_a, loss_b = self.arm_losses_db()
        return db_to_transmittance(loss_a), db_to_transmittance(loss_b)

    def equivalent_distance_km(self):
        return self.total_loss_db / self.fibre_alpha_db_per_km

    @classmethod
    def from_arm_losses(cls, loss_a_db, loss_b_db, **kwargs):
        return cls(total_loss_db=loss_a_db + loss_b_db,
                   asymmetry_db=loss_a_db - loss_b_db, **kwargs)


@dataclass(frozen=True)
class DetectorParams:
    dark_count_rate_hz: float = 22.0
    detection_efficiency: float = 0.44
    coupling_efficiency: float = 0.7
    clock_rate_hz: float = 1e9
    gate_width_s: float = 0.5e-9
    visibility: float = 0.964
    background_click_prob: float = 1.49e-8
    modulation_error: float = 0.0

    def __post_init__(self):
        for name in ('detection_efficiency', 'coupling_efficiency', 'visibility',
                     'background_click_prob', 'modulation_error'):
            _check_probability(name, getattr(self, name))
        if self.dark_count_rate_hz < 0 or self.gate_width_s <= 0 or self.clock_rate_hz <= 0:
            raise ConfigError('Detector rates and gate width must be positive')
        if self.noise_click_prob >= 1.0:
            raise ConfigError('Per-gate noise click probability {} is not < 1'.format(
                self.noise_click_prob))

    @property
    def dark_count_prob(self):
        return self.dark_count_rate_hz * self.gate_width_s

    @property
    def noise_click_prob(self):
        """Per-gate probability of a click with no signal photon at one detector."""
        return self.dark_count_prob + self.background_click_prob

    @property
    def station_efficiency(self):
        return self.detection_efficiency * self.coupling_efficiency


@dataclass(frozen=True)
class IntensityTriple:
    """Per-user mean photon numbers of the signal, decoy and vacuum settings."""
    u: float
    v: float
    w: float

    def __post_init__(self):
        if min(self.u, self.v, self.w) < 0:
            raise ConfigError('Intensities must be non-negative: {}'.format(self))
        if self.u == self.v:
            raise ConfigError('Signal and decoy intensities must differ')
        if not self.w < min(self.u, self.v):
            raise ConfigError('Vacuum intensity w={} must be below u and v'.format(self.w))

    def value(self, label):
        if label == NOT_SENT:
            return 0.0
        try:
            return getattr(self, label)
        except AttributeError:
            raise InputError('Unknown intensity label {!r}'.format(label))

    def as_dict(self):
        return {'u': self.u, 'v': self.v, 'w': self.w}

    def totals(self):
        """Total intensities mu_a + mu_b for symmetric settings."""
        return IntensityTriple(2 * self.u, 2 * self.v, 2 * self.w)


@dataclass(frozen=True)
class ProtocolConfig:
    variant: Variant = Variant.ORIGINAL
    intensities: IntensityTriple = IntensityTriple(0.2, 0.08, 5e-6)
    phase_slices_m: int = 16
    tolerance_delta: float = None
    epsilon: float = 0.078
    y_cut: int = 5
    n_cut: int = 20
    f_ec: float = 1.15
    basis_prob_z: float = 0.5
    intensity_probs: tuple = (1.0 / 3, 1.0 / 3, 1.0 / 3)
    phase_levels: int = 32
    announce_d2: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'variant', Variant.parse(self.variant))
        object.__setattr__(self, 'intensity_probs', tuple(float(p) for p in self.intensity_probs))
        if self.phase_slices_m < 2 or self.phase_slices_m % 2:
            raise ConfigError('phase_slices_m must be even and >= 2, got {}'.format(
                self.phase_slices_m))
        if self.tolerance_delta is not None and self.tolerance_delta < 0:
            raise ConfigError('tolerance_delta must be >= 0')
        if not self.y_cut < self.n_cut:
            raise ConfigError('y_cut ({}) must be below n_cut ({})'.format(self.y_cut, self.n_cut))
        if self.f_ec < 1:
            raise ConfigError('f_ec must be >= 1, got {}'.format(self.f_ec))
        _check_probability('epsilon', self.epsilon)
        _check_probability('basis_prob_z', self.basis_prob_z)
        if len(self.intensity_probs) != 3 or min(self.intensity_probs) < 0 \
                or not math.isclose(sum(self.intensity_probs), 1.0, abs_tol=1e-9):
            raise ConfigError('intensity_probs must be three probabilities summing to 1')
        if self.phase_levels < 0:
            raise ConfigError('phase_levels must be >= 0 (0 selects continuous phases)')

    @property
    def delta(self):
        if self.tolerance_delta is None:
            return 2 * math.pi / self.phase_slices_m
        return self.tolerance_delta

    @property
    def m_prime(self):
        return self.phase_slices_m // 2


def _in_unit_interval(value):
    return 0.0 <= value <= 1.0


@dataclass(frozen=True)
class MeasurementTallies:
    """
    Gains and QBERs keyed by (alice_label, bob_label, basis).

    ``basis`` is the string 'Z' or 'X'. QBERs are stored after bit-flip
    normalisation min(E, 1 - E); the raw values sit in ``raw_qbers``.
    """
    gains: dict = field(default_factory=dict)
    qbers: dict = field(default_factory=dict)
    single_arm_gains: dict = field(default_factory=dict)
    vacuum_gain: float = None
    pulses_sent: dict = field(default_factory=dict)
    raw_qbers: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, q in self.gains.items():
            if not _in_unit_interval(q):
                raise DomainError('gain {} = {} outside [0, 1]'.format(key, q))
        for key, q in self.single_arm_gains.items():
            if not _in_unit_interval(q):
                raise DomainError('single-arm gain {} = {} outside [0, 1]'.format(key, q))
        if self.vacuum_gain is not None and not _in_unit_interval(self.vacuum_gain):
            raise DomainError('vacuum gain {} outside [0, 1]'.format(self.vacuum_gain))
        raw = dict(self.raw_qbers)
        normalised = {}
        for key, e in self.qbers.items():
            if not _in_unit_interval(e):
                raise DomainError('qber {} = {} outside [0, 1]'.format(key, e))
            raw.setdefault(key, e)
            normalised[key] = min(e, 1.0 - e)
        object.__setattr__(self, 'qbers', normalised)
        object.__setattr__(self, 'raw_qbers', raw)

    def _matching(self, table, la, lb, basis):
        if basis is not None:
            return [(k, table[k]) for k in [(la, lb, basis)] if k in table]
        return [(k, v) for k, v in table.items() if k[0] == la and k[1] == lb]

    def gain(self, la, lb, basis=None):
        """Gain of a setting pair; with ``basis=None`` bases are merged by pulse count."""
        found = self._matching(self.gains, la, lb, basis)
        if not found:
            return None
        return self._merge(found)

    def qber(self, la, lb, basis=None):
        found = self._matching(self.qbers, la, lb, basis)
        if not found:
            return None
        return self._merge(found)

    def _merge(self, found):
        weights = [self.pulses_sent.get(k, 0) for k, _ in found]
        if sum(weights) <= 0:
            weights = [1.0] * len(found)
        return float(sum(w * v for w, (_, v) in zip(weights, found)) / sum(weights))

    def to_dict(self):
        def flat(table):
            return {'|'.join(str(p) for p in key): value for key, value in sorted(table.items())}
        return {
            'gains': flat(self.gains),
            'qbers': flat(self.qbers),
            'raw_qbers': flat(self.raw_qbers),
            'single_arm_gains': flat(self.single_arm_gains),
            'vacuum_gain': self.vacuum_gain,
            'pulses_sent': flat(self.pulses_sent),
        }

    @classmethod
    def from_dict(cls, data):
        def unflat(table):
            return {tuple(key.split('|')): value for key, value in (table or {}).items()}
        return cls(gains=unflat(data.get('gains')),
                   qbers=unflat(data.get('raw_qbers') or data.get('qbers')),
                   single_arm_gains=unflat(data.get('single_arm_gains')),
                   vacuum_gain=data.get('vacuum_gain'),
                   pulses_sent=unflat(data.get('pulses_sent')))


Flag = namedtuple('Flag', ['name', 'detail'])


@dataclass(frozen=True)
class KeyRateReport:
    variant: Variant
    skr_bits_per_gate: float
    skr_bits_per_second: float
    y0_lower: float = None
    y1_lower: float = None
    e1_upper: float = None
    e1x_upper: float = None
    skc0_ideal_bps: float = None
    skc0_realistic_bps: float = None
    supremacy_ratio: float = None
    loss_db: float = None
    raw_bits_per_gate: float = None
    gross_bits_per_gate: float = None
    clock_rate_hz: float = None
    flags: tuple = ()
    reason: str = None

    def __post_init__(self):
        if self.skr_bits_per_gate < 0 or self.skr_bits_per_gate > 1:
            raise DomainError('Key rate {} bit/gate outside [0, 1]'.format(self.skr_bits_per_gate))
        for name in ('y0_lower', 'y1_lower', 'e1_upper', 'e1x_upper'):
            value = getattr(self, name)
            if value is not None and not _in_unit_interval(value):
                raise DomainError('{} = {} outside [0, 1]'.format(name, value))

    @property
    def clamped(self):
        return any(f.name == 'negative_rate' for f in self.flags)

    @property
    def gross_bits_per_second(self):
        if self.gross_bits_per_gate is None or self.clock_rate_hz is None:
            return None
        return self.gross_bits_per_gate * self.clock_rate_hz

    def to_dict(self):
        return {
            'variant': self.variant.value,
            'loss_db': self.loss_db,
            'skr_bits_per_gate': self.skr_bits_per_gate,
            'skr_bits_per_second': self.skr_bits_per_second,
            'raw_bits_per_gate': self.raw_bits_per_gate,
            'gross_bits_per_gate': self.gross_bits_per_gate,
            'clock_rate_hz': self.clock_rate_hz,
            'y0_lower': self.y0_lower,
            'y1_lower': self.y1_lower,
            'e1_upper': self.e1_upper,
            'e1x_upper': self.e1x_upper,
            'skc0_ideal_bps': self.skc0_ideal_bps,
            'skc0_realistic_bps': self.skc0_realistic_bps,
            'supremacy_ratio': self.supremacy_ratio,
            'flags': [f.name if not f.detail else '{}:{}'.format(f.name, f.detail)
                      for f in self.flags],
            'reason': self.reason,
        }
