"""
Event-level Monte Carlo of the twin-field protocols.

Pulses are prepared, interfered and detected in columnar batches; the scalar
helpers (:func:`prepare_pulse`, :func:`interfere_and_detect`) wrap the batch
code for single gates. A session walks through the correction windows of the
phase feedback in time order: at the start of each window the D3 reference
count is drawn and the channel phase is re-estimated, then the encoded gates
of the window are detected under the drifting phase and sifted into running
tallies.

:docformat: reStructuredText
"""
import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field
from timeit import default_timer as timer

import numpy as np

from tfqkd_sim.core import (ALICE, BOB, LABELS, NOT_SENT, Basis, ChannelParams,
                            ConfigError, Detector, DetectorParams, MeasurementTallies,
                            ProtocolConfig, Variant)
from tfqkd_sim.linkmodel import FeedbackParams, d3_counts, feedback_phase_error
from tfqkd_sim.params import to_plain

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
LABEL_CODES = LABELS + (NOT_SENT,)
NOT_SENT_CODE = LABEL_CODES.index(NOT_SENT)
PHASE_TOL = 1e-9


def encode_phase(phase, bit, basis):
    """phi + alpha pi + beta pi/2, wrapped to [0, 2 pi)."""
    return np.mod(phase + np.pi * bit + 0.5 * np.pi * basis, TWO_PI)


@dataclass(frozen=True)
class PulseState:
    bit: int
    basis: Basis
    global_phase: float
    intensity_label: str
    intensity: float = 0.0
    is_reference: bool = False

    def __post_init__(self):
        if self.is_reference:
            if self.bit is not None or self.basis is not None:
                raise ConfigError('Reference pulses carry no bit or basis')
        elif self.bit not in (0, 1):
            raise ConfigError('Pulse bit must be 0 or 1, got {}'.format(self.bit))

    @property
    def encoded_phase(self):
        if self.is_reference:
            return self.global_phase % TWO_PI
        return float(encode_phase(self.global_phase, self.bit, self.basis.value))


class PulseBatch(object):
    """Columnar pulses of one user; ``label`` holds indices into LABEL_CODES."""

    def __init__(self, bit, basis, phase, label, intensity):
        self.bit = np.asarray(bit, dtype=np.int8)
        self.basis = np.asarray(basis, dtype=np.int8)
        self.phase = np.asarray(phase, dtype=float)
        self.label = np.asarray(label, dtype=np.int8)
        self.intensity = np.asarray(intensity, dtype=float)

    def __len__(self):
        return self.bit.size

    @property
    def encoded_phase(self):
        return encode_phase(self.phase, self.bit, self.basis)

    def __getitem__(self, i):
        return PulseState(bit=int(self.bit[i]), basis=Basis(int(self.basis[i])),
                          global_phase=float(self.phase[i]),
                          intensity_label=LABEL_CODES[self.label[i]],
                          intensity=float(self.intensity[i]))

    @classmethod
    def from_states(cls, states):
        return cls(bit=[s.bit for s in states], basis=[s.basis.value for s in states],
                   phase=[s.global_phase for s in states],
                   label=[LABEL_CODES.index(s.intensity_label) for s in states],
                   intensity=[s.intensity for s in states])


DetectionEvent = namedtuple('DetectionEvent',
                            ['gate_index', 'detector', 'alice', 'bob', 'drift_at_gate'])


class EventBatch(object):
    """Detection outcome of every gate in a batch, ``Detector.NONE`` included."""

    def __init__(self, gate_index, detector, alice, bob, drift, time_s=None):
        self.gate_index = np.asarray(gate_index, dtype=np.int64)
        self.detector = np.asarray(detector, dtype=np.int8)
        self.alice = alice
        self.bob = bob
        self.drift = np.asarray(drift, dtype=float)
        self.time_s = np.zeros(self.gate_index.size) if time_s is None \
            else np.asarray(time_s, dtype=float)

    def __len__(self):
        return self.gate_index.size

    def __getitem__(self, i):
        return DetectionEvent(gate_index=int(self.gate_index[i]),
                              detector=Detector(int(self.detector[i])),
                              alice=self.alice[i], bob=self.bob[i],
                              drift_at_gate=float(self.drift[i]))

    @classmethod
    def from_events(cls, events):
        events = list(events)
        return cls(gate_index=[e.gate_index for e in events],
                   detector=[e.detector.value for e in events],
                   alice=PulseBatch.from_states([e.alice for e in events]),
                   bob=PulseBatch.from_states([e.bob for e in events]),
                   drift=[e.drift_at_gate for e in events])


def _sample_phases(levels, rng, n):
    if levels == 0:
        return rng.uniform(0.0, TWO_PI, n)
    if levels == 1:
        return np.zeros(n)
    return TWO_PI * rng.integers(0, levels, n) / levels


def prepare_pulses(user, cfg, rng, n):
    """
    Draw ``n`` pulses of one user.

    Bits are uniform, the basis is Z with probability ``basis_prob_z`` and the
    decoy label follows ``intensity_probs``. The send-not-send key basis sends
    the signal with probability ``epsilon`` (Alice's bit 1 and Bob's bit 0
    mean sending). The key basis of the protocol without phase slicing uses
    the signal with a fixed phase; its test basis is always phase randomised.

    :param user: ALICE or BOB
    :param cfg: ProtocolConfig
    :param rng: numpy Generator
    :rtype: PulseBatch
    """
    if user not in (ALICE, BOB):
        raise ConfigError('Unknown user {!r}'.format(user))
    basis = (rng.random(n) >= cfg.basis_prob_z).astype(np.int8)
    bit = rng.integers(0, 2, n).astype(np.int8)
    label = rng.choice(len(LABELS), size=n, p=cfg.intensity_probs).astype(np.int8)
    phase = _sample_phases(cfg.phase_levels, rng, n)
    key = basis == Basis.Z.value

    if cfg.variant is Variant.SEND_NOT_SEND:
        sends = rng.random(n) < cfg.epsilon
        label = np.where(key, np.where(sends, 0, NOT_SENT_CODE), label).astype(np.int8)
        sent_bit = 1 if user == ALICE else 0
        bit = np.where(key, np.where(sends, sent_bit, 1 - sent_bit), bit).astype(np.int8)
    elif cfg.variant is Variant.CURTY:
        label = np.where(key, 0, label).astype(np.int8)
        test_levels = cfg.phase_levels if cfg.phase_levels != 1 else 0
        phase = np.where(key, 0.0, _sample_phases(test_levels, rng, n))

    values = np.array([cfg.intensities.value(code) for code in LABEL_CODES])
    return PulseBatch(bit=bit, basis=basis, phase=phase, label=label, intensity=values[label])


def prepare_pulse(user, cfg, rng, bit=None, basis=None, phase=None, label=None):
    """Single pulse; keyword overrides pin the sampled fields."""
    state = prepare_pulses(user, cfg, rng, 1)[0]
    label = state.intensity_label if label is None else label
    return PulseState(bit=state.bit if bit is None else bit,
                      basis=state.basis if basis is None else Basis(basis),
                      global_phase=state.global_phase if phase is None else phase,
                      intensity_label=label, intensity=cfg.intensities.value(label))


def step_drift(current, dt, fb, rng):
    """
    Advance the channel phase by a Wiener increment.

    The increment is Gaussian with standard deviation drift_rate * sqrt(dt),
    so ``drift_rate_rad_per_s`` is the spread after one second and variances
    of consecutive steps add.

    :param dt: elapsed time in seconds, > 0
    :return: new phase in [0, 2 pi)
    """
    if dt <= 0:
        raise ConfigError('Drift step needs dt > 0, got {}'.format(dt))
    sigma = fb.drift_rate_rad_per_s * math.sqrt(dt)
    if sigma == 0:
        return current % TWO_PI
    return (current + rng.normal(0.0, sigma)) % TWO_PI


def _wrap_signed(phase):
    return math.pi - (math.pi - phase) % TWO_PI


def apply_feedback(drift, d3_window_counts, fb, rng, enabled=True):
    """
    Re-estimate the channel phase from one window of D3 reference counts.

    The residual misalignment is Gaussian with the shot-noise limited
    standard deviation 2/sqrt(C). With the feedback disabled or no counts in
    the window the phase is left untouched.

    :return: residual phase in (-pi, pi]
    """
    if not enabled or d3_window_counts <= 0:
        return drift
    sigma = feedback_phase_error(d3_window_counts)
    return _wrap_signed(rng.normal(0.0, sigma) if sigma > 0 else 0.0)


def static_visibility(det, fb):
    """Interference visibility before the OPLL phase noise is applied."""
    return min(1.0, det.visibility * math.exp(fb.opll_phase_variance_rad2 / 2.0))


def detect_batch(alice, bob, residual_phase, channel, det, fb, rng):
    """
    Interfere two pulse batches at Charlie and sample D1/D2 clicks.

    D1 sees eta_C (|a|^2 + |b|^2 + 2 V |a||b| cos d) / 2 with
    d = phi_a - phi_b - residual - opll_noise, D2 the complementary port.
    Double clicks are dropped.

    :return: detector codes, one per gate
    """
    n = len(alice)
    eta_a, eta_b = channel.arm_transmittances()
    amp_a = np.sqrt(alice.intensity * eta_a)
    amp_b = np.sqrt(bob.intensity * eta_b)
    noise = rng.normal(0.0, math.sqrt(fb.opll_phase_variance_rad2), n) \
        if fb.opll_phase_variance_rad2 > 0 else 0.0
    delta = alice.encoded_phase - bob.encoded_phase - residual_phase - noise
    flux = amp_a ** 2 + amp_b ** 2
    fringe = 2.0 * static_visibility(det, fb) * amp_a * amp_b * np.cos(delta)
    dark = 1.0 - det.noise_click_prob
    p1 = 1.0 - dark * np.exp(-channel.charlie_efficiency * (flux + fringe) / 2.0)
    p2 = 1.0 - dark * np.exp(-channel.charlie_efficiency * (flux - fringe) / 2.0)
    c1 = rng.random(n) < p1
    c2 = rng.random(n) < p2
    detector = np.full(n, Detector.NONE.value, dtype=np.int8)
    detector[c1 & ~c2] = Detector.D1.value
    detector[c2 & ~c1] = Detector.D2.value
    return detector


def interfere_and_detect(a, b, residual_phase, channel, det, rng, fb=None, gate_index=0):
    """One gate of :func:`detect_batch`."""
    fb = FeedbackParams() if fb is None else fb
    alice, bob = PulseBatch.from_states([a]), PulseBatch.from_states([b])
    detector = detect_batch(alice, bob, residual_phase, channel, det, fb, rng)
    return DetectionEvent(gate_index=gate_index, detector=Detector(int(detector[0])),
                          alice=a, bob=b, drift_at_gate=residual_phase)


def phase_twins(phase_a, phase_b, delta):
    """
    Twin-phase test modulo pi.

    :return: (keep, pi_offset) boolean arrays; equal phases win when both hold
    """
    d = np.mod(np.asarray(phase_a) - np.asarray(phase_b), TWO_PI)
    zero = np.minimum(d, TWO_PI - d) <= delta + PHASE_TOL
    opposite = np.abs(d - np.pi) <= delta + PHASE_TOL
    return zero | opposite, opposite & ~zero


def _announced(detector, cfg):
    mask = detector == Detector.D1.value
    if cfg.announce_d2:
        mask |= detector == Detector.D2.value
    return mask


def _combo_codes(alice, bob):
    return (alice.label.astype(np.int64) * len(LABEL_CODES) + bob.label) * 2 + alice.basis


def _combo_key(code):
    basis = Basis(code % 2).name
    pair = code // 2
    return LABEL_CODES[pair // len(LABEL_CODES)], LABEL_CODES[pair % len(LABEL_CODES)], basis


N_COMBOS = len(LABEL_CODES) ** 2 * 2

RawKeySummary = namedtuple('RawKeySummary', ['bits', 'errors'])


def _sift_masks(events, cfg):
    """Per-gate (matched, sifted, error, key) masks of an EventBatch."""
    a, b = events.alice, events.bob
    matched = a.basis == b.basis
    clicked = matched & _announced(events.detector, cfg)
    d2 = events.detector == Detector.D2.value
    key_basis = a.basis == Basis.Z.value

    twin, pi_offset = phase_twins(a.phase, b.phase, cfg.delta)
    bob_bits = b.bit ^ d2 ^ pi_offset
    if cfg.variant is Variant.SEND_NOT_SEND:
        sifted = clicked & (key_basis | twin)
        bob_bits = np.where(key_basis, b.bit, bob_bits)
        trace = sifted & ~key_basis
    elif cfg.variant is Variant.CURTY:
        exact, pi_offset = phase_twins(a.phase, b.phase, 0.0)
        sifted = clicked & key_basis & exact
        bob_bits = b.bit ^ d2 ^ pi_offset
        trace = sifted
    else:
        sifted = clicked & twin
        trace = sifted
    errors = sifted & (a.bit != bob_bits)
    signal = (a.label == 0) & (b.label == 0)
    key = sifted & key_basis & (signal | (cfg.variant is Variant.SEND_NOT_SEND))
    return matched, clicked, sifted, errors, key, trace & signal, bob_bits


class SiftAccumulator(object):
    """Running tallies over event batches."""

    def __init__(self, cfg, keep_bits=False):
        self.cfg = cfg
        self.keep_bits = keep_bits
        self.pulses = np.zeros(N_COMBOS, dtype=np.int64)
        self.clicks = np.zeros(N_COMBOS, dtype=np.int64)
        self.sifted = np.zeros(N_COMBOS, dtype=np.int64)
        self.errors = np.zeros(N_COMBOS, dtype=np.int64)
        self.key_bits = 0
        self.key_errors = 0
        self.alice_bits = []
        self.bob_bits = []

    def add(self, events):
        """
        Fold a batch into the tallies.

        :return: (trace_mask, trace_errors) for the signal events of the batch
        """
        matched, clicked, sifted, errors, key, trace, bob_bits = _sift_masks(events, self.cfg)
        codes = _combo_codes(events.alice, events.bob)
        self.pulses += np.bincount(codes[matched], minlength=N_COMBOS)
        self.clicks += np.bincount(codes[clicked], minlength=N_COMBOS)
        self.sifted += np.bincount(codes[sifted], minlength=N_COMBOS)
        self.errors += np.bincount(codes[errors], minlength=N_COMBOS)
        self.key_bits += int(key.sum())
        self.key_errors += int((key & errors).sum())
        if self.keep_bits:
            self.alice_bits.append(events.alice.bit[key])
            self.bob_bits.append(bob_bits[key].astype(np.int8))
        return trace, trace & errors

    def tallies(self):
        gains, qbers, pulses = {}, {}, {}
        for code in np.flatnonzero(self.pulses):
            key = _combo_key(code)
            pulses[key] = int(self.pulses[code])
            gains[key] = self.clicks[code] / float(self.pulses[code])
            if self.sifted[code] > 0:
                qbers[key] = self.errors[code] / float(self.sifted[code])
        single, vacuum = {}, None
        if self.cfg.variant is Variant.SEND_NOT_SEND:
            if ('u', NOT_SENT, 'Z') in gains:
                single[(ALICE, 'u')] = gains[('u', NOT_SENT, 'Z')]
            if (NOT_SENT, 'u', 'Z') in gains:
                single[(BOB, 'u')] = gains[(NOT_SENT, 'u', 'Z')]
            vacuum = gains.get((NOT_SENT, NOT_SENT, 'Z'))
        return MeasurementTallies(gains=gains, qbers=qbers, single_arm_gains=single,
                                  vacuum_gain=vacuum, pulses_sent=pulses)

    def raw_key_summary(self):
        return RawKeySummary(self.key_bits, self.key_errors)

    def raw_key_bits(self):
        return (np.concatenate(self.alice_bits) if self.alice_bits else np.zeros(0, np.int8),
                np.concatenate(self.bob_bits) if self.bob_bits else np.zeros(0, np.int8))


def sift(events, cfg):
    """
    Sift a completed set of events.

    :param events: EventBatch or iterable of DetectionEvent
    :param cfg: ProtocolConfig
    :return: (MeasurementTallies, (alice_bits, bob_bits)) of the key-basis signal events
    """
    if not isinstance(events, EventBatch):
        events = list(events)
        if not events:
            return MeasurementTallies(), (np.zeros(0, np.int8), np.zeros(0, np.int8))
        events = EventBatch.from_events(events)
    acc = SiftAccumulator(cfg, keep_bits=True)
    acc.add(events)
    return acc.tallies(), acc.raw_key_bits()


def announce(events, cfg):
    """
    Public announcement of the detected gates.

    Bases, intensity labels and the clicking detector are always public.
    Global phases are disclosed for the phase-slicing variants only (the
    send-not-send key basis keeps them private) and never for the variant
    with a fixed key-basis phase.

    :rtype: dict of lists
    """
    mask = _announced(events.detector, cfg)
    a, b = events.alice, events.bob
    record = {
        'gate_index': events.gate_index[mask].tolist(),
        'detector': [Detector(int(d)).name for d in events.detector[mask]],
        'basis_alice': [Basis(int(x)).name for x in a.basis[mask]],
        'basis_bob': [Basis(int(x)).name for x in b.basis[mask]],
        'label_alice': [LABEL_CODES[x] for x in a.label[mask]],
        'label_bob': [LABEL_CODES[x] for x in b.label[mask]],
    }
    if cfg.variant is Variant.CURTY:
        return record
    public = mask if cfg.variant is Variant.ORIGINAL else mask & (a.basis == Basis.X.value)
    record['phase_alice'] = [float(p) if show else None
                             for p, show in zip(a.phase[mask], public[mask])]
    record['phase_bob'] = [float(p) if show else None
                           for p, show in zip(b.phase[mask], public[mask])]
    return record


@dataclass(frozen=True)
class SessionConfig:
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    channel: ChannelParams = field(default_factory=lambda: ChannelParams(total_loss_db=30.0))
    det: DetectorParams = field(default_factory=DetectorParams)
    fb: FeedbackParams = field(default_factory=FeedbackParams)
    n_gates: int = 1000000
    rng_seed: int = 0
    duration_s: float = None
    feedback_enabled: bool = True
    feedback_off_windows: tuple = ()
    trace_bin_s: float = 1.0
    batch_gates: int = 1000000

    def __post_init__(self):
        if self.n_gates < 0:
            raise ConfigError('n_gates must be >= 0, got {}'.format(self.n_gates))
        if not 0 <= self.rng_seed < 2 ** 64:
            raise ConfigError('rng_seed must be an unsigned 64-bit integer')
        if self.duration_s is not None and self.duration_s <= 0:
            raise ConfigError('duration_s must be positive')
        if self.trace_bin_s <= 0 or self.batch_gates <= 0:
            raise ConfigError('trace_bin_s and batch_gates must be positive')
        spans = tuple((float(start), float(stop)) for start, stop in self.feedback_off_windows)
        for start, stop in spans:
            if stop <= start:
                raise ConfigError('Feedback-off span ({}, {}) is empty'.format(start, stop))
        object.__setattr__(self, 'feedback_off_windows', spans)

    @property
    def session_duration_s(self):
        if self.duration_s is not None:
            return self.duration_s
        return self.n_gates / self.det.clock_rate_hz

    def feedback_on_at(self, t):
        if not self.feedback_enabled:
            return False
        return not any(start <= t < stop for start, stop in self.feedback_off_windows)


TraceBin = namedtuple('TraceBin', ['time_s', 'sifted', 'errors', 'qber', 'feedback_on',
                                   'lock_losses'])


@dataclass(frozen=True)
class SessionResult:
    config: SessionConfig
    tallies: MeasurementTallies
    trace: tuple
    lock_loss_events: tuple
    raw_key: RawKeySummary
    n_windows: int

    def qber_trace_rows(self):
        return [b._asdict() for b in self.trace]

    def mean_trace_qber(self, feedback_on=None):
        """Event-weighted QBER over the trace bins, optionally filtered by feedback state."""
        bins = [b for b in self.trace if feedback_on is None or b.feedback_on == feedback_on]
        sifted = sum(b.sifted for b in bins)
        if sifted == 0:
            return None
        e = sum(b.errors for b in bins) / float(sifted)
        return min(e, 1.0 - e)

    def to_json_record(self, config_hash=None):
        return {
            'config_hash': config_hash,
            'config': to_plain(self.config),
            'n_gates': self.config.n_gates,
            'n_windows': self.n_windows,
            'tallies': self.tallies.to_dict(),
            'raw_key': {'bits': self.raw_key.bits, 'errors': self.raw_key.errors},
            'lock_loss_events': [{'window': w, 'time_s': t} for w, t in self.lock_loss_events],
            'qber_trace': self.qber_trace_rows(),
        }


def _gate_bounds(t, n_gates, duration):
    """First gate index with time >= t for gates at (i + 1/2) duration / n."""
    return min(n_gates, max(0, int(math.ceil(t * n_gates / duration - 0.5))))


def run_session(cfg):
    """
    Run a full session.

    :param cfg: SessionConfig
    :rtype: SessionResult
    """
    start = timer()
    rng = np.random.default_rng(cfg.rng_seed)
    acc = SiftAccumulator(cfg.protocol)
    n = cfg.n_gates
    if n == 0:
        return SessionResult(cfg, acc.tallies(), (), (), acc.raw_key_summary(), 0)

    duration = cfg.session_duration_s
    interval = cfg.fb.correction_interval_s
    n_windows = max(1, int(math.ceil(duration / interval)))
    n_bins = max(1, int(math.ceil(duration / cfg.trace_bin_s)))
    bin_sifted = np.zeros(n_bins, dtype=np.int64)
    bin_errors = np.zeros(n_bins, dtype=np.int64)
    bin_feedback = np.ones(n_bins, dtype=bool)
    bin_losses = np.zeros(n_bins, dtype=np.int64)
    c0, c1 = cfg.fb.window_counts(cfg.channel, cfg.det)
    rate = cfg.fb.drift_rate_rad_per_s
    gate_dt = duration / n

    psi, t_psi = 0.0, 0.0
    lock_losses = []
    for k in range(n_windows):
        t_k = k * interval
        if t_k > t_psi:
            psi = step_drift(psi, t_k - t_psi, cfg.fb, rng)
            t_psi = t_k
        b = min(int(t_k / cfg.trace_bin_s), n_bins - 1)
        enabled = cfg.feedback_on_at(t_k)
        if enabled:
            counts = rng.poisson(d3_counts(math.pi / 2 + psi, c0, c1))
            if counts == 0:
                lock_losses.append((k, t_k))
                bin_losses[b] += 1
                logger.debug('Lock lost in window {} at {:.3f} s'.format(k, t_k))
            psi = apply_feedback(psi, counts, cfg.fb, rng)
        else:
            bin_feedback[b] = False

        first = _gate_bounds(t_k, n, duration)
        last = _gate_bounds(t_k + interval, n, duration) if k < n_windows - 1 else n
        for lo in range(first, last, cfg.batch_gates):
            hi = min(last, lo + cfg.batch_gates)
            idx = np.arange(lo, hi)
            times = (idx + 0.5) * gate_dt
            steps = np.diff(np.concatenate([[t_psi], times]))
            path = psi + np.cumsum(rng.standard_normal(idx.size) * rate * np.sqrt(steps)) \
                if rate > 0 else np.full(idx.size, psi)
            psi, t_psi = float(path[-1]), float(times[-1])

            alice = prepare_pulses(ALICE, cfg.protocol, rng, idx.size)
            bob = prepare_pulses(BOB, cfg.protocol, rng, idx.size)
            detector = detect_batch(alice, bob, path, cfg.channel, cfg.det, cfg.fb, rng)
            events = EventBatch(idx, detector, alice, bob, np.mod(path, TWO_PI), times)
            trace, trace_errors = acc.add(events)
            bins = np.minimum((times / cfg.trace_bin_s).astype(np.int64), n_bins - 1)
            bin_sifted += np.bincount(bins[trace], minlength=n_bins)
            bin_errors += np.bincount(bins[trace_errors], minlength=n_bins)

    trace = []
    for b in range(n_bins):
        qber = None
        if bin_sifted[b] > 0:
            e = bin_errors[b] / float(bin_sifted[b])
            qber = min(e, 1.0 - e)
        trace.append(TraceBin(time_s=b * cfg.trace_bin_s, sifted=int(bin_sifted[b]),
                              errors=int(bin_errors[b]), qber=qber,
                              feedback_on=bool(bin_feedback[b]), lock_losses=int(bin_losses[b])))
    if lock_losses:
        logger.warning('Feedback lost lock in {} of {} windows'.format(len(lock_losses), n_windows))
    logger.info('Session of {} gates over {:.3f} s done in {:.2f} s'.format(
        n, duration, timer() - start))
    return SessionResult(cfg, acc.tallies(), tuple(trace), tuple(lock_losses),
                         acc.raw_key_summary(), n_windows)
