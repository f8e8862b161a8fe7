"""
Parameter files and configuration hashing.

Parameter files are YAML documents with one mapping per section::

    protocol:
        variant: send-not-send
        intensities: {u: 0.2, v: 0.08, w: 5.0e-6}
    channel:
        total_loss_db: 30.0

Values are looked up parameter-server style with a private ``~`` prefix and a
``section/key`` path, e.g. ``params.get('~feedback/drift_rate_rad_per_s')``.
Anything not given keeps the default of the dataclass that owns it.

:docformat: reStructuredText
"""
import dataclasses
import hashlib
import json
import logging
import math
from enum import Enum

import numpy as np
import yaml

from tfqkd_sim.core import (ChannelParams, ConfigError, DetectorParams, IntensityTriple,
                            ProtocolConfig, Variant)
from tfqkd_sim.linkmodel import FeedbackParams

logger = logging.getLogger(__name__)

_MISSING = object()


class Params(object):
    """Read-only view of a nested parameter mapping."""

    def __init__(self, data=None, source=None):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError('Parameter file {} must hold a mapping at top level'.format(source))
        self._data = data
        self.source = source

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                data = yaml.safe_load(f)
        except (IOError, OSError) as e:
            raise ConfigError('Cannot read parameter file {}: {}'.format(path, e))
        except yaml.YAMLError as e:
            raise ConfigError('Parameter file {} is not valid YAML: {}'.format(path, e))
        logger.info('Loaded parameters from {}'.format(path))
        return cls(data or {}, source=str(path))

    def get(self, name, default=_MISSING):
        """
        Look up ``~section/key``.

        :param name: slash separated path, optionally prefixed with ``~``
        :param default: returned when the path is absent
        :raises ConfigError: when the path is absent and no default is given
        """
        node = self._data
        for part in name.lstrip('~').strip('/').split('/'):
            if isinstance(node, dict) and part in node:
                node = node[part]
            elif default is _MISSING:
                raise ConfigError('Parameter {} not set in {}'.format(name, self.source))
            else:
                return default
        return node

    def section(self, name):
        value = self.get('~' + name, {})
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise ConfigError('Section {} must be a mapping'.format(name))
        return value

    def set(self, name, value):
        """Override one value (command line flags)."""
        parts = name.lstrip('~').strip('/').split('/')
        node = self._data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    def as_dict(self):
        return self._data


def _kwargs(params, section, cls, nested=None):
    values = dict(params.section(section))
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError('Unknown keys in section {}: {}'.format(section, ', '.join(unknown)))
    for f in dataclasses.fields(cls):
        if f.name in values and f.type in (float, int) and isinstance(values[f.name], str):
            try:
                values[f.name] = f.type(float(values[f.name]))
            except ValueError:
                raise ConfigError('{}/{} is not a number: {!r}'.format(
                    section, f.name, values[f.name]))
    for key, convert in (nested or {}).items():
        if key in values:
            values[key] = convert(values[key])
    return values


def _intensities(value):
    if isinstance(value, IntensityTriple):
        return value
    try:
        return IntensityTriple(u=float(value['u']), v=float(value['v']), w=float(value['w']))
    except (KeyError, TypeError) as e:
        raise ConfigError('Intensities need u, v and w: {}'.format(e))


def protocol_config(params, variant=None):
    """ProtocolConfig from the ``protocol`` section; ``variant`` overrides the file."""
    values = _kwargs(params, 'protocol', ProtocolConfig,
                     {'intensities': _intensities, 'intensity_probs': tuple})
    if variant is not None:
        values['variant'] = Variant.parse(variant)
        if values['variant'] is Variant.CURTY and params.get('~sweep/curty_intensities', None):
            values['intensities'] = _intensities(params.get('~sweep/curty_intensities'))
    try:
        return ProtocolConfig(**values)
    except TypeError as e:
        raise ConfigError('Invalid protocol section: {}'.format(e))


def channel_params(params, total_loss_db=None):
    values = _kwargs(params, 'channel', ChannelParams)
    if total_loss_db is not None:
        values['total_loss_db'] = total_loss_db
    values.setdefault('total_loss_db', 0.0)
    return ChannelParams(**values)


def detector_params(params):
    return DetectorParams(**_kwargs(params, 'detector', DetectorParams))


def feedback_params(params):
    return FeedbackParams(**_kwargs(params, 'feedback', FeedbackParams))


def session_config(params, seed=None):
    from tfqkd_sim.simulator import SessionConfig
    values = _kwargs(params, 'session', SessionConfig)
    for nested in ('protocol', 'channel', 'det', 'fb'):
        if nested in values:
            raise ConfigError('session/{} belongs in its own section'.format(nested))
    values['feedback_off_windows'] = tuple(tuple(span) for span in
                                           values.get('feedback_off_windows') or ())
    if seed is not None:
        values['rng_seed'] = seed
    return SessionConfig(protocol=protocol_config(params), channel=channel_params(params),
                         det=detector_params(params), fb=feedback_params(params), **values)


SWEEP_KEYS = ('loss_start_db', 'loss_stop_db', 'loss_step_db', 'protocols', 'curty_intensities')


def loss_grid(params):
    """Total-loss grid of the ``sweep`` section, inclusive of the stop value."""
    section = params.section('sweep')
    unknown = sorted(set(section) - set(SWEEP_KEYS))
    if unknown:
        raise ConfigError('Unknown keys in section sweep: {}'.format(', '.join(unknown)))
    start = float(section.get('loss_start_db', 10.0))
    stop = float(section.get('loss_stop_db', 100.0))
    step = float(section.get('loss_step_db', 1.0))
    if step <= 0 or stop < start or start < 0:
        raise ConfigError('Invalid loss grid {}..{} step {}'.format(start, stop, step))
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 9) for i in range(count)]


def sweep_protocols(params):
    names = params.get('~sweep/protocols', [v.value for v in Variant])
    return [Variant.parse(name) for name in names]


def to_plain(obj):
    """Recursively convert configuration objects to JSON-ready values."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {('|'.join(str(k) for k in key) if isinstance(key, tuple) else str(key)):
                to_plain(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(x) for x in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return None
    return obj


def config_hash(obj):
    """First 16 hex digits of the SHA-256 of the canonical JSON of ``obj``."""
    canonical = json.dumps(to_plain(obj), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]
