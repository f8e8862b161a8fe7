"""
Measured data tables: CSV schemas, ingestion, row checks and output files.

Two CSV layouts are supported. ``table1`` carries the signal/decoy gains of
the slicing experiment (both users, each user alone, nobody sending);
``table2`` the six phase-randomised intensity pairs plus the key-basis gain of
the fixed-phase protocol. Gains are absolute click probabilities and QBERs
fractions; published rates stay strings so their rounding unit is known.
Lines starting with ``#`` are comments.

:docformat: reStructuredText
"""
import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum

from tfqkd_sim.core import ALICE, BOB, Flag, InputError, IntensityTriple, MeasurementTallies

logger = logging.getLogger(__name__)

ARM_SUM_TOLERANCE_DB = 0.2
SINGLE_ARM_RATIO = 1.5
MISSING = ('', '-')


class TableParseError(InputError):
    """Unparseable table content; ``line`` is 1-based, ``column`` a header name."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ''
        if line is not None:
            where = ' (line {}{})'.format(line, ', column {}'.format(column) if column else '')
        super(TableParseError, self).__init__(message + where)


class TableRangeError(InputError):

    def __init__(self, field_name, value, line=None):
        self.field = field_name
        self.value = value
        self.line = line
        kind = 'qber' if _is_qber(field_name) else 'value'
        super(TableRangeError, self).__init__('{} field {} = {} out of range (line {})'.format(
            kind, field_name, value, line))


class Schema(Enum):
    TABLE_I = 'table1'
    TABLE_II = 'table2'
    SESSION_JSON = 'session-json'

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        for schema in cls:
            if schema.value == str(name).lower():
                return schema
        raise InputError('Unknown table schema {!r}'.format(name))


TABLE_I_COLUMNS = (
    'attenuation_a_db', 'attenuation_b_db', 'total_loss_db', 'mu_u', 'mu_v', 'mu_w',
    'q_u0', 'q_0u', 'q_uu', 'e_u', 'q_v0', 'q_0v', 'q_vv', 'e_v', 'q_00',
    'skr_original_bps', 'skr_sns_bps', 'skc0_bps')
TABLE_II_COLUMNS = (
    'total_loss_db', 'mu_u', 'mu_v', 'mu_w', 'q_uu', 'q_vv', 'q_ww', 'q_uv', 'q_uw', 'q_vw',
    'qz_uu', 'ez_uu', 'skr_curty_bps', 'skc0_bps')
PUBLISHED = ('skr_original_bps', 'skr_sns_bps', 'skr_curty_bps', 'skc0_bps')

COLUMNS = {Schema.TABLE_I: TABLE_I_COLUMNS, Schema.TABLE_II: TABLE_II_COLUMNS}


def _is_qber(name):
    return name.startswith('e_') or name.startswith('ez_')


def _is_gain(name):
    return name.startswith('q_') or name.startswith('qz_')


def rounding_unit(text):
    """Last significant place of a published decimal string, e.g. '0.602e3' -> 1."""
    if text is None:
        return None
    try:
        return float(Decimal(1).scaleb(Decimal(text).as_tuple().exponent))
    except InvalidOperation:
        raise InputError('Published value {!r} is not a decimal number'.format(text))


@dataclass(frozen=True)
class DataTableRow:
    schema: Schema
    values: dict
    flags: tuple = ()
    line: int = field(default=None, compare=False)

    def __getitem__(self, name):
        return self.values[name]

    def get(self, name, default=None):
        return self.values.get(name, default)

    def published(self, name):
        """Published rate in bit/s, or None for a missing entry."""
        text = self.values.get(name)
        return None if text is None else float(Decimal(text))

    def arm_sum_db(self):
        if 'attenuation_a_db' not in self.values:
            return self['total_loss_db']
        return self['attenuation_a_db'] + self['attenuation_b_db']

    def intensities(self):
        """Per-user intensity levels of the row."""
        return IntensityTriple(self['mu_u'], self['mu_v'], self['mu_w'])

    def has_flag(self, name):
        return any(f.name == name for f in self.flags)

    def tallies(self):
        """MeasurementTallies view of the measured columns."""
        v = self.values
        if self.schema is Schema.TABLE_I:
            return MeasurementTallies(
                gains={('u', 'u', 'X'): v['q_uu'], ('v', 'v', 'X'): v['q_vv']},
                qbers={('u', 'u', 'X'): v['e_u'], ('v', 'v', 'X'): v['e_v']},
                single_arm_gains={(ALICE, 'u'): v['q_u0'], (BOB, 'u'): v['q_0u'],
                                  (ALICE, 'v'): v['q_v0'], (BOB, 'v'): v['q_0v']},
                vacuum_gain=v['q_00'])
        if self.schema is Schema.TABLE_II:
            gains = {(name[2], name[3], 'X'): v[name] for name in
                     ('q_uu', 'q_vv', 'q_ww', 'q_uv', 'q_uw', 'q_vw')}
            gains[('u', 'u', 'Z')] = v['qz_uu']
            return MeasurementTallies(gains=gains, qbers={('u', 'u', 'Z'): v['ez_uu']})
        return MeasurementTallies.from_dict(v['tallies'])

    def gain_table(self):
        """Phase-randomised gains keyed by (label_a, label_b)."""
        return {(la, lb): q for (la, lb, basis), q in self.tallies().gains.items() if basis == 'X'}


def _range_problems(name, value):
    if value is None:
        return False
    if _is_qber(name) or _is_gain(name):
        return not 0.0 <= value <= 1.0
    return value < 0


def _row_flags(schema, values):
    flags = []
    if schema is Schema.TABLE_I:
        arm_sum = values['attenuation_a_db'] + values['attenuation_b_db']
        if abs(arm_sum - values['total_loss_db']) > ARM_SUM_TOLERANCE_DB:
            flags.append(Flag('arm_sum_mismatch', '{:.1f}!={:.1f}'.format(
                arm_sum, values['total_loss_db'])))
        low, high = sorted((values['q_u0'], values['q_0u']))
        if low <= 0 or high / low > SINGLE_ARM_RATIO:
            flags.append(Flag('single_arm_imbalance', '{:.3e}/{:.3e}'.format(
                values['q_u0'], values['q_0u'])))
    return flags


def _parse_value(name, text, line):
    text = (text or '').strip()
    if name in PUBLISHED:
        if text in MISSING:
            return None
        rounding_unit(text)
        return text
    if text in MISSING:
        raise TableParseError('Missing value', line, name)
    try:
        return float(text)
    except ValueError:
        raise TableParseError('Not a number: {!r}'.format(text), line, name)


def parse_rows(lines, schema, strict=False):
    """
    Parse CSV text lines of a table schema.

    :param lines: iterable of text lines
    :param strict: raise on range violations and empty input instead of flagging
    :return: list of DataTableRow
    """
    schema = Schema.parse(schema)
    columns = COLUMNS[schema]
    numbered = [(i + 1, l) for i, l in enumerate(lines)
                if l.strip() and not l.lstrip().startswith('#')]
    if not numbered:
        if strict:
            raise TableParseError('Table is empty')
        return []
    header_line = numbered[0][0]
    reader = csv.reader([l for _, l in numbered])
    try:
        header = [h.strip() for h in next(reader)]
        missing = [c for c in columns if c not in header]
        if missing:
            raise TableParseError('Missing columns {}'.format(', '.join(missing)),
                                  header_line, missing[0])
        rows = []
        for (line_no, _), cells in zip(numbered[1:], reader):
            if len(cells) != len(header):
                raise TableParseError('Expected {} cells, got {}'.format(
                    len(header), len(cells)), line_no)
            raw = dict(zip(header, cells))
            values = {name: _parse_value(name, raw[name], line_no) for name in columns}
            flags = _row_flags(schema, values)
            for name in columns:
                if name not in PUBLISHED and _range_problems(name, values[name]):
                    if strict:
                        raise TableRangeError(name, values[name], line_no)
                    flags.append(Flag('out_of_range', name))
            for f in flags:
                logger.warning('Row at {} dB (line {}) flagged {}{}'.format(
                    values['total_loss_db'], line_no, f.name,
                    ': ' + f.detail if f.detail else ''))
            rows.append(DataTableRow(schema, values, tuple(flags), line_no))
    except csv.Error as e:
        raise TableParseError('Malformed CSV: {}'.format(e), reader.line_num)
    return rows


def ingest(path, schema, strict=False):
    """
    Read a measured table.

    :param path: CSV file, or a session JSON record for ``session-json``
    :param schema: Schema or its name
    :rtype: list of DataTableRow
    :raises InputError: when the file cannot be read or parsed
    """
    schema = Schema.parse(schema)
    try:
        with open(path) as f:
            text = f.read()
    except (IOError, OSError) as e:
        raise InputError('Cannot read {}: {}'.format(path, e))
    if schema is Schema.SESSION_JSON:
        try:
            record = json.loads(text)
        except ValueError as e:
            raise TableParseError('Invalid JSON: {}'.format(e))
        if 'tallies' not in record:
            raise TableParseError('Session record lacks tallies', column='tallies')
        loss = record.get('config', {}).get('channel', {}).get('total_loss_db')
        return [DataTableRow(schema, {'total_loss_db': loss, 'tallies': record['tallies']})]
    rows = parse_rows(text.splitlines(), schema, strict)
    logger.info('Ingested {} rows from {}'.format(len(rows), path))
    return rows


def _format(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(header, rows, comments=()):
    """CSV text with ``#`` comment lines on top."""
    out = io.StringIO()
    for comment in comments:
        out.write('# {}\n'.format(comment))
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format(x) for x in row])
    return out.getvalue()


def emit(rows, path, schema, comments=()):
    """Write rows of a CSV schema so that ingest(emit(rows)) returns them unchanged."""
    columns = COLUMNS[Schema.parse(schema)]
    atomic_write(path, render_csv(columns, [[r.values[c] for c in columns] for r in rows],
                                  comments))


def atomic_write(path, text):
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    full_path = os.path.abspath(path)
    dir_path = os.path.dirname(full_path)
    os.makedirs(dir_path, exist_ok=True)
    tmp_path = None
    try:
        with tempfile.NamedTemporaryFile('w', delete=False, dir=dir_path,
                                         encoding='utf-8', suffix='.tmp') as f:
            tmp_path = f.name
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, full_path)
    except (IOError, OSError):
        if tmp_path and os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.debug('Wrote {} ({} bytes)'.format(full_path, len(text)))


def write_json(path, payload):
    atomic_write(path, json.dumps(payload, indent=2) + '\n')
