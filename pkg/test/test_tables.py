import json

import pytest

from tfqkd_sim import tables
from tfqkd_sim.core import InputError
from tfqkd_sim.tables import (Schema, TableParseError, TableRangeError, emit, ingest, parse_rows,
                              rounding_unit)

HEADER = ','.join(tables.TABLE_II_COLUMNS)
ROW = '71.1,0.02,0.2,5.0e-6,1.71e-6,18.2e-6,0.026e-6,8.77e-6,0.913e-6,8.74e-6,1.79e-6,{},270.7,112.0'


def table_two(ez='0.0265'):
    return ['# comment', HEADER, ROW.format(ez)]


def test_bundled_table_one(table1_rows):
    assert len(table1_rows) == 8
    assert [r['total_loss_db'] for r in table1_rows][:2] == [21.5, 30.5]
    row = table1_rows[4]
    assert row['total_loss_db'] == 61.7
    assert row.has_flag('arm_sum_mismatch') and row.has_flag('single_arm_imbalance')
    assert row.arm_sum_db() == pytest.approx(59.9)
    assert not table1_rows[5].flags


def test_published_values_keep_their_rounding(table1_rows):
    last = table1_rows[-1]
    assert last['skr_sns_bps'] is None
    assert last.published('skr_original_bps') == 45.0
    assert rounding_unit(last['skr_original_bps']) == 1.0
    assert rounding_unit('0.602e3') == 1.0
    assert rounding_unit('0.0176e3') == pytest.approx(0.1)
    with pytest.raises(InputError):
        rounding_unit('n/a')


def test_table_one_tallies(table1_rows):
    t = table1_rows[5].tallies()
    assert t.gain('u', 'u', 'X') == 18.2e-6
    assert t.single_arm_gains[('alice', 'u')] == 8.74e-6
    assert t.vacuum_gain == 25.9e-9


def test_table_two(table2_rows):
    row = table2_rows[0]
    assert set(row.gain_table()) == {('u', 'u'), ('v', 'v'), ('w', 'w'), ('u', 'v'), ('u', 'w'),
                                     ('v', 'w')}
    assert row.tallies().qber('u', 'u', 'Z') == 0.0265
    assert row.intensities().u == 0.02
    assert row.arm_sum_db() == 71.1


def test_empty_table():
    assert parse_rows(['# nothing here', ''], Schema.TABLE_II) == []
    with pytest.raises(TableParseError):
        parse_rows([], Schema.TABLE_II, strict=True)


def test_qber_out_of_range():
    with pytest.raises(TableRangeError) as e:
        parse_rows(table_two('1.2'), 'table2', strict=True)
    assert 'qber' in str(e.value)
    assert e.value.line == 3
    rows = parse_rows(table_two('1.2'), 'table2')
    assert rows[0].has_flag('out_of_range')


def test_parse_errors():
    with pytest.raises(TableParseError) as e:
        parse_rows(['total_loss_db,mu_u', '1,2'], Schema.TABLE_II)
    assert 'mu_v' in str(e.value)
    with pytest.raises(TableParseError) as e:
        parse_rows(table_two('abc'), Schema.TABLE_II)
    assert e.value.column == 'ez_uu'
    with pytest.raises(TableParseError):
        parse_rows([HEADER, '71.1,0.02'], Schema.TABLE_II)
    with pytest.raises(InputError):
        Schema.parse('table9')


def test_emit_then_ingest(tmp_path, table1_rows):
    path = str(tmp_path / 'out' / 'table1.csv')
    emit(table1_rows, path, Schema.TABLE_I, comments=['config_hash abc'])
    again = ingest(path, Schema.TABLE_I)
    assert [r.values for r in again] == [r.values for r in table1_rows]
    assert open(path).readline() == '# config_hash abc\n'


def test_table_two_emit_then_ingest(tmp_path, table2_rows):
    path = str(tmp_path / 'table2.csv')
    emit(table2_rows, path, Schema.TABLE_II)
    again = ingest(path, Schema.TABLE_II, strict=True)
    assert [r.values for r in again] == [r.values for r in table2_rows]
    assert again[0].gain_table() == table2_rows[0].gain_table()
    assert again[0].intensities() == table2_rows[0].intensities()
    assert again[0].tallies().to_dict() == table2_rows[0].tallies().to_dict()
    assert rounding_unit(again[0]['skr_curty_bps']) == rounding_unit(
        table2_rows[0]['skr_curty_bps'])


def test_ingest_missing_file(tmp_path):
    with pytest.raises(InputError):
        ingest(str(tmp_path / 'absent.csv'), Schema.TABLE_I)


def test_ingest_session_record(tmp_path):
    path = tmp_path / 'session.json'
    path.write_text(json.dumps({
        'config': {'channel': {'total_loss_db': 30.0}},
        'tallies': {'gains': {'u|u|X': 1e-3}, 'qbers': {'u|u|X': 0.02}}}))
    rows = ingest(str(path), Schema.SESSION_JSON)
    assert rows[0]['total_loss_db'] == 30.0
    assert rows[0].tallies().gain('u', 'u', 'X') == 1e-3
    path.write_text('{}')
    with pytest.raises(TableParseError):
        ingest(str(path), Schema.SESSION_JSON)


def test_atomic_write_leaves_no_temporary(tmp_path):
    tables.write_json(str(tmp_path / 'report.json'), {'a': 1})
    assert [p.name for p in tmp_path.iterdir()] == ['report.json']
    assert json.loads((tmp_path / 'report.json').read_text()) == {'a': 1}
