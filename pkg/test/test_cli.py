import json

import pytest

from tfqkd_sim import tables
from tfqkd_sim.cli import EXIT_INPUT, EXIT_OK, EXIT_VALIDATION, main
from tfqkd_sim.core import Variant
from tfqkd_sim.keyrates import RateParams
from tfqkd_sim.tables import DataTableRow, Schema
from tfqkd_sim.validation import row_report


def write(path, text):
    path.write_text(text)
    return str(path)


def test_validate_bundled_tables(tmp_path, capsys):
    assert main(['validate', '--out', str(tmp_path)]) == EXIT_OK
    assert 'checks passed' in capsys.readouterr().out
    report = json.loads((tmp_path / 'validation.json').read_text())
    assert report['passed']
    assert report['tolerance'] == pytest.approx(0.02)
    assert report['curty_tolerance'] == pytest.approx(0.03)
    statuses = {c['status'] for c in report['checks']}
    assert statuses <= {'PASS', 'KNOWN'}
    assert (tmp_path / 'validation.csv').read_text().startswith('# config_hash: ')


def test_validate_corrupted_table(tmp_path, table1_rows):
    rows = [DataTableRow(r.schema, dict(r.values, q_uu=r['q_uu'] * 10), r.flags, r.line)
            if r['total_loss_db'] == 50.1 else r for r in table1_rows]
    path = str(tmp_path / 'table1.csv')
    tables.emit(rows, path, Schema.TABLE_I)
    assert main(['validate', '--table1', path]) == EXIT_VALIDATION


def test_keyrate_of_fixed_phase_table(tmp_path):
    assert main(['keyrate', '--protocol', 'curty', '--out', str(tmp_path)]) == EXIT_OK
    assert (tmp_path / 'keyrate_curty.csv').exists()
    record = json.loads((tmp_path / 'keyrate_curty.json').read_text())
    assert record['protocol'] == 'curty'
    assert record['reports'][0]['skr_bits_per_second'] == pytest.approx(270.7, rel=0.03)


def test_keyrate_of_session_record(tmp_path, row_at):
    session = write(tmp_path / 'session.json', json.dumps({
        'config': {'channel': {'total_loss_db': 71.1}},
        'tallies': {'gains': {'u|u|X': 18.2e-6, 'v|v|X': 7.19e-6},
                    'qbers': {'u|u|X': 0.0186, 'v|v|X': 0.0197},
                    'vacuum_gain': 25.9e-9}}))
    out = tmp_path / 'out'
    assert main(['keyrate', session, '--out', str(out)]) == EXIT_OK
    record = json.loads((out / 'keyrate_original.json').read_text())
    measured = row_report(row_at(71.1), Variant.ORIGINAL, RateParams(), decoy_gains='measured')
    assert record['reports'][0]['skr_bits_per_second'] == pytest.approx(
        measured.skr_bits_per_second, rel=1e-9)
    assert record['reports'][0]['loss_db'] == 71.1


def test_bad_config_is_an_input_error(tmp_path):
    bad = write(tmp_path / 'bad.yaml', 'detector:\n    dark_rate: 22.0\n')
    assert main(['keyrate', '--config', bad]) == EXIT_INPUT
    assert main(['keyrate', str(tmp_path / 'absent.csv')]) == EXIT_INPUT


def test_swapped_intensities_are_an_input_error(tmp_path, table1_rows, caplog):
    rows = [DataTableRow(r.schema, dict(r.values, mu_u=r['mu_v'], mu_v=r['mu_u']), r.flags,
                         r.line) for r in table1_rows]
    path = str(tmp_path / 'swapped.csv')
    tables.emit(rows, path, Schema.TABLE_I)
    assert main(['keyrate', path]) == EXIT_INPUT
    assert 'DegenerateDecoyError' in caplog.text


def test_keyrate_with_measured_decoy_gains(tmp_path):
    assert main(['keyrate', '--decoy-gains', 'measured', '--out', str(tmp_path)]) == EXIT_OK
    record = json.loads((tmp_path / 'keyrate_original.json').read_text())
    assert len(record['reports']) == 8


def test_unknown_command():
    with pytest.raises(SystemExit) as e:
        main(['plot'])
    assert e.value.code == 2


def test_ingest_re_emits(tmp_path, capsys):
    assert main(['ingest', '--out', str(tmp_path)]) == EXIT_OK
    assert '1 flagged' in capsys.readouterr().out
    again = tables.ingest(str(tmp_path / 'table1.csv'), Schema.TABLE_I)
    assert len(again) == 8


def test_sweep_writes_curves(tmp_path, capsys):
    cfg = write(tmp_path / 'sweep.yaml', 'sweep:\n    loss_start_db: 70.0\n'
                '    loss_stop_db: 72.0\n    loss_step_db: 1.0\n')
    assert main(['sweep', '--config', cfg, '--protocol', 'sns', '--out', str(tmp_path)]) == EXIT_OK
    assert 'send-not-send positive up to 72' in capsys.readouterr().out
    record = json.loads((tmp_path / 'sweep.json').read_text())
    assert record['grid_db'] == [70.0, 71.0, 72.0]
    assert record['rows'][0]['distance_km'] == pytest.approx(70.0 / 0.16)
    assert record['rows'][0]['beats_realistic']


def test_simulate_writes_session(tmp_path):
    cfg = write(tmp_path / 'session.yaml', 'session:\n    n_gates: 200000\n'
                '    batch_gates: 50000\n')
    assert main(['simulate', '--config', cfg, '--seed', '4', '--out', str(tmp_path)]) == EXIT_OK
    record = json.loads((tmp_path / 'session.json').read_text())
    assert record['config']['rng_seed'] == 4
    assert record['n_gates'] == 200000
    assert (tmp_path / 'qber_trace.csv').read_text().startswith('# config_hash: ')
