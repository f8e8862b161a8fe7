"""
Command line front end: ``tfqkd <command> [options]``.

Commands
    ingest    read and check a measured table, optionally re-emit it
    keyrate   key rates of every row of a measured table
    sweep     model rate-vs-loss curves with the repeaterless bounds
    simulate  Monte Carlo session with QBER trace
    validate  compare the pipeline with the bundled measured tables

Exit codes: 0 on success, 2 on bad input or configuration, 3 when a
validation check fails.

:docformat: reStructuredText
"""
import argparse
import logging
import os
import sys
from timeit import default_timer as timer

from tfqkd_sim import keyrates, params, tables, validation
from tfqkd_sim.core import InputError, TfqkdError, Variant
from tfqkd_sim.decoy import DecoyGains
from tfqkd_sim.tables import Schema

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_VALIDATION = 3

LOG_FORMAT = '%(asctime)s [%(levelname)s] [%(name)s] %(message)s'
DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')
BUNDLED = {Schema.TABLE_I: os.path.join(DATA_DIR, 'table1.csv'),
           Schema.TABLE_II: os.path.join(DATA_DIR, 'table2.csv')}

REPORT_COLUMNS = ('loss_db', 'variant', 'skr_bits_per_second', 'skr_bits_per_gate',
                  'y0_lower', 'y1_lower', 'e1_upper', 'e1x_upper', 'skc0_ideal_bps',
                  'skc0_realistic_bps', 'supremacy_ratio', 'flags', 'reason')
SWEEP_COLUMNS = ('loss_db', 'distance_km', 'variant', 'skr_bps', 'skc0_ideal_bps',
                 'skc0_realistic_bps', 'ratio_ideal', 'ratio_realistic', 'beats_ideal',
                 'beats_realistic')
CHECK_COLUMNS = ('name', 'row', 'expected', 'actual', 'allowed', 'passed', 'required', 'note')


def _load_params(path):
    return params.Params.load(path) if path else params.Params()


def _schema_for(variant):
    return Schema.TABLE_II if variant is Variant.CURTY else Schema.TABLE_I


def _out_path(args, name):
    if not args.out:
        return None
    return os.path.join(args.out, name)


def _report_row(report):
    d = report.to_dict()
    d['flags'] = ';'.join(d['flags'])
    return [d[c] for c in REPORT_COLUMNS]


def _fmt(value, pattern='{:.4g}'):
    if value is None:
        return '-'
    if isinstance(value, float):
        return pattern.format(value)
    return str(value)


def _print_table(header, rows):
    cells = [[_fmt(x) for x in row] for row in rows]
    widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(header)]
    print('  '.join(h.ljust(w) for h, w in zip(header, widths)))
    for r in cells:
        print('  '.join(c.ljust(w) for c, w in zip(r, widths)))


def cmd_ingest(args):
    schema = Schema.parse(args.schema)
    path = args.path or BUNDLED.get(schema)
    if path is None:
        raise InputError('A path is required for schema {}'.format(schema.value))
    rows = tables.ingest(path, schema, strict=args.strict)
    flagged = [r for r in rows if r.flags]
    print('{}: {} rows, {} flagged'.format(path, len(rows), len(flagged)))
    for r in flagged:
        print('  line {} ({} dB): {}'.format(r.line, r['total_loss_db'],
                                             ', '.join(f.name for f in r.flags)))
    out = _out_path(args, '{}.csv'.format(schema.value))
    if out and schema is not Schema.SESSION_JSON:
        digest = params.config_hash({'schema': schema.value, 'source': os.path.basename(path)})
        tables.emit(rows, out, schema, comments=['config_hash: {}'.format(digest)])
        logger.info('Wrote {}'.format(out))
    return EXIT_OK


def cmd_keyrate(args):
    p_file = _load_params(args.config)
    variant = Variant.parse(args.protocol)
    cfg = params.protocol_config(p_file, variant)
    det = params.detector_params(p_file)
    rate_params = keyrates.RateParams.from_protocol(cfg, det)
    schema = _schema_for(variant)
    path = args.table or BUNDLED[schema]
    rows = tables.ingest(path, Schema.SESSION_JSON if path.endswith('.json') else schema,
                         strict=args.strict)

    start = timer()
    reports = []
    for row in rows:
        reports.append(validation.row_report(row, variant, rate_params, cfg.n_cut, cfg.y_cut,
                                             intensities=cfg.intensities, det=det,
                                             decoy_gains=args.decoy_gains))
    logger.info('{} key rates over {} rows in {:.2f} s'.format(
        variant.value, len(rows), timer() - start))
    _print_table(REPORT_COLUMNS[:4] + ('supremacy_ratio', 'flags'),
                 [[r.loss_db, r.variant.value, r.skr_bits_per_second, r.skr_bits_per_gate,
                   r.supremacy_ratio, ','.join(f.name for f in r.flags) or None]
                  for r in reports])

    digest = params.config_hash({'protocol': cfg, 'det': det, 'table': os.path.basename(path),
                                 'decoy_gains': args.decoy_gains})
    csv_path = _out_path(args, 'keyrate_{}.csv'.format(variant.value))
    if csv_path:
        tables.atomic_write(csv_path, tables.render_csv(
            REPORT_COLUMNS, [_report_row(r) for r in reports],
            ['config_hash: {}'.format(digest), 'source: {}'.format(os.path.basename(path))]))
        tables.write_json(_out_path(args, 'keyrate_{}.json'.format(variant.value)), {
            'config_hash': digest,
            'protocol': variant.value,
            'reports': [params.to_plain(r.to_dict()) for r in reports],
        })
    return EXIT_OK


def cmd_sweep(args):
    p_file = _load_params(args.config)
    grid = params.loss_grid(p_file)
    variants = [Variant.parse(args.protocol)] if args.protocol else params.sweep_protocols(p_file)
    det = params.detector_params(p_file)
    fb = params.feedback_params(p_file)
    channel = params.channel_params(p_file)

    start = timer()
    reports = []
    for variant in variants:
        cfg = params.protocol_config(p_file, variant)
        for loss in grid:
            reports.append(keyrates.analytic_point(loss, cfg, det, fb, channel=channel))
        logger.info('Swept {} over {} losses'.format(variant.value, len(grid)))
    logger.debug('Sweep done in {:.2f} s'.format(timer() - start))
    rows = keyrates.supremacy_report(reports)

    for variant in variants:
        sub = [r for r in rows if r.variant == variant.value]
        rates = [r.skr_bps for r in sub]
        found = keyrates.crossovers(grid, rates, [r.skc0_realistic_bps for r in sub])
        for loss, direction in found:
            print('{} {} the realistic bound at {:.1f} dB'.format(
                variant.value, 'rises above' if direction > 0 else 'falls below', loss))
        positive = [r.loss_db for r in sub if r.skr_bps > 0]
        print('{} positive up to {} dB'.format(variant.value,
                                               _fmt(max(positive) if positive else None)))

    digest = params.config_hash(p_file.as_dict())
    table = [[r.loss_db, r.loss_db / channel.fibre_alpha_db_per_km] + list(r[1:]) for r in rows]
    csv_path = _out_path(args, 'sweep.csv')
    if csv_path:
        tables.atomic_write(csv_path, tables.render_csv(
            SWEEP_COLUMNS, table, ['config_hash: {}'.format(digest)]))
        tables.write_json(_out_path(args, 'sweep.json'), {
            'config_hash': digest,
            'grid_db': grid,
            'rows': [params.to_plain(dict(zip(SWEEP_COLUMNS, row))) for row in table],
            'reports': [params.to_plain(r.to_dict()) for r in reports],
        })
    return EXIT_OK


def cmd_simulate(args):
    from tfqkd_sim.simulator import run_session
    p_file = _load_params(args.config)
    if args.protocol:
        p_file.set('~protocol/variant', Variant.parse(args.protocol).value)
    cfg = params.session_config(p_file, seed=args.seed)
    digest = params.config_hash(cfg)
    logger.info('Simulating {} gates at {} dB, seed {}, config {}'.format(
        cfg.n_gates, cfg.channel.total_loss_db, cfg.rng_seed, digest))

    result = run_session(cfg)
    t = result.tallies
    print('gates {}  windows {}  lock losses {}'.format(
        cfg.n_gates, result.n_windows, len(result.lock_loss_events)))
    _print_table(('setting', 'gain', 'qber', 'pulses'),
                 [['{}{}/{}'.format(la, lb, basis), q, t.qbers.get((la, lb, basis)),
                   t.pulses_sent.get((la, lb, basis))]
                  for (la, lb, basis), q in sorted(t.gains.items())])
    print('raw key {} bits, {} errors; trace QBER {}'.format(
        result.raw_key.bits, result.raw_key.errors, _fmt(result.mean_trace_qber())))

    if args.out:
        tables.write_json(_out_path(args, 'session.json'), result.to_json_record(digest))
        trace = result.qber_trace_rows()
        header = ('time_s', 'sifted', 'errors', 'qber', 'feedback_on', 'lock_losses')
        tables.atomic_write(_out_path(args, 'qber_trace.csv'), tables.render_csv(
            header, [[b[h] for h in header] for b in trace],
            ['config_hash: {}'.format(digest)]))
    return EXIT_OK


def cmd_validate(args):
    p_file = _load_params(args.config)
    tolerance = args.tolerance / 100.0
    curty_tolerance = args.curty_tolerance / 100.0
    curty = validation.CURTY_INTENSITIES
    if p_file.get('~sweep/curty_intensities', None):
        curty = params.protocol_config(p_file, Variant.CURTY).intensities
    model = validation.ModelParams(protocol=params.protocol_config(p_file),
                                   det=params.detector_params(p_file),
                                   fb=params.feedback_params(p_file), curty_intensities=curty)
    table1 = tables.ingest(args.table1 or BUNDLED[Schema.TABLE_I], Schema.TABLE_I)
    table2 = tables.ingest(args.table2 or BUNDLED[Schema.TABLE_II], Schema.TABLE_II)
    checks = validation.run_validation(table1, table2, model, tolerance, curty_tolerance)

    failed = [c for c in checks if c.required and not c.passed]
    known = [c for c in checks if validation.status(c) == 'KNOWN']
    print('tolerance {:.1f}% on Table I rates, {:.1f}% on the fixed-phase rate and ratios'.format(
        args.tolerance, args.curty_tolerance))
    _print_table(('name', 'row', 'expected', 'actual', 'error', 'status', 'required'),
                 [[c.name, c.row, c.expected, c.actual,
                   _fmt(validation.relative_error(c), '{:+.1%}'), validation.status(c),
                   'yes' if c.required else 'no'] for c in checks])
    for c in known:
        print('  {} {}: {}'.format(c.name, c.row, c.note))
    print('{} of {} checks passed, {} known deviations'.format(
        sum(c.passed for c in checks), len(checks), len(known)))

    digest = params.config_hash({'model': model._asdict(), 'tolerance': tolerance,
                                 'curty_tolerance': curty_tolerance})
    csv_path = _out_path(args, 'validation.csv')
    if csv_path:
        tables.atomic_write(csv_path, tables.render_csv(
            CHECK_COLUMNS, [list(c) for c in checks],
            ['config_hash: {}'.format(digest), 'tolerance: {}'.format(tolerance),
             'curty_tolerance: {}'.format(curty_tolerance)]))
        tables.write_json(_out_path(args, 'validation.json'), {
            'config_hash': digest,
            'tolerance': tolerance,
            'curty_tolerance': curty_tolerance,
            'passed': not failed,
            'checks': [params.to_plain(dict(c._asdict(), status=validation.status(c)))
                       for c in checks],
        })
    for c in failed:
        logger.error('Check {} failed for {}: expected {} got {} (allowed {})'.format(
            c.name, c.row, c.expected, c.actual, c.allowed))
    return EXIT_VALIDATION if failed else EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML parameter file')
    common.add_argument('--out', help='directory for CSV and JSON outputs')
    common.add_argument('--verbosity', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        default='INFO', help='logging level')

    parser = argparse.ArgumentParser(
        prog='tfqkd', description='Twin-field QKD simulator and key-rate analysis.')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('ingest', parents=[common], help='read and check a measured table')
    p.add_argument('path', nargs='?', help='table file (bundled table when omitted)')
    p.add_argument('--schema', default=Schema.TABLE_I.value, choices=[s.value for s in Schema])
    p.add_argument('--strict', action='store_true', help='reject out-of-range values')
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser('keyrate', parents=[common], help='key rates of a measured table')
    p.add_argument('table', nargs='?', help='table CSV or session JSON')
    p.add_argument('--protocol', default=Variant.ORIGINAL.value,
                   choices=[v.value for v in Variant] + ['sns'])
    p.add_argument('--decoy-gains', default=DecoyGains.FITTED.value,
                   choices=[s.value for s in DecoyGains],
                   help='decoy gains as measured or from the channel fitted to the signal gain')
    p.add_argument('--strict', action='store_true')
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser('sweep', parents=[common], help='model rate-vs-loss curves')
    p.add_argument('--protocol', choices=[v.value for v in Variant] + ['sns'])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('simulate', parents=[common], help='Monte Carlo session')
    p.add_argument('--seed', type=int, help='generator seed, overrides session/rng_seed')
    p.add_argument('--protocol', choices=[v.value for v in Variant] + ['sns'])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('validate', parents=[common], help='check against bundled tables')
    p.add_argument('--tolerance', type=float, default=100 * validation.DEFAULT_TOLERANCE,
                   help='relative tolerance on Table I rates, percent')
    p.add_argument('--curty-tolerance', type=float,
                   default=100 * validation.CURTY_TOLERANCE,
                   help='relative tolerance on the fixed-phase rate and the ratios, percent')
    p.add_argument('--table1', help='replacement for the bundled table1.csv')
    p.add_argument('--table2', help='replacement for the bundled table2.csv')
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.verbosity, format=LOG_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')
    logging.getLogger().setLevel(args.verbosity)
    try:
        return args.func(args)
    except TfqkdError as e:
        logger.error('{}: {}'.format(type(e).__name__, e))
        return EXIT_INPUT
    except (IOError, OSError) as e:
        logger.error('I/O error: {}'.format(e))
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())
