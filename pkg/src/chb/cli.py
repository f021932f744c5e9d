"""Command-line front end.

    chb solve <config.json>          one trajectory + artifacts
    chb sweep-delta <config.json>    surface-diffusion sweep + rate fit
    chb stability <config.json>      paired continuous-dependence runs
    chb sweep-lambda <config.json>   viscosity ladder differences
    chb graph-check <config.json>    domination / same-growth reports

Exit codes: 0 ok, 2 validation or configuration failure, 3 solver
failure, 4 experiment assertion failed.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import chd_solver as cs
from . import harness
from . import monotone_graphs as mg
from .errors import (ChbError, ConfigError, LinearSolveFailure, MeanMismatch,
                     NewtonDivergence, SolveFailure, ValidationFailure)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_ASSERTION = 4


def _fmt(x) -> str:
    return format(float(x), '.17g')


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='chb',
        description='Cahn-Hilliard solver with dynamic boundary condition '
                    'on the unit disk: runs and experiment sweeps.')
    sub = parser.add_subparsers(dest='command', required=True)
    for name, help_text in (
            ('solve', 'run one trajectory and write artifacts'),
            ('sweep-delta', 'surface-diffusion sweep with rate fit'),
            ('stability', 'continuous-dependence paired runs'),
            ('sweep-lambda', 'viscosity ladder successive differences'),
            ('graph-check', 'domination and same-growth reports')):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument('config', help='experiment config JSON file')
        sp.add_argument('--out', help='output directory (overrides config)')
        sp.add_argument('--stride', type=int, help='trajectory dump stride')
        sp.add_argument('--plots', action='store_true', help='also emit SVG charts')
        sp.add_argument('--workers', type=int, help='parallel run workers')
        sp.add_argument('--seed', type=int,
                        help='recorded in summaries for provenance '
                             '(the experiments themselves draw no random numbers)')
    return parser


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    if args.out is not None:
        cfg.out_dir = args.out
    if args.stride is not None:
        cfg.stride = args.stride
    if args.plots:
        cfg.plots = True
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seed = args.seed
    cfg._check_lists()
    return cfg


def _cmd_solve(cfg) -> int:
    summary = harness.run_single(cfg)
    for key in ('final_mass_bulk', 'final_mass_trace', 'mass_drift_bulk',
                'mass_drift_trace', 'energy_drop', 'max_energy_increment'):
        print(f'{key} = {_fmt(summary[key])}')
    print(f'artifacts in {cfg.out_dir}')
    return EXIT_OK


def _cmd_sweep_delta(cfg) -> int:
    report = harness.sweep_delta(cfg)
    for row in report.rows:
        e = 'n/a' if row.error is None else _fmt(row.error)
        print(f'delta {_fmt(row.delta)}  e {e}  [{row.status}]')
    if report.zero_error:
        print('ZeroErrorFlag: errors vanish identically; rate fit refused')
    if report.slope is not None:
        print(f'slope {_fmt(report.slope)}  intercept {_fmt(report.intercept)}  '
              f'r2 {_fmt(report.r2)}')
    if report.message:
        print(report.message)
    if not report.rate_claimed and report.slope is not None:
        print('note: same-growth condition unverified; no rate claim attached')

    want_slope = cfg.sweep_delta.get('assert_slope')
    want_r2 = cfg.sweep_delta.get('assert_r2')
    if want_slope is not None:
        if report.slope is None or report.slope < float(want_slope):
            print(f'assertion failed: slope below {want_slope}')
            return EXIT_ASSERTION
    if want_r2 is not None:
        if report.r2 is None or report.r2 < float(want_r2):
            print(f'assertion failed: r2 below {want_r2}')
            return EXIT_ASSERTION
    return EXIT_OK


def _cmd_stability(cfg) -> int:
    report = harness.stability_experiment(cfg)
    for row in report.rows:
        print(f'amplitude {_fmt(row.amplitude)}  sup LHS/RHS {_fmt(row.sup_ratio)}'
              f'  [{row.status}]')
    if report.band is not None:
        print(f'ratio band {_fmt(report.band)} (limit {_fmt(report.band_limit)})')
    if not report.band_ok:
        print('assertion failed: continuous-dependence ratios outside the band')
        return EXIT_ASSERTION
    return EXIT_OK


def _cmd_sweep_lambda(cfg) -> int:
    report = harness.sweep_lambda(cfg)
    for k in range(len(report.lambdas) - 1):
        print(f'lambda {_fmt(report.lambdas[k])} -> {_fmt(report.lambdas[k + 1])}: '
              f'bulk {_fmt(report.diff_bulk[k])}  trace {_fmt(report.diff_trace[k])}')
    if not report.monotone:
        print('assertion failed: successive differences are not decreasing')
        return EXIT_ASSERTION
    return EXIT_OK


def _cmd_graph_check(cfg) -> int:
    problem = harness.problem_from_config(cfg)
    samples = cs._default_sample_grid(problem)
    dom = mg.check_domination(problem.bulk_graph, problem.boundary_graph, samples)
    growth = mg.check_same_growth(problem.bulk_graph, problem.boundary_graph, samples)
    out = {
        'domination': {
            'feasible': dom.feasible, 'rho1': dom.rho1, 'c1': dom.c1,
            'witness': dom.witness, 'message': dom.message,
        },
        'same_growth': {
            'feasible': growth.feasible, 'm': growth.m_value,
            'witness': growth.witness, 'message': growth.message,
        },
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK if dom.feasible else EXIT_VALIDATION


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        handler = {
            'solve': _cmd_solve,
            'sweep-delta': _cmd_sweep_delta,
            'stability': _cmd_stability,
            'sweep-lambda': _cmd_sweep_lambda,
            'graph-check': _cmd_graph_check,
        }[args.command]
        return handler(cfg)
    except (ConfigError, ValidationFailure, MeanMismatch) as exc:
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_VALIDATION
    except NewtonDivergence as exc:
        t = 'unknown' if exc.t is None else _fmt(exc.t)
        print(f'solver failure: {exc} (failed step target time {t})',
              file=sys.stderr)
        return EXIT_SOLVER
    except (LinearSolveFailure, SolveFailure) as exc:
        print(f'solver failure: {exc}', file=sys.stderr)
        return EXIT_SOLVER
    except ChbError as exc:
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == '__main__':
    sys.exit(main())
