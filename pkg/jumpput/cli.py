import os
import sys
import argparse
import logging

import numpy as np

from jumpput import settings
from core.config import SWEEP_PARAMETERS, ensure_output_dir, load_config
from core.exceptions import BoundaryNotFoundError, ConfigError, IterationError, JumpPutError
from core.fundsol import dump_csv
from core.mc import validate_solution
from core.operator import objective_sweep
from core.serializers import write_json, write_objective, write_solution, write_sweep, write_trace
from core.solver import solve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVE = 3
EXIT_TRACE = 4
EXIT_VALIDATION = 5


def run_solve(config):
    model = config.model
    return solve(
        model,
        grid=config.grid.build(model.strike),
        eps=config.solver.epsilon,
        tol=config.solver.tolerances_for(model.strike),
    )


def _report_solve_failure(exc):
    if isinstance(exc, IterationError) and isinstance(exc.__cause__, BoundaryNotFoundError):
        cause = exc.__cause__
        logger.error(f"Solve failed at iterate {exc.iteration}: brackets {cause.brackets}, "
                     f"existence integral {cause.existence_integral}")
    else:
        logger.error(f"Solve failed: {exc}")


def cmd_price(config, out, args):
    try:
        sol = run_solve(config)
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except JumpPutError as exc:
        _report_solve_failure(exc)
        return EXIT_SOLVE

    write_solution(sol, out)
    if args.dump_pair:
        dump_csv(sol.context.pair, sol.grid, os.path.join(out, 'fundamental.csv'))
    if args.dump_objective:
        ctx = sol.context
        ls = ctx.x[(ctx.x > ctx.boundary_floor) & (ctx.x < config.model.strike)]
        write_objective(ls, objective_sweep(ctx, sol.v, ls), os.path.join(out, 'objective.csv'))

    print(f"boundary {sol.boundary:.6f}")
    for spot in args.spot or config.spots:
        print(f"V({spot:g}) = {sol.value(spot):.6f}")
    return EXIT_OK


def cmd_trace(config, out, args):
    try:
        sol = run_solve(config)
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except JumpPutError as exc:
        _report_solve_failure(exc)
        return EXIT_SOLVE

    path = write_trace(sol, os.path.join(out, 'trace.csv'))
    broken = [row for row in sol.trace_rows() if row[2] > row[3]]
    for n, l, delta, bound in broken:
        logger.error(f"Row {n}: sup delta {delta:.3e} exceeds the rate bound {bound:.3e}")
    print(f"{sol.n_iter} rows written to {path}")
    return EXIT_TRACE if broken else EXIT_OK


def cmd_validate(config, out, args):
    mc = config.mc
    if mc is None:
        logger.error("Configuration error: validate needs an 'mc' block")
        return EXIT_CONFIG
    try:
        sol = run_solve(config)
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except JumpPutError as exc:
        _report_solve_failure(exc)
        return EXIT_SOLVE

    model = config.model
    points = mc.points or tuple(args.spot or ()) or config.spots
    points = points or tuple(model.strike * np.array([0.5, 0.8, 1.0, 1.5, 3.0]))
    try:
        report = validate_solution(sol, model, points, mc.n_paths, mc.seed, mc.dt, mc.t_max,
                                   allowance=mc.allowance, tolerance=mc.tolerance)
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except JumpPutError as exc:
        logger.error(f"Validation could not run: {exc}")
        return EXIT_CONFIG

    write_json(os.path.join(out, 'validate.json'), report.as_dict())
    for point in report.points:
        status = 'pass' if point.passed else 'FAIL'
        print(f"x={point.x:g}: solver {point.solver_value:.6f}, MC {point.mc_mean:.6f} "
              f"+- {point.std_error:.2g} [{status}]")
    return EXIT_OK if report.all_passed else EXIT_VALIDATION


def cmd_sweep(config, out, args):
    if args.parameter not in SWEEP_PARAMETERS:
        logger.error(f"Unknown sweep parameter '{args.parameter}'; expected one of {', '.join(SWEEP_PARAMETERS)}")
        return EXIT_CONFIG
    if not args.values:
        logger.error("Sweep needs at least one value")
        return EXIT_CONFIG

    base = config.model.strike
    spot = (args.spot or config.spots or [base])[0]
    rows = []
    for value in args.values:
        try:
            run = config.with_parameter(args.parameter, value)
            sol = run_solve(run)
        except ConfigError as exc:
            logger.error(f"Configuration error: {exc}")
            return EXIT_CONFIG
        except JumpPutError as exc:
            _report_solve_failure(exc)
            return EXIT_SOLVE
        # strike sweeps compare at matched moneyness
        at = spot * run.model.strike / base if args.parameter == 'strike' else spot
        rows.append((value, sol.boundary, sol.value(at)))
        logger.info(f"{args.parameter} = {value:g}: boundary {sol.boundary:.6f}, V({at:g}) = {rows[-1][2]:.6f}")

    path = write_sweep(rows, os.path.join(out, 'sweep.csv'))
    print(f"{len(rows)} rows written to {path}")
    return EXIT_OK


COMMANDS = {
    'price': cmd_price,
    'trace': cmd_trace,
    'validate': cmd_validate,
    'sweep': cmd_sweep,
}


def build_parser():
    parser = argparse.ArgumentParser(prog='jumpput', description='Perpetual American put under jump diffusion')
    parser.add_argument('--log-level', default=None, help='overrides JUMPPUT_LOG_LEVEL')
    commands = parser.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        sub = commands.add_parser(name)
        sub.add_argument('--config', required=True, help='JSON run configuration')
        sub.add_argument('--out', default=None, help='output directory (default: config "output")')
        sub.add_argument('--spot', type=float, action='append', help='price to report; repeatable')
        if name == 'price':
            sub.add_argument('--dump-pair', action='store_true', help='write fundamental.csv')
            sub.add_argument('--dump-objective', action='store_true', help='write objective.csv')
        if name == 'sweep':
            sub.add_argument('--parameter', required=True, help=f"one of {', '.join(SWEEP_PARAMETERS)}")
            sub.add_argument('--values', type=float, nargs='*', default=[])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level)
    try:
        config = load_config(args.config)
        out = ensure_output_dir(args.out or config.output)
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    return COMMANDS[args.command](config, out, args)


if __name__ == '__main__':
    sys.exit(main())
