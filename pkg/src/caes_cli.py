# =============================================================================
# caes_cli.py - Command-line front end for the cavern models
# =============================================================================
# Sub-commands:
#   simulate  run one scenario with one model and write its trace
#   validate  MARE table of a model against the oracle for the builtin processes
#   sweep     final-state errors over several step intervals
#   figures   side-by-side trajectories of several models
#
# Exit codes: 0 success, 1 runtime/domain failure, 2 usage/config failure.
# =============================================================================

import argparse
import logging
import sys
from typing import List, Optional, Sequence

from dotenv import load_dotenv

from cavern_config import (
    OUTPUT_FORMATS,
    ConfigError,
    RunConfig,
    log_level_name,
    oracle_max_substep,
    parse_model_tag,
    resolve_params,
    resolve_scenario,
)
from cavern_models import ModelKind
from cavern_thermo import CavernDomainError, CavernParams
from cavern_validation import (
    DEFAULT_FIGURE_MODELS,
    DEFAULT_INTERVALS,
    Scenario,
    ScenarioError,
    SimulationError,
    build_sweep_report,
    build_validation_report,
    builtin_scenarios,
    figure_data,
    format_sweep_table,
    run,
)
from trace_storage import TraceStorage

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def setup_logging(level: str = 'INFO') -> None:
    """Log to stderr so stdout stays free for trace and table data"""
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stderr)
        ]
    )
    logging.getLogger().setLevel(level)


def _emit(text: str, out: Optional[str], write) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write(out)


def parse_intervals(raw: str) -> List[float]:
    try:
        intervals = [float(part) for part in raw.split(',') if part.strip()]
    except ValueError:
        raise ConfigError(f"--intervals must be a comma-separated list of seconds, got {raw!r}") from None
    if not intervals or any(not interval > 0 for interval in intervals):
        raise ConfigError(f"--intervals must list positive step sizes, got {raw!r}")
    return intervals


def cmd_simulate(config: RunConfig, max_substep: float) -> int:
    trace = run(config.scenario, config.model, config.dt, config.params, max_substep=max_substep)
    storage = TraceStorage()
    out = str(config.out) if config.out is not None else None
    _emit(storage.render_trace(trace, config.fmt), out,
          lambda path: storage.write_trace(trace, path, config.fmt))
    return EXIT_OK


def cmd_validate(params: CavernParams, dt: float, model: ModelKind, out: Optional[str], fmt: str) -> int:
    report = build_validation_report(params, dt, model)
    if not report['success']:
        logging.error(f"Validation failed: {report['error']}")
        return EXIT_RUNTIME

    separation = report['separation']
    logging.info(f"Constant-temperature separation: p x{separation['ratio_p']:.1f}, "
                 f"T x{separation['ratio_T']:.1f} ({'ok' if separation['separated'] else 'NOT separated'})")
    if not report['passed']:
        logging.warning(f"{model.value} is outside the acceptance bands")

    storage = TraceStorage()
    table = report['table'].reset_index().rename(columns={'index': 'quantity'})
    if fmt == 'json':
        _emit(storage.render_report(report), out, lambda path: storage.write_report(report, path))
    else:
        _emit(storage.render_table(table, 'csv'), out, lambda path: storage.write_table(table, path))
    return EXIT_OK


def cmd_sweep(scenarios: Sequence[Scenario], intervals: Sequence[float], params: CavernParams,
              out: Optional[str], fmt: str, workers: Optional[int]) -> int:
    report = build_sweep_report(scenarios, intervals, params, workers)
    if not report['success']:
        logging.error(f"Sweep failed: {report['error']}")
        return EXIT_RUNTIME

    table = report['table']
    logging.info("Final-state errors by interval:\n" + format_sweep_table(table).to_string())
    for name, ok in report['checks'].items():
        logging.info(f"  {name}: {'PASS' if ok else 'FAIL'}")

    storage = TraceStorage()
    _emit(storage.render_table(table, fmt), out, lambda path: storage.write_table(table, path, fmt))
    return EXIT_OK


def cmd_figures(scenario: Scenario, dt: float, params: CavernParams, models: Sequence[ModelKind],
                out: Optional[str], fmt: str) -> int:
    data = figure_data(scenario, dt, params, models)
    storage = TraceStorage()
    _emit(storage.render_table(data, fmt), out, lambda path: storage.write_table(data, path, fmt))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--params', help='JSON params file (default: $CAES_PARAMS, else Huntorf)')
    common.add_argument('--out', help='Output file (default: stdout)')
    common.add_argument('--format', dest='fmt', choices=OUTPUT_FORMATS, default='csv', help='Output format')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true', help='Debug logging')
    verbosity.add_argument('--quiet', action='store_true', help='Warnings and errors only')

    parser = argparse.ArgumentParser(
        prog='caes',
        description='Thermodynamic cavern models for compressed air energy storage'
    )
    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', parents=[common], help='Simulate one scenario')
    simulate.add_argument('--scenario', required=True, help='charging, discharging, idle or a scenario file')
    simulate.add_argument('--model', default='bilinear', help='exact, exact-adiabatic, bilinear, '
                                                              'bilinear-adiabatic, const-temp or oracle')
    simulate.add_argument('--dt', type=float, default=None,
                          help="Step size in seconds (default: each segment's own)")

    validate = commands.add_parser('validate', parents=[common], help='Accuracy table against the oracle')
    validate.add_argument('--model', default='bilinear', help='Model to validate')
    validate.add_argument('--dt', type=float, default=1.0, help='Step size in seconds')

    sweep = commands.add_parser('sweep', parents=[common], help='Final-state errors over step intervals')
    sweep.add_argument('--scenario', action='append',
                       help='Scenario name or file, repeatable (default: all builtin scenarios)')
    sweep.add_argument('--intervals', default=','.join(f'{i:g}' for i in DEFAULT_INTERVALS),
                       help='Comma-separated step sizes in seconds')
    sweep.add_argument('--workers', type=int, default=None, help='Worker processes for the sweep')

    figures = commands.add_parser('figures', parents=[common], help='Trajectories of several models')
    figures.add_argument('--scenario', required=True, help='Scenario name or file')
    figures.add_argument('--dt', type=float, default=1.0, help='Step size in seconds')
    figures.add_argument('--models', default=','.join(kind.value for kind in DEFAULT_FIGURE_MODELS),
                         help='Comma-separated model tags')
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    params = resolve_params(args.params)

    if args.command == 'simulate':
        config = RunConfig(params=params, scenario=resolve_scenario(args.scenario),
                           model=parse_model_tag(args.model), dt=args.dt, out=args.out, fmt=args.fmt)
        return cmd_simulate(config, oracle_max_substep())

    if args.command == 'validate':
        if not args.dt > 0:
            raise ConfigError(f"dt must be positive, got {args.dt}")
        for scenario in builtin_scenarios():
            scenario.check_interval(args.dt)
        return cmd_validate(params, args.dt, parse_model_tag(args.model), args.out, args.fmt)

    if args.command == 'sweep':
        names = args.scenario or [scenario.name for scenario in builtin_scenarios()]
        scenarios = [resolve_scenario(name) for name in names]
        intervals = parse_intervals(args.intervals)
        for scenario in scenarios:
            for interval in intervals:
                scenario.check_interval(interval)
        return cmd_sweep(scenarios, intervals, params, args.out, args.fmt, args.workers)

    scenario = resolve_scenario(args.scenario)
    if not args.dt > 0:
        raise ConfigError(f"dt must be positive, got {args.dt}")
    scenario.check_interval(args.dt)
    models = [parse_model_tag(tag) for tag in args.models.split(',') if tag.strip()]
    return cmd_figures(scenario, args.dt, params, models, args.out, args.fmt)


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        setup_logging(log_level_name(args.verbose, args.quiet))
        return _dispatch(args)
    except (ConfigError, ScenarioError) as e:
        logging.error(f"Usage error: {str(e)}")
        return EXIT_USAGE
    except (SimulationError, CavernDomainError, OSError) as e:
        logging.error(f"Run failed: {str(e)}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
