#!/usr/bin/env python3
"""
DAN Simulator CLI Application
Entry point for the command-line interface
"""

import argparse
import sys

from actions.run_scenario import RunScenarioAction
from actions.validate_scenario import ValidateScenarioAction
from actions.forecast import ForecastAction
from actions.gradcheck import GradcheckAction
from actions.report import ReportAction
from actions.cache_manage import CacheManageAction, create_parser as create_cache_parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dan",
        description="DAN Simulator - deterministic simulation of a decentralized autonomous network",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  dan validate scenarios/reference.toml        # Check a scenario file
  dan run scenarios/reference.toml --seed 42   # Run and export metrics, traces, checkpoints
  dan report var/dan-sim/runs/reference-42     # Summarize a finished run
  dan forecast --config scenarios/forecast.toml
  dan gradcheck                                # Finite-difference check of the forecaster
  dan cache stats                              # View dataset cache statistics

Set DAN_LOG=DEBUG for verbose logs.
        """
    )

    subparsers = parser.add_subparsers(
        dest='action',
        help='Available actions',
        required=True
    )

    # Run action
    run_parser = subparsers.add_parser(
        'run',
        help='Run a scenario and export its artifacts'
    )
    run_parser.add_argument('scenario', help='Scenario TOML file')
    run_parser.add_argument(
        '--seed',
        type=int,
        help='Master seed (overrides the scenario seed)'
    )
    run_parser.add_argument(
        '--out',
        help='Output directory (default: var/dan-sim/runs/<name>-<seed>)'
    )

    # Validate action
    validate_parser = subparsers.add_parser(
        'validate',
        help='Parse and validate a scenario file'
    )
    validate_parser.add_argument('scenario', help='Scenario TOML file')

    # Forecast action
    forecast_parser = subparsers.add_parser(
        'forecast',
        help='Train the forecaster on a dataset and compare it with the persistence baseline'
    )
    forecast_parser.add_argument(
        'dataset',
        nargs='?',
        help='Dataset sidecar (.json); a cached synthetic dataset is used when omitted'
    )
    forecast_parser.add_argument(
        '--config',
        help='Forecast job TOML with [synthetic], [model] and [train] tables'
    )
    forecast_parser.add_argument(
        '--out',
        help='Output directory for loss.csv and model.ckpt'
    )
    forecast_parser.add_argument(
        '--no-cache',
        action='store_true',
        help='Regenerate the synthetic dataset instead of reading the cache'
    )

    # Gradcheck action
    gradcheck_parser = subparsers.add_parser(
        'gradcheck',
        help='Compare analytic gradients of a tiny model with central differences'
    )
    gradcheck_parser.add_argument(
        '--h',
        type=float,
        default=1e-5,
        help='Finite-difference step (default: 1e-5)'
    )
    gradcheck_parser.add_argument(
        '--seed',
        type=int,
        default=0,
        help='Seed for the model and the synthetic sample (default: 0)'
    )

    # Report action
    report_parser = subparsers.add_parser(
        'report',
        help='Summarize the metrics of a run directory'
    )
    report_parser.add_argument('dir', help='Run directory containing metrics.csv')

    # Cache action
    create_cache_parser(subparsers)

    return parser


def main(argv=None):
    """Main CLI entry point"""
    args = build_parser().parse_args(argv)

    try:
        if args.action == 'run':
            return RunScenarioAction().run(scenario_path=args.scenario, seed=args.seed, out_dir=args.out)
        elif args.action == 'validate':
            return ValidateScenarioAction().run(scenario_path=args.scenario)
        elif args.action == 'forecast':
            return ForecastAction().run(
                dataset_path=args.dataset,
                config_path=args.config,
                out_dir=args.out,
                no_cache=args.no_cache
            )
        elif args.action == 'gradcheck':
            return GradcheckAction().run(h=args.h, seed=args.seed)
        elif args.action == 'report':
            return ReportAction().run(run_dir=args.dir)
        elif args.action == 'cache':
            return CacheManageAction().run(cache_action=args.cache_action)
        else:
            print(f"❌ Unknown action: {args.action}")
            return 1

    except KeyboardInterrupt:
        print("\n👋 Operation cancelled by user")
        return 1


if __name__ == "__main__":
    sys.exit(main())
