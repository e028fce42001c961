import argparse
import logging
import sys

from draccus import parse

from exprec.harness import compare, format_comparison, format_report, load_summary, run_experiment
from exprec.utils.configurations import METHODS, ExperimentConfiguration


def load_configuration(schedule_path: str, overrides: list[str] | None = None) -> ExperimentConfiguration:
    """Read a schedule file; dotted overrides such as `--recommender.alpha=0.1` take precedence."""
    return parse(ExperimentConfiguration, config_path=schedule_path, args=overrides or [])


def run(args: argparse.Namespace, overrides: list[str]) -> int:
    overrides = list(overrides)
    if args.method is not None:
        overrides.append(f"--schedule.method={args.method}")
    if args.seed is not None:
        overrides.append(f"--schedule.seed={args.seed}")
    config = load_configuration(args.schedule, overrides)
    report = run_experiment(config, args.out)
    print(format_report(report.summary()))
    if report.failed:
        config.logger.error(f"Runs failed: {report.failed}")
        return 1
    return 0


def report(args: argparse.Namespace, overrides: list[str]) -> int:
    summary = load_summary(args.input)
    print(format_report(summary))
    return 1 if summary["aggregate"]["failed_runs"] else 0


def compare_runs(args: argparse.Namespace, overrides: list[str]) -> int:
    rows = compare(load_summary(args.a), load_summary(args.b))
    print(format_comparison(rows, args.a, args.b))
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="exprec", description="Experience-recommending learning MPC experiments")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="Run a multi-run schedule in closed loop")
    run_parser.add_argument("--schedule", required=True, help="YAML schedule file")
    run_parser.add_argument("--method", choices=METHODS)
    run_parser.add_argument("--seed", type=int)
    run_parser.add_argument("--out", required=True, help="Output directory for logs and summary.json")
    run_parser.set_defaults(handler=run)

    report_parser = commands.add_parser("report", help="Print the metric tables of a finished experiment")
    report_parser.add_argument("--in", dest="input", required=True)
    report_parser.set_defaults(handler=report)

    compare_parser = commands.add_parser("compare", help="Paired per-run deltas between two experiments")
    compare_parser.add_argument("--a", required=True)
    compare_parser.add_argument("--b", required=True)
    compare_parser.set_defaults(handler=compare_runs)

    # Anything unrecognized is forwarded to the configuration parser
    args, overrides = parser.parse_known_args(argv)
    return args.handler(args, overrides)


if __name__ == "__main__":
    sys.exit(main())
