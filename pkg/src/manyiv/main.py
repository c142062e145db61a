"""Entry point for the manyiv command line.

Composition root: parses arguments, loads settings, configures logging and
dispatches to the command implementations. Reports go to stdout (or --out),
logs to stderr.
"""

import argparse
import sys
from pathlib import Path

from pydantic import ValidationError

from manyiv import __version__
from manyiv.cli.commands import COMMANDS, cmd_simulate
from manyiv.cli.reporting import render_csv, render_sim_text, render_text, write_json
from manyiv.config import Settings, load_settings
from manyiv.errors import ManyIVError
from manyiv.logger import get_logger, setup_logging
from manyiv.models.outcomes import EstimatorId
from manyiv.models.run_config import AnalysisReport, ColumnRoles, GridSpec, RunConfig, statistic_for


def _split(value: str | None) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()] if value else []


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manyiv",
        description="Jack-knife estimation and weak-identification-robust tests with many instruments.",
    )
    parser.add_argument("--version", action="version", version=f"manyiv {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=float, default=None, help="significance level (default 0.05)")
    common.add_argument("--out", type=Path, default=None, help="output file (output directory for simulate)")
    common.add_argument("--format", choices=["text", "json", "csv"], default="text")
    common.add_argument("--workers", type=int, default=None)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("input", type=Path, help="UTF-8 CSV with a header row")
    data.add_argument("--y", required=True, help="outcome column")
    data.add_argument("--x", required=True, help="endogenous regressor column")
    data.add_argument("--z", default=None, help="comma-separated instrument columns")
    data.add_argument("--z-prefix", default=None, help="instrument column prefix")
    data.add_argument("--w", default=None, help="comma-separated control columns")
    data.add_argument("--w-prefix", default=None, help="control column prefix")
    data.add_argument("--expand", default=None, help="categorical columns to expand into dummies")
    data.add_argument("--groups", default=None, help="group label column for indicator instruments")

    inference = argparse.ArgumentParser(add_help=False)
    inference.add_argument("--stat", choices=["ar", "lm", "arw", "ar1", "ar2"], default=None)
    inference.add_argument(
        "--variance", choices=["phi1", "phi2", "phi3", "psi1", "psi2"], default=None
    )
    inference.add_argument("--squared", action="store_true", help="report LM squared with a chi2(1) p-value")
    inference.add_argument("--allow-large", action="store_true", help="allow phi3 beyond its size limit")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--engine", choices=["auto", "grid", "polynomial"], default="auto")
    grid.add_argument("--center", type=float, default=None, help="grid centre (default: jack-knife estimate)")
    grid.add_argument("--halfwidth", type=float, default=None)
    grid.add_argument("--grid-points", type=int, default=None)

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common, data, grid], help="pre-test, estimate and robust sets")
    sub.add_parser("pretest", parents=[common, data], help="first-stage F and F-tilde")
    test = sub.add_parser("test", parents=[common, data, inference], help="one robust test at beta0")
    test.add_argument("--beta0", type=float, required=True)
    sub.add_parser("confset", parents=[common, data, inference, grid], help="invert a robust test")
    est = sub.add_parser("estimate", parents=[common, data], help="point estimate and standard error")
    est.add_argument("--estimator", choices=[e.value for e in EstimatorId], default=EstimatorId.JIVE2.value)
    sim = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo design")
    sim.add_argument("--design", required=True, help="design file path or bundled design name")
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None, help="override the design seed")
    return parser


def to_run_config(args: argparse.Namespace, settings: Settings) -> RunConfig:
    fields: dict[str, object] = {
        "command": args.command,
        "alpha": settings.alpha if args.alpha is None else args.alpha,
        "out": args.out,
        "output_format": args.format,
        "workers": settings.workers if args.workers is None else args.workers,
    }
    if args.command == "simulate":
        fields |= {"design_path": args.design, "reps": args.reps, "seed": args.seed}
        return RunConfig(**fields)

    fields["input_path"] = args.input
    fields["roles"] = ColumnRoles(
        outcome=args.y,
        endogenous=args.x,
        instruments=_split(args.z),
        instrument_prefix=args.z_prefix,
        controls=_split(args.w),
        control_prefix=args.w_prefix,
        expand=_split(args.expand),
        groups=args.groups,
    )
    if getattr(args, "stat", None):
        fields["statistic"] = statistic_for(args.stat, args.variance)
    for name in ("beta0", "estimator", "engine"):
        if getattr(args, name, None) is not None:
            fields[name] = getattr(args, name)
    fields["squared"] = getattr(args, "squared", False)
    fields["allow_large"] = getattr(args, "allow_large", False)
    overrides = {
        key: value
        for key, value in (
            ("center", getattr(args, "center", None)),
            ("halfwidth", getattr(args, "halfwidth", None)),
            ("points", getattr(args, "grid_points", None)),
        )
        if value is not None
    }
    fields["grid"] = GridSpec(**overrides)
    return RunConfig(**fields)


def emit(report: AnalysisReport, config: RunConfig) -> None:
    """Text goes to stdout with the JSON report at --out; json/csv go to --out or stdout."""
    match config.output_format:
        case "text":
            print(render_text(report))
            if config.out is not None:
                write_json(report, config.out)
        case "json":
            if config.out is not None:
                write_json(report, config.out)
            else:
                print(report.model_dump_json(indent=2))
        case "csv":
            if config.out is not None:
                config.out.parent.mkdir(parents=True, exist_ok=True)
                config.out.write_text(render_csv(report), encoding="utf-8")
            else:
                sys.stdout.write(render_csv(report))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    settings = load_settings()
    setup_logging(settings.log_level)
    logger = get_logger("manyiv.main")

    try:
        config = to_run_config(args, settings)
    except (ValidationError, ValueError) as exc:
        parser.error(str(exc))

    logger.info("command_starting", command=config.command, version=__version__)
    try:
        if config.command == "simulate":
            report, _ = cmd_simulate(config, settings)
            if config.output_format == "json":
                print(report.model_dump_json(indent=2))
            else:
                print(render_sim_text(report))
        else:
            emit(COMMANDS[config.command](config, settings), config)
    except ManyIVError as exc:
        logger.error("command_failed", command=config.command, error=str(exc), error_type=type(exc).__name__)
        return 1
    logger.info("command_done", command=config.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
