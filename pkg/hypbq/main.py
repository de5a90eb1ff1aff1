"""
hypbq command-line entry point.

Usage:
    hypbq simulate --config config/small-data.toml --out runs/small
    hypbq verify-semigroup --config config/zero-forcing.toml
    hypbq stability --config config/small-data.toml --override solver.t_max=5
    hypbq periodic --config config/periodic.toml
    hypbq constants --d 2 --p 4 --delta-d 1 --C 1

Exit status: 0 when every acceptance check passed, 2 when one failed,
1 on any error (malformed config, infeasible preconditions, I/O).
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

from hypbq import __version__
from hypbq.config import settings
from hypbq.exceptions import ConfigurationError, HypBQError
from hypbq.models.experiment import ExperimentConfig
from hypbq.models.reports import RunOutcome
from hypbq.services.experiment_config import ExperimentLoader
from hypbq.services.experiments import COMMANDS, RUNNERS, build_problem, run_constants
from hypbq.services.report_writer import ReportWriter
from hypbq.utils.logging import get_logger, set_level

logger = get_logger(__name__)

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_FAILED = 2

_CONSTANT_FLAGS = ("d", "p", "delta_d", "C", "rho", "h_norm")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with EXIT_ERROR; 2 is reserved for failed checks."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hypbq",
        description="Mild-solution experiments for Boussinesq systems on hyperbolic space",
    )
    parser.add_argument("--version", action="version", version=f"hypbq {__version__}")
    parser.add_argument("--log-level", default=None,
                        help="Override HYPBQ_LOG_LEVEL for this run")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", required=command != "constants",
                       help="TOML experiment file")
        p.add_argument("--out", default=None, help="Output directory for report.json")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="Dotted config override, repeatable (e.g. solver.rho=0.05)")
        if command == "constants":
            p.add_argument("--d", type=int, default=None)
            p.add_argument("--p", type=float, default=None)
            p.add_argument("--delta-d", dest="delta_d", type=float, default=None)
            p.add_argument("--C", dest="C", type=float, default=None)
            p.add_argument("--rho", type=float, default=None)
            p.add_argument("--h-norm", dest="h_norm", type=float, default=None)
    return parser


def _output_dir(args: argparse.Namespace, config: Optional[ExperimentConfig]) -> Path:
    if args.out:
        return Path(args.out)
    if config is not None and config.experiment.output_dir:
        return Path(config.experiment.output_dir)
    return Path(settings.output_dir) / args.command


def _constants(args: argparse.Namespace) -> Tuple[RunOutcome, Optional[ExperimentConfig],
                                                  Optional[Dict[str, Any]]]:
    given = {name: getattr(args, name) for name in _CONSTANT_FLAGS
             if getattr(args, name) is not None}
    config = ExperimentLoader(args.config).load(args.override) if args.config else None
    if config is not None and not given:
        return RUNNERS["constants"](config), config, None
    if config is None:
        missing = [name for name in ("d", "p", "delta_d", "C") if name not in given]
        if missing:
            raise ConfigurationError(
                f"constants needs --{missing[0].replace('_', '-')} without --config",
                error_code="CONFIG_MISSING",
                details={"key": missing[0]},
            )
        params: Dict[str, Any] = {"rho": 0.0, "h_norm": 0.0, **given}
    else:
        d = given.get("d", config.manifold.d)
        p = given.get("p", config.solver.p)
        params = {
            "d": d, "p": p, "delta_d": config.semigroup.spectral_constant(d),
            "C": config.semigroup.C, "rho": config.solver.rho,
            "h_norm": build_problem(config).forcing.h_norm(p), **given,
        }
    outcome = run_constants(params["d"], params["p"], params["delta_d"], params["C"],
                            rho=params["rho"], h_norm=params["h_norm"])
    return outcome, config, params


def run(args: argparse.Namespace) -> int:
    """Execute one parsed invocation and return its exit status."""
    parameters: Optional[Dict[str, Any]] = None
    if args.command == "constants":
        outcome, config, parameters = _constants(args)
    else:
        config = ExperimentLoader(args.config).load(args.override)
        outcome = RUNNERS[args.command](config)

    out_dir = _output_dir(args, config)
    echo = config.model_dump(mode="json") if config is not None else None
    path = ReportWriter().write(outcome, out_dir, config=echo, parameters=parameters)
    failed = [name for name, ok in outcome.checks.items() if not ok]
    status = "PASS" if outcome.passed else "FAIL"
    print(f"{status} {args.command}: {path}")
    if failed:
        print(f"failed checks: {', '.join(failed)}")
    return EXIT_PASS if outcome.passed else EXIT_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        set_level(args.log_level)
    else:
        set_level(settings.log_level)
    try:
        return run(args)
    except HypBQError as exc:
        logger.error("Run failed", extra={"error_code": exc.error_code, "details": exc.details})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
