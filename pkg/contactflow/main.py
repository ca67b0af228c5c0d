"""
Command-line entry point.

    contactflow run --config experiments.toml [--out DIR] [--workers N] [--suite NAME] [--strict]
    contactflow regularize --config experiments.toml      (run limited to one suite)
    contactflow nonsmooth --a 1.0 --delta 0.5 --kmax 100000 --out certificate.csv

Exit status: 0 when every asserted bound passed, 1 when one failed, 2 for
configuration, usage and output errors.
"""

import argparse
import logging
from pathlib import Path
from typing import Optional, Sequence

from contactflow.core.config import settings
from contactflow.core.errors import CertificateRangeError, ConfigError, GalleryError, ReportError
from contactflow.core.logging import get_logger, set_level
from contactflow.schemas.experiment import SUITES

logger = get_logger(__name__)

EXIT_PASSED = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _add_run_arguments(parser: argparse.ArgumentParser, with_suite: bool) -> None:
    parser.add_argument("--config", required=True, help="experiment file (TOML)")
    parser.add_argument("--out", default=None, help="report directory (default: [output] directory)")
    parser.add_argument("--workers", type=int, default=None, help="experiments run in parallel")
    if with_suite:
        parser.add_argument("--suite", choices=SUITES, default=None, help="run only this suite")
    parser.add_argument("--strict", action="store_true", default=None, help="treat warnings as failures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contactflow", description="Contact dynamical systems experiments")
    parser.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    _add_run_arguments(commands.add_parser("run", help="run the experiments of a config file"), with_suite=True)
    for suite in SUITES:
        if suite != "nonsmooth":
            _add_run_arguments(commands.add_parser(suite, help=f"run only the {suite} experiments"), with_suite=False)

    certificate = commands.add_parser("nonsmooth", help="non-Lipschitz certificate table")
    certificate.add_argument("--a", type=float, default=1.0, help="exponent of rho near the axis, in (0, 2)")
    certificate.add_argument("--delta", type=float, default=0.5, help="Hoelder exponent to beat, in (0, a)")
    certificate.add_argument("--kmax", type=int, default=None, help="largest index k (default: float floor)")
    certificate.add_argument("--count", type=int, default=40, help="number of indices spread up to kmax")
    certificate.add_argument("--out", required=True, help="CSV file")
    return parser


def run_command(args: argparse.Namespace) -> int:
    from contactflow.runner.config_loader import load_config
    from contactflow.runner.reports import emit_report
    from contactflow.runner.suites import run_suites

    suite = getattr(args, "suite", None) if args.command == "run" else args.command
    if args.workers is not None and args.workers < 1:
        logger.error("--workers must be at least 1")
        return EXIT_USAGE
    try:
        config = load_config(args.config)
        report = run_suites(config, str(args.config), suite, args.workers, args.strict)
        directory = args.out or config.output.directory or settings.output_dir
        emit_report(report, directory, config.output.formats, Path(args.config).stem)
    except (ConfigError, ReportError) as e:
        logger.error(str(e))
        return EXIT_USAGE

    failures = report.failures()
    for row in failures:
        bound = f"{row.relation} {row.required!r}" if row.required is not None else row.note
        logger.error(f"FAILED {row.experiment} {row.anchor} {row.quantity}: {row.measured!r} {bound}")
    return EXIT_PASSED if not failures else EXIT_FAILED


def nonsmooth_command(args: argparse.Namespace) -> int:
    from contactflow.constructions.nonsmooth import CutoffEta, RhoProfile, lipschitz_certificate
    from contactflow.runner.reports import emit_certificate

    try:
        profile = RhoProfile(exponent=args.a)
        certificate = lipschitz_certificate(profile, CutoffEta(), args.delta, kmax=args.kmax, count=args.count)
        emit_certificate(certificate, args.out)
    except (GalleryError, ReportError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except CertificateRangeError as e:
        logger.error(f"{e}; smallest usable radius {e.smallest_usable:.3e}")
        return EXIT_FAILED
    return EXIT_PASSED if certificate.passed else EXIT_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        set_level(logging.WARNING)
    logger.info(f"{settings.APP_NAME} {settings.APP_VERSION}: {args.command}")
    if args.command == "nonsmooth":
        return nonsmooth_command(args)
    return run_command(args)


if __name__ == "__main__":
    raise SystemExit(main())
