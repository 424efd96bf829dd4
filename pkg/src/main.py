import argparse
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.table import Table

from src.cli.loader import load_config
from src.cli.verbs import VERBS, RunOptions, VerbContext, VerbResult
from src.cli.writers import write_report, write_tables
from src.config import settings
from src.errors import ConfigError, SingularMatrix, ToolkitError
from src.logger import get_logger, set_console_level
from src.models.reports import CheckResult, RunReport, worst_status
from src.utils.helpers import config_digest, format_error_report
from src.utils.validators import validate_run_config

logger = get_logger(__name__)

EXIT_CODES = {"pass": 0, "fail": 1, "inconclusive": 2, "error": 3}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hjtk",
        description="Check Hamilton-Jacobi solutions, canonical transforms and field evolutions.",
    )
    parser.add_argument("verb", choices=sorted(VERBS))
    parser.add_argument("config", help="TOML run configuration")
    parser.add_argument("--out", default="out", help="Directory for report.json and CSV files")
    parser.add_argument("--tolerance", type=float, help="Override [check].tolerance")
    parser.add_argument("--seed", type=int, help="Override [check].seed")
    parser.add_argument("--samples", type=int, help="Random samples instead of the grid")
    parser.add_argument("--quiet", action="store_true", help="Warnings only, no summary table")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values = {"tolerance": args.tolerance, "seed": args.seed, "samples": args.samples}
    return {key: value for key, value in values.items() if value is not None}


def _print_summary(report: RunReport) -> None:
    table = Table(title=f"{report.verb} {report.config}")
    table.add_column("check")
    table.add_column("max defect", justify="right")
    table.add_column("tolerance", justify="right")
    table.add_column("status")
    for check in report.checks:
        defect = "-" if check.max_defect is None else f"{check.max_defect:.3e}"
        table.add_row(check.name, defect, f"{check.tolerance:.1e}", check.status)
    console = Console()
    console.print(table)
    if report.error is not None:
        console.print(f"[red]{report.error.type}[/red]: {report.error.message}")
    console.print(f"status: [bold]{report.status}[/bold] (exit {report.exit_code})")


def run(verb: str, config_path: str, args: argparse.Namespace) -> RunReport:
    """
    Load a config, run one verb and write the report files.

    Args:
        verb (str): CLI verb.
        config_path (str): TOML file.
        args (argparse.Namespace): Parsed flags.

    Returns:
        RunReport: The report written to ``<out>/report.json``.
    """
    started = time.perf_counter()
    out_dir = Path(args.out)
    overrides = _overrides(args)
    raw = b""
    seed = args.seed if args.seed is not None else 0
    tolerance = args.tolerance if args.tolerance is not None else settings.DEFAULT_TOLERANCE
    checks: List[CheckResult] = []
    result = VerbResult()
    error = None
    status: Optional[str] = None

    try:
        source = load_config(config_path)
        raw = source.raw
        validate_run_config(source, verb)
        ctx = VerbContext(source, RunOptions(**overrides))
        seed, tolerance = ctx.seed, ctx.tolerance
        logger.info(f"{verb}: running {config_path}")
        try:
            result = VERBS[verb](ctx)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrix(str(exc)) from exc
        except ValueError as exc:
            raise ConfigError(config_path, None, str(exc)) from exc
        checks = result.checks
    except ConfigError as exc:
        logger.error(f"config error: {exc}")
        error = format_error_report(exc)
        status = "error"
    except ToolkitError as exc:
        logger.error(f"{verb} failed: {exc}")
        error = format_error_report(exc)
        checks = result.checks + [
            CheckResult(
                name=verb, max_defect=None, tolerance=tolerance, status="fail", notes=[str(exc)]
            )
        ]

    if status is None:
        status = worst_status(check.status for check in checks) if checks else "inconclusive"
    artifacts = write_tables(out_dir, result.tables) if status != "error" else []
    timing = None
    if settings.REPORT_TIMING:
        timing = {"wall_seconds": time.perf_counter() - started}

    report = RunReport(
        producer=settings.APP_NAME,
        version=settings.VERSION,
        verb=verb,
        config=Path(config_path).name,
        config_digest=config_digest(raw, overrides),
        seed=seed,
        tolerance=tolerance,
        status=status,
        exit_code=EXIT_CODES[status],
        checks=checks,
        details=result.details,
        artifacts=artifacts,
        error=error,
        timing=timing,
    )
    write_report(out_dir, report)
    return report


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        set_console_level("WARNING")
    report = run(args.verb, args.config, args)
    if not args.quiet:
        _print_summary(report)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
