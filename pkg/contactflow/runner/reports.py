"""
Report emission.

CSV files are UTF-8 with a header row and a fixed column order; floats are
written with repr so a reread gives the same doubles on any locale. JSON files
are the pydantic dump of the run report. Writing the same report twice gives
byte-identical files.
"""

import csv
from pathlib import Path
from typing import Any, Iterable, Sequence

from contactflow.core.errors import ReportError
from contactflow.core.logging import get_logger
from contactflow.schemas.nonsmooth import LipschitzCertificate
from contactflow.schemas.report import ResultRow, RunReport

logger = get_logger(__name__)

ROW_FIELDS: tuple[str, ...] = tuple(ResultRow.model_fields)
CERTIFICATE_FIELDS: tuple[str, ...] = ("k", "s_k", "s_k'", "quotient", "bound", "pass")
FORMATS = ("csv", "json")


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_cell(v) for v in row])
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise ReportError(f"cannot write report ({e.strerror or e})", str(path)) from e


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise ReportError(f"cannot write report ({e.strerror or e})", str(path)) from e


def emit_report(
    report: RunReport, directory: str | Path, formats: Sequence[str] = FORMATS, stem: str = "report"
) -> list[Path]:
    """
    Write a run report as <directory>/<stem>.csv and/or <stem>.json.

    Returns:
        The written paths, in the order of `formats`

    Raises:
        ReportError: Unknown format or an I/O failure, with the offending path
    """
    directory = Path(directory)
    written = []
    for fmt in formats:
        path = directory / f"{stem}.{fmt}"
        if fmt == "csv":
            _write_csv(path, ROW_FIELDS, ([getattr(row, name) for name in ROW_FIELDS] for row in report.rows))
        elif fmt == "json":
            _write_text(path, report.model_dump_json(indent=2) + "\n")
        else:
            raise ReportError(f"unknown report format '{fmt}'", str(path))
        written.append(path)
    logger.info(f"Wrote {len(report.rows)} row(s) to {', '.join(str(p) for p in written)}")
    return written


def emit_certificate(certificate: LipschitzCertificate, path: str | Path) -> Path:
    """
    Write the certificate table with the columns k, s_k, s_k', quotient, bound, pass.

    Raises:
        ReportError: I/O failure
    """
    path = Path(path)
    rows = ((row.k, row.s_k, row.s_k_prime, row.quotient, row.bound, row.passed) for row in certificate.rows)
    _write_csv(path, CERTIFICATE_FIELDS, rows)
    logger.info(f"Wrote {len(certificate.rows)} certificate row(s) to {path}")
    return path
