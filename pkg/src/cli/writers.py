"""Report and artifact files written into the --out directory."""

from pathlib import Path
from typing import Dict, List

import pandas as pd

from src.logger import get_logger
from src.models.reports import RunReport

logger = get_logger(__name__)

REPORT_NAME = "report.json"


def write_tables(out_dir: Path, tables: Dict[str, pd.DataFrame]) -> List[str]:
    """Write each table as ``<name>.csv`` with a header row; returns file names in name order."""
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for name in sorted(tables):
        file_name = f"{name}.csv"
        tables[name].to_csv(out_dir / file_name, index=False, float_format="%.17g")
        names.append(file_name)
        logger.debug(f"wrote {file_name} ({len(tables[name])} rows)")
    return names


def write_report(out_dir: Path, report: RunReport) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / REPORT_NAME
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"report written to {path}")
    return path
