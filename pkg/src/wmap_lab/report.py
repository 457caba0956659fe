"""Run reports and their CSV / JSON serialization.

Table cells are rendered once, as text, and both formats use that rendering:
floats with 17 significant digits, booleans as ``true``/``false``, missing
values as the empty string.  The CSV bytes therefore depend only on the table
contents, which makes reruns of a config byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = ["Table", "Report", "format_cell", "emit_report", "FORMATS"]

FORMATS = ("csv", "json")


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _json_value(value):
    """Plain JSON value; non-finite floats become strings since JSON has no inf/nan."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        return x if math.isfinite(x) else format_cell(x)
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    return value


@dataclass
class Table:
    name: str
    columns: Sequence[str]
    rows: list[Sequence[Any]] = field(default_factory=list)

    def __post_init__(self):
        self.columns = list(self.columns)
        for row in self.rows:
            self._check(row)

    def _check(self, row):
        if len(row) != len(self.columns):
            raise ValueError(f"table {self.name!r}: row has {len(row)} cells, expected {len(self.columns)}")

    def add(self, *cells):
        self._check(cells)
        self.rows.append(list(cells))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(self.columns)
        writer.writerows([format_cell(c) for c in row] for row in self.rows)
        return buf.getvalue()

    def to_records(self) -> list[dict]:
        return [dict(zip(self.columns, (_json_value(c) for c in row))) for row in self.rows]


@dataclass
class Report:
    task: str
    config: dict
    tables: list[Table]
    seed: int
    chunking: str
    version: str
    warnings: list[str] = field(default_factory=list)
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "config": self.config,
            "tables": {t.name: {"columns": t.columns, "rows": t.to_records()} for t in self.tables},
            "provenance": {
                "seed": self.seed,
                "version": self.version,
                "timestamp": self.timestamp,
                "chunking": self.chunking,
            },
            "warnings": list(self.warnings),
        }


def emit_report(report: Report, out_dir, formats: Iterable[str] = FORMATS) -> list[Path]:
    """Write ``<table>.csv`` per table and/or a single ``report.json``; returns the paths written.

    Raises ``OSError`` when the destination cannot be written.
    """
    formats = list(formats)
    unknown = sorted(set(formats) - set(FORMATS))
    if unknown:
        raise ValueError(f"unknown report formats {unknown}; choose from {list(FORMATS)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        for t in report.tables:
            path = out / f"{t.name}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(t.to_csv())
            written.append(path)
    if "json" in formats:
        path = out / "report.json"
        path.write_text(json.dumps(_json_value(report.to_dict()), indent=2) + "\n", encoding="utf-8")
        written.append(path)
    return written
