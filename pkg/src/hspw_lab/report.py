"""JSON reports and CSV sweep tables."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import is_dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "SCHEMA_ID",
    "to_jsonable",
    "dumps_report",
    "write_report",
    "load_schema",
    "validate_report",
    "emit_sweep_table",
    "format_cell",
]

SCHEMA_ID = "hspw-lab/1"


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become ``null``."""
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if obj is None or isinstance(obj, str):
        return obj
    if is_dataclass(obj):
        raise TypeError(f"{type(obj).__name__} has no to_dict()")
    return str(obj)


def dumps_report(report: dict) -> str:
    doc = to_jsonable(report)
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: dict, path) -> str:
    text = dumps_report(report)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror}") from exc
    return text


def load_schema() -> dict:
    text = resources.files("hspw_lab").joinpath("schema/report.schema.json").read_text()
    return json.loads(text)


def validate_report(doc: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``doc`` does not match the shipped schema."""
    import jsonschema

    jsonschema.validate(doc, load_schema())


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def emit_sweep_table(results, path=None, columns=None, sort_key="p") -> str:
    """Header plus one row per result, floats with 17 significant digits.

    ``results`` are dicts or objects with ``csv_row()``.  Rows are sorted by
    ``sort_key`` when every row has it.  Returns the CSV text and writes it
    to ``path`` when given.
    """
    rows = [r.csv_row() if hasattr(r, "csv_row") else dict(r) for r in results]
    if not rows:
        raise ValueError("no results to tabulate")
    if columns is None:
        columns = list(rows[0].keys())
        for r in rows[1:]:
            columns += [k for k in r if k not in columns]
    if sort_key and all(r.get(sort_key) is not None for r in rows):
        rows = sorted(rows, key=lambda r: r[sort_key])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_cell(r.get(c)) for c in columns])
    text = buf.getvalue()
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write table to {path}: {exc.strerror}") from exc
    return text
