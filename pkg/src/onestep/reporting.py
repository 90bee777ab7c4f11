"""CSV / JSON serialisation of experiment reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from pathlib import Path

import numpy as np

__all__ = ["ReportIOError", "dumps_report", "emit_report", "load_report_json", "to_jsonable", "report_rows"]

POS_INF = "+inf"
NEG_INF = "-inf"


class ReportIOError(OSError):
    pass


def _float(x: float):
    if math.isnan(x):
        return None
    if math.isinf(x):
        return POS_INF if x > 0 else NEG_INF
    return x


def to_jsonable(obj):
    """Plain JSON structure; infinities become ``"+inf"``/``"-inf"``, NaN becomes null."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    return obj


def _from_json(obj):
    if obj == POS_INF:
        return math.inf
    if obj == NEG_INF:
        return -math.inf
    if isinstance(obj, dict):
        return {k: _from_json(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_json(v) for v in obj]
    return obj


def report_rows(report):
    """One dict per replicate / iteration / instance."""
    if isinstance(report, list):
        rows = []
        for item in report:
            rows.extend(report_rows(item) if hasattr(item, "rows") else [item])
        return rows
    if hasattr(report, "rows"):
        return list(report.rows())
    raise TypeError(f"cannot tabulate {type(report).__name__}")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return POS_INF if v > 0 else NEG_INF
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def dumps_report(report, fmt: str = "json", columns=None) -> str:
    """Serialise ``report`` to CSV (header + one row per record) or JSON text.

    For CSV of an empty report pass ``columns`` to get a header-only file.
    """
    if fmt == "json":
        return json.dumps(to_jsonable(report), indent=2, allow_nan=False) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    columns = columns or getattr(report, "columns", None)
    rows = report_rows(report)
    header = list(columns) if columns else (list(rows[0]) if rows else [])
    for r in rows:
        header += [k for k in r if k not in header]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(r.get(k, "")) for k in header])
    return buf.getvalue()


def emit_report(report, path, fmt: str = "json", columns=None) -> None:
    """Write :func:`dumps_report` output to ``path``."""
    path = Path(path)
    if not path.parent.exists():
        raise ReportIOError(f"parent directory of {path} does not exist")
    text = dumps_report(report, fmt, columns)
    try:
        path.write_text(text)
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc


def load_report_json(path):
    with Path(path).open() as fh:
        return _from_json(json.load(fh))
