"""Temporal edge-list ingestion.

Input is whitespace-separated ``src dst timestamp`` text, one event per line,
``#`` comments allowed (the SNAP temporal edge-list layout).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import LogisticMatrixModel

__all__ = ["DatasetError", "EdgeListDataset", "parse_edge_list", "build_frequency_matrix"]


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class EdgeListDataset:
    """Events as an ``(E, 3)`` integer array of ``(source, target, timestamp)``."""

    events: np.ndarray
    node_count: int
    segments: int = 49

    @property
    def max_timestamp(self) -> int:
        return int(self.events[:, 2].max())


def parse_edge_list(path, segments: int = 49) -> EdgeListDataset:
    if segments < 1:
        raise DatasetError("segments must be at least 1")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DatasetError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
        try:
            src, dst, ts = (int(p) for p in parts)
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: non-integer field") from exc
        if src < 0 or dst < 0 or ts < 0:
            raise DatasetError(f"{path}:{lineno}: negative id or timestamp")
        rows.append((src, dst, ts))
    if not rows:
        raise DatasetError(f"{path}: no events")
    events = np.array(rows, dtype=np.int64)
    return EdgeListDataset(events, int(events[:, :2].max()) + 1, segments)


def build_frequency_matrix(ds: EdgeListDataset, penalty: float = 0.0) -> LogisticMatrixModel:
    """Fraction of time segments in which each ordered pair exchanged at least one event.

    Segments are equal-width over ``[0, max_timestamp]``; the last one is
    closed on the right.  Several events in one segment count once.
    """
    S = ds.segments
    ts = ds.events[:, 2]
    tmax = ds.max_timestamp
    if tmax == 0:
        bins = np.zeros(ts.size, dtype=np.int64)
    else:
        bins = np.minimum((ts * S) // tmax, S - 1)
    N = ds.node_count
    active = np.zeros((N, N, S), dtype=bool)
    active[ds.events[:, 0], ds.events[:, 1], bins] = True
    freq = active.sum(axis=2) / S
    return LogisticMatrixModel(freq, S, penalty)
