"""Trace ingestion, validation, normalization and disjoint splitting."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GLUCOSE_MIN = 40.0
GLUCOSE_MAX = 400.0
DEFAULT_T = 288

PROVENANCE_TAGS = ("causality-train", "gan-train", "holdout", "synthetic", "unassigned")


class DataError(ValueError):
    """Raised when trace data fails validation."""


@dataclass(frozen=True)
class GlucoseTrace:
    id: str
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or len(vals) == 0:
            raise DataError(f"trace {self.id}: expected a nonempty 1-D series")
        if not np.isfinite(vals).all():
            raise DataError(f"trace {self.id}: missing or non-finite value")
        if vals.min() < GLUCOSE_MIN or vals.max() > GLUCOSE_MAX:
            raise DataError(f"trace {self.id}: values outside [{GLUCOSE_MIN:g}, {GLUCOSE_MAX:g}]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class NormalizedTrace:
    id: str
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass
class TraceSet:
    traces: list[GlucoseTrace]
    provenance: str = "unassigned"
    T: int = field(init=False)

    def __post_init__(self):
        if not self.traces:
            self.T = 0
            return
        lengths = {len(t) for t in self.traces}
        if len(lengths) != 1:
            raise DataError(f"traces have mixed lengths {sorted(lengths)}")
        ids = [t.id for t in self.traces]
        if len(set(ids)) != len(ids):
            raise DataError("trace ids are not unique within the set")
        if self.provenance not in PROVENANCE_TAGS:
            raise DataError(f"unknown provenance tag {self.provenance!r}")
        self.T = lengths.pop()

    def __len__(self):
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def __getitem__(self, i):
        return self.traces[i]

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.traces]

    def values(self) -> np.ndarray:
        """Stacked raw values, shape (n, T)."""
        if not self.traces:
            return np.zeros((0, 0))
        return np.stack([t.values for t in self.traces])

    def normalized(self) -> np.ndarray:
        return normalize_array(self.values())

    @classmethod
    def from_array(cls, values: np.ndarray, ids: Sequence[str] | None = None,
                   provenance: str = "unassigned", prefix: str = "trace") -> "TraceSet":
        values = np.asarray(values, dtype=float)
        if ids is None:
            width = max(4, len(str(len(values))))
            ids = [f"{prefix}-{k:0{width}d}" for k in range(len(values))]
        return cls([GlucoseTrace(i, v) for i, v in zip(ids, values)], provenance)


def normalize_array(values: np.ndarray) -> np.ndarray:
    return (np.asarray(values, dtype=float) - GLUCOSE_MIN) / (GLUCOSE_MAX - GLUCOSE_MIN)


def denormalize_array(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=float) * (GLUCOSE_MAX - GLUCOSE_MIN) + GLUCOSE_MIN


def normalize(t: GlucoseTrace) -> NormalizedTrace:
    return NormalizedTrace(t.id, normalize_array(t.values))


def denormalize(n: NormalizedTrace) -> GlucoseTrace:
    return GlucoseTrace(n.id, denormalize_array(n.values))


def validate_values(values: Sequence[float], T: int, row: int | None = None) -> np.ndarray:
    """Check arity, completeness and the 40..400 mg/dL bounds. Returns a float array."""
    where = f" at row {row}" if row is not None else ""
    if len(values) != T:
        raise DataError(f"arity mismatch{where}: expected {T} values, got {len(values)}")
    arr = np.asarray(values, dtype=float)
    if np.isnan(arr).any():
        raise DataError(f"missing value{where}")
    if not np.isfinite(arr).all():
        raise DataError(f"non-finite value{where}")
    if (arr < GLUCOSE_MIN).any():
        raise DataError(f"value below {GLUCOSE_MIN:g}{where}")
    if (arr > GLUCOSE_MAX).any():
        raise DataError(f"value above {GLUCOSE_MAX:g}{where}")
    return arr


def _parse_float(cell: str, row: int) -> float:
    cell = cell.strip()
    if cell == "" or cell.lower() in ("nan", "na", "null"):
        raise DataError(f"missing value at row {row}")
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"non-numeric value {cell!r} at row {row}") from None


def _is_header(cells: list[str]) -> bool:
    """A header row has "id" first or no numeric cell after the first column."""
    if cells and cells[0].strip().lower() == "id":
        return True
    rest = [c.strip() for c in cells[1:] if c.strip()]
    if not rest:
        return False
    for c in rest:
        try:
            float(c)
            return False
        except ValueError:
            pass
    return True


def load_traces(path: str | Path, T: int = DEFAULT_T, provenance: str = "unassigned") -> TraceSet:
    """Read one trace per CSV row, with an optional leading id column and header.

    Row indices in error messages count data rows from 0, header excluded.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    traces = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and _is_header(rows[0]):
        rows = rows[1:]
    for k, cells in enumerate(rows):
        if len(cells) == T + 1:
            tid, cells = cells[0].strip(), cells[1:]
        elif len(cells) == T:
            tid = f"row-{k}"
        else:
            raise DataError(f"arity mismatch at row {k}: expected {T} or {T + 1} columns, got {len(cells)}")
        vals = validate_values([_parse_float(c, k) for c in cells], T, row=k)
        traces.append(GlucoseTrace(tid, vals))
    try:
        return TraceSet(traces, provenance)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_traces(s: TraceSet | Iterable[GlucoseTrace], path: str | Path, precision: int = 6):
    """Write traces in the ingestion format (``id,v0..v{T-1}`` with header)."""
    traces = list(s)
    path = Path(path)
    T = len(traces[0]) if traces else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"v{k}" for k in range(T)])
        for t in traces:
            w.writerow([t.id] + [f"{v:.{precision}f}" for v in t.values])


def split_disjoint(s: TraceSet, fraction: float, seed: int,
                   tags: tuple[str, str] = ("causality-train", "gan-train")) -> tuple[TraceSet, TraceSet]:
    """Seeded random split; the first part gets floor(fraction * |s|) traces."""
    n = len(s)
    if n < 2:
        raise DataError("need at least 2 traces to split")
    if not 0.0 < fraction < 1.0:
        raise DataError(f"fraction must lie in (0, 1), got {fraction}")
    k = math.floor(fraction * n)
    if k == 0 or k == n:
        raise DataError(f"fraction {fraction} on {n} traces leaves an empty side")
    order = np.random.default_rng(seed).permutation(n)
    first = sorted(order[:k])
    second = sorted(order[k:])
    return (TraceSet([s.traces[i] for i in first], tags[0]),
            TraceSet([s.traces[i] for i in second], tags[1]))
