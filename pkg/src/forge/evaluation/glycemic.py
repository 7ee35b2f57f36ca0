"""Population glycemic statistics and Welch significance tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from ..data import TraceSet

METRICS = ("VAR", "TIR", "Hypo", "Hyper", "GVI", "PGS")
LOW = 70.0
HIGH = 180.0


class DegenerateSampleError(ValueError):
    pass


@dataclass
class GlycemicReport:
    VAR: float
    TIR: float
    Hypo: float
    Hyper: float
    GVI: float
    PGS: float
    p_values: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in METRICS}
        if self.p_values:
            d["p_values"] = dict(self.p_values)
        return d


def per_trace_metrics(values: np.ndarray) -> dict[str, np.ndarray]:
    """Each metric evaluated per trace; ``values`` is (n, T) in mg/dL."""
    v = np.asarray(values, dtype=float)
    T = v.shape[1]
    var = v.var(axis=1, ddof=1)
    tir = 100.0 * np.mean((v >= LOW) & (v <= HIGH), axis=1)
    hypo = 100.0 * np.mean(v < LOW, axis=1)
    hyper = 100.0 * np.mean(v > HIGH, axis=1)
    path = np.sqrt(1.0 + np.diff(v, axis=1) ** 2).sum(axis=1)
    chord = np.sqrt((T - 1) ** 2 + (v[:, -1] - v[:, 0]) ** 2)
    gvi = path / chord
    pgs = gvi * v.mean(axis=1) * (1.0 - tir / 100.0)
    return {"VAR": var, "TIR": tir, "Hypo": hypo, "Hyper": hyper, "GVI": gvi, "PGS": pgs}


def welch_test(a, b) -> float:
    """Two-sided Welch t-test p-value (Welch-Satterthwaite degrees of freedom)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise DegenerateSampleError("each sample needs at least 2 values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    se2 = va + vb
    if se2 == 0:
        raise DegenerateSampleError("both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    dof = se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))


def _p_value(a, b) -> float:
    try:
        return welch_test(a, b)
    except DegenerateSampleError:
        # constant samples on both sides: identical means are indistinguishable
        return 1.0 if np.mean(a) == np.mean(b) else 0.0


def glycemic_metrics(s: TraceSet | np.ndarray, reference: TraceSet | np.ndarray | None = None) -> GlycemicReport:
    values = s.values() if isinstance(s, TraceSet) else np.asarray(s, dtype=float)
    if len(values) == 0:
        raise ValueError("cannot compute metrics of an empty trace set")
    per = per_trace_metrics(values)
    report = GlycemicReport(**{k: float(per[k].mean()) for k in METRICS})
    if reference is not None:
        ref = reference.values() if isinstance(reference, TraceSet) else np.asarray(reference, dtype=float)
        ref_per = per_trace_metrics(ref)
        report.p_values = {k: _p_value(per[k], ref_per[k]) for k in METRICS}
    return report
