"""Full evaluation bundle: fidelity, breadth and utility in one report."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data import TraceSet
from .breadth import BreadthReport, motif_coverage
from .clarke import ZONES
from .distributions import DEFAULT_VARIANCE_EDGES, principal_axes, variance_distribution
from .glycemic import METRICS, GlycemicReport, glycemic_metrics
from .tstr import TstrConfig, TstrReport, persistence_rmse, tstr

_NUM = {"type": "number"}
_METRIC_OBJ = {"type": "object", "required": list(METRICS),
               "properties": {k: _NUM for k in METRICS}}
_ZONE_OBJ = {"type": "object", "required": list(ZONES),
             "properties": {z: {"type": "number", "minimum": 0, "maximum": 1} for z in ZONES},
             "additionalProperties": False}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["config_hash", "n_real", "n_synthetic", "glycemic", "breadth", "tstr", "persistence_rmse"],
    "properties": {
        "config_hash": {"type": "string"},
        "n_real": {"type": "integer", "minimum": 1},
        "n_synthetic": {"type": "integer", "minimum": 1},
        "glycemic": {
            "type": "object",
            "required": ["real", "synthetic"],
            "properties": {
                "real": _METRIC_OBJ,
                "synthetic": {**_METRIC_OBJ, "required": list(METRICS) + ["p_values"],
                              "properties": {**_METRIC_OBJ["properties"], "p_values": {
                                  "type": "object", "required": list(METRICS),
                                  "properties": {k: {"type": "number", "minimum": 0, "maximum": 1}
                                                 for k in METRICS}}}},
            },
        },
        "breadth": {
            "type": "object",
            "required": ["pct_TM", "pct_FM", "coverage", "mse"],
            "properties": {k: {"type": "number", "minimum": 0, "maximum": 1}
                           for k in ("pct_TM", "pct_FM", "coverage", "mse")},
        },
        "tstr": {
            "type": "object",
            "required": ["rmse_mean", "rmse_std", "rmses", "clarke"],
            "properties": {"rmse_mean": {"type": "number", "minimum": 0},
                           "rmse_std": {"type": "number", "minimum": 0},
                           "rmses": {"type": "array", "items": _NUM, "minItems": 1},
                           "clarke": _ZONE_OBJ},
        },
        "persistence_rmse": {"type": "number", "minimum": 0},
    },
}


@dataclass
class EvaluationBundle:
    real: GlycemicReport
    synthetic: GlycemicReport
    breadth: BreadthReport
    tstr: TstrReport
    variance_edges: np.ndarray
    variance_real: np.ndarray
    variance_synthetic: np.ndarray
    pca_real: np.ndarray
    pca_synthetic: np.ndarray
    persistence_rmse: float
    n_real: int
    n_synthetic: int

    def as_dict(self, config_hash: str = "") -> dict:
        return {
            "config_hash": config_hash,
            "n_real": self.n_real,
            "n_synthetic": self.n_synthetic,
            "glycemic": {"real": self.real.as_dict(), "synthetic": self.synthetic.as_dict()},
            "breadth": self.breadth.as_dict(),
            "tstr": self.tstr.as_dict(),
            "persistence_rmse": self.persistence_rmse,
        }


def evaluate(real: TraceSet, synth: TraceSet, tau: int, sigma: float,
             tstr_cfg: TstrConfig = TstrConfig(), variance_edges=None) -> EvaluationBundle:
    """Compare a synthetic set against real traces on every evaluation axis."""
    if len(real) == 0 or len(synth) == 0:
        raise ValueError("evaluation needs nonempty real and synthetic sets")
    edges = DEFAULT_VARIANCE_EDGES if variance_edges is None else variance_edges
    vr, e = variance_distribution(real, edges)
    vs, _ = variance_distribution(synth, edges)
    # one set of axes for both populations so the scatter is comparable
    both = np.concatenate([real.values(), synth.values()])
    _, axes = principal_axes(both, 2)
    center = both.mean(axis=0)
    return EvaluationBundle(
        real=glycemic_metrics(real),
        synthetic=glycemic_metrics(synth, reference=real),
        breadth=motif_coverage(real, synth, tau, sigma),
        tstr=tstr(synth, real, tstr_cfg),
        variance_edges=e,
        variance_real=vr,
        variance_synthetic=vs,
        pca_real=(real.values() - center) @ axes.T,
        pca_synthetic=(synth.values() - center) @ axes.T,
        persistence_rmse=persistence_rmse(real, tstr_cfg),
        n_real=len(real),
        n_synthetic=len(synth),
    )


def _edge(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def write_bundle(bundle: EvaluationBundle, out_dir: str | Path, config_hash: str = "") -> dict[str, Path]:
    """Write report.json plus plot-ready CSVs; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in
             ("report.json", "variance_hist.csv", "pca_points.csv", "clarke_zones.csv")}
    paths["report.json"].write_text(json.dumps(bundle.as_dict(config_hash), indent=2, sort_keys=True) + "\n")

    with open(paths["variance_hist.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lo", "hi", "real", "synthetic"])
        e = bundle.variance_edges
        for k in range(len(e) - 1):
            w.writerow([_edge(e[k]), _edge(e[k + 1]), int(bundle.variance_real[k]), int(bundle.variance_synthetic[k])])

    with open(paths["pca_points.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "pc1", "pc2"])
        for src, pts in (("real", bundle.pca_real), ("synthetic", bundle.pca_synthetic)):
            for p in pts:
                w.writerow([src, repr(float(p[0])), repr(float(p[1]))])

    with open(paths["clarke_zones.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone", "fraction"])
        for z, f in bundle.tstr.clarke.as_dict().items():
            w.writerow([z, repr(float(f))])
    return paths
