"""Motif breadth: true/fake motif rates, coverage and motif-distribution error."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..data import TraceSet
from ..motif import MotifSet, build_motif_set, chunk


@dataclass
class BreadthReport:
    pct_TM: float
    pct_FM: float
    coverage: float
    mse: float

    def as_dict(self) -> dict:
        return asdict(self)


def _chunks(s, tau) -> np.ndarray:
    rows = s.values() if isinstance(s, TraceSet) else np.asarray(s, dtype=float)
    return np.concatenate([chunk(r, tau) for r in rows])


def _match_matrix(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    return np.all(np.abs(a[:, None, :] - b[None, :, :]) <= sigma, axis=2)


def _assign(chunks: np.ndarray, ms: MotifSet) -> tuple[np.ndarray, np.ndarray]:
    """Least-L1 matching motif per chunk and whether any motif matched."""
    diff = np.abs(chunks[:, None, :] - ms.values[None])
    ok = np.all(diff <= ms.sigma, axis=2)
    l1 = np.where(ok, diff.sum(axis=2), np.inf)
    return np.argmin(l1, axis=1), ok.any(axis=1)


def motif_coverage(real, synth, tau: int, sigma: float) -> BreadthReport:
    if len(real) == 0 or len(synth) == 0:
        raise ValueError("motif coverage needs nonempty real and synthetic sets")
    S_x = build_motif_set(real, tau, sigma)
    S_s = build_motif_set(synth, tau, sigma)
    hit = _match_matrix(S_s.values, S_x.values, sigma)
    tm = int(hit.any(axis=1).sum())
    pct_tm = tm / S_s.m
    coverage = float(hit.any(axis=0).sum()) / S_x.m

    real_idx, _ = _assign(_chunks(real, tau), S_x)
    syn_chunks = _chunks(synth, tau)
    syn_real, syn_ok = _assign(syn_chunks, S_x)
    syn_own, _ = _assign(syn_chunks, S_s)
    # union vocabulary: real motifs first, then one bin per synthetic motif
    size = S_x.m + S_s.m
    p = np.bincount(real_idx, minlength=size) / len(real_idx)
    bins = np.where(syn_ok, syn_real, S_x.m + syn_own)
    q = np.bincount(bins, minlength=size) / len(bins)
    used = (p > 0) | (q > 0)
    mse = float(np.mean((p[used] - q[used]) ** 2))
    return BreadthReport(pct_TM=pct_tm, pct_FM=1.0 - pct_tm, coverage=coverage, mse=mse)
