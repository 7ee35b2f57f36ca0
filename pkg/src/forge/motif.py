"""Motif vocabulary: tolerance-deduplicated fixed-length chunks of traces.

A motif set is built greedily in corpus order (trace order, then chunk
order): a chunk that matches no existing motif within ``sigma`` on every
coordinate becomes a new motif. Encoding maps each chunk to the matching
motif with the smallest L1 change, falling back to the globally nearest
motif when nothing matches.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import GlucoseTrace, TraceSet


class MotifError(ValueError):
    pass


@dataclass(frozen=True)
class Motif:
    index: int
    values: np.ndarray


@dataclass
class MotifSet:
    values: np.ndarray  # (m, tau)
    tau: int
    sigma: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1, self.tau)
        if len(self.values) < 1:
            raise MotifError("a motif set needs at least one motif")

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def motifs(self) -> list[Motif]:
        return [Motif(i, v) for i, v in enumerate(self.values)]

    def __len__(self):
        return self.m

    def check_invariants(self):
        """Assert that no two members match each other under sigma."""
        v = self.values
        for i in range(self.m - 1):
            close = np.all(np.abs(v[i + 1:] - v[i]) <= self.sigma, axis=1)
            if close.any():
                j = i + 1 + int(np.argmax(close))
                raise MotifError(f"motifs {i} and {j} match within sigma={self.sigma}")


@dataclass(frozen=True)
class MotifSequence:
    trace_id: str
    indices: np.ndarray
    fallback: np.ndarray  # True where the chunk matched no motif and took the nearest one

    def __len__(self):
        return len(self.indices)


def chunk(t: GlucoseTrace | np.ndarray, tau: int) -> np.ndarray:
    """Non-overlapping windows of length tau; a trailing remainder is dropped."""
    values = t.values if isinstance(t, GlucoseTrace) else np.asarray(t, dtype=float)
    if tau <= 0:
        raise MotifError(f"tau must be positive, got {tau}")
    if tau > len(values):
        raise MotifError(f"tau={tau} exceeds trace length {len(values)}")
    k = len(values) // tau
    return values[: k * tau].reshape(k, tau)


def matches(a, b, sigma: float) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b.values if isinstance(b, Motif) else b, dtype=float)
    if a.shape != b.shape:
        raise MotifError(f"length mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(np.abs(a - b) <= sigma))


def _all_chunks(s: TraceSet | Iterable[GlucoseTrace] | np.ndarray, tau: int) -> np.ndarray:
    if isinstance(s, np.ndarray):
        rows = s
    else:
        rows = [t.values for t in s]
    if len(rows) == 0:
        raise MotifError("cannot build motifs from an empty trace set")
    return np.concatenate([chunk(r, tau) for r in rows])


def _greedy_dedup(chunks: np.ndarray, sigma: float) -> np.ndarray:
    kept = np.empty_like(chunks)
    m = 0
    for c in chunks:
        if m and np.any(np.all(np.abs(kept[:m] - c) <= sigma, axis=1)):
            continue
        kept[m] = c
        m += 1
    return kept[:m].copy()


def build_motif_set(s, tau: int, sigma: float, max_motifs: int | None = None) -> MotifSet:
    """Greedy first-fit motif set over all chunks of ``s`` in corpus order.

    With ``max_motifs``, only the most frequently used motifs are kept
    (frequency = number of chunks encoded to the motif, ties to the lower
    index); kept motifs retain their relative order.
    """
    chunks = _all_chunks(s, tau)
    ms = MotifSet(_greedy_dedup(chunks, sigma), tau, sigma)
    if max_motifs is not None and ms.m > max_motifs:
        if max_motifs < 1:
            raise MotifError("max_motifs must be at least 1")
        idx, _ = _encode_chunks(chunks, ms)
        counts = np.bincount(idx, minlength=ms.m)
        order = np.lexsort((np.arange(ms.m), -counts))
        keep = np.sort(order[:max_motifs])
        ms = MotifSet(ms.values[keep], tau, sigma)
    return ms


def _encode_chunks(chunks: np.ndarray, ms: MotifSet) -> tuple[np.ndarray, np.ndarray]:
    # (n_chunks, m) distances; fine for desk-scale m
    diff = np.abs(chunks[:, None, :] - ms.values[None, :, :])
    l1 = diff.sum(axis=2)
    ok = np.all(diff <= ms.sigma, axis=2)
    matched = ok.any(axis=1)
    masked = np.where(ok, l1, np.inf)
    # argmin returns the first minimum, i.e. the lowest motif index on ties
    idx = np.where(matched, np.argmin(masked, axis=1), np.argmin(l1, axis=1))
    return idx.astype(np.int64), ~matched


def encode(t: GlucoseTrace | np.ndarray, ms: MotifSet, trace_id: str | None = None) -> MotifSequence:
    values = t.values if isinstance(t, GlucoseTrace) else np.asarray(t, dtype=float)
    tid = trace_id if trace_id is not None else getattr(t, "id", "")
    idx, fb = _encode_chunks(chunk(values, ms.tau), ms)
    return MotifSequence(tid, idx, fb)


def encode_all(s, ms: MotifSet) -> list[MotifSequence]:
    if isinstance(s, np.ndarray):
        return [encode(row, ms, trace_id=str(k)) for k, row in enumerate(s)]
    return [encode(t, ms) for t in s]


def encode_array(values: np.ndarray, ms: MotifSet) -> np.ndarray:
    """Vectorized encode of a (n, T) array; returns (n, T // tau) motif indices."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    k = values.shape[1] // ms.tau
    chunks = values[:, : k * ms.tau].reshape(n * k, ms.tau)
    idx, _ = _encode_chunks(chunks, ms)
    return idx.reshape(n, k)


def indicator_series(seqs: Sequence[MotifSequence] | np.ndarray, m: int) -> np.ndarray:
    """One-hot motif occurrences, shape (n_sequences, steps, m)."""
    if isinstance(seqs, np.ndarray):
        idx = seqs
    else:
        lengths = {len(s) for s in seqs}
        if len(lengths) > 1:
            raise MotifError(f"sequences have different lengths {sorted(lengths)}")
        idx = np.stack([s.indices for s in seqs]) if seqs else np.zeros((0, 0), dtype=int)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.max() >= m or idx.min() < 0):
        raise MotifError(f"motif index out of range for m={m}")
    out = np.zeros(idx.shape + (m,))
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def save_motif_set(ms: MotifSet, csv_path: str | Path, extra: dict | None = None):
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"v{k}" for k in range(ms.tau)])
        for i, row in enumerate(ms.values):
            w.writerow([i] + [repr(float(v)) for v in row])
    meta = {"tau": ms.tau, "sigma": ms.sigma, "m": ms.m}
    meta.update(extra or {})
    csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_motif_set(csv_path: str | Path) -> MotifSet:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    values = np.array([[float(c) for c in r[1:]] for r in rows])
    ms = MotifSet(values, int(meta["tau"]), float(meta["sigma"]))
    if ms.m != int(meta["m"]):
        raise MotifError(f"sidecar says m={meta['m']} but CSV holds {ms.m} motifs")
    return ms
