"""Distribution comparisons: per-trace variance histograms and a 2-D PCA."""
from __future__ import annotations

import numpy as np

from ..data import TraceSet

DEFAULT_VARIANCE_EDGES = tuple(float(e) for e in np.arange(0, 5001, 250)) + (float("inf"),)


def _values(s) -> np.ndarray:
    return s.values() if isinstance(s, TraceSet) else np.asarray(s, dtype=float)


def variance_distribution(s, edges=DEFAULT_VARIANCE_EDGES) -> tuple[np.ndarray, np.ndarray]:
    """Counts of per-trace sample variances over fixed bin edges."""
    v = _values(s).var(axis=1, ddof=1)
    edges = np.asarray(edges, dtype=float)
    counts, _ = np.histogram(v, bins=edges)
    return counts, edges


def _power_iteration(C: np.ndarray, tol: float, max_iter: int, start: np.ndarray) -> tuple[float, np.ndarray]:
    v = start / np.linalg.norm(start)
    lam = 0.0
    for _ in range(max_iter):
        w = C @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0, v
        w /= norm
        if w @ v < 0:
            w = -w
        done = np.linalg.norm(w - v) < tol
        v = w
        lam = float(v @ C @ v)
        if done:
            break
    return lam, v


def principal_axes(X: np.ndarray, k: int = 2, tol: float = 1e-9, max_iter: int = 100_000):
    """Top-k eigenpairs of the covariance of the rows of X by power iteration with deflation."""
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / max(len(X) - 1, 1)
    d = C.shape[0]
    axes, lams = [], []
    for j in range(k):
        start = np.ones(d) + 0.01 * np.arange(d)
        for a in axes:
            start = start - (start @ a) * a
        if np.linalg.norm(start) == 0:
            start = np.eye(d)[j % d]
        lam, v = _power_iteration(C, tol, max_iter, start)
        # sign convention: largest-magnitude loading is positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        axes.append(v)
        lams.append(lam)
        C = C - lam * np.outer(v, v)
    return np.array(lams), np.stack(axes)


def pca2(s, tol: float = 1e-9) -> np.ndarray:
    """Projection of every trace onto the top two principal axes, (n, 2)."""
    X = _values(s)
    _, axes = principal_axes(X, 2, tol)
    return (X - X.mean(axis=0)) @ axes.T
