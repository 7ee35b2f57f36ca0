"""Seeded toy corpus of glucose-like traces built from planted motif templates.

Six templates of length ``tau`` are chained into traces. Every chunk gets
uniform jitter of at most sigma/2 per sample, so any two copies of the same
template match within sigma. One transition is planted: the ``cause``
template is always followed by the ``effect`` template, and ``effect``
never appears anywhere else.
"""
from __future__ import annotations

import numpy as np

from .data import TraceSet

TOY_T = 48
TOY_TAU = 8
TOY_SIGMA = 2.0
TOY_N = 400
PLANTED_CAUSE = 1
PLANTED_EFFECT = 3


def templates(tau: int = TOY_TAU) -> np.ndarray:
    u = np.linspace(0.0, 1.0, tau)
    bump = np.sin(np.pi * u)
    return np.stack([
        np.full(tau, 100.0),          # flat normal
        90.0 + 70.0 * u,              # rise
        160.0 - 70.0 * u,             # fall
        130.0 + 80.0 * bump,          # post-meal peak
        85.0 - 25.0 * bump,           # dip
        np.full(tau, 230.0),          # high plateau
    ])


def motif_sequences(n: int, steps: int, rng: np.random.Generator,
                    cause: int = PLANTED_CAUSE, effect: int = PLANTED_EFFECT,
                    n_templates: int = 6) -> np.ndarray:
    free = np.array([k for k in range(n_templates) if k != effect])
    seqs = np.empty((n, steps), dtype=np.int64)
    for r in range(n):
        prev = -1
        for s in range(steps):
            nxt = effect if prev == cause else int(rng.choice(free))
            seqs[r, s] = nxt
            prev = nxt
    return seqs


def make_toy_corpus(n: int = TOY_N, T: int = TOY_T, tau: int = TOY_TAU,
                    sigma: float = TOY_SIGMA, seed: int = 0) -> tuple[TraceSet, np.ndarray]:
    """Return the corpus and the planted (n, T // tau) template sequence."""
    rng = np.random.default_rng(seed)
    tpl = templates(tau)
    steps = T // tau
    seqs = motif_sequences(n, steps, rng, n_templates=len(tpl))
    jitter = rng.uniform(-sigma / 2, sigma / 2, size=(n, steps, tau))
    values = (tpl[seqs] + jitter).reshape(n, steps * tau)
    if values.shape[1] < T:
        pad = np.repeat(values[:, -1:], T - values.shape[1], axis=1)
        values = np.concatenate([values, pad], axis=1)
    values = np.round(values, 3)
    return TraceSet.from_array(values, prefix="toy"), seqs
