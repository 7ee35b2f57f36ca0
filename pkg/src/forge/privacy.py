"""Differential-privacy machinery.

* disjoint data partitioning for teacher training,
* noisy vote-histogram aggregation of teacher causality matrices,
* DP-SGD gradient sanitization (per-example clipping + Gaussian noise),
* Renyi-DP accounting of the subsampled Gaussian mechanism.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .data import TraceSet

DEFAULT_DELTA = 5e-4
RDP_ORDERS = tuple(range(2, 257))


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float = math.inf
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    @property
    def private(self) -> bool:
        return math.isfinite(self.epsilon)


@dataclass(frozen=True)
class PateConfig:
    n_partitions: int = 5
    bins: int = 20

    def __post_init__(self):
        if self.n_partitions < 1:
            raise ValueError("n_partitions must be >= 1")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")

    def noise_scale(self, budget: PrivacyBudget, m: int) -> float:
        """Laplace scale per histogram bin; 0 when the budget is infinite."""
        if not budget.private:
            return 0.0
        if budget.epsilon == 0:
            return math.inf
        return 2.0 / (budget.epsilon / (m * m))


@dataclass(frozen=True)
class DpSgdConfig:
    clip: float = 1.0
    noise_multiplier: float = 1.0
    sample_rate: float = 0.01
    steps: int = 1

    def __post_init__(self):
        if not self.clip > 0:
            raise ValueError("clip norm must be positive")
        if not self.noise_multiplier >= 0:
            raise ValueError("noise multiplier must be >= 0")
        if not 0 < self.sample_rate <= 1:
            raise ValueError("sample rate must lie in (0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def is_noop(self) -> bool:
        return self.noise_multiplier == 0 and math.isinf(self.clip)


def partition(s: TraceSet, n: int) -> list[TraceSet]:
    """Contiguous near-equal split in input order; sizes differ by at most one."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > len(s):
        raise ValueError(f"cannot split {len(s)} traces into {n} partitions")
    bounds = np.linspace(0, len(s), n + 1).round().astype(int)
    return [TraceSet(s.traces[a:b], s.provenance) for a, b in zip(bounds[:-1], bounds[1:])]


def vote_histogram(matrices: np.ndarray, bins: int) -> np.ndarray:
    """Counts per (i, j, bin) of teacher values quantized into equal-width bins on [0, 1]."""
    q = np.clip(np.floor(matrices * bins), 0, bins - 1).astype(np.int64)
    return np.eye(bins)[q].sum(axis=0)


def pate_aggregate(matrices: Sequence[np.ndarray], budget: PrivacyBudget, cfg: PateConfig,
                   seed: int = 0) -> np.ndarray:
    """Noisy arg-max over per-entry vote histograms; returns bin centers.

    With an infinite budget no noise is added and ties go to the lower bin.
    """
    mats = np.stack([np.asarray(m, dtype=float) for m in matrices])
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {mats.shape}")
    m = mats.shape[1]
    counts = vote_histogram(mats, cfg.bins)
    scale = cfg.noise_scale(budget, m)
    if scale > 0:
        rng = np.random.default_rng(seed)
        counts = counts + rng.laplace(0.0, scale, size=counts.shape)
    winner = np.argmax(counts, axis=-1)
    return (winner + 0.5) / cfg.bins


def mean_aggregate(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Noise-free aggregation used when no privacy budget is set."""
    mats = np.stack([np.asarray(m, dtype=float) for m in matrices])
    return mats.mean(axis=0)


def clip_and_noise(per_example_grads: np.ndarray, cfg: DpSgdConfig,
                   seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Clip each row to norm <= C, average, add N(0, (z C / B)^2) per coordinate."""
    g = np.asarray(per_example_grads, dtype=float)
    if g.ndim == 1:
        g = g[None]
    if len(g) == 0:
        raise ValueError("no gradients to sanitize")
    B = len(g)
    norms = np.linalg.norm(g, axis=1)
    factor = np.minimum(1.0, cfg.clip / np.where(norms > 0, norms, 1.0))
    mean = (g * factor[:, None]).mean(axis=0)
    if cfg.noise_multiplier > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        mean = mean + rng.normal(0.0, cfg.noise_multiplier * cfg.clip / B, size=mean.shape)
    return mean


def _log_a_integer(q: float, sigma: float, alpha: int) -> float:
    k = np.arange(alpha + 1)
    log_binom = gammaln(alpha + 1) - gammaln(k + 1) - gammaln(alpha - k + 1)
    # 0 * log(0) terms are 0, not nan
    with np.errstate(divide="ignore", invalid="ignore"):
        log_q = np.where(k > 0, k * np.log(q), 0.0)
        log_1mq = np.where(alpha - k > 0, (alpha - k) * np.log1p(-q), 0.0)
    terms = log_binom + log_q + log_1mq + (k * k - k) / (2 * sigma ** 2)
    return float(logsumexp(terms))


def rdp_subsampled_gaussian(q: float, sigma: float, orders=RDP_ORDERS) -> np.ndarray:
    """RDP of one step of the Poisson-subsampled Gaussian mechanism at integer orders."""
    if sigma == 0:
        return np.full(len(orders), np.inf)
    if q == 0:
        return np.zeros(len(orders))
    return np.array([_log_a_integer(q, sigma, a) / (a - 1) for a in orders])


def rdp_to_epsilon(rdp: np.ndarray, delta: float, orders=RDP_ORDERS) -> tuple[float, int]:
    orders = np.asarray(orders, dtype=float)
    eps = rdp + math.log(1.0 / delta) / (orders - 1)
    k = int(np.nanargmin(eps))
    return float(eps[k]), int(orders[k])


def epsilon_of(cfg: DpSgdConfig, delta: float = DEFAULT_DELTA) -> float:
    if cfg.noise_multiplier == 0:
        return math.inf
    rdp = rdp_subsampled_gaussian(cfg.sample_rate, cfg.noise_multiplier) * cfg.steps
    return rdp_to_epsilon(rdp, delta)[0]


def noise_for_epsilon(target_eps: float, sample_rate: float, steps: int,
                      delta: float = DEFAULT_DELTA, clip: float = 1.0, tol: float = 1e-3) -> float:
    """Smallest noise multiplier (to ``tol``) whose accounted epsilon is <= target."""
    if math.isinf(target_eps):
        return 0.0
    if target_eps <= 0:
        raise ValueError("target epsilon must be positive")
    cfg = lambda z: DpSgdConfig(clip, z, sample_rate, steps)
    lo, hi = 0.0, 1.0
    while epsilon_of(cfg(hi), delta) > target_eps:
        lo, hi = hi, hi * 2
        if hi > 1e6:
            raise ValueError(f"cannot reach epsilon={target_eps}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if epsilon_of(cfg(mid), delta) > target_eps:
            lo = mid
        else:
            hi = mid
    return hi


def budget_report(epsilon: float, delta: float, mechanism: str, **parameters) -> str:
    def clean(v):
        if isinstance(v, float) and math.isinf(v):
            return "inf"
        return v
    doc = {"epsilon": clean(float(epsilon)), "delta": delta, "mechanism": mechanism,
           "parameters": {k: clean(v) for k, v in parameters.items()}}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def dpsgd_for_budget(budget: PrivacyBudget, clip: float, sample_rate: float, steps: int) -> DpSgdConfig | None:
    """DP-SGD settings meeting ``budget``; None (no sanitization at all) when it is infinite."""
    if not budget.private:
        return None
    z = noise_for_epsilon(budget.epsilon, sample_rate, steps, budget.delta, clip)
    return DpSgdConfig(clip, z, sample_rate, steps)
