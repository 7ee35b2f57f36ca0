"""Motif causality: one sparse recurrent network per target motif.

Each network reads the one-hot motif indicator series (one step per motif
chunk) and predicts whether its target motif occurs at the next step. The
input-to-hidden weights are penalized by a group lasso over input-motif
columns, so a zero column certifies that the input motif has no influence
on the prediction. Column norms of the trained networks, stacked and
row-normalized, form the causality matrix.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import TraceSet, denormalize_array
from .motif import MotifSet, encode_array, indicator_series
from .nn import DivergenceError, RecurrentNet

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class CausalityTrainConfig:
    hidden: int = 16
    lr: float = 0.05
    lam: float = 0.05
    epochs: int = 300
    inner_steps: int = 10
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        for name in ("hidden", "lr", "epochs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"causality config: {name} must be positive")
        if self.lam < 0 or self.inner_steps < 0:
            raise ValueError("causality config: lam and inner_steps must be nonnegative")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MotifNetwork:
    """Causal model for one target motif: LSTM over indicators plus a linear readout."""

    target: int
    net: RecurrentNet

    @classmethod
    def init(cls, target, m, hidden, rng, scale=0.1):
        return cls(target, RecurrentNet.init(m, hidden, 1, rng, "linear", scale=scale))

    @classmethod
    def zeros(cls, target, m, hidden):
        return cls(target, RecurrentNet.zeros(m, hidden, 1, "linear"))

    @property
    def W_in(self):
        return self.net.params["W"]

    @property
    def m(self):
        return self.W_in.shape[1]

    def column_norms(self):
        return np.linalg.norm(self.W_in, axis=0)

    def copy(self):
        return MotifNetwork(self.target, self.net.copy())


def lstm_forward(net: MotifNetwork, inputs: np.ndarray):
    """Predictions (L, 1) and hidden states (L, H) for one indicator matrix (L, m).

    A (batch, L, m) array is also accepted and returns batched outputs.
    """
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if not np.isfinite(x).all():
        raise DivergenceError("non-finite input to motif network")
    y, cache = net.net.forward(x)
    hs = cache[1]
    if not np.isfinite(y).all():
        bad = int(np.argmax(~np.isfinite(y).all(axis=(0, 2))))
        raise DivergenceError(f"non-finite prediction at step {bad}")
    return (y[0], hs[0]) if single else (y, hs)


def _stack(nets: list[MotifNetwork]) -> tuple[RecurrentNet, np.ndarray]:
    params = {k: np.stack([n.net.params[k] for n in nets]) for k in nets[0].net.params}
    return RecurrentNet(params, "linear"), np.array([n.target for n in nets])


def _unstack(stack: RecurrentNet, targets) -> list[MotifNetwork]:
    return [MotifNetwork(int(t), RecurrentNet({k: v[j].copy() for k, v in stack.params.items()}, "linear"))
            for j, t in enumerate(targets)]


def _stacked_loss_and_grad(stack: RecurrentNet, targets: np.ndarray, data: np.ndarray, need_grad=True):
    """Per-network smooth losses (k,) and gradients for a stack of k networks."""
    N = data.shape[0]
    y, cache = stack.forward(data)                      # (k, N, L, 1)
    target = np.moveaxis(data[:, 1:, targets], -1, 0)   # (k, N, L-1)
    resid = y[..., :-1, 0] - target
    losses = np.sum(resid ** 2, axis=(1, 2)) / N
    if not need_grad:
        return losses, None
    dy = np.zeros_like(y)
    dy[..., :-1, 0] = 2.0 * resid / N
    grads, _ = stack.backward(cache, dy)
    return losses, grads


def smooth_loss_and_grad(net: MotifNetwork, data: np.ndarray, need_grad=True):
    """Squared next-step prediction error for the target motif, summed over
    steps 2..L and averaged over sequences. ``data`` is (N, L, m)."""
    N = data.shape[0]
    y, cache = net.net.forward(data)
    pred = y[:, :-1, 0]
    target = data[:, 1:, net.target]
    resid = pred - target
    loss = float(np.sum(resid ** 2) / N)
    if not need_grad:
        return loss, None
    dy = np.zeros_like(y)
    dy[:, :-1, 0] = 2.0 * resid / N
    grads, _ = net.net.backward(cache, dy)
    return loss, grads


def group_penalty(W_in: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(W_in, axis=0)))


def local_motif_loss(net: MotifNetwork, data: np.ndarray, lam: float) -> float:
    data = np.asarray(data, dtype=float)
    if data.ndim == 2:
        data = data[None]
    loss, _ = smooth_loss_and_grad(net, data, need_grad=False)
    return loss + lam * group_penalty(net.W_in)


def prox_group_lasso(W_in: np.ndarray, lam: float, step: float) -> np.ndarray:
    """Block soft-threshold of every column at ``step * lam``.

    Leading axes, if any, index independent matrices.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    thresh = step * lam
    norms = np.linalg.norm(W_in, axis=-2, keepdims=True)
    scale = np.where(norms > thresh, 1.0 - thresh / np.where(norms > 0, norms, 1.0), 0.0)
    return W_in * scale


def _run_proximal(nets: list[MotifNetwork], data: np.ndarray, cfg: CausalityTrainConfig, steps: int):
    stack, targets = _stack(nets)
    p = stack.params
    for it in range(steps):
        losses, grads = _stacked_loss_and_grad(stack, targets, data)
        bad = ~np.isfinite(losses) | (losses > DIVERGENCE_LIMIT)
        if bad.any():
            j = int(np.argmax(bad))
            raise DivergenceError(
                f"motif {targets[j]}: loss diverged ({losses[j]:.3g}) at step {it}; "
                "try a smaller learning rate")
        for k in p:
            p[k] -= cfg.lr * grads[k]
        p["W"][...] = prox_group_lasso(p["W"], cfg.lam, cfg.lr)
    return _unstack(stack, targets)


def _initial(i: int, m: int, cfg: CausalityTrainConfig) -> MotifNetwork:
    return MotifNetwork.init(i, m, cfg.hidden, np.random.default_rng([cfg.seed, i]), cfg.init_scale)


def train_motif_network(i: int, data: np.ndarray, cfg: CausalityTrainConfig,
                        steps: int | None = None, warm: MotifNetwork | None = None) -> MotifNetwork:
    """Proximal gradient training: full-batch gradient step, then prox on W_in."""
    data = _check_data(data)
    net = warm.copy() if warm is not None else _initial(i, data.shape[2], cfg)
    return _run_proximal([net], data, cfg, cfg.epochs if steps is None else steps)[0]


def _check_data(data):
    data = np.asarray(data, dtype=float)
    if data.ndim != 3 or data.shape[1] < 2:
        raise ValueError("need (N, L, m) indicator data with at least 2 motif steps")
    return data


def normalize_causality(raw: np.ndarray) -> np.ndarray:
    """Divide each row by its maximum; all-zero rows stay zero."""
    raw = np.asarray(raw, dtype=float)
    if not np.isfinite(raw).all():
        raise ValueError("causality matrix has non-finite entries")
    if (raw < 0).any():
        raise ValueError("causality matrix has negative entries")
    mx = raw.max(axis=1, keepdims=True)
    return np.where(mx > 0, raw / np.where(mx > 0, mx, 1.0), 0.0)


def max_threads() -> int:
    env = os.environ.get("FORGE_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, cap)


def parallel_map(fn, items, threads: int | None = None):
    threads = max_threads() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def indicators_for(traces, ms: MotifSet, normalized=False) -> np.ndarray:
    """Encode traces (TraceSet or (n, T) array) into (n, T // tau, m) indicators."""
    values = traces.values() if isinstance(traces, TraceSet) else np.asarray(traces, dtype=float)
    if normalized:
        values = denormalize_array(values)
    return indicator_series(encode_array(values, ms), ms.m)


def _matrix_from(nets: list[MotifNetwork]) -> np.ndarray:
    raw = np.stack([n.column_norms() for n in nets])
    return normalize_causality(raw)


def train_networks(data: np.ndarray, cfg: CausalityTrainConfig, steps: int | None = None,
                   warm: list[MotifNetwork] | None = None) -> list[MotifNetwork]:
    """Train all m networks jointly as one stacked computation.

    The networks share nothing but the input; stacking only batches the
    arithmetic, each network still follows its own proximal trajectory.
    """
    data = _check_data(data)
    m = data.shape[2]
    nets = [w.copy() for w in warm] if warm is not None else [_initial(i, m, cfg) for i in range(m)]
    return _run_proximal(nets, data, cfg, cfg.epochs if steps is None else steps)


def partition_causality(partition, ms: MotifSet, cfg: CausalityTrainConfig, return_networks=False):
    """Train all m networks on one data partition and stack their column norms."""
    if len(partition) == 0:
        raise ValueError("empty partition")
    data = indicators_for(partition, ms)
    nets = train_networks(data, cfg)
    M = _matrix_from(nets)
    return (M, nets) if return_networks else M


def estimate_batch_causality(batch, ms: MotifSet, cfg: CausalityTrainConfig,
                             warm: list[MotifNetwork] | None = None, normalized=False):
    """Causality matrix of a (synthetic) batch with at most ``cfg.inner_steps``
    proximal iterations per network, warm-started from ``warm`` when given.

    Returns ``(matrix, networks)``; pass the networks back as the next warm start.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    data = indicators_for(batch, ms, normalized=normalized)
    if warm is not None and len(warm) != ms.m:
        raise ValueError(f"warm start has {len(warm)} networks, motif set has {ms.m}")
    if warm is not None and cfg.inner_steps == 0:
        nets = [w.copy() for w in warm]
    else:
        nets = train_networks(data, cfg, steps=cfg.inner_steps, warm=warm)
    return _matrix_from(nets), nets


def save_matrix(M: np.ndarray, csv_path: str | Path, meta: dict):
    csv_path = Path(csv_path)
    np.savetxt(csv_path, M, delimiter=",", fmt="%.17g")
    sidecar = {"m": int(M.shape[0])}
    sidecar.update(meta)
    csv_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_matrix(csv_path: str | Path) -> np.ndarray:
    M = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    meta = json.loads(Path(csv_path).with_suffix(".json").read_text())
    if M.shape != (meta["m"], meta["m"]):
        raise ValueError(f"matrix shape {M.shape} disagrees with sidecar m={meta['m']}")
    return M
