"""Train-on-synthetic / test-on-real glucose forecasting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..data import TraceSet, denormalize_array
from ..nn import DivergenceError, Optimizer, RecurrentNet
from .clarke import ClarkeSummary, clarke_summary


@dataclass(frozen=True)
class TstrConfig:
    hidden: int = 32
    window: int = 12
    horizon: int = 6
    epochs: int = 30
    batch_size: int = 128
    lr: float = 0.01
    repeats: int = 3
    stride: int = 1
    seed: int = 0


@dataclass
class TstrReport:
    rmse_mean: float
    rmse_std: float
    rmses: list[float]
    clarke: ClarkeSummary

    def as_dict(self) -> dict:
        return {"rmse_mean": self.rmse_mean, "rmse_std": self.rmse_std, "rmses": list(self.rmses),
                "clarke": self.clarke.as_dict()}


def _normalized(s) -> np.ndarray:
    return s.normalized() if isinstance(s, TraceSet) else np.asarray(s, dtype=float)


def sliding_windows(values: np.ndarray, window: int, horizon: int, stride: int = 1):
    """Inputs (n, window) and targets (n,) = value ``horizon`` steps after each window."""
    values = np.asarray(values, dtype=float)
    T = values.shape[1]
    if window + horizon > T:
        raise ValueError(f"window {window} + horizon {horizon} exceeds T={T}")
    starts = np.arange(0, T - window - horizon + 1, stride)
    X = np.stack([values[:, s:s + window] for s in starts], axis=1).reshape(-1, window)
    y = np.stack([values[:, s + window + horizon - 1] for s in starts], axis=1).reshape(-1)
    return X, y


def persistence_rmse(test, cfg: TstrConfig = TstrConfig()) -> float:
    """RMSE of predicting the last observed value of each window."""
    X, y = sliding_windows(_normalized(test), cfg.window, cfg.horizon, cfg.stride)
    return float(np.sqrt(np.mean((X[:, -1] - y) ** 2)))


class Forecaster:
    """Single-layer LSTM reading a window and predicting one value from its last state."""

    def __init__(self, cfg: TstrConfig, seed: int):
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.net = RecurrentNet.init(1, cfg.hidden, 1, self.rng, "linear")
        self.opt = Optimizer("adam", cfg.lr)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.net(np.asarray(X, dtype=float)[..., None])[:, -1, 0]

    def fit(self, X: np.ndarray, y: np.ndarray):
        cfg = self.cfg
        n = len(X)
        for _ in range(cfg.epochs):
            order = self.rng.permutation(n)
            for a in range(0, n, cfg.batch_size):
                idx = order[a:a + cfg.batch_size]
                out, cache = self.net.forward(X[idx][..., None])
                resid = out[:, -1, 0] - y[idx]
                loss = float(np.mean(resid ** 2))
                if not np.isfinite(loss):
                    raise DivergenceError("forecaster training diverged")
                dy = np.zeros_like(out)
                dy[:, -1, 0] = 2.0 * resid / len(idx)
                grads, _ = self.net.backward(cache, dy)
                self.opt.step(self.net.params, grads)
        return self


def evaluate_forecaster(predict: Callable[[np.ndarray], np.ndarray], test, cfg: TstrConfig):
    """RMSE (normalized units) and denormalized (ref, pred) pairs over test windows."""
    X, y = sliding_windows(_normalized(test), cfg.window, cfg.horizon, cfg.stride)
    pred = np.asarray(predict(X), dtype=float)
    rmse = float(np.sqrt(np.mean((pred - y) ** 2)))
    # clamp predictions into the positive range the Clarke grid is defined on
    ref_mg = denormalize_array(y)
    pred_mg = np.clip(denormalize_array(pred), 1.0, None)
    return rmse, ref_mg, pred_mg


def tstr(train, test, cfg: TstrConfig = TstrConfig()) -> TstrReport:
    if len(train) == 0 or len(test) == 0:
        raise ValueError("TSTR needs nonempty train and test sets")
    X, y = sliding_windows(_normalized(train), cfg.window, cfg.horizon, cfg.stride)
    rmses, refs, preds = [], [], []
    for r in range(cfg.repeats):
        model = Forecaster(cfg, seed=cfg.seed + r).fit(X, y)
        rmse, ref_mg, pred_mg = evaluate_forecaster(model.predict, test, cfg)
        rmses.append(rmse)
        refs.append(ref_mg)
        preds.append(pred_mg)
    return TstrReport(float(np.mean(rmses)), float(np.std(rmses)), rmses,
                      clarke_summary(np.concatenate(refs), np.concatenate(preds)))
