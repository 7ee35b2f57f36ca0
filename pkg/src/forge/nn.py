"""Single-layer LSTM with a dense head, hand-written backprop through time.

Gate order in the stacked weights is (input, forget, cell candidate, output).
All arrays are float64; batches are laid out as (batch, steps, features).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

PARAM_NAMES = ("W", "U", "b", "V", "c")


class DivergenceError(FloatingPointError):
    """Non-finite or exploding values during a forward/backward pass."""


def _t(a):
    return np.swapaxes(a, -1, -2)


def _bcast(w):
    """Let stacked weights (k, r, c) multiply batched activations (B, ..., c)."""
    return w[..., None, :, :] if w.ndim > 2 else w


def lstm_forward(W, U, b, x):
    """Run the recurrence from zero state.

    Shapes: W (..., 4H, D), U (..., 4H, H), b (..., 4H), x (B, L, D). Leading
    axes on the weights stack independent networks that share the input.
    Returns hidden states (..., B, L, H) and a cache for :func:`lstm_backward`.
    """
    xw = x @ _bcast(_t(W)) + b[..., None, None, :]
    *lead, B, L, _ = xw.shape
    H = U.shape[-1]
    h = np.zeros((*lead, B, H))
    c = np.zeros((*lead, B, H))
    hs = np.empty((*lead, B, L, H))
    gates = np.empty((*lead, B, L, 4 * H))
    cs = np.empty((*lead, B, L, H))
    tcs = np.empty((*lead, B, L, H))
    Ut = _t(U)
    for t in range(L):
        a = xw[..., t, :] + h @ Ut
        i = expit(a[..., :H])
        f = expit(a[..., H:2 * H])
        g = np.tanh(a[..., 2 * H:3 * H])
        o = expit(a[..., 3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gt = gates[..., t, :]
        gt[..., :H], gt[..., H:2 * H], gt[..., 2 * H:3 * H], gt[..., 3 * H:] = i, f, g, o
        cs[..., t, :], tcs[..., t, :], hs[..., t, :] = c, tc, h
    if not np.isfinite(hs).all():
        steps = np.isfinite(hs).reshape(-1, L, H).all(axis=(0, 2))
        raise DivergenceError(f"non-finite LSTM state at step {int(np.argmax(~steps))}")
    return hs, (x, hs, gates, cs, tcs)


def lstm_backward(W, U, cache, dhs, per_example=False):
    """Backprop through time given dLoss/dh for every step.

    Returns ``(dW, dU, db, dx)``. With ``per_example`` (unstacked weights
    only) the parameter gradients keep a leading batch axis.
    """
    x, hs, gates, cs, tcs = cache
    *lead, B, L, H = hs.shape
    da_all = np.empty((*lead, B, L, 4 * H))
    dh_next = np.zeros((*lead, B, H))
    dc_next = np.zeros((*lead, B, H))
    zeros = np.zeros((*lead, B, H))
    for t in range(L - 1, -1, -1):
        gt = gates[..., t, :]
        i = gt[..., :H]
        f = gt[..., H:2 * H]
        g = gt[..., 2 * H:3 * H]
        o = gt[..., 3 * H:]
        tc = tcs[..., t, :]
        c_prev = cs[..., t - 1, :] if t > 0 else zeros
        dh = dhs[..., t, :] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = da_all[..., t, :]
        da[..., :H] = dc * g * i * (1.0 - i)
        da[..., H:2 * H] = dc * c_prev * f * (1.0 - f)
        da[..., 2 * H:3 * H] = dc * i * (1.0 - g * g)
        da[..., 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = da @ U
    h_prev = np.concatenate([np.zeros((*lead, B, 1, H)), hs[..., :-1, :]], axis=-2)
    dx = da_all @ _bcast(W)
    if per_example:
        if lead:
            raise ValueError("per-example gradients need unstacked weights")
        dW = np.einsum("blg,bld->bgd", da_all, x)
        dU = np.einsum("blg,blh->bgh", da_all, h_prev)
        db = da_all.sum(axis=1)
    elif not lead:
        dW = np.tensordot(da_all, x, axes=([0, 1], [0, 1]))
        dU = np.tensordot(da_all, h_prev, axes=([0, 1], [0, 1]))
        db = da_all.sum(axis=(0, 1))
    else:
        n = len(lead)
        flat = lambda a: a.reshape(*a.shape[:n], -1, a.shape[-1])
        xb = np.broadcast_to(x, (*lead, *x.shape[-3:]))
        dW = _t(flat(da_all)) @ flat(xb)
        dU = _t(flat(da_all)) @ flat(h_prev)
        db = da_all.sum(axis=(-3, -2))
    return dW, dU, db, dx


@dataclass
class RecurrentNet:
    """LSTM followed by a per-step dense layer and an optional sigmoid."""

    params: dict[str, np.ndarray]
    activation: str = "linear"

    @classmethod
    def init(cls, in_dim, hidden, out_dim, rng, activation="linear", scale=None):
        s = 1.0 / np.sqrt(hidden) if scale is None else scale
        p = {
            "W": rng.uniform(-s, s, (4 * hidden, in_dim)),
            "U": rng.uniform(-s, s, (4 * hidden, hidden)),
            "b": np.zeros(4 * hidden),
            "V": rng.uniform(-s, s, (out_dim, hidden)),
            "c": np.zeros(out_dim),
        }
        p["b"][hidden:2 * hidden] = 1.0  # forget-gate bias
        return cls(p, activation)

    @classmethod
    def zeros(cls, in_dim, hidden, out_dim, activation="linear"):
        p = {
            "W": np.zeros((4 * hidden, in_dim)),
            "U": np.zeros((4 * hidden, hidden)),
            "b": np.zeros(4 * hidden),
            "V": np.zeros((out_dim, hidden)),
            "c": np.zeros(out_dim),
        }
        return cls(p, activation)

    @property
    def hidden(self):
        return self.params["U"].shape[-1]

    def copy(self):
        return RecurrentNet({k: v.copy() for k, v in self.params.items()}, self.activation)

    def forward(self, x):
        p = self.params
        hs, lcache = lstm_forward(p["W"], p["U"], p["b"], x)
        z = hs @ _bcast(_t(p["V"])) + p["c"][..., None, None, :]
        y = expit(z) if self.activation == "sigmoid" else z
        return y, (lcache, hs, y)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, dy, per_example=False):
        """Gradients of the parameters and of the input, given dLoss/dy."""
        p = self.params
        lcache, hs, y = cache
        dz = dy * y * (1.0 - y) if self.activation == "sigmoid" else dy
        if per_example:
            dV = np.einsum("blo,blh->boh", dz, hs)
            dc = dz.sum(axis=1)
        elif dz.ndim == 3:
            dV = np.tensordot(dz, hs, axes=([0, 1], [0, 1]))
            dc = dz.sum(axis=(0, 1))
        else:
            n = dz.ndim - 3
            flat = lambda a: a.reshape(*a.shape[:n], -1, a.shape[-1])
            dV = _t(flat(dz)) @ flat(hs)
            dc = dz.sum(axis=(-3, -2))
        dhs = dz @ _bcast(p["V"])
        dW, dU, db, dx = lstm_backward(p["W"], p["U"], lcache, dhs, per_example)
        return {"W": dW, "U": dU, "b": db, "V": dV, "c": dc}, dx

    def flat(self):
        return np.concatenate([self.params[k].ravel() for k in PARAM_NAMES])

    def checksum(self):
        return float(np.sum(self.flat() * np.arange(1, self.flat().size + 1)))

    def to_dict(self):
        return {
            "activation": self.activation,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d):
        params = {k: np.array(v["data"], dtype=float).reshape(v["shape"])
                  for k, v in d["params"].items()}
        return cls(params, d["activation"])


def flatten_grads(grads, per_example=False):
    if per_example:
        B = grads["W"].shape[0]
        return np.concatenate([grads[k].reshape(B, -1) for k in PARAM_NAMES], axis=1)
    return np.concatenate([grads[k].ravel() for k in PARAM_NAMES])


def unflatten_grads(flat, like):
    out, k = {}, 0
    for name in PARAM_NAMES:
        n = like[name].size
        out[name] = flat[k:k + n].reshape(like[name].shape)
        k += n
    return out


@dataclass
class Optimizer:
    """Plain SGD, or Adam when ``kind == "adam"``. State is per-parameter."""

    kind: str = "sgd"
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params, grads):
        if self.kind == "sgd":
            for k in params:
                params[k] -= self.lr * grads[k]
            return
        if self.kind != "adam":
            raise ValueError(f"unknown optimizer {self.kind!r}")
        self.t += 1
        for k in params:
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * grads[k]
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * grads[k] ** 2
            mh = self.m[k] / (1 - self.beta1 ** self.t)
            vh = self.v[k] / (1 - self.beta2 ** self.t)
            params[k] -= self.lr * mh / (np.sqrt(vh) + self.eps)

    def to_dict(self):
        enc = lambda d: {k: {"shape": list(a.shape), "data": a.ravel().tolist()} for k, a in d.items()}
        return {"kind": self.kind, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "t": self.t, "m": enc(self.m), "v": enc(self.v)}

    @classmethod
    def from_dict(cls, d):
        dec = lambda e: {k: np.array(a["data"], dtype=float).reshape(a["shape"]) for k, a in e.items()}
        return cls(d["kind"], d["lr"], d["beta1"], d["beta2"], d["eps"], d["t"], dec(d["m"]), dec(d["v"]))
