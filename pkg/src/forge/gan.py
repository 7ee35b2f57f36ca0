"""Recurrent GAN over an embedded space with motif-causality guidance.

Networks (all single-layer LSTM + per-step dense head):

* embedder      traces (B, T, 1)   -> embedding (B, T, e), sigmoid
* recovery      embedding          -> traces in [0, 1], sigmoid
* generator     noise (B, T, nz)   -> embedding, sigmoid
* discriminator embedding          -> per-step probability, sigmoid

Every epoch runs three phases per minibatch, in order: autoencoder,
generator, discriminator. Real data is labelled 0 and synthetic data 1 by
the discriminator.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .causality import CausalityTrainConfig, MotifNetwork, estimate_batch_causality
from .data import TraceSet, denormalize_array
from .motif import MotifSet
from .nn import DivergenceError, Optimizer, RecurrentNet, flatten_grads, unflatten_grads
from .privacy import DpSgdConfig, clip_and_noise

NETS = ("embedder", "recovery", "generator", "discriminator")
BCE_CLAMP = 1e-7
CHECKPOINT_FORMAT = "forge-gan-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GanConfig:
    embed_dim: int = 8
    hidden_embedder: int = 16
    hidden_recovery: int = 16
    hidden_generator: int = 16
    hidden_discriminator: int = 16
    noise_dim: int | None = None
    alpha: float = 0.1
    eta: float = 10.0
    batch_size: int = 32
    epochs: int = 200
    optimizer: str = "sgd"
    lr_embedder: float = 0.01
    lr_recovery: float = 0.01
    lr_generator: float = 0.01
    lr_discriminator: float = 0.01
    spsa_probes: int = 4
    spsa_c: float = 0.05
    lm_refresh_every: int = 1
    lm_batch: int = 32
    privacy: DpSgdConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.eta < 0:
            raise ValueError("alpha and eta must be nonnegative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.spsa_probes < 0 or self.spsa_c <= 0:
            raise ValueError("spsa_probes must be >= 0 and spsa_c > 0")

    @property
    def nz(self) -> int:
        return self.noise_dim or self.embed_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GanConfig":
        d = dict(d)
        if d.get("privacy") is not None:
            d["privacy"] = DpSgdConfig(**d["privacy"])
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown gan config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class LossReport:
    epoch: int
    L_R: float
    L_S: float
    L_M: float
    L_D: float
    L_Ar: float
    L_Af: float

    COLUMNS = ("epoch", "L_R", "L_S", "L_M", "L_D", "L_Ar", "L_Af")

    def row(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]

    def finite(self) -> bool:
        return all(math.isfinite(v) for v in self.row()[1:])


@dataclass
class GanState:
    cfg: GanConfig
    T: int
    nets: dict[str, RecurrentNet]
    opts: dict[str, Optimizer]
    rng: np.random.Generator
    epoch: int = 0
    lm_nets: list[MotifNetwork] | None = None
    lm_value: float = 0.0

    def checksums(self) -> dict[str, float]:
        return {k: v.checksum() for k, v in self.nets.items()}


# ---------------------------------------------------------------- losses

def loss_reconstruction(x, x_tilde) -> float:
    return float(np.mean((np.asarray(x) - np.asarray(x_tilde)) ** 2))


def loss_stepwise(x_e, xhat_e) -> float:
    return float(np.mean((np.asarray(x_e) - np.asarray(xhat_e)) ** 2))


def _mse_grad(a, b):
    diff = a - b
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def _moments(x):
    flat = x.reshape(len(x), -1)
    return flat.mean(axis=0), flat.var(axis=0)


def loss_distributional(x_e, xhat_e) -> float:
    """Squared gaps of per-coordinate batch means plus squared gaps of variances.

    Coordinates are (step, embedding dim) pairs; moments run over the batch.
    """
    m1, v1 = _moments(np.asarray(x_e, dtype=float))
    m2, v2 = _moments(np.asarray(xhat_e, dtype=float))
    return float(np.sum((m1 - m2) ** 2) + np.sum((v1 - v2) ** 2))


def _distributional_grad(x_e, xhat_e):
    """Value and gradient w.r.t. the synthetic batch."""
    B = len(xhat_e)
    m1, v1 = _moments(x_e)
    flat = xhat_e.reshape(B, -1)
    m2, v2 = flat.mean(axis=0), flat.var(axis=0)
    dm, dv = m2 - m1, v2 - v1
    val = float(np.sum(dm ** 2) + np.sum(dv ** 2))
    grad = 2.0 * dm / B + 2.0 * dv * 2.0 * (flat - m2) / B
    return val, grad.reshape(xhat_e.shape)


def loss_motif(M, M_hat) -> float:
    return float(np.mean((np.asarray(M, dtype=float) - np.asarray(M_hat, dtype=float)) ** 2))


def bce(p, y) -> float:
    p = np.clip(np.asarray(p, dtype=float), BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _bce_grad(p, y):
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    val = float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))
    inside = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    grad = np.where(inside, -(y / pc - (1.0 - y) / (1.0 - pc)), 0.0) / p.size
    return val, grad


# ---------------------------------------------------------------- networks

def init_state(cfg: GanConfig, T: int) -> GanState:
    rng = np.random.default_rng(cfg.seed)
    e = cfg.embed_dim
    if e >= T:
        raise ValueError(f"embedding dim {e} must be smaller than T={T}")
    nets = {
        "embedder": RecurrentNet.init(1, cfg.hidden_embedder, e, rng, "sigmoid"),
        "recovery": RecurrentNet.init(e, cfg.hidden_recovery, 1, rng, "sigmoid"),
        "generator": RecurrentNet.init(cfg.nz, cfg.hidden_generator, e, rng, "sigmoid"),
        "discriminator": RecurrentNet.init(e, cfg.hidden_discriminator, 1, rng, "sigmoid"),
    }
    lrs = {"embedder": cfg.lr_embedder, "recovery": cfg.lr_recovery,
           "generator": cfg.lr_generator, "discriminator": cfg.lr_discriminator}
    opts = {k: Optimizer(cfg.optimizer, lrs[k]) for k in NETS}
    return GanState(cfg, T, nets, opts, rng)


def _check(arr, what):
    if not np.isfinite(arr).all():
        raise DivergenceError(f"non-finite values in {what}")
    return arr


def embed(state: GanState, x: np.ndarray) -> np.ndarray:
    """Normalized traces (B, T) or (B, T, 1) -> embeddings (B, T, e)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[..., None]
    return _check(state.nets["embedder"](_check(x, "embedder input")), "embedder output")


def recover(state: GanState, x_e: np.ndarray) -> np.ndarray:
    """Embeddings -> normalized traces (B, T) in [0, 1]."""
    return _check(state.nets["recovery"](_check(np.asarray(x_e, float), "recovery input")),
                  "recovery output")[..., 0]


def discriminate(state: GanState, x_e: np.ndarray) -> np.ndarray:
    """Per-step probability that the embedded sequence is synthetic, (B, T)."""
    return _check(state.nets["discriminator"](np.asarray(x_e, float)), "discriminator output")[..., 0]


def sample_noise(rng: np.random.Generator, count: int, T: int, nz: int) -> np.ndarray:
    return rng.standard_normal((count, T, nz))


def generate(state: GanState, count: int, seed: int) -> TraceSet:
    rng = np.random.default_rng(seed)
    z = sample_noise(rng, count, state.T, state.cfg.nz)
    xhat_e = _check(state.nets["generator"](z), "generator output")
    values = denormalize_array(recover(state, xhat_e))
    return TraceSet.from_array(values, provenance="synthetic", prefix="synth")


# ---------------------------------------------------------------- phases

def ae_phase(nets, x, z, cfg: GanConfig, per_example=False):
    """Objective L_R + alpha * L_S and its gradients for embedder/recovery."""
    E, R, G = nets["embedder"], nets["recovery"], nets["generator"]
    x_e, ce = E.forward(x)
    x_tilde, cr = R.forward(x_e)
    xhat_e = G(z)
    LR, d_tilde = _mse_grad(x_tilde, x)
    LS, d_xe_s = _mse_grad(x_e, xhat_e)
    gR, d_xe = R.backward(cr, d_tilde, per_example)
    gE, _ = E.backward(ce, d_xe + cfg.alpha * d_xe_s, per_example)
    obj = LR + cfg.alpha * LS
    return obj, {"L_R": LR, "L_S": LS}, {"embedder": gE, "recovery": gR}


def generator_phase(nets, x, z, cfg: GanConfig, lm_upstream=None, per_example=False):
    """Objective (1 - L_Af) + eta L_S + eta L_D (+ L_M through ``lm_upstream``).

    ``lm_upstream`` is dL_M/d(recovered traces), shape (B, T); it is chained
    through the frozen recovery network into the generator.
    """
    E, R, G, D = nets["embedder"], nets["recovery"], nets["generator"], nets["discriminator"]
    x_e = E(x)
    xhat_e, cg = G.forward(z)
    p_fake, cd = D.forward(xhat_e)
    LAf, d_pf = _bce_grad(p_fake, 1.0)
    LS, d_s = _mse_grad(xhat_e, x_e)
    LD, d_d = _distributional_grad(x_e, xhat_e)
    _, d_adv = D.backward(cd, -d_pf)
    d_xhe = d_adv + cfg.eta * d_s + cfg.eta * d_d
    if lm_upstream is not None:
        _, cr = R.forward(xhat_e)
        _, d_lm = R.backward(cr, np.asarray(lm_upstream)[..., None])
        d_xhe = d_xhe + d_lm
    gG, _ = G.backward(cg, d_xhe, per_example)
    obj = (1.0 - LAf) + cfg.eta * LS + cfg.eta * LD
    return obj, {"L_S": LS, "L_D": LD, "L_Af": LAf}, {"generator": gG}


def discriminator_phase(nets, x, z, cfg: GanConfig, per_example=False):
    """Objective L_Af + L_Ar: real labelled 0, synthetic labelled 1."""
    E, G, D = nets["embedder"], nets["generator"], nets["discriminator"]
    x_e = E(x)
    xhat_e = G(z)
    p_real, cr = D.forward(x_e)
    p_fake, cf = D.forward(xhat_e)
    LAr, d_pr = _bce_grad(p_real, 0.0)
    LAf, d_pf = _bce_grad(p_fake, 1.0)
    g1, _ = D.backward(cr, d_pr, per_example)
    g2, _ = D.backward(cf, d_pf, per_example)
    grads = {k: g1[k] + g2[k] for k in g1}
    return LAf + LAr, {"L_Ar": LAr, "L_Af": LAf}, {"discriminator": grads}


# ---------------------------------------------------------------- L_M via SPSA

def spsa_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, c: float, k: int,
                  seed: int | np.random.Generator) -> np.ndarray:
    """Simultaneous-perturbation gradient estimate averaged over k Rademacher probes."""
    if c <= 0:
        raise ValueError("perturbation size must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = np.zeros_like(x, dtype=float)
    for _ in range(k):
        delta = rng.choice((-1.0, 1.0), size=x.shape)
        g += (f(x + c * delta) - f(x - c * delta)) / (2.0 * c) * delta
    return g / max(k, 1)


def spsa_gradient_LM(xhat: np.ndarray, M: np.ndarray, ms: MotifSet, ccfg: CausalityTrainConfig,
                     seed, c: float = 0.05, k: int = 4, warm=None) -> np.ndarray:
    """SPSA estimate of dL_M/dxhat for normalized synthetic traces (B, T)."""
    def lm(values):
        M_hat, _ = estimate_batch_causality(values, ms, ccfg, warm=warm, normalized=True)
        return loss_motif(M, M_hat)
    return spsa_gradient(lm, np.asarray(xhat, dtype=float), c, k, seed)


# ---------------------------------------------------------------- training

def _apply(state: GanState, name: str, grads: dict, per_example: bool, batch: int):
    priv = state.cfg.privacy
    net = state.nets[name]
    if per_example:
        flat = flatten_grads(grads, per_example=True) * batch
        grads = unflatten_grads(clip_and_noise(flat, priv, state.rng), net.params)
    state.opts[name].step(net.params, grads)


def _sanitizing(cfg: GanConfig) -> bool:
    return cfg.privacy is not None and not cfg.privacy.is_noop


def refresh_motif_estimate(state: GanState, M, ms: MotifSet, ccfg: CausalityTrainConfig):
    """Recompute M_hat on a fresh synthetic batch, warm-started; returns L_M."""
    cfg = state.cfg
    z = sample_noise(state.rng, cfg.lm_batch, state.T, cfg.nz)
    xhat = recover(state, state.nets["generator"](z))
    if state.lm_nets is None:
        M_hat, nets = estimate_batch_causality(xhat, ms, replace(ccfg, inner_steps=ccfg.epochs),
                                               normalized=True)
    else:
        M_hat, nets = estimate_batch_causality(xhat, ms, ccfg, warm=state.lm_nets, normalized=True)
    state.lm_nets = nets
    state.lm_value = loss_motif(M, M_hat)
    return state.lm_value


def train_epoch(state: GanState, real, M=None, ms: MotifSet | None = None,
                ccfg: CausalityTrainConfig | None = None,
                on_phase: Callable[[str, GanState], None] | None = None):
    """One pass over the real data. Mutates and returns ``(state, LossReport)``.

    ``real`` is a TraceSet or a normalized (n, T) array. ``M`` (with ``ms``
    and ``ccfg``) enables the motif-causality term.
    """
    cfg = state.cfg
    data = real.normalized() if isinstance(real, TraceSet) else np.asarray(real, dtype=float)
    if data.shape[1] != state.T:
        raise ValueError(f"data has T={data.shape[1]}, state expects {state.T}")
    use_lm = M is not None
    if use_lm:
        if ms is None or ccfg is None:
            raise ValueError("motif causality needs both a motif set and a causality config")
        if np.shape(M) != (ms.m, ms.m):
            raise ValueError(f"causality matrix shape {np.shape(M)} does not match m={ms.m}")
        if state.lm_nets is None or state.epoch % cfg.lm_refresh_every == 0:
            refresh_motif_estimate(state, M, ms, ccfg)
    pe = _sanitizing(cfg)
    n = len(data)
    order = state.rng.permutation(n)
    sums = dict.fromkeys(("L_R", "L_S", "L_D", "L_Ar", "L_Af"), 0.0)
    batches = 0
    for start in range(0, n, cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        if len(idx) < 2:
            continue
        B = len(idx)
        x = data[idx][..., None]
        z = sample_noise(state.rng, B, state.T, cfg.nz)

        _, ae_l, grads = ae_phase(state.nets, x, z, cfg, pe)
        for name in ("embedder", "recovery"):
            _apply(state, name, grads[name], pe, B)
        _guard(ae_l, "autoencoder")
        if on_phase:
            on_phase("autoencoder", state)

        upstream = None
        if use_lm and cfg.spsa_probes > 0:
            xhat = recover(state, state.nets["generator"](z))
            seed = int(state.rng.integers(2 ** 63))
            upstream = spsa_gradient_LM(xhat, M, ms, ccfg, seed, cfg.spsa_c, cfg.spsa_probes,
                                        warm=state.lm_nets)
        _, g_l, grads = generator_phase(state.nets, x, z, cfg, upstream, pe)
        _apply(state, "generator", grads["generator"], pe, B)
        _guard(g_l, "generator")
        if on_phase:
            on_phase("generator", state)

        _, d_l, grads = discriminator_phase(state.nets, x, z, cfg, pe)
        _apply(state, "discriminator", grads["discriminator"], pe, B)
        _guard(d_l, "discriminator")
        if on_phase:
            on_phase("discriminator", state)

        sums["L_R"] += ae_l["L_R"]
        sums["L_S"] += g_l["L_S"]
        sums["L_D"] += g_l["L_D"]
        sums["L_Ar"] += d_l["L_Ar"]
        sums["L_Af"] += d_l["L_Af"]
        batches += 1
    if batches == 0:
        raise ValueError("no minibatch of size >= 2 in the training data")
    for name, net in state.nets.items():
        if not np.isfinite(net.flat()).all():
            raise DivergenceError(f"non-finite parameters in {name}")
    state.epoch += 1
    report = LossReport(state.epoch, *(sums[k] / batches for k in ("L_R", "L_S")),
                        state.lm_value if use_lm else 0.0,
                        *(sums[k] / batches for k in ("L_D", "L_Ar", "L_Af")))
    return state, report


def _guard(losses: dict, phase: str):
    for k, v in losses.items():
        if not math.isfinite(v):
            raise DivergenceError(f"{phase} phase: {k} is not finite")


def train(cfg: GanConfig, real, M=None, ms=None, ccfg=None, epochs: int | None = None,
          log: Callable[[LossReport], None] | None = None):
    data = real.normalized() if isinstance(real, TraceSet) else np.asarray(real, dtype=float)
    state = init_state(cfg, data.shape[1])
    reports = []
    for _ in range(cfg.epochs if epochs is None else epochs):
        state, rep = train_epoch(state, data, M, ms, ccfg)
        reports.append(rep)
        if log:
            log(rep)
    return state, reports


# ---------------------------------------------------------------- persistence

def save_checkpoint(state: GanState, path: str | Path, extra: dict | None = None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config_hash": state.cfg.digest(),
        "config": state.cfg.to_dict(),
        "T": state.T,
        "epoch": state.epoch,
        "rng": state.rng.bit_generator.state,
        "nets": {k: v.to_dict() for k, v in state.nets.items()},
        "optimizers": {k: v.to_dict() for k, v in state.opts.items()},
        "lm_value": state.lm_value,
        "lm_nets": None if state.lm_nets is None else
        [{"target": n.target, "net": n.net.to_dict()} for n in state.lm_nets],
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> GanState:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a GAN checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    cfg = GanConfig.from_dict(doc["config"])
    if cfg.digest() != doc["config_hash"]:
        raise ValueError("checkpoint config hash mismatch")
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng"]
    lm = doc.get("lm_nets")
    return GanState(
        cfg=cfg, T=doc["T"],
        nets={k: RecurrentNet.from_dict(v) for k, v in doc["nets"].items()},
        opts={k: Optimizer.from_dict(v) for k, v in doc["optimizers"].items()},
        rng=rng, epoch=doc["epoch"],
        lm_nets=None if lm is None else [MotifNetwork(d["target"], RecurrentNet.from_dict(d["net"])) for d in lm],
        lm_value=doc.get("lm_value", 0.0),
    )


def write_loss_log(reports, path: str | Path, append=False):
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(LossReport.COLUMNS)
        for r in reports:
            w.writerow([r.epoch] + [repr(float(v)) for v in r.row()[1:]])
