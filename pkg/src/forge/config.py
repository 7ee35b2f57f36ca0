"""Pipeline configuration: one JSON document drives every subcommand."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .causality import CausalityTrainConfig
from .evaluation.tstr import TstrConfig
from .gan import GanConfig
from .privacy import DEFAULT_DELTA, PateConfig, PrivacyBudget


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    path: str = "data/toy_corpus.csv"
    T: int = 288
    holdout_fraction: float = 0.2
    causality_fraction: float = 0.5


@dataclass(frozen=True)
class MotifConfig:
    tau: int = 48
    sigma: float = 2.0
    max_motifs: int | None = None


@dataclass(frozen=True)
class DpConfig:
    """DP-SGD knobs; the noise multiplier is calibrated from the budget."""

    clip: float = 1.0


@dataclass(frozen=True)
class EvalConfig:
    count: int = 1000
    variance_edges: tuple[float, ...] | None = None
    tstr: TstrConfig = TstrConfig()


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    data: DataConfig = DataConfig()
    motif: MotifConfig = MotifConfig()
    causality: CausalityTrainConfig = CausalityTrainConfig()
    budget: PrivacyBudget = PrivacyBudget()
    pate: PateConfig = PateConfig()
    dpsgd: DpConfig = DpConfig()
    gan: GanConfig = GanConfig()
    eval: EvalConfig = EvalConfig()
    base_dir: Path = field(default=Path("."), compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["budget"]["epsilon"] = _enc_float(self.budget.epsilon)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def data_path(self) -> Path:
        p = Path(self.data.path)
        return p if p.is_absolute() else self.base_dir / p

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed, causality=replace(self.causality, seed=seed),
                       gan=replace(self.gan, seed=seed), eval=replace(self.eval, tstr=replace(self.eval.tstr, seed=seed)))


def _enc_float(x: float):
    return "inf" if math.isinf(x) else x


def _build(cls, raw, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def _float(v, where):
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number or \"inf\", got {v!r}")
    return float(v)


def from_dict(raw: dict, base_dir: Path | str = ".") -> PipelineConfig:
    """Parse and validate a config document; unknown keys are errors."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {f.name for f in fields(PipelineConfig)} - {"base_dir"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")

    data = _build(DataConfig, raw.get("data"), "data")
    if data.T < 2:
        raise ConfigError("data.T must be >= 2")
    for name in ("holdout_fraction", "causality_fraction"):
        if not 0.0 < getattr(data, name) < 1.0:
            raise ConfigError(f"data.{name} must lie in (0, 1)")

    motif = _build(MotifConfig, raw.get("motif"), "motif")
    if motif.tau < 1 or data.T % motif.tau:
        raise ConfigError(f"motif.tau={motif.tau} must be positive and divide T={data.T}")
    if not motif.sigma >= 0:
        raise ConfigError("motif.sigma must be nonnegative")
    if motif.max_motifs is not None and motif.max_motifs < 1:
        raise ConfigError("motif.max_motifs must be positive")

    caus = _build(CausalityTrainConfig, raw.get("causality"), "causality")

    b = dict(raw.get("budget") or {})
    if "epsilon" in b:
        b["epsilon"] = _float(b["epsilon"], "budget.epsilon")
    b.setdefault("delta", DEFAULT_DELTA)
    budget = _build(PrivacyBudget, b, "budget")

    pate = _build(PateConfig, raw.get("pate"), "pate")
    dpsgd = _build(DpConfig, raw.get("dpsgd"), "dpsgd")
    if not dpsgd.clip > 0:
        raise ConfigError("dpsgd.clip must be positive")

    g = raw.get("gan") or {}
    if not isinstance(g, dict):
        raise ConfigError("gan: expected an object")
    if "privacy" in g:
        raise ConfigError("gan.privacy is derived from budget and dpsgd; do not set it")
    try:
        gan = GanConfig.from_dict(g)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"gan: {e}") from None

    ev = dict(raw.get("eval") or {})
    tstr = _build(TstrConfig, ev.pop("tstr", None), "eval.tstr")
    if "variance_edges" in ev and ev["variance_edges"] is not None:
        edges = [_float(v, "eval.variance_edges") for v in ev["variance_edges"]]
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ConfigError("eval.variance_edges must be strictly increasing with >= 2 entries")
        ev["variance_edges"] = tuple(edges)
    evc = _build(EvalConfig, dict(ev, tstr=tstr), "eval")
    if evc.count < 1:
        raise ConfigError("eval.count must be positive")

    cfg = PipelineConfig(seed, data, motif, caus, budget, pate, dpsgd, gan, evc, Path(base_dir))
    # the global seed drives every stochastic stage unless a section pins its own
    def pinned(section):
        return isinstance(section, dict) and "seed" in section
    if not pinned(raw.get("causality")):
        cfg = replace(cfg, causality=replace(cfg.causality, seed=seed))
    if not pinned(g):
        cfg = replace(cfg, gan=replace(cfg.gan, seed=seed))
    if not pinned((raw.get("eval") or {}).get("tstr")):
        cfg = replace(cfg, eval=replace(cfg.eval, tstr=replace(cfg.eval.tstr, seed=seed)))
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
    return from_dict(raw, base_dir=path.parent)
