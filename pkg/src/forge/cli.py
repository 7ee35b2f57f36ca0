"""``forge`` command line: motifs -> train-causality -> train-gan -> generate -> evaluate.

All subcommands read one JSON config and share an output directory, so the
pipeline composes by running them in order with the same ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .causality import load_matrix, max_threads, parallel_map, partition_causality, save_matrix
from .config import ConfigError, PipelineConfig, load_config
from .data import DataError, TraceSet, load_traces, split_disjoint, write_traces
from .evaluation.report import evaluate, write_bundle
from .gan import (generate, init_state, load_checkpoint, save_checkpoint, train_epoch,
                  write_loss_log)
from .motif import MotifError, MotifSet, build_motif_set, load_motif_set, save_motif_set
from .nn import DivergenceError
from .privacy import (budget_report, dpsgd_for_budget, epsilon_of, mean_aggregate,
                      partition, pate_aggregate)

log = logging.getLogger("forge")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4

MOTIFS_CSV = "motifs.csv"
CAUSALITY_CSV = "causality.csv"
CHECKPOINT = "checkpoint.json"
LOSSES_CSV = "losses.csv"
SYNTHETIC_CSV = "synthetic.csv"


class InputError(OSError):
    """A required artifact is missing or unreadable."""


def splits(cfg: PipelineConfig) -> dict[str, TraceSet]:
    """Deterministic three-way split: holdout, then causality-train vs gan-train."""
    corpus = load_traces(cfg.data_path(), cfg.data.T)
    holdout, rest = split_disjoint(corpus, cfg.data.holdout_fraction, cfg.seed, ("holdout", "unassigned"))
    caus, gan = split_disjoint(rest, cfg.data.causality_fraction, cfg.seed + 1)
    return {"holdout": holdout, "causality-train": caus, "gan-train": gan}


def _header(cfg: PipelineConfig, stage: str) -> dict:
    return {"config_hash": cfg.digest(), "stage": stage, "seed": cfg.seed, "version": __version__}


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise InputError(f"missing {what} at {path}; run the earlier pipeline stage first")
    return path


def _motifs(out: Path) -> MotifSet:
    return load_motif_set(_require(out / MOTIFS_CSV, "motif set"))


def cmd_motifs(cfg: PipelineConfig, out: Path) -> Path:
    parts = splits(cfg)
    ms = build_motif_set(parts["causality-train"], cfg.motif.tau, cfg.motif.sigma, cfg.motif.max_motifs)
    path = out / MOTIFS_CSV
    save_motif_set(ms, path, extra=_header(cfg, "motifs"))
    log.info("motif set: m=%d (tau=%d, sigma=%g) -> %s", ms.m, ms.tau, ms.sigma, path)
    return path


def cmd_train_causality(cfg: PipelineConfig, out: Path, threads: int | None = None) -> Path:
    ms = _motifs(out)
    caus = splits(cfg)["causality-train"]
    parts = partition(caus, cfg.pate.n_partitions)
    mats = parallel_map(lambda p: partition_causality(p, ms, cfg.causality), parts,
                        max_threads() if threads is None else threads)
    if cfg.budget.private:
        M = pate_aggregate(mats, cfg.budget, cfg.pate, seed=cfg.seed)
        mechanism = "pate-laplace"
    else:
        M = mean_aggregate(mats)
        mechanism = "none"
    path = out / CAUSALITY_CSV
    save_matrix(M, path, dict(_header(cfg, "train-causality"), tau=ms.tau, sigma=ms.sigma,
                              causality_config=cfg.causality.digest()))
    (out / "budget_causality.json").write_text(budget_report(
        cfg.budget.epsilon, cfg.budget.delta, mechanism, n_partitions=cfg.pate.n_partitions,
        bins=cfg.pate.bins, m=ms.m, laplace_scale=cfg.pate.noise_scale(cfg.budget, ms.m)))
    log.info("causality matrix %dx%d from %d partitions (%s) -> %s", ms.m, ms.m, len(parts), mechanism, path)
    return path


def gan_config_for(cfg: PipelineConfig, n_train: int, epochs: int | None = None):
    g = cfg.gan if epochs is None else replace(cfg.gan, epochs=epochs)
    batch = min(g.batch_size, n_train)
    steps = g.epochs * math.ceil(n_train / batch)
    try:
        priv = dpsgd_for_budget(cfg.budget, cfg.dpsgd.clip, batch / n_train, steps)
    except ValueError as e:
        raise ConfigError(f"privacy budget: {e}") from None
    return replace(g, privacy=priv)


def cmd_train_gan(cfg: PipelineConfig, out: Path, epochs: int | None = None) -> Path:
    ms = _motifs(out)
    M = load_matrix(_require(out / CAUSALITY_CSV, "causality matrix"))
    if M.shape != (ms.m, ms.m):
        raise MotifError(f"causality matrix is {M.shape[0]}x{M.shape[1]} but the motif set has m={ms.m}")
    real = splits(cfg)["gan-train"]
    gcfg = gan_config_for(cfg, len(real), epochs)
    state = init_state(gcfg, cfg.data.T)
    data = real.normalized()
    losses = out / LOSSES_CSV
    write_loss_log([], losses)
    n_epochs = gcfg.epochs
    for _ in range(n_epochs):
        state, rep = train_epoch(state, data, M, ms, cfg.causality)
        write_loss_log([rep], losses, append=True)
        log.debug("epoch %d: %s", rep.epoch, rep.row()[1:])
    path = out / CHECKPOINT
    save_checkpoint(state, path, extra=_header(cfg, "train-gan"))
    priv = gcfg.privacy
    eps = math.inf if priv is None else epsilon_of(priv, cfg.budget.delta)
    params = {"epochs": n_epochs}
    if priv is not None:
        params.update(clip=priv.clip, noise_multiplier=priv.noise_multiplier,
                      sample_rate=priv.sample_rate, steps=priv.steps)
    (out / "budget_gan.json").write_text(budget_report(
        eps, cfg.budget.delta, "dp-sgd" if priv else "none", **params))
    log.info("trained %d epochs -> %s", n_epochs, path)
    return path


def cmd_generate(cfg: PipelineConfig, out: Path, checkpoint: Path | None = None,
                 count: int | None = None) -> Path:
    state = load_checkpoint(_require(checkpoint or out / CHECKPOINT, "checkpoint"))
    synth = generate(state, cfg.eval.count if count is None else count, cfg.seed)
    path = out / SYNTHETIC_CSV
    write_traces(synth, path)
    path.with_suffix(".json").write_text(json.dumps(
        dict(_header(cfg, "generate"), count=len(synth), checkpoint_config_hash=state.cfg.digest()),
        indent=2, sort_keys=True) + "\n")
    log.info("generated %d traces -> %s", len(synth), path)
    return path


def cmd_evaluate(cfg: PipelineConfig, out: Path, real: Path | None = None,
                 synth: Path | None = None) -> Path:
    real_set = (load_traces(real, cfg.data.T, "holdout") if real is not None
                else splits(cfg)["holdout"])
    synth_set = load_traces(_require(synth or out / SYNTHETIC_CSV, "synthetic traces"), cfg.data.T, "synthetic")
    bundle = evaluate(real_set, synth_set, cfg.motif.tau, cfg.motif.sigma, cfg.eval.tstr,
                      cfg.eval.variance_edges)
    paths = write_bundle(bundle, out / "evaluation", cfg.digest())
    log.info("evaluation report -> %s", paths["report.json"])
    return paths["report.json"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"forge {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, type=Path, help="pipeline config (JSON)")
        sp.add_argument("--out", type=Path, default=Path("forge-out"), help="run directory (default: forge-out)")
        sp.add_argument("--seed", type=int, help="override the global seed")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        return sp

    add("motifs", "build the motif set from the causality split")
    sp = add("train-causality", "train per-partition causality matrices and aggregate them")
    sp.add_argument("--threads", type=int, help="partition workers (default: FORGE_THREADS or CPU count)")
    sp = add("train-gan", "train the GAN and write a checkpoint plus loss log")
    sp.add_argument("--epochs", type=int, help="override gan.epochs")
    sp = add("generate", "sample synthetic traces from a checkpoint")
    sp.add_argument("--checkpoint", type=Path)
    sp.add_argument("--count", type=int)
    sp = add("evaluate", "compare synthetic traces against real ones")
    sp.add_argument("--real", type=Path, help="real traces (default: the holdout split)")
    sp.add_argument("--synth", type=Path, help="synthetic traces (default: <out>/synthetic.csv)")
    return p


def run(args: argparse.Namespace) -> Path:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg = cfg.with_seed(args.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    if cmd == "motifs":
        return cmd_motifs(cfg, out)
    if cmd == "train-causality":
        return cmd_train_causality(cfg, out, args.threads)
    if cmd == "train-gan":
        if args.epochs is not None and args.epochs < 1:
            raise ConfigError("--epochs must be positive")
        return cmd_train_gan(cfg, out, args.epochs)
    if cmd == "generate":
        if args.count is not None and args.count < 1:
            raise ConfigError("--count must be positive")
        return cmd_generate(cfg, out, args.checkpoint, args.count)
    return cmd_evaluate(cfg, out, args.real, args.synth)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose + 1, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        path = run(args)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except DivergenceError as e:
        log.error("numeric divergence: %s", e)
        return EXIT_DIVERGENCE
    except (OSError, DataError, MotifError) as e:
        log.error("input/output error: %s", e)
        return EXIT_IO
    except ValueError as e:
        # remaining value errors come from malformed artifacts or inputs
        log.error("invalid input: %s", e)
        return EXIT_IO
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
