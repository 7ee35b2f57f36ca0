"""Pilot run for the motif-breadth threshold on the toy corpus.

Trains the GAN from a pipeline config and reports pct_TM of generated traces
at several tolerances, next to the autoencoder's own round trip of the
training traces (an upper reference: every synthetic value passes through
the same recovery network).

    python3 scripts/pilot_breadth.py --config configs/toy.json --epochs 200
    python3 scripts/pilot_breadth.py --config configs/toy.json --no-motif-loss --eta 0 --batch 8
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from forge import cli
from forge.causality import partition_causality
from forge.config import load_config
from forge.data import TraceSet, denormalize_array
from forge.evaluation import glycemic_metrics, motif_coverage
from forge.gan import embed, generate, init_state, recover, train_epoch
from forge.motif import build_motif_set
from forge.privacy import mean_aggregate, partition


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/toy.json")
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--eta", type=float)
    ap.add_argument("--batch", type=int)
    ap.add_argument("--lr", type=float)
    ap.add_argument("--no-motif-loss", action="store_true")
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--every", type=int, default=50)
    args = ap.parse_args()

    cfg = load_config(args.config)
    g = cfg.gan
    if args.eta is not None:
        g = replace(g, eta=args.eta)
    if args.batch is not None:
        g = replace(g, batch_size=args.batch)
    if args.lr is not None:
        g = replace(g, lr_embedder=args.lr, lr_recovery=args.lr, lr_generator=args.lr, lr_discriminator=args.lr)
    epochs = args.epochs or g.epochs
    parts = cli.splits(cfg)
    real = parts["gan-train"]
    x = real.normalized()

    M = ms = None
    if not args.no_motif_loss:
        ms = build_motif_set(parts["causality-train"], cfg.motif.tau, cfg.motif.sigma)
        M = mean_aggregate([partition_causality(p, ms, cfg.causality)
                            for p in partition(parts["causality-train"], cfg.pate.n_partitions)])

    sigmas = (cfg.motif.sigma, 5.0, 10.0, 20.0)
    state = init_state(g, cfg.data.T)
    t0 = time.time()
    for ep in range(1, epochs + 1):
        state, rep = train_epoch(state, x, M, ms, cfg.causality)
        if ep % args.every and ep != epochs:
            continue
        syn = generate(state, args.count, cfg.seed)
        rec = TraceSet.from_array(denormalize_array(recover(state, embed(state, x))))
        gan_tm = [motif_coverage(real, syn, cfg.motif.tau, s).pct_TM for s in sigmas]
        ae_tm = motif_coverage(real, rec, cfg.motif.tau, cfg.motif.sigma).pct_TM
        print(f"epoch {ep:4d} {time.time() - t0:6.0f}s L_R={rep.L_R:.2e} L_Ar={rep.L_Ar:.3f} "
              f"L_Af={rep.L_Af:.3f} AE pct_TM={ae_tm:.3f} "
              + " ".join(f"pct_TM(s={s:g})={v:.3f}" for s, v in zip(sigmas, gan_tm))
              + f" VAR real={glycemic_metrics(real).VAR:.0f} synth={glycemic_metrics(syn).VAR:.0f}",
              flush=True)
    print("sample:", np.round(syn.values()[0]).astype(int).tolist())


if __name__ == "__main__":
    main()
