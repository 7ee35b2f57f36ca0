"""Regenerate data/toy_corpus.csv (400 traces, T=48, six planted 8-sample templates)."""
import argparse
from pathlib import Path

from forge.data import write_traces
from forge.toy import TOY_N, TOY_SIGMA, TOY_T, TOY_TAU, make_toy_corpus

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "data" / "toy_corpus.csv")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    corpus, _ = make_toy_corpus(TOY_N, TOY_T, TOY_TAU, TOY_SIGMA, args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_traces(corpus, args.out, precision=3)
    print(f"wrote {len(corpus)} traces to {args.out}")


if __name__ == "__main__":
    main()
