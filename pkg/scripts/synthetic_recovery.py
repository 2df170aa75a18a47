"""Fit a one-layer model to counts drawn from a known Poisson factor model
and compare heldout perplexity with the generating model's."""
import argparse

from sawtopics import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = experiments.synthetic_recovery(epochs=args.epochs, seed=args.seed)
    print(f"oracle perplexity {out['oracle']:.3f}")
    print(f"model perplexity  {out['model']:.3f}  (ratio {out['ratio']:.3f})")


if __name__ == "__main__":
    main()
