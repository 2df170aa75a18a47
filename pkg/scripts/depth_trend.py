"""Heldout perplexity vs depth on a 2,000-document real-text subsample.

    python scripts/depth_trend.py --epochs 100 --seeds 0 1 2 --out depth.json
"""
import argparse
import json

from sawtopics import experiments

CONFIGS = {
    "sawetm-1": {"layer_widths": [64]},
    "sawetm-3": {"layer_widths": [64, 32, 16]},
    "dntm-1": {"layer_widths": [64], "variant": "dntm"},
    "dntm-3": {"layer_widths": [64, 32, 16], "variant": "dntm"},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--configs", nargs="+", default=list(CONFIGS), choices=list(CONFIGS))
    ap.add_argument("--embed-init-std", type=float, default=None)
    ap.add_argument("--out")
    args = ap.parse_args()
    configs = {k: dict(CONFIGS[k]) for k in args.configs}
    if args.embed_init_std is not None:
        for c in configs.values():
            c["embed_init_std"] = args.embed_init_std
    table = experiments.depth_trend(configs, seeds=tuple(args.seeds), epochs=args.epochs, echo=print)
    for name, row in table["runs"].items():
        print(f"{name:>10s}  median perplexity {row['median']:.2f}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(table, f, indent=2)


if __name__ == "__main__":
    main()
