"""k-means on layer-1 posterior means for a corpus whose classes use disjoint words."""
import argparse

from sawtopics import evaluation, experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--classes", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    run = experiments.clustering_run(epochs=args.epochs, n_classes=args.classes, seed=args.seed)
    print(evaluation.confusion(run["pred"], run["labels"]))
    print(f"AC {run['ac']:.3f}  NMI {run['nmi']:.3f}")


if __name__ == "__main__":
    main()
