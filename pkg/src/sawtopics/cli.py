"""Command-line entry point: prep | train | eval | topics | export-embeddings."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import checkpoint, corpus, decoder, evaluation, model, trainer

log = logging.getLogger("sawtopics")

LAYER_PRESETS = {"paper15": model.PAPER15}


class ConfigError(ValueError):
    pass


def load_schema(name: str) -> dict:
    return json.loads(resources.files("sawtopics").joinpath(f"data/{name}.schema.json").read_text())


# -- run configuration ------------------------------------------------------------

@dataclasses.dataclass
class RunConfig:
    corpus: str | None = None
    out: str | None = None
    split_seed: int | None = None
    heldout_fraction: float = 0.2
    train: trainer.TrainConfig = dataclasses.field(default_factory=trainer.TrainConfig)
    eval: evaluation.EvalConfig = dataclasses.field(default_factory=evaluation.EvalConfig)

    REQUIRED = ("corpus", "out")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Flat keys: run keys plus any TrainConfig / EvalConfig field; ``seed`` drives both."""
        train_fields = {f.name for f in dataclasses.fields(trainer.TrainConfig)}
        eval_fields = {f.name for f in dataclasses.fields(evaluation.EvalConfig)}
        run_fields = {"corpus", "out", "split_seed", "heldout_fraction"}
        unknown = sorted(set(data) - train_fields - eval_fields - run_fields)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**{k: data[k] for k in run_fields if k in data})
        cfg.train = trainer.TrainConfig(**{k: data[k] for k in train_fields if k in data})
        cfg.eval = evaluation.EvalConfig(**{k: data[k] for k in eval_fields if k in data and k != "seed"})
        cfg.eval.seed = cfg.train.seed
        return cfg

    def to_dict(self) -> dict:
        out = {"corpus": self.corpus, "out": self.out, "split_seed": self.effective_split_seed,
               "heldout_fraction": self.heldout_fraction}
        out.update(dataclasses.asdict(self.train))
        out.update({k: v for k, v in dataclasses.asdict(self.eval).items() if k != "seed"})
        return out

    @property
    def effective_split_seed(self) -> int:
        return self.train.seed if self.split_seed is None else self.split_seed

    def validate(self) -> list[str]:
        errors = [f"missing required key: {k}" for k in self.REQUIRED if getattr(self, k) in (None, "")]
        if not 0 < self.heldout_fraction < 1:
            errors.append("heldout_fraction must be in (0, 1)")
        errors += self.train.validate() + self.eval.validate()
        return errors


def parse_layer_widths(text: str) -> list[int]:
    if text in LAYER_PRESETS:
        return list(LAYER_PRESETS[text])
    try:
        widths = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad layer widths {text!r}") from exc
    if not widths:
        raise argparse.ArgumentTypeError("empty layer widths")
    return widths


def _workers(value):
    if value is not None:
        return value
    env = os.environ.get("SAWTOPICS_WORKERS")
    return int(env) if env else None


# -- prep ---------------------------------------------------------------------------

def _read_documents(path: Path, labels_file: str | None):
    texts, labels, label_names = [], None, None
    if path.is_dir():
        files = sorted(p for p in path.rglob("*") if p.is_file())
        if not files:
            raise FileNotFoundError(f"no files under {path}")
        parents = {f.parent for f in files}
        if all(f.parent != path for f in files) and len(parents) > 1:
            label_names = sorted({f.relative_to(path).parts[0] for f in files})
            code = {n: i for i, n in enumerate(label_names)}
            labels = [code[f.relative_to(path).parts[0]] for f in files]
        texts = [f.read_text(encoding="utf-8", errors="replace") for f in files]
    elif path.is_file():
        texts = path.read_text(encoding="utf-8", errors="replace").splitlines()
    else:
        raise FileNotFoundError(f"input not found: {path}")
    if labels_file is not None:
        labels = [int(t) for t in Path(labels_file).read_text().split()]
        if len(labels) != len(texts):
            raise ValueError(f"{len(labels)} labels for {len(texts)} documents")
    return texts, labels, label_names


def cmd_prep(args) -> int:
    texts, labels, label_names = _read_documents(Path(args.input), args.labels)
    stop = corpus.load_stopwords()
    tokens = [corpus.tokenize(t, stop) for t in texts]
    vocab = corpus.build_vocabulary(tokens, args.min_count, args.max_vocab)
    corp = corpus.vectorize(tokens, vocab, labels)
    corpus.write_artifacts(args.out, vocab, corp, label_names)
    print(f"wrote {len(corp)} documents, vocabulary {len(vocab)} -> {args.out}")
    return 0


# -- train --------------------------------------------------------------------------

_TRAIN_FLAGS = {
    "layer_widths": "layer_widths", "variant": "variant", "epochs": "epochs", "lr": "lr",
    "batch_size": "batch_size", "embed_dim": "embed_dim", "hidden": "hidden", "warmup_epochs": "warmup_epochs",
    "clip_norm": "clip_norm", "seed": "seed", "precision": "precision", "checkpoint_every": "checkpoint_every",
    "embed_init_std": "embed_init_std", "scale_mode": "scale_mode", "prior_rate": "prior_rate",
}


def build_run_config(args) -> RunConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    for flag, key in _TRAIN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    for key in ("corpus", "out", "split_seed", "num_posterior_samples"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "log_input", False):
        data["log_input"] = True
    workers = _workers(getattr(args, "workers", None))
    if workers is not None:
        data["workers"] = workers
    cfg = RunConfig.from_dict(data)
    errors = cfg.validate()
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return cfg


def cmd_train(args) -> int:
    cfg = build_run_config(args)
    vocab, corp = corpus.read_artifacts(cfg.corpus)
    split = corpus.split_heldout(corp, cfg.heldout_fraction, seed=cfg.effective_split_seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    extra = {"corpus": str(Path(cfg.corpus).resolve()), "split_seed": cfg.effective_split_seed,
             "heldout_fraction": cfg.heldout_fraction, "vocab_size": len(vocab)}
    trainer.train(split.train_counts, cfg.train, out_dir=out, echo=print, manifest_extra=extra)
    print(f"checkpoint written to {out / 'final.npz'}")
    return 0


# -- eval ---------------------------------------------------------------------------

def _checkpoint_prefix(path) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".npz", ".json") else p


def _load_run(args):
    prefix = _checkpoint_prefix(args.checkpoint)
    params, manifest = checkpoint.load(prefix)
    corpus_dir = args.corpus or manifest.get("corpus")
    if corpus_dir is None:
        raise ConfigError("no corpus directory: pass --corpus")
    vocab, corp = corpus.read_artifacts(corpus_dir)
    return prefix, params, manifest, vocab, corp


def run_eval(params, manifest, corp, split, metrics, ecfg: evaluation.EvalConfig, vocab=None):
    report = evaluation.MetricsReport()
    per_topic_rows = []
    if "ppl" in metrics:
        report.perplexity = evaluation.heldout_perplexity(params, manifest, split, ecfg.num_posterior_samples,
                                                          ecfg.seed, ecfg.batch_size)
    if "quality" in metrics:
        rows = evaluation.topic_quality(params, manifest, split.train_counts, ecfg.top_n_words,
                                        ecfg.coherence_epsilon)
        report.coherence = rows[0]["coherence"]
        report.diversity = rows[0]["diversity"]
        report.quality = report.coherence * report.diversity
        report.per_layer = [{k: r[k] for k in ("layer", "coherence", "diversity", "quality")} for r in rows]
        for r in rows:
            for t, (score, ids) in enumerate(zip(r["topic_npmi"], r["top_ids"])):
                words = [vocab.terms[i] for i in ids] if vocab is not None else [str(i) for i in ids]
                per_topic_rows.append((t, r["layer"], score, " ".join(words)))
    if "cluster" in metrics:
        if corp.labels is None:
            log.warning("corpus has no labels.txt; skipping clustering metrics")
        else:
            rep = evaluation.posterior_mean(params, manifest, split.train_counts, ecfg.batch_size)
            labels = np.asarray(corp.labels)
            pred = evaluation.cluster_documents(rep, len(np.unique(labels)), ecfg.kmeans_restarts,
                                                ecfg.kmeans_max_iter, ecfg.seed)
            report.ac = evaluation.clustering_accuracy(pred, labels)
            report.nmi = evaluation.nmi(pred, labels)
    return report, per_topic_rows


def cmd_eval(args) -> int:
    prefix, params, manifest, vocab, corp = _load_run(args)
    metrics = {m.strip() for m in args.metrics.split(",") if m.strip()}
    bad = metrics - {"ppl", "quality", "cluster"}
    if bad:
        raise ConfigError(f"unknown metrics: {', '.join(sorted(bad))}")
    split_seed = args.split_seed if args.split_seed is not None else manifest.get("split_seed", 0)
    fraction = manifest.get("heldout_fraction", 0.2)
    split = corpus.split_heldout(corp, fraction, seed=split_seed)
    seed = args.seed if args.seed is not None else manifest.get("seed", 0)
    ecfg = evaluation.EvalConfig(num_posterior_samples=args.samples, top_n_words=args.top_n, seed=seed)
    report, rows = run_eval(params, manifest, corp, split, metrics, ecfg, vocab)
    payload = report.to_dict()
    jsonschema.validate(payload, load_schema("metrics"))
    out = Path(args.out) if args.out else prefix.parent / "metrics.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if rows:
        with open(out.with_name(out.stem + "_npmi.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["topic_id", "layer", "npmi", "top_words"])
            w.writerows(rows)
    print(json.dumps(payload, sort_keys=True))
    return 0


# -- topics -------------------------------------------------------------------------

def topic_hierarchy(params, manifest, vocab, layers, top_n: int = 20) -> list[list[dict]]:
    phis = decoder.phi_arrays(manifest["variant"], params)
    out = []
    for layer in layers:
        proj = decoder.project_topics(phis, layer)
        ids = decoder.top_indices(proj, top_n)
        topics = []
        for t in range(proj.shape[1]):
            entry = {"layer": layer, "topic_id": t,
                     "top_words": [vocab.terms[i] for i in ids[:, t]],
                     "weights": [float(proj[i, t]) for i in ids[:, t]]}
            if layer > 1:
                col = phis[layer - 1][:, t]
                order = np.lexsort((np.arange(col.size), -col))
                entry["children"] = [{"topic_id": int(c), "weight": float(col[c])} for c in order]
            topics.append(entry)
        out.append(topics)
    return out


def cmd_topics(args) -> int:
    prefix, params, manifest, vocab, _ = _load_run(args)
    n_layers = len(manifest["layer_widths"])
    if args.layer == "all":
        layers = list(range(1, n_layers + 1))
    else:
        layer = int(args.layer)
        if not 1 <= layer <= n_layers:
            raise ConfigError(f"layer {layer} out of range 1..{n_layers}")
        layers = [layer]
    payload = topic_hierarchy(params, manifest, vocab, layers, args.top_n)
    jsonschema.validate(payload, load_schema("topics"))
    out = Path(args.out) if args.out else prefix.parent / "topics.json"
    out.write_text(json.dumps(payload, indent=1) + "\n")
    print(f"wrote {sum(len(l) for l in payload)} topics -> {out}")
    return 0


# -- export-embeddings --------------------------------------------------------------

def embedding_rows(params, manifest, vocab):
    variant = manifest["variant"]
    n_layers = len(manifest["layer_widths"])
    if variant == "sawetm":
        words = params["alpha_0"]
        topics = [params[f"alpha_{l}"] for l in range(1, n_layers + 1)]
    elif variant == "detm":
        words = params["detm_alpha_1"]
        topics = [params[f"detm_beta_{l}"] for l in range(1, n_layers + 1)]
    else:
        raise ConfigError(f"variant {variant!r} has no embeddings to export")
    rows = [(term, words[:, i]) for i, term in enumerate(vocab.terms)]
    for l, emb in enumerate(topics, start=1):
        rows.extend((f"t{l}_{k}", emb[:, k]) for k in range(emb.shape[1]))
    return rows


def cmd_export_embeddings(args) -> int:
    prefix, params, manifest, vocab, _ = _load_run(args)
    rows = embedding_rows(params, manifest, vocab)
    dim = rows[0][1].size
    out = Path(args.out) if args.out else prefix.parent / "embeddings.tsv"
    with open(out, "w", encoding="utf-8") as f:
        f.write("\t".join(["name"] + [f"dim{d}" for d in range(dim)]) + "\n")
        for name, vec in rows:
            f.write("\t".join([name] + [repr(float(v)) for v in vec]) + "\n")
    print(f"wrote {len(rows)} rows -> {out}")
    return 0


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sawtopics", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prep", help="tokenize raw text into corpus artifacts")
    s.add_argument("--input", required=True, help="directory (one document per file) or file (one per line)")
    s.add_argument("--labels", help="optional file with one integer label per document")
    s.add_argument("--min-count", type=int, default=5)
    s.add_argument("--max-vocab", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_prep)

    s = sub.add_parser("train", help="train a model on the 80% token split")
    s.add_argument("--config", help="run.json with flat config keys")
    s.add_argument("--corpus")
    s.add_argument("--out")
    s.add_argument("--layer-widths", dest="layer_widths", type=parse_layer_widths,
                   help="comma list, or a preset: " + ", ".join(LAYER_PRESETS))
    s.add_argument("--variant", choices=decoder.VARIANTS)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", dest="batch_size", type=int)
    s.add_argument("--embed-dim", dest="embed_dim", type=int)
    s.add_argument("--embed-init-std", dest="embed_init_std", type=float)
    s.add_argument("--hidden", type=int)
    s.add_argument("--warmup-epochs", dest="warmup_epochs", type=int)
    s.add_argument("--clip-norm", dest="clip_norm", type=float)
    s.add_argument("--prior-rate", dest="prior_rate", type=float)
    s.add_argument("--scale-mode", dest="scale_mode", choices=("mean", "direct"))
    s.add_argument("--log-input", dest="log_input", action="store_true")
    s.add_argument("--precision", choices=("float64", "float32"))
    s.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--split-seed", dest="split_seed", type=int)
    s.add_argument("--workers", type=int, help="minibatch shards (default: $SAWTOPICS_WORKERS or 1)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="perplexity, topic quality and clustering metrics")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--corpus")
    s.add_argument("--split-seed", dest="split_seed", type=int)
    s.add_argument("--metrics", default="ppl,quality,cluster")
    s.add_argument("--samples", type=int, default=8)
    s.add_argument("--top-n", dest="top_n", type=int, default=20)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("topics", help="export projected topics and their children")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--corpus")
    s.add_argument("--layer", default="all")
    s.add_argument("--top-n", dest="top_n", type=int, default=20)
    s.add_argument("--out")
    s.set_defaults(func=cmd_topics)

    s = sub.add_parser("export-embeddings", help="word and topic embeddings as TSV")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--corpus")
    s.add_argument("--out")
    s.set_defaults(func=cmd_export_embeddings)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
