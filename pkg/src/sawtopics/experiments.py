"""Reusable experiment drivers: synthetic recovery, clustering, depth trend."""
from __future__ import annotations

import dataclasses
import time

import numpy as np

from . import corpus, datasets, evaluation, trainer


def manifest_for(config: trainer.TrainConfig) -> dict:
    return {"variant": config.variant, "layer_widths": list(config.layer_widths),
            "log_input": config.log_input, "scale_mode": config.scale_mode}


# -- synthetic one-layer recovery ---------------------------------------------------

def synthetic_poisson_corpus(vocab_size=20, n_topics=3, n_docs=500, seed=0, topic_conc=0.3,
                             theta_shape=1.0, theta_rate=0.02):
    """Counts from x ~ Pois(Phi theta) with Dirichlet topics and gamma scores.

    Returns (counts N x V, phi V x K, theta K x N).
    """
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(np.full(vocab_size, topic_conc), size=n_topics).T
    theta = rng.gamma(theta_shape, 1.0 / theta_rate, size=(n_topics, n_docs))
    counts = rng.poisson(phi @ theta).T
    return counts, phi, theta


def synthetic_recovery(epochs=200, seed=0, data_seed=0, split_seed=1, num_samples=8, **overrides):
    counts, phi, theta = synthetic_poisson_corpus(seed=data_seed)
    split = corpus.split_heldout(counts, 0.2, seed=split_seed)
    oracle = evaluation.perplexity_from_rates(phi @ theta, split.heldout_counts)
    cfg = trainer.TrainConfig(layer_widths=[phi.shape[1]], epochs=epochs, seed=seed, checkpoint_every=0,
                              **overrides)
    res = trainer.train(split.train_counts, cfg)
    ppl = evaluation.heldout_perplexity(res.params, manifest_for(cfg), split, num_samples, seed)
    return {"oracle": oracle, "model": ppl, "ratio": ppl / oracle, "result": res}


# -- clustering on disjoint vocabularies ----------------------------------------------

def disjoint_class_corpus(n_classes=3, words_per_class=10, docs_per_class=60, doc_len=60, seed=0):
    """Each class draws its tokens only from its own block of the vocabulary."""
    rng = np.random.default_rng(seed)
    V = n_classes * words_per_class
    rows, labels = [], []
    for c in range(n_classes):
        probs = np.zeros(V)
        probs[c * words_per_class:(c + 1) * words_per_class] = rng.dirichlet(np.ones(words_per_class))
        for _ in range(docs_per_class):
            rows.append(rng.multinomial(doc_len, probs))
            labels.append(c)
    order = rng.permutation(len(rows))
    return np.asarray(rows)[order], np.asarray(labels)[order]


def clustering_run(epochs=60, seed=0, n_classes=3, layer_widths=(8,), **overrides):
    counts, labels = disjoint_class_corpus(n_classes=n_classes, seed=seed)
    cfg = trainer.TrainConfig(layer_widths=list(layer_widths), epochs=epochs, seed=seed, batch_size=60,
                              warmup_epochs=min(20, epochs), checkpoint_every=0, **overrides)
    res = trainer.train(counts, cfg)
    rep = evaluation.posterior_mean(res.params, manifest_for(cfg), counts)
    pred = evaluation.cluster_documents(rep, n_classes, seed=seed)
    return {"ac": evaluation.clustering_accuracy(pred, labels), "nmi": evaluation.nmi(pred, labels),
            "pred": pred, "labels": labels, "result": res}


# -- depth trend on real text ---------------------------------------------------------

def text_subsample(n_docs=2000, vocab_size=2000, min_count=5, seed=0, prefer="20newsgroups"):
    name, texts, labels = datasets.load_text_corpus(prefer)
    texts, labels = datasets.subsample(texts, labels, n_docs, seed)
    stop = corpus.load_stopwords()
    tokens = [corpus.tokenize(t, stop) for t in texts]
    vocab = corpus.build_vocabulary(tokens, min_count, vocab_size)
    return name, vocab, corpus.vectorize(tokens, vocab, labels)


def depth_trend(configs: dict[str, dict], seeds=(0, 1, 2), epochs=100, split_seed=0, n_docs=2000,
                vocab_size=2000, num_samples=8, echo=None, keep_models=False):
    """Heldout perplexity for each named config and seed on one real-text subsample."""
    name, vocab, corp = text_subsample(n_docs, vocab_size)
    split = corpus.split_heldout(corp, 0.2, seed=split_seed)
    table = {"corpus": name, "num_docs": len(corp), "vocab_size": len(vocab), "runs": {}}
    models = {}
    for label, overrides in configs.items():
        ppls = []
        for seed in seeds:
            cfg = trainer.TrainConfig(epochs=epochs, seed=seed, checkpoint_every=0, **overrides)
            t0 = time.perf_counter()
            res = trainer.train(split.train_counts, cfg)
            ppl = evaluation.heldout_perplexity(res.params, manifest_for(cfg), split, num_samples, seed)
            ppls.append(ppl)
            if keep_models:
                models[(label, seed)] = (cfg, res)
            if echo:
                echo(f"{label:>14s} seed {seed}: perplexity {ppl:9.2f}  ({time.perf_counter() - t0:.0f}s)")
        table["runs"][label] = {"config": dataclasses.asdict(cfg) | {"seed": None}, "perplexity": ppls,
                                "median": float(np.median(ppls))}
    if keep_models:
        return table, (vocab, corp, split, models)
    return table
