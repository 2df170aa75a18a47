"""Perplexity, topic coherence/diversity/quality and clustering metrics."""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from . import decoder, encoder, model
from .tape import Tape

log = logging.getLogger(__name__)


@dataclass
class EvalConfig:
    num_posterior_samples: int = 8
    top_n_words: int = 20
    coherence_epsilon: float | None = None  # None -> 1 / number of reference docs
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 300
    seed: int = 0
    batch_size: int = 500

    def validate(self) -> list[str]:
        errors = []
        for name in ("num_posterior_samples", "top_n_words", "kmeans_restarts", "kmeans_max_iter", "batch_size"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1")
        if self.coherence_epsilon is not None and not self.coherence_epsilon > 0:
            errors.append("coherence_epsilon must be positive")
        return errors


@dataclass
class MetricsReport:
    perplexity: float | None = None
    coherence: float | None = None
    diversity: float | None = None
    quality: float | None = None
    ac: float | None = None
    nmi: float | None = None
    per_layer: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if v is None or (isinstance(v, list) and not v):
                continue
            out[k] = [{a: float(b) if a != "layer" else int(b) for a, b in row.items()} for row in v] \
                if isinstance(v, list) else float(v)
        return out


# -- posterior features ------------------------------------------------------

def _model_meta(manifest):
    return manifest["variant"], len(manifest["layer_widths"]), bool(manifest.get("log_input", False))


def _scale_mode(manifest):
    return manifest.get("scale_mode", "mean")


def posterior_theta(params, manifest, counts: sp.spmatrix, n_samples: int, seed: int,
                    batch_size: int = 500, layer: int = 1) -> list[np.ndarray]:
    """``n_samples`` Weibull draws of theta at ``layer`` for every document (K x N each)."""
    variant, n_layers, log_input = _model_meta(manifest)
    counts = sp.csr_matrix(counts, dtype=np.float64)
    widths = manifest["layer_widths"]
    out = [np.empty((widths[layer - 1], counts.shape[0])) for _ in range(n_samples)]
    for start in range(0, counts.shape[0], batch_size):
        x = counts[start:start + batch_size].toarray().T
        for s in range(n_samples):
            tape = Tape()
            pv = model.attach(tape, params, trainable=False)
            noise = encoder.draw_noise(np.random.default_rng([seed, 3, s, start]), widths, x.shape[1])
            _, post = model.forward(tape, pv, variant, x, noise, log_input, scale_mode=_scale_mode(manifest))
            out[s][:, start:start + x.shape[1]] = post.theta[layer - 1].value
    return out


def posterior_mean(params, manifest, counts: sp.spmatrix, batch_size: int = 500, layer: int = 1) -> np.ndarray:
    """Deterministic representation: Weibull means lam * Gamma(1 + 1/k) passed top-down."""
    variant, n_layers, log_input = _model_meta(manifest)
    counts = sp.csr_matrix(counts, dtype=np.float64)
    out = np.empty((manifest["layer_widths"][layer - 1], counts.shape[0]))
    for start in range(0, counts.shape[0], batch_size):
        x = counts[start:start + batch_size].toarray().T
        tape = Tape()
        pv = model.attach(tape, params, trainable=False)
        _, post = model.forward(tape, pv, variant, x, None, log_input, n_layers=n_layers,
                                scale_mode=_scale_mode(manifest))
        out[:, start:start + x.shape[1]] = post.theta[layer - 1].value
    return out


# -- perplexity ----------------------------------------------------------------

def perplexity_from_rates(rates: np.ndarray, heldout: sp.spmatrix) -> float:
    """exp(-(1/y..) sum y_vn ln p_vn) with p the per-document normalised rates (V x N)."""
    y = sp.csr_matrix(heldout)
    totals = np.asarray(y.sum(axis=1)).ravel()
    keep = totals > 0
    if not keep.any():
        raise ValueError("no heldout tokens")
    rates = np.asarray(rates, dtype=np.float64)
    probs = rates / rates.sum(axis=0, keepdims=True)
    yc = y.tocoo()
    mask = keep[yc.row]
    ll = float(np.sum(yc.data[mask] * np.log(probs[yc.col[mask], yc.row[mask]])))
    return float(np.exp(-ll / totals[keep].sum()))


def heldout_perplexity(params, manifest, split, num_samples: int = 8, seed: int = 0, batch_size: int = 500) -> float:
    """Per-heldout-word perplexity, theta inferred from the training tokens only."""
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    variant, _, _ = _model_meta(manifest)
    phi1 = decoder.phi_arrays(variant, params)[0]
    thetas = posterior_theta(params, manifest, split.train_counts, num_samples, seed, batch_size)
    rates = phi1 @ np.sum(thetas, axis=0)
    return perplexity_from_rates(rates, split.heldout_counts)


# -- topic quality ---------------------------------------------------------------

def _as_ids(topics, vocab):
    if vocab is None:
        return [[int(w) for w in t] for t in topics]
    return [[vocab.index[w] if isinstance(w, str) else int(w) for w in t] for t in topics]


def npmi_per_topic(topics, reference: sp.spmatrix, vocab=None, epsilon: float | None = None) -> list[float]:
    """Average pairwise NPMI over each topic's word list, with document co-occurrence.

    A zero joint count is replaced by ``epsilon`` (default 1 / number of
    documents); a pair that co-occurs in every document scores 1. Pairs
    with a word missing from the reference are skipped.
    """
    ref = sp.csr_matrix(reference)
    n_docs = ref.shape[0]
    if n_docs == 0:
        raise ValueError("reference corpus is empty")
    if epsilon is None:
        epsilon = 1.0 / n_docs
    present = (ref > 0).astype(np.float64).tocsc()
    df = np.asarray(present.sum(axis=0)).ravel()
    skipped = 0
    scores = []
    for topic in _as_ids(topics, vocab):
        ids = np.asarray(topic)
        sub = present[:, ids]
        co = (sub.T @ sub).toarray()
        vals = []
        for a, b in itertools.combinations(range(len(ids)), 2):
            pa, pb = df[ids[a]] / n_docs, df[ids[b]] / n_docs
            if pa == 0 or pb == 0:
                skipped += 1
                continue
            pab = co[a, b] / n_docs
            if pab == 0:
                pab = epsilon
            if pab >= 1.0:
                vals.append(1.0)
                continue
            vals.append(float(np.log(pab / (pa * pb)) / -np.log(pab)))
        scores.append(float(np.mean(vals)) if vals else 0.0)
    if skipped:
        warnings.warn(f"npmi: skipped {skipped} word pairs absent from the reference corpus", stacklevel=2)
    return scores


def npmi_coherence(topics, reference: sp.spmatrix, vocab=None, epsilon: float | None = None) -> float:
    return float(np.mean(npmi_per_topic(topics, reference, vocab, epsilon)))


def topic_diversity(topics) -> float:
    if len(topics) == 0:
        raise ValueError("need at least one topic")
    n = len(topics[0])
    unique = set(itertools.chain.from_iterable(topics))
    return len(unique) / (n * len(topics))


def topic_quality(params, manifest, reference: sp.spmatrix, top_n: int = 20, epsilon=None) -> list[dict]:
    """Coherence, diversity and quality for every layer's projected topics."""
    variant, n_layers, _ = _model_meta(manifest)
    phis = decoder.phi_arrays(variant, params)
    rows = []
    for layer in range(1, n_layers + 1):
        proj = decoder.project_topics(phis, layer)
        ids = decoder.top_indices(proj, top_n).T.tolist()
        per_topic = npmi_per_topic(ids, reference, epsilon=epsilon)
        coherence = float(np.mean(per_topic))
        diversity = topic_diversity(ids)
        rows.append({"layer": layer, "coherence": coherence, "diversity": diversity,
                     "quality": coherence * diversity, "topic_npmi": per_topic, "top_ids": ids})
    return rows


# -- clustering --------------------------------------------------------------------

def cluster_documents(theta: np.ndarray, num_clusters: int, restarts: int = 10, max_iter: int = 300,
                      seed: int = 0) -> np.ndarray:
    """k-means (k-means++ seeding, best of ``restarts``) on the columns of theta."""
    from sklearn.cluster import KMeans

    points = np.asarray(theta, dtype=np.float64).T
    if points.shape[0] < num_clusters:
        raise ValueError(f"{points.shape[0]} points cannot form {num_clusters} clusters")
    if np.all(points == points[0]):
        warnings.warn("all points identical; returning a single cluster", stacklevel=2)
        return np.zeros(points.shape[0], dtype=int)
    km = KMeans(n_clusters=num_clusters, init="k-means++", n_init=restarts, max_iter=max_iter,
                random_state=seed, algorithm="lloyd")
    return km.fit_predict(points)


def confusion(pred, true) -> np.ndarray:
    pred, true = np.asarray(pred), np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError("label arrays differ in length")
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(true, return_inverse=True)
    m = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(m, (p, t), 1)
    return m


def clustering_accuracy(pred, true) -> float:
    """Best agreement over one-to-one cluster -> class assignments (Hungarian)."""
    m = confusion(pred, true)
    r, c = linear_sum_assignment(m, maximize=True)
    return float(m[r, c].sum() / m.sum())


def nmi(pred, true) -> float:
    """I(pred; true) / sqrt(H(pred) H(true)); 0 if either partition is constant."""
    m = confusion(pred, true).astype(np.float64)
    n = m.sum()
    pij = m / n
    pi = pij.sum(axis=1)
    pj = pij.sum(axis=0)
    h_i = -np.sum(pi * np.log(pi))
    h_j = -np.sum(pj * np.log(pj))
    if h_i <= 0 or h_j <= 0:
        return 0.0
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / np.outer(pi, pj)[nz])))
    return max(0.0, mi / np.sqrt(h_i * h_j))
