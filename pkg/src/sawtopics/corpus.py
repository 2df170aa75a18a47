"""Tokenisation, vocabulary building, bag-of-words vectors and heldout splits."""
from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9]+")


def load_stopwords() -> frozenset[str]:
    text = resources.files("sawtopics").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w for w in text.split() if w)


def tokenize(text: str, stopwords: frozenset[str] | None = None) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop pure digits and stopwords."""
    if stopwords is None:
        stopwords = load_stopwords()
    return [t for t in _TOKEN.findall(text.lower()) if not t.isdigit() and t not in stopwords]


@dataclass
class Vocabulary:
    terms: list[str]
    index: dict[str, int]
    term_freq: list[int]
    doc_freq: list[int]
    total_docs: int

    def __len__(self):
        return len(self.terms)

    def save(self, path):
        Path(path).write_text("".join(t + "\n" for t in self.terms), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        terms = Path(path).read_text(encoding="utf-8").splitlines()
        n = len(terms)
        return cls(terms, {t: i for i, t in enumerate(terms)}, [0] * n, [0] * n, 0)


@dataclass
class SparseCorpus:
    docs: list[list[tuple[int, int]]]
    vocab_size: int
    labels: list[int] | None = None
    kept: list[int] = field(default_factory=list)

    def __post_init__(self):
        for d, doc in enumerate(self.docs):
            for w, c in doc:
                if not 0 <= w < self.vocab_size:
                    raise ValueError(f"document {d}: word id {w} outside vocabulary of size {self.vocab_size}")
                if c < 1:
                    raise ValueError(f"document {d}: non-positive count {c} for word {w}")
        if self.labels is not None and len(self.labels) != len(self.docs):
            raise ValueError("labels must align with documents")

    def __len__(self):
        return len(self.docs)

    def to_csr(self) -> sp.csr_matrix:
        """documents x vocabulary count matrix."""
        rows, cols, vals = [], [], []
        for d, doc in enumerate(self.docs):
            for w, c in doc:
                rows.append(d)
                cols.append(w)
                vals.append(c)
        return sp.csr_matrix((np.asarray(vals, dtype=np.int64), (rows, cols)),
                             shape=(len(self.docs), self.vocab_size))

    @classmethod
    def from_csr(cls, m, labels=None) -> "SparseCorpus":
        m = sp.csr_matrix(m)
        docs = []
        for d in range(m.shape[0]):
            lo, hi = m.indptr[d], m.indptr[d + 1]
            docs.append([(int(w), int(c)) for w, c in zip(m.indices[lo:hi], m.data[lo:hi]) if c > 0])
        return cls(docs, m.shape[1], labels)


@dataclass
class HeldoutSplit:
    train_counts: sp.csr_matrix
    heldout_counts: sp.csr_matrix
    seed: int


def build_vocabulary(raw_docs: list[list[str]], min_count: int = 5, max_vocab: int | None = None) -> Vocabulary:
    """Keep words with total count >= min_count, most frequent first (ties lexicographic)."""
    if not raw_docs:
        raise ValueError("no documents")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    tf = Counter()
    df = Counter()
    for doc in raw_docs:
        tf.update(doc)
        df.update(set(doc))
    kept = sorted((w for w, c in tf.items() if c >= min_count), key=lambda w: (-tf[w], w))
    if max_vocab is not None:
        kept = kept[:max_vocab]
    if not kept:
        raise ValueError("vocabulary empty")
    return Vocabulary(
        terms=kept,
        index={w: i for i, w in enumerate(kept)},
        term_freq=[tf[w] for w in kept],
        doc_freq=[df[w] for w in kept],
        total_docs=len(raw_docs),
    )


def vectorize(raw_docs: list[list[str]], vocab: Vocabulary, labels: list[int] | None = None) -> SparseCorpus:
    """Count in-vocabulary tokens per document; documents left empty are dropped."""
    docs, kept_labels, kept = [], [], []
    for i, doc in enumerate(raw_docs):
        counts = Counter(vocab.index[t] for t in doc if t in vocab.index)
        if not counts:
            continue
        docs.append(sorted(counts.items()))
        kept.append(i)
        if labels is not None:
            kept_labels.append(int(labels[i]))
    dropped = len(raw_docs) - len(docs)
    if dropped:
        log.info("dropped %d documents with no in-vocabulary tokens", dropped)
    if not docs:
        raise ValueError("no nonempty documents")
    return SparseCorpus(docs, len(vocab), kept_labels if labels is not None else None, kept)


def split_heldout(corpus: SparseCorpus | sp.spmatrix, fraction: float = 0.2, seed: int = 0) -> HeldoutSplit:
    """Hold out floor(fraction * n) token instances per document, uniformly without replacement."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    m = corpus.to_csr() if isinstance(corpus, SparseCorpus) else sp.csr_matrix(corpus)
    m = m.astype(np.int64)
    rng = np.random.default_rng(seed)
    rows, cols, vals = [], [], []
    for d in range(m.shape[0]):
        lo, hi = m.indptr[d], m.indptr[d + 1]
        ids, cnt = m.indices[lo:hi], m.data[lo:hi]
        n = int(cnt.sum())
        n_out = int(np.floor(fraction * n)) if n >= 2 else 0
        if n_out == 0:
            continue
        tokens = np.repeat(ids, cnt)
        picked = tokens[rng.choice(n, size=n_out, replace=False)]
        w, c = np.unique(picked, return_counts=True)
        rows.extend([d] * len(w))
        cols.extend(w.tolist())
        vals.extend(c.tolist())
    held = sp.csr_matrix((np.asarray(vals, dtype=np.int64), (rows, cols)), shape=m.shape)
    train = (m - held).tocsr()
    train.eliminate_zeros()
    return HeldoutSplit(train, held, seed)


# -- on-disk artifacts --------------------------------------------------------

def write_artifacts(out_dir, vocab: Vocabulary, corpus: SparseCorpus, label_names: list[str] | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocab.txt")
    with open(out / "corpus.triplets", "w", encoding="ascii") as f:
        for d, doc in enumerate(corpus.docs):
            for w, c in doc:
                f.write(f"{d} {w} {c}\n")
    has_labels = corpus.labels is not None
    if has_labels:
        (out / "labels.txt").write_text("".join(f"{y}\n" for y in corpus.labels), encoding="ascii")
        if label_names is not None:
            (out / "label_names.txt").write_text("".join(n + "\n" for n in label_names), encoding="utf-8")
    manifest = {"num_docs": len(corpus), "vocab_size": corpus.vocab_size, "has_labels": has_labels}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_artifacts(corpus_dir) -> tuple[Vocabulary, SparseCorpus]:
    base = Path(corpus_dir)
    manifest = json.loads((base / "manifest.json").read_text())
    vocab = Vocabulary.load(base / "vocab.txt")
    if len(vocab) != manifest["vocab_size"]:
        raise ValueError(f"vocab.txt has {len(vocab)} terms, manifest says {manifest['vocab_size']}")
    docs: list[list[tuple[int, int]]] = [[] for _ in range(manifest["num_docs"])]
    with open(base / "corpus.triplets", encoding="ascii") as f:
        for line in f:
            d, w, c = (int(t) for t in line.split())
            docs[d].append((w, c))
    labels = None
    if manifest["has_labels"]:
        labels = [int(t) for t in (base / "labels.txt").read_text().split()]
    return vocab, SparseCorpus(docs, manifest["vocab_size"], labels)
