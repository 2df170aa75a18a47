import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from sawtopics import corpus


def test_tokenize_drops_digits_and_stopwords():
    assert corpus.tokenize("The 3 quick-brown Foxes ran 42km!") == ["quick", "brown", "foxes", "ran", "42km"]


def test_vocabulary_order_and_min_count():
    docs = [["b", "a", "a"], ["c", "b", "a"], ["d"], ["b"]]
    v = corpus.build_vocabulary(docs, min_count=2)
    assert v.terms == ["a", "b"]  # both frequency 3, ties broken lexicographically
    assert v.term_freq == [3, 3]
    assert v.doc_freq == [2, 3]
    assert v.total_docs == 4
    assert corpus.build_vocabulary(docs, min_count=1, max_vocab=3).terms == ["a", "b", "c"]


@given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=12), min_size=1, max_size=15),
       st.integers(1, 4))
def test_vocabulary_keeps_exactly_frequent_terms(docs, min_count):
    total = {}
    for d in docs:
        for w in d:
            total[w] = total.get(w, 0) + 1
    expected = {w for w, c in total.items() if c >= min_count}
    if not expected:
        with pytest.raises(ValueError, match="vocabulary empty"):
            corpus.build_vocabulary(docs, min_count)
        return
    v = corpus.build_vocabulary(docs, min_count)
    assert set(v.terms) == expected
    assert all(v.term_freq[i] >= v.term_freq[i + 1] for i in range(len(v) - 1))


def test_empty_inputs_rejected():
    with pytest.raises(ValueError, match="no documents"):
        corpus.build_vocabulary([])
    v = corpus.build_vocabulary([["a"]], min_count=1)
    with pytest.raises(ValueError, match="no nonempty documents"):
        corpus.vectorize([["zzz"]], v)


def test_vectorize_drops_empty_documents_and_keeps_labels():
    v = corpus.build_vocabulary([["a", "b"], ["a"]], min_count=1)
    c = corpus.vectorize([["a", "a", "b"], ["q"], ["b"]], v, labels=[5, 6, 7])
    assert c.docs == [[(0, 2), (1, 1)], [(1, 1)]]
    assert c.labels == [5, 7]
    assert c.kept == [0, 2]


def test_sparse_corpus_validates_ids():
    with pytest.raises(ValueError, match="outside vocabulary"):
        corpus.SparseCorpus([[(3, 1)]], vocab_size=3)
    with pytest.raises(ValueError, match="non-positive"):
        corpus.SparseCorpus([[(0, 0)]], vocab_size=3)


@given(st.integers(0, 2**31 - 1))
def test_heldout_split_partitions_tokens(seed):
    m = sp.csr_matrix(np.random.default_rng(seed).poisson(1.5, size=(12, 9)))
    s = corpus.split_heldout(m, 0.2, seed=seed)
    np.testing.assert_array_equal((s.train_counts + s.heldout_counts).toarray(), m.toarray())
    assert s.train_counts.min() >= 0 and s.heldout_counts.min() >= 0
    n = np.asarray(m.sum(axis=1)).ravel()
    held = np.asarray(s.heldout_counts.sum(axis=1)).ravel()
    np.testing.assert_array_equal(held, np.where(n >= 2, np.floor(0.2 * n), 0))


def test_heldout_split_fraction_close_to_twenty_percent():
    m = sp.csr_matrix(np.random.default_rng(0).poisson(4.0, size=(200, 50)))
    s = corpus.split_heldout(m, 0.2, seed=3)
    frac = s.heldout_counts.sum() / m.sum()
    assert 0.19 < frac <= 0.2


def test_artifacts_roundtrip(tmp_path):
    v = corpus.build_vocabulary([["x", "y"], ["y", "z"]], min_count=1)
    c = corpus.vectorize([["x", "y", "y"], ["z"]], v, labels=[1, 0])
    corpus.write_artifacts(tmp_path, v, c, ["neg", "pos"])
    assert json.loads((tmp_path / "manifest.json").read_text()) == {"has_labels": True, "num_docs": 2, "vocab_size": 3}
    v2, c2 = corpus.read_artifacts(tmp_path)
    assert v2.terms == v.terms
    assert c2.docs == c.docs and c2.labels == [1, 0]
    np.testing.assert_array_equal(c2.to_csr().toarray(), c.to_csr().toarray())
