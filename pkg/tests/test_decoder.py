import numpy as np
import pytest
from hypothesis import given, strategies as st

from sawtopics import decoder, model
from sawtopics.tape import DomainError, Tape


def _phis(variant, seed, widths=(4, 3), vocab=7, std=1.0):
    params = decoder.init_decoder(variant, vocab, list(widths), 5, np.random.default_rng(seed), std)
    return decoder.phi_arrays(variant, params), params


@given(st.sampled_from(decoder.VARIANTS), st.integers(0, 10_000))
def test_topic_matrices_are_column_stochastic(variant, seed):
    phis, _ = _phis(variant, seed)
    for l, phi in enumerate(phis, start=1):
        assert phi.min() >= 0
        np.testing.assert_allclose(phi.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(decoder.project_topics(phis, l).sum(axis=0), 1.0, atol=1e-12)


def test_adjacent_layers_share_embeddings():
    _, params = _phis("sawetm", 0)
    assert set(params) == {"alpha_0", "alpha_1", "alpha_2"}
    tape = Tape()
    pv = {k: tape.param(v, k) for k, v in params.items()}
    phis = decoder.compute_phi_stack(tape, "sawetm", pv, 2)
    grads = tape.backward(tape.sum(tape.mul(phis[1], phis[1])))
    assert np.any(grads["alpha_1"] != 0) and np.all(grads["alpha_0"] == 0)


def test_sawtooth_equals_unshared_at_one_layer():
    params = decoder.init_decoder("sawetm", 6, [3], 4, np.random.default_rng(2), 1.0)
    detm = {"detm_alpha_1": params["alpha_0"], "detm_beta_1": params["alpha_1"]}
    np.testing.assert_array_equal(decoder.phi_arrays("sawetm", params)[0], decoder.phi_arrays("detm", detm)[0])


def test_unknown_variant():
    with pytest.raises(ValueError, match="unknown decoder variant"):
        decoder.init_decoder("lda", 3, [2], 2, np.random.default_rng(0))


def test_poisson_loglik_matches_scipy(rng):
    from scipy.stats import poisson

    x = rng.poisson(2.0, size=(5, 3)).astype(float)
    rate = rng.uniform(0.5, 4.0, size=(5, 3))
    t = Tape()
    ll = decoder.poisson_loglik(t, x, t.const(rate))
    assert float(ll.value[0, 0]) == pytest.approx(poisson.logpmf(x, rate).sum(), rel=1e-12)


def test_poisson_loglik_rejects_negative_counts():
    t = Tape()
    with pytest.raises(DomainError, match="negative count"):
        decoder.poisson_loglik(t, np.array([[1.0], [-1.0]]), t.const(np.ones((2, 1))))


def test_top_words_tie_break_lower_id():
    topics = np.array([[0.2, 0.5], [0.4, 0.25], [0.4, 0.25]])
    assert decoder.top_words(topics, 2, ["a", "b", "c"]) == [["b", "c"], ["a", "b"]]
    np.testing.assert_array_equal(decoder.top_indices(topics, 2), [[1, 0], [2, 1]])


def test_projected_expectation_matches_generative_chain():
    """E[x | theta_top] = Phi1 Phi2 theta_top for the gamma chain with unit rates."""
    rng = np.random.default_rng(11)
    phis, _ = _phis("sawetm", 3, widths=(3, 2), vocab=5)
    theta2 = np.array([4.0, 2.5])
    n = 100_000
    theta1 = rng.gamma(np.tile(phis[1] @ theta2, (n, 1)), 1.0)
    x = rng.poisson(theta1 @ phis[0].T)
    expected = decoder.project_topics(phis, 2) @ theta2
    se = x.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(x.mean(axis=0) - expected) < 5 * se)


def test_fifteen_layer_preset():
    assert len(model.PAPER15) == 15 and model.PAPER15[0] == 256 and model.PAPER15[-1] == 8
