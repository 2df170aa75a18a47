import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from sawtopics import encoder, model
from sawtopics.tape import Tape


def _weibull_samples(k, lam, n, seed=0):
    t = Tape()
    eps = encoder.clip_noise(np.random.default_rng(seed).random((1, n)))
    return encoder.sample_weibull(t, t.const(np.full((1, n), k)), t.const(np.full((1, n), lam)), eps).value.ravel()


def test_reparameterized_samples_follow_weibull_law():
    s = _weibull_samples(2.0, 1.0, 100_000)
    assert stats.kstest(s, stats.weibull_min(2.0, scale=1.0).cdf).statistic < 0.01
    assert abs(s.mean() - math.gamma(1.5)) < 3 * s.std(ddof=1) / math.sqrt(s.size)


@given(st.floats(0.2, 5.0), st.floats(0.1, 5.0), st.floats(1e-6, 1 - 1e-6))
def test_sampler_is_the_inverse_cdf(k, lam, u):
    t = Tape()
    x = encoder.sample_weibull(t, t.const([[k]]), t.const([[lam]]), np.array([[u]])).value[0, 0]
    assert stats.weibull_min(k, scale=lam).cdf(x) == pytest.approx(u, rel=1e-9, abs=1e-12)


def test_noise_outside_unit_interval_rejected():
    t = Tape()
    one = t.const([[1.0]])
    with pytest.raises(ValueError, match="inside"):
        encoder.sample_weibull(t, one, one, np.array([[1.0]]))


def _combiner(layer=1, K=2, seed=0):
    rng = np.random.default_rng(seed)
    return {
        f"enc_kcomb{layer}_W": rng.normal(size=(K, 2 * K)), f"enc_kcomb{layer}_b": rng.normal(size=(K, 1)),
        f"enc_lcomb{layer}_W": rng.normal(size=(K, 2 * K)), f"enc_lcomb{layer}_b": rng.normal(size=(K, 1)),
    }


def _softplus(z):
    return np.logaddexp(0.0, z)


@pytest.mark.parametrize("mode", ["direct", "mean"])
def test_downward_step_matches_hand_computation(mode):
    p = _combiner()
    rng = np.random.default_rng(5)
    prior, kh, lh = rng.uniform(0.1, 2, (2, 3)), rng.uniform(0, 2, (2, 3)), rng.uniform(0, 2, (2, 3))
    t = Tape()
    pv = {k: t.const(v) for k, v in p.items()}
    k, lam = encoder.downward_step(t, t.const(prior), t.const(kh), t.const(lh), pv, 1, mode)
    k_ref = np.maximum(_softplus(p["enc_kcomb1_W"] @ np.vstack([prior, kh]) + p["enc_kcomb1_b"]), 0.1)
    lam_ref = _softplus(p["enc_lcomb1_W"] @ np.vstack([prior, lh]) + p["enc_lcomb1_b"]) + 1e-6
    np.testing.assert_allclose(k.value, k_ref, rtol=1e-13)
    if mode == "mean":
        from scipy.special import gamma
        # the combiner output is the Weibull mean
        np.testing.assert_allclose(lam.value * gamma(1 + 1 / k_ref), lam_ref, rtol=1e-12)
    else:
        np.testing.assert_allclose(lam.value, lam_ref, rtol=1e-13)


def test_shape_never_below_floor():
    p = _combiner()
    p["enc_kcomb1_b"][:] = -50.0
    t = Tape()
    pv = {k: t.const(v) for k, v in p.items()}
    one = t.const(np.ones((2, 4)))
    k, _ = encoder.downward_step(t, one, one, one, pv, 1)
    assert np.all(k.value == encoder.K_MIN)


def test_infer_layers_and_deterministic_mean():
    params = model.init_params("sawetm", 6, [4, 3], 5, 8, seed=0)
    x = np.random.default_rng(0).poisson(2.0, size=(6, 3)).astype(float)

    def run(noise):
        t = Tape()
        pv = model.attach(t, params, trainable=False)
        return model.forward(t, pv, "sawetm", x, noise, n_layers=2)[1]

    post = run(encoder.draw_noise(np.random.default_rng(1), [4, 3], 3))
    assert [th.shape for th in post.theta] == [(4, 3), (3, 3)]
    assert all(np.all(k.value >= 0.1) for k in post.k)
    np.testing.assert_allclose(post.prior_shape[1].value, 1.0)  # r starts at 1
    a, b = run(None), run(None)
    np.testing.assert_array_equal(a.theta[0].value, b.theta[0].value)
