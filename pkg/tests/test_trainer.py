import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.special import gammaln

from sawtopics import model, trainer
from sawtopics.tape import Tape, gradient_check


def kl_value(k, lam, a, b):
    t = Tape()
    c = lambda v: t.const([[v]])
    return float(trainer.kl_weibull_gamma(t, c(k), c(lam), c(a), c(b)).value[0, 0])


def kl_quadrature(k, lam, a, b):
    """Adaptive quadrature of E_q[ln q - ln p] after x = lam * y^(1/k), y = e^t.

    q becomes the Gumbel-minimum weight exp(t - e^t) in t, which stays smooth
    even when k is near 0.1 and q has a very heavy tail in x.
    """
    def f(t):
        ln_x = math.log(lam) + t / k
        lq = math.log(k) - math.log(lam) + (k - 1) * (ln_x - math.log(lam)) - math.exp(t)
        lp = a * math.log(b) - gammaln(a) + (a - 1) * ln_x - b * math.exp(ln_x)
        return math.exp(t - math.exp(t)) * (lq - lp)

    return integrate.quad(f, -80.0, 5.0, points=[-20, -5, 0, 2], limit=1000, epsabs=1e-14, epsrel=1e-13)[0]


@given(*(st.floats(0.1, 5.0),) * 4)
def test_kl_matches_quadrature(k, lam, a, b):
    assert kl_value(k, lam, a, b) == pytest.approx(kl_quadrature(k, lam, a, b), abs=1e-6)


def test_kl_zero_when_distributions_coincide():
    assert abs(kl_value(1.0, 1.0, 1.0, 1.0)) < 1e-12


def test_kl_gradient():
    rng = np.random.default_rng(0)
    params = {n: rng.uniform(0.5, 3.0, size=(2, 3)) for n in ("k", "lam", "a", "b")}
    err = gradient_check(lambda t, v: trainer.kl_weibull_gamma(t, v["k"], v["lam"], v["a"], v["b"]), params)
    assert err < 1e-7


def test_warmup_schedule():
    assert [trainer.warmup_beta(e, 4) for e in range(6)] == [0.0, 0.25, 0.5, 0.75, 1.0, 1.0]
    assert trainer.warmup_beta(0, 0) == 1.0


@given(st.floats(1e-3, 1e3), st.floats(0.1, 50))
def test_clipping_bounds_global_norm(scale, threshold):
    rng = np.random.default_rng(0)
    g = {"a": rng.normal(size=(3, 2)) * scale, "b": rng.normal(size=(4, 1)) * scale}
    clipped, pre = trainer.clip_gradients(g, threshold)
    assert pre == pytest.approx(trainer.global_norm(g))
    post = trainer.global_norm(clipped)
    assert post <= threshold * (1 + 1e-12)
    if pre <= threshold:
        assert clipped is g
    else:
        for name in g:  # direction preserved
            np.testing.assert_allclose(clipped[name] * pre / threshold, g[name], rtol=1e-12)


def test_adam_matches_reference_update():
    rng = np.random.default_rng(3)
    p = {"w": rng.normal(size=(2, 2))}
    ref = p["w"].copy()
    m = np.zeros_like(ref)
    v = np.zeros_like(ref)
    opt = trainer.Adam(lr=0.01)
    for t in range(1, 6):
        g = rng.normal(size=(2, 2))
        opt.step(p, {"w": g})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p["w"], ref, rtol=1e-14)


def test_zero_warmup_loss_is_negative_reconstruction():
    x = np.random.default_rng(0).poisson(2.0, size=(5, 2)).astype(float)
    params = model.init_params("sawetm", 5, [3, 2], 4, 8, seed=0)
    t = Tape()
    pv = model.attach(t, params)
    noise = [np.full((3, 2), 0.4), np.full((2, 2), 0.6)]
    phis, post = model.forward(t, pv, "sawetm", x, noise)
    parts = trainer.elbo(t, x, post, phis, 0.0)
    assert float(parts.loss.value[0, 0]) == -float(parts.recon.value[0, 0])


def test_config_validation_reports_all_errors():
    errors = trainer.TrainConfig(lr=0, batch_size=0, variant="x").validate()
    assert len(errors) == 3


def _small_corpus(seed=0):
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(np.full(12, 0.3), size=3).T
    theta = rng.gamma(1.0, 20.0, size=(3, 60))
    return sp.csr_matrix(rng.poisson(phi @ theta).T)


def _cfg(**kw):
    base = dict(layer_widths=[3], embed_dim=6, hidden=16, epochs=15, batch_size=20, checkpoint_every=0)
    base.update(kw)
    return trainer.TrainConfig(**base)


def test_training_is_deterministic():
    a = trainer.train(_small_corpus(), _cfg(epochs=3))
    b = trainer.train(_small_corpus(), _cfg(epochs=3))
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])


@pytest.mark.parametrize("seed", range(5))
def test_training_reduces_loss(seed):
    res = trainer.train(_small_corpus(seed), _cfg(seed=seed, warmup_epochs=0, epochs=15))
    assert res.history[-1]["loss"] < res.history[0]["loss"]


def test_training_contracts_and_log(tmp_path):
    res = trainer.train(_small_corpus(), _cfg(layer_widths=[3, 2], epochs=4, checkpoint_every=2), out_dir=tmp_path)
    assert min(res.step_min_k) >= 0.1
    assert max(res.step_clipped_norms) <= 20 + 1e-9
    header = (tmp_path / "train_log.csv").read_text().splitlines()[0]
    assert header == "epoch,loss,recon,kl_layer_1,kl_layer_2,beta_warm,grad_norm,wallclock_s"
    assert {p.name for p in tmp_path.glob("*.npz")} == {"checkpoint_e0002.npz", "checkpoint_e0004.npz", "final.npz"}


def test_sharded_workers_cover_the_batch():
    res = trainer.train(_small_corpus(), _cfg(epochs=2, workers=3))
    assert all(np.isfinite(v).all() for v in res.params.values())
