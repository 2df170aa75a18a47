"""Residual upward path plus top-down Weibull posterior sampling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tape import Tape, Var

K_MIN = 0.1
LAMBDA_FLOOR = 1e-6
EPS_CLIP = 1e-6


def _linear_init(rng, fan_out, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_out, fan_in)), rng.uniform(-bound, bound, size=(fan_out, 1))


def init_encoder(vocab_size: int, layer_widths, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    out = {}
    out["enc_in_W"], out["enc_in_b"] = _linear_init(rng, hidden, vocab_size)
    for l, k in enumerate(layer_widths, start=1):
        out[f"enc_mlp{l}_W1"], out[f"enc_mlp{l}_b1"] = _linear_init(rng, hidden, hidden)
        out[f"enc_mlp{l}_W2"], out[f"enc_mlp{l}_b2"] = _linear_init(rng, hidden, hidden)
        out[f"enc_khead{l}_W"], out[f"enc_khead{l}_b"] = _linear_init(rng, k, hidden)
        out[f"enc_lhead{l}_W"], out[f"enc_lhead{l}_b"] = _linear_init(rng, k, hidden)
        out[f"enc_kcomb{l}_W"], out[f"enc_kcomb{l}_b"] = _linear_init(rng, k, 2 * k)
        out[f"enc_lcomb{l}_W"], out[f"enc_lcomb{l}_b"] = _linear_init(rng, k, 2 * k)
    return out


@dataclass
class WeibullPosterior:
    """Per-layer tensors, index 0 is layer 1. Shapes are K_l x batch."""

    k: list[Var] = field(default_factory=list)
    lam: list[Var] = field(default_factory=list)
    theta: list[Var] = field(default_factory=list)
    eps: list[np.ndarray] = field(default_factory=list)
    prior_shape: list[Var] = field(default_factory=list)


def upward_pass(tape: Tape, x: Var, pv: dict[str, Var], n_layers: int, log_input: bool = False):
    """Returns (h, k_hat, lam_hat), lists over layers 1..L."""
    if log_input:
        x = tape.log(tape.shift(x, 1.0))
    h = tape.relu(tape.affine(pv["enc_in_W"], x, pv["enc_in_b"]))
    hs, k_hat, lam_hat = [], [], []
    for l in range(1, n_layers + 1):
        mid = tape.relu(tape.affine(pv[f"enc_mlp{l}_W1"], h, pv[f"enc_mlp{l}_b1"]))
        h = tape.add(h, tape.affine(pv[f"enc_mlp{l}_W2"], mid, pv[f"enc_mlp{l}_b2"]))
        hs.append(h)
        k_hat.append(tape.relu(tape.affine(pv[f"enc_khead{l}_W"], h, pv[f"enc_khead{l}_b"])))
        lam_hat.append(tape.relu(tape.affine(pv[f"enc_lhead{l}_W"], h, pv[f"enc_lhead{l}_b"])))
    return hs, k_hat, lam_hat


def downward_step(tape: Tape, prior: Var, k_hat: Var, lam_hat: Var, pv: dict[str, Var], layer: int,
                  scale_mode: str = "mean"):
    """Combine the prior shape (Phi theta from above, or r at the top) with upward heads.

    scale_mode "direct": lam = softplus(.) + 1e-6.
    scale_mode "mean":   the same quantity is the Weibull mean, so
                         lam = (softplus(.) + 1e-6) / Gamma(1 + 1/k).
    """
    k = tape.softplus(tape.affine(pv[f"enc_kcomb{layer}_W"], tape.concat_rows([prior, k_hat]),
                                  pv[f"enc_kcomb{layer}_b"]))
    k = tape.clamp_min(k, K_MIN)
    lam = tape.softplus(tape.affine(pv[f"enc_lcomb{layer}_W"], tape.concat_rows([prior, lam_hat]),
                                    pv[f"enc_lcomb{layer}_b"]))
    lam = tape.shift(lam, LAMBDA_FLOOR)
    if scale_mode == "mean":
        lam = tape.mul(lam, tape.exp(tape.scale(tape.lgamma(tape.shift(tape.pow(k, -1.0), 1.0)), -1.0)))
    elif scale_mode != "direct":
        raise ValueError(f"unknown scale_mode {scale_mode!r}")
    return k, lam


def clip_noise(eps: np.ndarray) -> np.ndarray:
    return np.clip(eps, EPS_CLIP, 1.0 - EPS_CLIP)


def sample_weibull(tape: Tape, k: Var, lam: Var, eps: np.ndarray) -> Var:
    """lam * (-ln(1 - eps))^(1/k); eps enters as a constant."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != k.shape:
        raise ValueError(f"noise shape {eps.shape} does not match {k.shape}")
    if np.any(eps <= 0.0) or np.any(eps >= 1.0):
        raise ValueError("uniform noise must lie strictly inside (0, 1)")
    log_u = tape.const(np.log(-np.log1p(-eps)))
    return tape.mul(lam, tape.exp(tape.mul(log_u, tape.pow(k, -1.0))))


def draw_noise(rng: np.random.Generator, layer_widths, batch: int) -> list[np.ndarray]:
    return [clip_noise(rng.random((k, batch))) for k in layer_widths]


def weibull_mean(tape: Tape, k: Var, lam: Var) -> Var:
    return tape.mul(lam, tape.exp(tape.lgamma(tape.shift(tape.pow(k, -1.0), 1.0))))


def infer(tape: Tape, x: Var, phis: list[Var], pv: dict[str, Var], noise: list[np.ndarray] | None,
          log_input: bool = False, scale_mode: str = "mean") -> WeibullPosterior:
    """Upward pass, then sample theta^(L) .. theta^(1) top-down.

    With ``noise=None`` each layer passes its posterior mean downward instead
    of a sample, which gives a deterministic document representation.
    """
    n_layers = len(phis)
    _, k_hat, lam_hat = upward_pass(tape, x, pv, n_layers, log_input)
    batch = x.shape[1]
    k_list, lam_list, theta_list, prior_list = [None] * n_layers, [None] * n_layers, [None] * n_layers, [None] * n_layers
    theta_above = None
    for l in range(n_layers, 0, -1):
        if l == n_layers:
            prior = tape.broadcast_col(tape.softplus(pv["r_raw"]), batch)
        else:
            prior = tape.matmul(phis[l], theta_above)
        k, lam = downward_step(tape, prior, k_hat[l - 1], lam_hat[l - 1], pv, l, scale_mode)
        if noise is None:
            theta = weibull_mean(tape, k, lam)
        else:
            theta = sample_weibull(tape, k, lam, noise[l - 1])
        if not np.all(np.isfinite(theta.value)):
            raise FloatingPointError(f"non-finite theta sample at layer {l}")
        k_list[l - 1], lam_list[l - 1], theta_list[l - 1], prior_list[l - 1] = k, lam, theta, prior
        theta_above = theta
    return WeibullPosterior(k=k_list, lam=lam_list, theta=theta_list, eps=list(noise or []), prior_shape=prior_list)
