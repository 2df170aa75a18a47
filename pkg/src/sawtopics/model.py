"""Parameter initialisation and forward graph assembly for the full model."""
from __future__ import annotations

import numpy as np

from . import decoder, encoder
from .tape import Tape, Var

PAPER15 = [256, 224, 192, 160, 128, 112, 96, 80, 64, 56, 48, 40, 32, 16, 8]


def softplus_inverse(y):
    return np.log(np.expm1(y))


def init_params(variant: str, vocab_size: int, layer_widths, embed_dim: int, hidden: int,
                seed: int, init_std: float = decoder.EMBED_INIT_STD) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([seed, 0])
    params = decoder.init_decoder(variant, vocab_size, layer_widths, embed_dim, rng, init_std)
    params.update(encoder.init_encoder(vocab_size, layer_widths, hidden, rng))
    # top-layer gamma shape r = softplus(r_raw), starts at 1
    params["r_raw"] = np.full((layer_widths[-1], 1), softplus_inverse(1.0))
    return params


def top_prior_shape(params) -> np.ndarray:
    return np.logaddexp(0.0, params["r_raw"])


def attach(tape: Tape, params: dict[str, np.ndarray], trainable: bool = True) -> dict[str, Var]:
    if trainable:
        return {k: tape.param(v, k) for k, v in params.items()}
    return {k: tape.const(v) for k, v in params.items()}


def forward(tape: Tape, pv: dict[str, Var], variant: str, x: np.ndarray, noise, log_input: bool = False,
            n_layers: int | None = None, scale_mode: str = "mean"):
    """Topic matrices and a Weibull posterior sample for count columns x (V x batch)."""
    if n_layers is None:
        n_layers = len(noise)
    phis = decoder.compute_phi_stack(tape, variant, pv, n_layers)
    post = encoder.infer(tape, tape.const(x), phis, pv, noise, log_input, scale_mode)
    return phis, post
