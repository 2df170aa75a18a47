"""Generative side: topic matrices from embeddings, Poisson likelihood, projections."""
from __future__ import annotations

import numpy as np

from . import special
from .tape import DomainError, ShapeError, Tape, Var

VARIANTS = ("sawetm", "detm", "dntm")
RATE_FLOOR = 1e-10
EMBED_INIT_STD = 0.02


def init_decoder(variant: str, vocab_size: int, layer_widths, embed_dim: int,
                 rng: np.random.Generator, init_std: float = EMBED_INIT_STD) -> dict[str, np.ndarray]:
    """Decoder parameters keyed by name.

    sawetm: alpha_0 (D x V) and alpha_l (D x K_l), shared between adjacent layers.
    detm:   detm_alpha_l (D x K_{l-1}) and detm_beta_l (D x K_l), unshared.
    dntm:   W_l (K_{l-1} x K_l).
    """
    widths = [vocab_size] + list(layer_widths)
    out = {}
    if variant == "sawetm":
        for l, k in enumerate(widths):
            out[f"alpha_{l}"] = rng.normal(0.0, init_std, size=(embed_dim, k))
    elif variant == "detm":
        for l in range(1, len(widths)):
            out[f"detm_alpha_{l}"] = rng.normal(0.0, init_std, size=(embed_dim, widths[l - 1]))
            out[f"detm_beta_{l}"] = rng.normal(0.0, init_std, size=(embed_dim, widths[l]))
    elif variant == "dntm":
        for l in range(1, len(widths)):
            out[f"W_{l}"] = rng.normal(0.0, init_std, size=(widths[l - 1], widths[l]))
    else:
        raise ValueError(f"unknown decoder variant {variant!r}; expected one of {VARIANTS}")
    return out


def num_layers(variant: str, params) -> int:
    if variant == "sawetm":
        return sum(1 for k in params if k.startswith("alpha_")) - 1
    if variant == "detm":
        return sum(1 for k in params if k.startswith("detm_beta_"))
    if variant == "dntm":
        return sum(1 for k in params if k.startswith("W_"))
    raise ValueError(f"unknown decoder variant {variant!r}")


def compute_phi(tape: Tape, variant: str, pv: dict[str, Var], layer: int) -> Var:
    """Column-stochastic K_{l-1} x K_l topic matrix for one layer (1-based)."""
    if layer < 1:
        raise ValueError(f"layer must be >= 1, got {layer}")
    if variant == "sawetm":
        lower, upper = pv[f"alpha_{layer - 1}"], pv[f"alpha_{layer}"]
    elif variant == "detm":
        lower, upper = pv[f"detm_alpha_{layer}"], pv[f"detm_beta_{layer}"]
    elif variant == "dntm":
        return tape.softmax_cols(pv[f"W_{layer}"])
    else:
        raise ValueError(f"unknown decoder variant {variant!r}")
    if lower.shape[0] != upper.shape[0]:
        raise ShapeError(f"embedding dims differ: {lower.shape} vs {upper.shape}")
    return tape.softmax_cols(tape.matmul(tape.transpose(lower), upper))


def compute_phi_stack(tape: Tape, variant: str, pv: dict[str, Var], n_layers: int) -> list[Var]:
    return [compute_phi(tape, variant, pv, l) for l in range(1, n_layers + 1)]


def phi_arrays(variant: str, params: dict[str, np.ndarray]) -> list[np.ndarray]:
    """Evaluate every topic matrix for a frozen parameter set."""
    tape = Tape()
    pv = {k: tape.const(v) for k, v in params.items()}
    return [p.value for p in compute_phi_stack(tape, variant, pv, num_layers(variant, params))]


def poisson_loglik(tape: Tape, x: np.ndarray, rate: Var, log_fact: float | None = None) -> Var:
    """sum_v [x_v ln rate_v - rate_v - ln x_v!] as a scalar node.

    ``log_fact`` lets callers pass a precomputed sum of ln x_v!.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape != rate.shape:
        raise ShapeError(f"poisson_loglik: counts {x.shape} vs rate {rate.shape}")
    if (x < 0).any():
        idx = tuple(int(i) for i in np.argwhere(x < 0)[0])
        raise DomainError(f"poisson_loglik: negative count {x[idx]} at index {idx}")
    if log_fact is None:
        log_fact = float(special.lgamma(x + 1.0).sum())
    r = tape.clamp_min(rate, RATE_FLOOR)
    ll = tape.sum(tape.sub(tape.mul(tape.const(x), tape.log(r)), r))
    return tape.shift(ll, -log_fact)


def project_topics(phis: list[np.ndarray], layer: int) -> np.ndarray:
    """Phi^(1) ... Phi^(layer): V x K_layer topics in vocabulary space."""
    if not 1 <= layer <= len(phis):
        raise ValueError(f"layer must be in 1..{len(phis)}, got {layer}")
    out = phis[0]
    for phi in phis[1:layer]:
        out = out @ phi
    return out


def top_words(topics: np.ndarray, n: int, vocab) -> list[list[str]]:
    """Top-n words per column; ties go to the lower word id."""
    terms = vocab.terms if hasattr(vocab, "terms") else list(vocab)
    if n > topics.shape[0]:
        raise ValueError(f"n={n} exceeds vocabulary size {topics.shape[0]}")
    out = []
    for col in topics.T:
        order = np.lexsort((np.arange(col.size), -col))[:n]
        out.append([terms[i] for i in order])
    return out


def top_indices(topics: np.ndarray, n: int) -> np.ndarray:
    """n x K word ids, same ordering rule as ``top_words``."""
    ids = np.arange(topics.shape[0])
    return np.stack([np.lexsort((ids, -col))[:n] for col in topics.T], axis=1)
