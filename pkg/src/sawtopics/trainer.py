"""ELBO assembly, stabilised optimisation and the minibatch training loop."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import checkpoint, decoder, encoder, model
from .special import EULER_GAMMA
from .tape import DomainError, Tape, Var

log = logging.getLogger(__name__)

SHAPE_FLOOR = 1e-10


@dataclass
class TrainConfig:
    layer_widths: list[int] = field(default_factory=lambda: [64, 32, 16])
    embed_dim: int = 100
    embed_init_std: float = decoder.EMBED_INIT_STD
    hidden: int = 256
    lr: float = 1e-2
    batch_size: int = 200
    epochs: int = 100
    warmup_epochs: int = 20
    clip_norm: float = 20.0
    seed: int = 0
    variant: str = "sawetm"
    precision: str = "float64"
    prior_rate: float = 1.0
    log_input: bool = False
    scale_mode: str = "mean"
    checkpoint_every: int = 10
    workers: int = 1

    def validate(self) -> list[str]:
        errors = []
        if not self.layer_widths or any(int(k) <= 0 for k in self.layer_widths):
            errors.append("layer_widths must be a nonempty list of positive integers")
        for name in ("embed_dim", "hidden", "batch_size", "workers"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        for name in ("lr", "clip_norm", "prior_rate", "embed_init_std"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be positive")
        for name in ("epochs", "warmup_epochs", "checkpoint_every"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if self.variant not in decoder.VARIANTS:
            errors.append(f"variant must be one of {decoder.VARIANTS}")
        if self.scale_mode not in ("mean", "direct"):
            errors.append("scale_mode must be mean or direct")
        if self.precision not in ("float64", "float32"):
            errors.append("precision must be float64 or float32")
        return errors

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64


# -- objective --------------------------------------------------------------

def kl_weibull_gamma(tape: Tape, k: Var, lam: Var, alpha: Var, beta: Var) -> Var:
    """Summed KL(Weibull(k, lam) || Gamma(alpha, rate=beta))."""
    for name, v in (("k", k), ("lam", lam), ("alpha", alpha), ("beta", beta)):
        if not np.all(v.value > 0):
            raise DomainError(f"kl_weibull_gamma: {name} must be > 0")
    inv_k = tape.pow(k, -1.0)
    t = tape.scale(tape.mul(alpha, inv_k), EULER_GAMMA)
    t = tape.sub(t, tape.mul(alpha, tape.log(lam)))
    t = tape.add(t, tape.log(k))
    gamma_term = tape.exp(tape.lgamma(tape.shift(inv_k, 1.0)))
    t = tape.add(t, tape.mul(tape.mul(beta, lam), gamma_term))
    t = tape.shift(t, -EULER_GAMMA - 1.0)
    t = tape.sub(t, tape.mul(alpha, tape.log(beta)))
    t = tape.add(t, tape.lgamma(alpha))
    return tape.sum(t)


@dataclass
class ElboParts:
    loss: Var
    recon: Var
    kl: list[Var]


def elbo(tape: Tape, x: np.ndarray, post: encoder.WeibullPosterior, phis: list[Var],
         beta_warm: float, prior_rate: float = 1.0, log_fact: float | None = None) -> ElboParts:
    """Negative warm-up-weighted ELBO summed over the batch."""
    if not 0.0 <= beta_warm <= 1.0:
        raise ValueError(f"beta_warm must be in [0, 1], got {beta_warm}")
    rate = tape.matmul(phis[0], post.theta[0])
    recon = decoder.poisson_loglik(tape, x, rate, log_fact)
    kls = []
    for k, lam, shape in zip(post.k, post.lam, post.prior_shape):
        alpha = tape.clamp_min(shape, SHAPE_FLOOR)
        beta = tape.const(np.full(k.shape, prior_rate))
        kls.append(kl_weibull_gamma(tape, k, lam, alpha, beta))
    if beta_warm == 0.0:
        loss = tape.scale(recon, -1.0)
    else:
        total = kls[0]
        for kl in kls[1:]:
            total = tape.add(total, kl)
        loss = tape.sub(tape.scale(total, beta_warm), recon)
    value = float(loss.value[0, 0])
    if not np.isfinite(value):
        breakdown = ", ".join(f"layer {i + 1}: {float(kl.value[0, 0]):.6g}" for i, kl in enumerate(kls))
        raise FloatingPointError(
            f"non-finite loss {value} (recon {float(recon.value[0, 0]):.6g}; KL {breakdown})")
    return ElboParts(loss, recon, kls)


def warmup_beta(epoch: int, n: int) -> float:
    if n < 0:
        raise ValueError("warm-up length must be >= 0")
    if n == 0:
        return 1.0
    return min(1.0, epoch / n)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], threshold: float = 20.0):
    """Scale all gradients by threshold / norm when the global L2 norm exceeds threshold.

    Returns (clipped grads, pre-clip norm).
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    norm = global_norm(grads)
    if norm <= threshold:
        return grads, norm
    s = threshold / norm
    return {k: g * s for k, g in grads.items()}, norm


class Adam:
    def __init__(self, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        """Updates ``params`` in place."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            p = params[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params, grads, state: Adam, lr: float | None = None):
    if lr is not None:
        state.lr = lr
    state.step(params, grads)
    return params


# -- training loop ----------------------------------------------------------

class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[dict]
    step_grad_norms: list[float] = field(default_factory=list)
    step_clipped_norms: list[float] = field(default_factory=list)
    step_min_k: list[float] = field(default_factory=list)
    steps: int = 0


def _shard_bounds(n: int, shards: int):
    edges = np.linspace(0, n, min(shards, n) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def batch_gradient(params, config: TrainConfig, x: np.ndarray, beta_warm: float, step: int,
                   executor: ThreadPoolExecutor | None = None):
    """Loss parts and summed gradients for one minibatch (columns of x)."""

    def shard(i, a, b):
        xs = x[:, a:b]
        noise = encoder.draw_noise(np.random.default_rng([config.seed, 2, step, i]), config.layer_widths, b - a)
        tape = Tape(config.dtype)
        pv = model.attach(tape, params)
        phis, post = model.forward(tape, pv, config.variant, xs, noise, config.log_input,
                                   scale_mode=config.scale_mode)
        parts = elbo(tape, xs, post, phis, beta_warm, config.prior_rate)
        grads = tape.backward(parts.loss)
        stats = (float(parts.loss.value[0, 0]), float(parts.recon.value[0, 0]),
                 [float(kl.value[0, 0]) for kl in parts.kl], min(float(k.value.min()) for k in post.k))
        return grads, stats

    bounds = _shard_bounds(x.shape[1], config.workers)
    if executor is None or len(bounds) == 1:
        results = [shard(i, a, b) for i, (a, b) in enumerate(bounds)]
    else:
        results = list(executor.map(lambda t: shard(*t), [(i, a, b) for i, (a, b) in enumerate(bounds)]))
    grads = {k: g.astype(np.float64) for k, g in results[0][0].items()}
    loss, recon, kls, min_k = results[0][1]
    for g_i, (l_i, r_i, k_i, m_i) in results[1:]:
        for k in grads:
            grads[k] += g_i[k]
        loss, recon, min_k = loss + l_i, recon + r_i, min(min_k, m_i)
        kls = [a + b for a, b in zip(kls, k_i)]
    return grads, loss, recon, kls, min_k


def train(counts: sp.csr_matrix, config: TrainConfig, out_dir: str | Path | None = None,
          params: dict[str, np.ndarray] | None = None, echo=None, manifest_extra: dict | None = None) -> TrainResult:
    """Minibatch training on a documents x vocabulary count matrix."""
    errors = config.validate()
    if errors:
        raise ValueError("invalid TrainConfig: " + "; ".join(errors))
    counts = sp.csr_matrix(counts, dtype=np.float64)
    n_docs, vocab_size = counts.shape
    if n_docs == 0:
        raise ValueError("empty corpus")
    if params is None:
        params = model.init_params(config.variant, vocab_size, config.layer_widths,
                                   config.embed_dim, config.hidden, config.seed, config.embed_init_std)
    params = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    opt = Adam(lr=config.lr)
    order_rng = np.random.default_rng([config.seed, 1])
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    extra = dict(manifest_extra or {})
    extra.setdefault("vocab_size", vocab_size)

    def save(name, p, step):
        if out is not None:
            checkpoint.save(out / name, p, config, step, extra)

    result = TrainResult(params=params, history=[])
    n_layers = len(config.layer_widths)
    log_file = None
    writer = None
    if out is not None:
        log_file = open(out / "train_log.csv", "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(["epoch", "loss", "recon"] + [f"kl_layer_{l}" for l in range(1, n_layers + 1)]
                        + ["beta_warm", "grad_norm", "wallclock_s"])
    t0 = time.perf_counter()
    step = 0
    executor = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for epoch in range(config.epochs):
            beta = warmup_beta(epoch, config.warmup_epochs)
            perm = order_rng.permutation(n_docs)
            tot_loss = tot_recon = 0.0
            tot_kl = np.zeros(n_layers)
            norms = []
            for start in range(0, n_docs, config.batch_size):
                idx = np.sort(perm[start:start + config.batch_size])
                x = counts[idx].toarray().T
                try:
                    grads, loss, recon, kls, min_k = batch_gradient(params, config, x, beta, step, executor)
                except FloatingPointError as exc:
                    save("last_good", params, step)
                    raise TrainingDiverged(f"epoch {epoch} step {step}: {exc}") from exc
                grads, norm = clip_gradients(grads, config.clip_norm)
                opt.step(params, grads)
                step += 1
                result.step_grad_norms.append(norm)
                result.step_clipped_norms.append(global_norm(grads))
                result.step_min_k.append(min_k)
                norms.append(norm)
                tot_loss += loss
                tot_recon += recon
                tot_kl += kls
            row = {"epoch": epoch + 1, "loss": tot_loss / n_docs, "recon": tot_recon / n_docs,
                   **{f"kl_layer_{l + 1}": tot_kl[l] / n_docs for l in range(n_layers)},
                   "beta_warm": beta, "grad_norm": float(np.mean(norms)),
                   "wallclock_s": time.perf_counter() - t0}
            result.history.append(row)
            if writer is not None:
                writer.writerow([row[k] for k in row])
                log_file.flush()
            if echo is not None:
                echo(f"epoch {epoch + 1:4d}  loss {row['loss']:.4f}  recon {row['recon']:.4f}  "
                     f"beta {beta:.3f}  |g| {row['grad_norm']:.2f}")
            if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
                save(f"checkpoint_e{epoch + 1:04d}", params, step)
    finally:
        if executor is not None:
            executor.shutdown()
        if log_file is not None:
            log_file.close()
    result.steps = step
    save("final", params, step)
    return result
