"""Reverse-mode differentiation over a small, closed set of dense 2-D kernels.

Every value on a tape is a 2-D numpy array. Ops append a node holding the
forward value and a closure mapping the upstream gradient to gradients of
the node's inputs; ``backward`` walks nodes in strict reverse insertion
order. There is no general broadcasting: bias-style expansion goes through
``broadcast_row`` / ``broadcast_col`` explicitly.

    tape = Tape()
    w = tape.param(np.ones((2, 3)), "w")
    loss = tape.sum(tape.softplus(w))
    grads = tape.backward(loss)      # {"w": array of shape (2, 3)}
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import special


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class Var:
    """Handle to one node on a tape."""

    __slots__ = ("tape", "idx", "value")

    def __init__(self, tape: "Tape", idx: int, value: np.ndarray):
        self.tape = tape
        self.idx = idx
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        if isinstance(other, Var):
            return self.tape.add(self, other)
        return self.tape.shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self.tape.sub(self, other)
        return self.tape.shift(self, -other)

    def __rsub__(self, other):
        return self.tape.shift(self.tape.scale(self, -1.0), other)

    def __mul__(self, other):
        if isinstance(other, Var):
            return self.tape.mul(self, other)
        return self.tape.scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.tape.scale(self, -1.0)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    @property
    def T(self):
        return self.tape.transpose(self)

    def __repr__(self):
        return f"Var(#{self.idx}, shape={self.shape})"


def _first_bad(mask: np.ndarray):
    return tuple(int(i) for i in np.argwhere(mask)[0])


class Tape:
    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.nodes: list[tuple[str, tuple[int, ...], Callable | None]] = []
        self.values: list[np.ndarray] = []
        self.params: dict[str, int] = {}

    # -- node construction -------------------------------------------------

    def _push(self, op, inputs, value, backward=None) -> Var:
        value = np.asarray(value, dtype=self.dtype)
        if value.ndim != 2:
            raise ShapeError(f"{op}: result must be 2-D, got shape {value.shape}")
        self.nodes.append((op, tuple(v.idx for v in inputs), backward))
        self.values.append(value)
        return Var(self, len(self.nodes) - 1, value)

    def _own(self, *xs: Var):
        for x in xs:
            if not isinstance(x, Var) or x.tape is not self:
                raise TypeError(f"expected a Var on this tape, got {x!r}")

    @staticmethod
    def _as2d(array):
        a = np.asarray(array)
        if a.ndim == 0:
            return a.reshape(1, 1)
        if a.ndim == 1:
            return a.reshape(-1, 1)
        return a

    def param(self, array, name: str) -> Var:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already on tape")
        v = self._push("param", (), self._as2d(array).copy())
        self.params[name] = v.idx
        return v

    def const(self, array) -> Var:
        return self._push("const", (), self._as2d(array))

    # -- kernels ----------------------------------------------------------

    def matmul(self, a: Var, b: Var) -> Var:
        self._own(a, b)
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not align")
        av, bv = a.value, b.value
        return self._push("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))

    def transpose(self, a: Var) -> Var:
        self._own(a)
        return self._push("transpose", (a,), a.value.T.copy(), lambda g: (g.T,))

    def _same_shape(self, op, a, b):
        if a.shape != b.shape:
            raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")

    def add(self, a: Var, b: Var) -> Var:
        self._own(a, b)
        self._same_shape("add", a, b)
        return self._push("add", (a, b), a.value + b.value, lambda g: (g, g))

    def sub(self, a: Var, b: Var) -> Var:
        self._own(a, b)
        self._same_shape("sub", a, b)
        return self._push("sub", (a, b), a.value - b.value, lambda g: (g, -g))

    def mul(self, a: Var, b: Var) -> Var:
        self._own(a, b)
        self._same_shape("mul", a, b)
        av, bv = a.value, b.value
        return self._push("mul", (a, b), av * bv, lambda g: (g * bv, g * av))

    def scale(self, a: Var, c: float) -> Var:
        self._own(a)
        c = float(c)
        return self._push("scale", (a,), a.value * c, lambda g: (g * c,))

    def shift(self, a: Var, c: float) -> Var:
        self._own(a)
        return self._push("shift", (a,), a.value + float(c), lambda g: (g,))

    def concat_rows(self, parts: list[Var]) -> Var:
        self._own(*parts)
        cols = {p.shape[1] for p in parts}
        if len(cols) != 1:
            raise ShapeError(f"concat_rows: column counts differ {[p.shape for p in parts]}")
        bounds = np.cumsum([0] + [p.shape[0] for p in parts])

        def backward(g):
            return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

        return self._push("concat_rows", tuple(parts), np.vstack([p.value for p in parts]), backward)

    def slice_rows(self, a: Var, start: int, stop: int) -> Var:
        self._own(a)
        if not 0 <= start < stop <= a.shape[0]:
            raise ShapeError(f"slice_rows: [{start}:{stop}] outside {a.shape}")
        rows = a.shape

        def backward(g):
            out = np.zeros(rows, dtype=g.dtype)
            out[start:stop] = g
            return (out,)

        return self._push("slice_rows", (a,), a.value[start:stop].copy(), backward)

    def split_rows(self, a: Var, sizes: list[int]) -> list[Var]:
        if sum(sizes) != a.shape[0]:
            raise ShapeError(f"split_rows: sizes {sizes} do not sum to {a.shape[0]}")
        bounds = np.cumsum([0] + list(sizes))
        return [self.slice_rows(a, int(bounds[i]), int(bounds[i + 1])) for i in range(len(sizes))]

    def relu(self, a: Var) -> Var:
        self._own(a)
        mask = a.value > 0
        return self._push("relu", (a,), np.where(mask, a.value, 0.0), lambda g: (g * mask,))

    def softplus(self, a: Var) -> Var:
        self._own(a)
        av = a.value
        sig = 0.5 * (1.0 + np.tanh(0.5 * av))
        return self._push("softplus", (a,), np.logaddexp(0.0, av), lambda g: (g * sig,))

    def clamp_min(self, a: Var, floor: float) -> Var:
        """max(floor, a); the gradient is zero wherever the floor is active."""
        self._own(a)
        keep = a.value > floor
        return self._push("clamp_min", (a,), np.where(keep, a.value, floor), lambda g: (g * keep,))

    def _check_positive(self, op, a):
        bad = ~(a.value > 0)
        if bad.any():
            idx = _first_bad(bad)
            raise DomainError(f"{op}: input must be > 0, got {a.value[idx]!r} at index {idx}")

    def log(self, a: Var) -> Var:
        self._own(a)
        self._check_positive("log", a)
        av = a.value
        return self._push("log", (a,), np.log(av), lambda g: (g / av,))

    def exp(self, a: Var) -> Var:
        self._own(a)
        out = np.exp(a.value)
        return self._push("exp", (a,), out, lambda g: (g * out,))

    def pow(self, a: Var, c: float) -> Var:
        self._own(a)
        self._check_positive("pow", a)
        av = a.value
        c = float(c)
        return self._push("pow", (a,), av ** c, lambda g: (g * c * av ** (c - 1.0),))

    def lgamma(self, a: Var) -> Var:
        self._own(a)
        self._check_positive("lgamma", a)
        av = a.value
        return self._push("lgamma", (a,), special.lgamma(av), lambda g: (g * special.digamma(av),))

    def digamma(self, a: Var) -> Var:
        self._own(a)
        self._check_positive("digamma", a)
        av = a.value
        return self._push("digamma", (a,), special.digamma(av), lambda g: (g * special.trigamma(av),))

    def softmax_cols(self, a: Var) -> Var:
        self._own(a)
        z = a.value - a.value.max(axis=0, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=0, keepdims=True)

        def backward(g):
            return (s * (g - (g * s).sum(axis=0, keepdims=True)),)

        return self._push("softmax_cols", (a,), s, backward)

    def sum(self, a: Var) -> Var:
        self._own(a)
        shape = a.shape
        return self._push("sum", (a,), np.array([[a.value.sum()]]),
                          lambda g: (np.full(shape, g[0, 0], dtype=g.dtype),))

    def broadcast_row(self, a: Var, n: int) -> Var:
        """Repeat a 1 x c row n times -> n x c."""
        self._own(a)
        if a.shape[0] != 1:
            raise ShapeError(f"broadcast_row: expected a single row, got {a.shape}")
        return self._push("broadcast_row", (a,), np.repeat(a.value, n, axis=0),
                          lambda g: (g.sum(axis=0, keepdims=True),))

    def broadcast_col(self, a: Var, n: int) -> Var:
        """Repeat an r x 1 column n times -> r x n."""
        self._own(a)
        if a.shape[1] != 1:
            raise ShapeError(f"broadcast_col: expected a single column, got {a.shape}")
        return self._push("broadcast_col", (a,), np.repeat(a.value, n, axis=1),
                          lambda g: (g.sum(axis=1, keepdims=True),))

    # -- composites -------------------------------------------------------

    def affine(self, w: Var, x: Var, b: Var) -> Var:
        return self.add(self.matmul(w, x), self.broadcast_col(b, x.shape[1]))

    # -- reverse pass -------------------------------------------------------

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        self._own(loss)
        if loss.shape != (1, 1):
            raise ShapeError(f"backward: loss must be scalar (1, 1), got {loss.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[loss.idx] = np.ones((1, 1), dtype=self.dtype)
        for i in range(loss.idx, -1, -1):
            g = grads[i]
            op, inputs, fn = self.nodes[i]
            if g is None or fn is None:
                continue
            for j, gj in zip(inputs, fn(g)):
                grads[j] = gj if grads[j] is None else grads[j] + gj
        return {
            name: grads[i] if grads[i] is not None else np.zeros_like(self.values[i])
            for name, i in self.params.items()
        }


def gradient_check(build, params: dict[str, np.ndarray], h: float = 1e-5) -> float:
    """Max over all parameter entries of |analytic - central| / max(1, |central|).

    ``build(tape, vars)`` must return a scalar Var, where ``vars`` maps the
    parameter names to tape params.
    """
    if h <= 0:
        raise ValueError("h must be positive")

    def run(values):
        tape = Tape()
        vs = {k: tape.param(v, k) for k, v in values.items()}
        return tape, build(tape, vs)

    tape, loss = run(params)
    analytic = tape.backward(loss)
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    worst = 0.0
    for name, arr in work.items():
        arr2 = arr.reshape(arr.shape if arr.ndim == 2 else (-1, 1))
        work[name] = arr2
        flat = arr2.reshape(-1)
        grad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(run(work)[1].value[0, 0])
            flat[i] = orig - h
            fm = float(run(work)[1].value[0, 0])
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"non-finite loss perturbing {name}[{i}]")
            fd = (fp - fm) / (2 * h)
            worst = max(worst, abs(grad[i] - fd) / max(1.0, abs(fd)))
    return worst
