import numpy as np
import pytest
from hypothesis import given, strategies as st

from sawtopics.tape import DomainError, ShapeError, Tape, gradient_check


def _check(build, params, tol=1e-7):
    err = gradient_check(build, params)
    assert err < tol, err


def test_matmul_transpose_add(rng):
    a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=(2, 3))
    _check(lambda t, v: t.sum(t.mul(t.add(t.matmul(v["a"], v["b"]), t.transpose(v["c"])),
                                    t.matmul(v["a"], v["b"]))),
           {"a": a, "b": b, "c": c})


def test_elementwise_ops(rng):
    x = rng.uniform(0.5, 2.0, size=(3, 2))

    def build(t, v):
        y = t.add(t.log(v["x"]), t.exp(t.scale(v["x"], 0.3)))
        y = t.add(y, t.pow(v["x"], -1.5))
        y = t.add(y, t.lgamma(v["x"]))
        y = t.add(y, t.digamma(v["x"]))
        y = t.add(y, t.softplus(t.shift(v["x"], -1.0)))
        return t.sum(t.sub(y, t.relu(t.shift(v["x"], -1.0))))

    _check(build, {"x": x})


def test_softmax_and_broadcasts(rng):
    a = rng.normal(size=(4, 3))
    r = rng.normal(size=(4, 1))
    w = rng.normal(size=(2, 4))
    b = rng.normal(size=(2, 1))

    def build(t, v):
        s = t.softmax_cols(v["a"])
        s = t.mul(s, t.add(t.broadcast_col(v["r"], 3), t.broadcast_row(t.slice_rows(v["a"], 0, 1), 4)))
        return t.sum(t.mul(t.affine(v["w"], s, v["b"]), t.affine(v["w"], s, v["b"])))

    _check(build, {"a": a, "r": r, "w": w, "b": b})


def test_concat_split_slice(rng):
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(3, 3))

    def build(t, v):
        c = t.concat_rows([v["a"], v["b"]])
        top, bottom = t.split_rows(c, [1, 4])
        return t.add(t.sum(t.mul(top, top)), t.sum(t.mul(t.slice_rows(bottom, 1, 3), t.slice_rows(c, 2, 4))))

    _check(build, {"a": a, "b": b})


def test_clamp_min_gradient_zero_below_floor():
    t = Tape()
    x = t.param(np.array([[0.05, 0.5]]), "x")
    g = t.backward(t.sum(t.clamp_min(x, 0.1)))["x"]
    np.testing.assert_array_equal(g, [[0.0, 1.0]])


@given(st.integers(1, 4), st.integers(1, 4), st.floats(-30, 30))
def test_softmax_columns_sum_to_one(rows, cols, shift):
    a = np.random.default_rng(rows * 7 + cols).normal(size=(rows, cols)) + shift
    t = Tape()
    s = t.softmax_cols(t.const(a)).value
    np.testing.assert_allclose(s.sum(axis=0), 1.0, atol=1e-12)


def test_unused_parameter_gets_zero_gradient():
    t = Tape()
    x = t.param(np.ones((2, 2)), "x")
    t.param(np.ones((3, 1)), "unused")
    grads = t.backward(t.sum(x))
    np.testing.assert_array_equal(grads["unused"], np.zeros((3, 1)))


def test_shape_errors():
    t = Tape()
    a, b = t.param(np.ones((2, 3)), "a"), t.param(np.ones((2, 3)), "b")
    with pytest.raises(ShapeError):
        t.matmul(a, b)
    with pytest.raises(ShapeError):
        t.add(a, t.const(np.ones((3, 2))))


def test_domain_error_names_op_and_index():
    t = Tape()
    x = t.param(np.array([[1.0, -2.0]]), "x")
    with pytest.raises(DomainError, match=r"log.*\(0, 1\)"):
        t.log(x)


def test_backward_requires_scalar():
    t = Tape()
    x = t.param(np.ones((2, 2)), "x")
    with pytest.raises(ValueError):
        t.backward(x)


def test_vars_from_different_tapes_rejected():
    t1, t2 = Tape(), Tape()
    with pytest.raises(TypeError):
        t1.add(t1.param(np.ones((1, 1)), "a"), t2.param(np.ones((1, 1)), "b"))


def test_gradient_check_flags_wrong_gradient():
    class Bad(Tape):
        def exp(self, a):
            out = super().exp(a)
            op, inputs, fn = self.nodes[out.idx]
            self.nodes[out.idx] = (op, inputs, lambda g: [2 * x for x in fn(g)])
            return out

    def build(t, v):
        return t.sum(t.exp(v["x"]))

    assert gradient_check(build, {"x": np.array([[0.3]])}) < 1e-8
    import sawtopics.tape as tape_mod
    orig = tape_mod.Tape
    tape_mod.Tape = Bad
    try:
        assert gradient_check(build, {"x": np.array([[0.3]])}) > 0.5
    finally:
        tape_mod.Tape = orig
