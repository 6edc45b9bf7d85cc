import numpy as np
import pytest

from curvediff.dual import Dual, einsum, roll, seed_identity, sqrt, value


def numeric_grad(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.zeros(f(x).shape + (x.size,))
    for j in range(x.size):
        xp = x.copy().reshape(-1)
        xm = x.copy().reshape(-1)
        xp[j] += h
        xm[j] -= h
        out[..., j] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2 * h)
    return out


def test_arithmetic_chain_matches_finite_differences():
    def f(x):
        return (x[0] * x[1] - 2.0) / (x[2] ** 2 + 1.0) + np.sqrt(x[1]) * 3.0

    def f_dual(x):
        return (x[0] * x[1] - 2.0) / (x[2] ** 2 + 1.0) + sqrt(x[1]) * 3.0

    x0 = np.array([1.3, 2.1, -0.4])
    d = f_dual(seed_identity(x0))
    assert np.allclose(d.val, f(x0))
    assert np.allclose(d.dot, numeric_grad(lambda x: np.asarray(f(x)), x0), atol=1e-8)


def test_broadcasting_against_plain_arrays():
    x0 = np.array([1.0, 2.0, 4.0])
    x = seed_identity(x0)
    arr = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    y = arr / x + x * 2.0 - 1.0
    assert y.shape == (2, 3)
    assert y.dot.shape == (2, 3, 3)

    def f(v):
        return arr / v + v * 2.0 - 1.0

    assert np.allclose(y.dot, numeric_grad(f, x0), atol=1e-7)


def test_reversed_operations_and_negative_powers():
    x = seed_identity(np.array([2.0, 0.5]))
    y = 1.0 / x + (3.0 - x) + x ** (-2)

    def f(v):
        return 1.0 / v + (3.0 - v) + v ** (-2.0)

    assert np.allclose(y.val, f(x.val))
    assert np.allclose(y.dot, numeric_grad(f, x.val), atol=1e-7)


def test_sum_roll_getitem():
    x = seed_identity(np.array([1.0, 2.0, 3.0]))
    s = (x * x).sum()
    assert np.allclose(s.val, 14.0)
    assert np.allclose(s.dot, 2.0 * x.val)
    r = roll(x, 1, 0)
    assert np.allclose(r.val, [3.0, 1.0, 2.0])
    assert np.allclose(r.dot[0], [0, 0, 1])
    assert np.allclose(x[1].val, 2.0)
    assert np.allclose(x[1].dot, [0, 1, 0])


def test_einsum_product_rule():
    rng = np.random.default_rng(0)
    w0 = rng.uniform(1, 2, 4)
    A = rng.standard_normal((4, 3))

    def f(w):
        return np.einsum("i,ia,ib->ab", w, A, A)

    res = einsum("i,ia,ib->ab", seed_identity(w0), A, A)
    assert np.allclose(res.val, f(w0))
    assert np.allclose(res.dot, numeric_grad(f, w0), atol=1e-7)


def test_einsum_two_dual_operands():
    rng = np.random.default_rng(1)
    x0 = rng.uniform(1, 2, 3)

    def build(x):
        return np.outer(x, x) + np.diag(x)

    def f(x):
        B = build(x)
        return np.einsum("ij,jk->ik", B, B)

    x = seed_identity(x0)
    B = einsum("i,j->ij", x, x) + einsum("i,ij->ij", x, np.eye(3))
    res = einsum("ij,jk->ik", B, B)
    assert np.allclose(res.val, f(x0))
    assert np.allclose(res.dot, numeric_grad(f, x0), atol=1e-6)


def test_einsum_passthrough_without_duals():
    A = np.arange(6.0).reshape(2, 3)
    out = einsum("ij,kj->ik", A, A)
    assert isinstance(out, np.ndarray)
    assert np.allclose(out, A @ A.T)


def test_value_helper_and_pow_type_error():
    x = seed_identity(np.array([1.0]))
    assert np.allclose(value(x), [1.0])
    assert np.allclose(value(np.array([2.0])), [2.0])
    with pytest.raises(TypeError):
        x ** 0.5
