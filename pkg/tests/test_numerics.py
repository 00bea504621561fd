import numpy as np
import pytest

from conftest import assert_grad_close, numeric_grad
from model.numerics import (
    euclidean,
    l2_normalize,
    l2_normalize_rows,
    l2_normalize_rows_backward,
    make_rng,
    matmul,
    pairwise_euclidean,
)


def test_make_rng_is_reproducible_per_salt():
    a = make_rng(5, 2).normal(size=10)
    b = make_rng(5, 2).normal(size=10)
    c = make_rng(5, 3).normal(size=10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_make_rng_rejects_negative_seed():
    with pytest.raises(ValueError):
        make_rng(-1)
    with pytest.raises(ValueError):
        make_rng(0, -2)


def test_matmul_checks_shapes_and_finiteness():
    a = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(matmul(a, np.eye(3)), a)
    with pytest.raises(ValueError):
        matmul(a, np.eye(2))
    with pytest.raises(ValueError):
        matmul(np.array([[np.nan]]), np.eye(1))


def test_l2_normalize_unit_norm_and_idempotent():
    v = np.array([3.0, 4.0, 0.0])
    u, ok = l2_normalize(v)
    assert ok
    assert np.isclose(np.linalg.norm(u), 1.0)
    again, ok2 = l2_normalize(u)
    assert ok2
    assert np.array_equal(again, u)


def test_l2_normalize_zero_vector_is_flagged():
    u, ok = l2_normalize(np.zeros(4))
    assert not ok
    assert np.array_equal(u, np.zeros(4))


def test_row_normalization_backward_matches_numeric():
    z = make_rng(1).normal(size=(4, 3))
    w = make_rng(2).normal(size=(4, 3))

    def loss():
        u, _ = l2_normalize_rows(z)
        return float(np.sum(u * w))

    u, norms = l2_normalize_rows(z)
    analytic = l2_normalize_rows_backward(u, norms, w)
    assert_grad_close(analytic, numeric_grad(loss, z))


def test_euclidean_is_symmetric_and_checks_shapes():
    u, v = np.array([1.0, 2.0]), np.array([4.0, 6.0])
    assert euclidean(u, v) == euclidean(v, u) == 5.0
    with pytest.raises(ValueError):
        euclidean(u, np.zeros(3))


def test_pairwise_euclidean_matches_elementwise():
    a = make_rng(3).normal(size=(5, 4))
    b = make_rng(4).normal(size=(3, 4))
    d = pairwise_euclidean(a, b)
    expected = np.array([[euclidean(x, y) for y in b] for x in a])
    assert d.shape == (5, 3)
    assert np.allclose(d, expected, atol=0, rtol=1e-12)
