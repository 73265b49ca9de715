"""Tests for the shared dense-array kernels."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mctk.domain.exceptions import CacheError, NonFiniteError, ShapeError
from mctk.domain.models import Mlp
from mctk.pipeline.numerics import (
    EXTENDED,
    MASK_LOGIT,
    fd_check,
    flatten_grads,
    flatten_params,
    gap,
    gap_backward,
    init_mlp,
    matmul,
    mlp_backward,
    mlp_forward,
    mlp_forward_cached,
    numeric_gradient,
    relative_error,
    softmax,
    with_params,
)

finite = st.floats(-50, 50, allow_nan=False, width=64)


def test_matmul_hand_expansion():
    """Test a 2×2 by 2×1 product."""
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[0.0], [1.0]])
    np.testing.assert_array_equal(matmul(a, b), [[2.0], [4.0]])


def test_matmul_identity_and_zero():
    """Test the identity and annihilator cases."""
    a = np.random.default_rng(0).standard_normal((3, 5))
    np.testing.assert_array_equal(matmul(np.eye(3), a), a)
    np.testing.assert_array_equal(matmul(a, np.zeros((5, 2))), np.zeros((3, 2)))


def test_matmul_shape_mismatch_names_both_shapes():
    """Test that incompatible operands raise ShapeError."""
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_is_deterministic():
    """Test bit-identical results across calls."""
    rng = np.random.default_rng(1)
    a = rng.standard_normal((7, 13)).astype(np.float32)
    b = rng.standard_normal((13, 5)).astype(np.float32)
    np.testing.assert_array_equal(matmul(a, b), matmul(a, b))
    assert matmul(a, b).dtype == np.float32


@pytest.mark.parametrize(
    "logits, expected",
    [
        ([0.0, 0.0, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25]),
        ([MASK_LOGIT, 0.0, MASK_LOGIT, MASK_LOGIT], [0.0, 1.0, 0.0, 0.0]),
        ([math.log(v) for v in (1, 2, 3, 4)], [0.1, 0.2, 0.3, 0.4]),
    ],
)
def test_softmax_examples(logits, expected):
    """Test softmax on symmetric, single-survivor and log inputs."""
    result = softmax(np.array(logits))
    np.testing.assert_allclose(result.values, expected, atol=1e-12)
    assert not result.fully_masked


def test_softmax_fully_masked_slice():
    """Test that an all-masked slice yields zeros and a flag, never NaN."""
    x = np.array([[MASK_LOGIT] * 4, [0.0, 1.0, 2.0, 3.0]])
    result = softmax(x, axis=1)
    np.testing.assert_array_equal(result.values[0], np.zeros(4))
    np.testing.assert_array_equal(result.fully_masked, [True, False])
    assert np.isfinite(result.values).all()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=finite))
def test_softmax_rows_sum_to_one(x):
    """Test the partition of unity on arbitrary finite logits."""
    values = softmax(x, axis=1).values
    np.testing.assert_allclose(values.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(values >= 0)


def test_gap_examples():
    """Test pooling of a 2×2 map and of a constant map."""
    assert gap(np.array([[1.0, 2.0], [3.0, 4.0]])) == pytest.approx(2.5)
    const = np.full((2, 3, 4, 4), 0.75)
    np.testing.assert_allclose(gap(const), np.full((2, 3), 0.75))


def test_gap_ignores_zero_mean_perturbation():
    """Test linearity: a zero-mean perturbation leaves the pool unchanged."""
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 4, 4))
    noise = rng.standard_normal((1, 2, 4, 4))
    noise -= noise.mean(axis=(-2, -1), keepdims=True)
    np.testing.assert_allclose(gap(x + noise), gap(x), atol=1e-6)


def test_gap_backward_is_adjoint():
    """Test <gap(x), g> == <x, gap_backward(g)>."""
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 5, 4))
    g = rng.standard_normal((2, 3))
    lhs = np.sum(gap(x) * g)
    rhs = np.sum(x * gap_backward(g, (5, 4)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_mlp_linear_examples():
    """Test identity and 2x+1 single-layer maps."""
    identity = Mlp((np.eye(3),), (np.zeros(3),), "linear")
    x = np.array([0.5, -1.0, 2.0])
    np.testing.assert_array_equal(mlp_forward(identity, x), x)
    double = Mlp((2.0 * np.eye(2),), (np.ones(2),), "linear")
    np.testing.assert_array_equal(mlp_forward(double, np.ones(2)), [3.0, 3.0])


def test_init_mlp_is_seeded():
    """Test that the same seed gives bit-identical weights."""
    a = init_mlp((6, 8, 4), seed=11)
    b = init_mlp((6, 8, 4), seed=11)
    c = init_mlp((6, 8, 4), seed=12)
    np.testing.assert_array_equal(flatten_params(a), flatten_params(b))
    assert not np.array_equal(flatten_params(a), flatten_params(c))
    assert a.dims == (6, 8, 4)
    assert a.dtype == np.float32


def test_init_mlp_rejects_bad_widths():
    """Test that degenerate widths raise ShapeError."""
    with pytest.raises(ShapeError):
        init_mlp((4,), seed=0)
    with pytest.raises(ShapeError):
        init_mlp((4, 0, 2), seed=0)


def test_mlp_forward_checks_input_width():
    """Test that a wrong input width raises ShapeError."""
    mlp = init_mlp((4, 3), seed=0)
    with pytest.raises(ShapeError):
        mlp_forward(mlp, np.zeros(5, dtype=np.float32))


@pytest.mark.parametrize("seed", range(10))
def test_mlp_backward_matches_finite_differences(seed):
    """Test input and parameter gradients against central differences."""
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in rng.integers(2, 33, size=4))
    mlp = init_mlp(dims, seed=seed, dtype=np.float64)
    x = rng.standard_normal((3, dims[0]))
    r = rng.standard_normal((3, dims[-1]))
    _, cache = mlp_forward_cached(mlp, x)
    grad_x, grads = mlp_backward(mlp, cache, r)

    mlp_x = mlp.astype(EXTENDED)
    r_x = r.astype(EXTENDED)
    err_x = fd_check(
        lambda v: np.sum(mlp_forward(mlp_x, v) * r_x),
        x.astype(EXTENDED),
        grad_x,
    )
    err_p = fd_check(
        lambda p: np.sum(mlp_forward(with_params(mlp_x, p), x) * r_x),
        flatten_params(mlp_x),
        flatten_grads(grads),
    )
    assert err_x < 1e-5
    assert err_p < 1e-5


def test_mlp_backward_zero_grad_out():
    """Test that a zero upstream gradient gives zero gradients."""
    mlp = init_mlp((3, 4, 2), seed=0, dtype=np.float64)
    x = np.ones((2, 3))
    _, cache = mlp_forward_cached(mlp, x)
    grad_x, grads = mlp_backward(mlp, cache, np.zeros((2, 2)))
    assert not grad_x.any()
    assert not flatten_grads(grads).any()


def test_mlp_backward_cache_errors():
    """Test missing and foreign caches."""
    mlp = init_mlp((3, 2), seed=0, dtype=np.float64)
    other = init_mlp((3, 2), seed=1, dtype=np.float64)
    _, cache = mlp_forward_cached(other, np.ones(3))
    with pytest.raises(CacheError):
        mlp_backward(mlp, None, np.ones(2))
    with pytest.raises(CacheError):
        mlp_backward(mlp, cache, np.ones(2))


def test_with_params_rejects_wrong_length():
    """Test that a short parameter vector raises ShapeError."""
    mlp = init_mlp((3, 2), seed=0)
    with pytest.raises(ShapeError):
        with_params(mlp, np.zeros(3))


def test_fd_check_closed_form():
    """Test f(x)=Σx² with analytic 2x."""
    x = np.random.default_rng(6).standard_normal(10)
    wide = x.astype(EXTENDED)
    assert fd_check(lambda v: np.sum(v * v), wide, 2 * x) < 1e-9


def test_fd_check_constant_function():
    """Test that a constant function with zero gradient passes exactly."""
    assert fd_check(lambda v: 3.0, np.ones(4), np.zeros(4)) == 0.0


def test_fd_check_detects_wrong_gradient():
    """Test that 3x against the true 2x scores |3x−2x| / |3x| = 1/3."""
    x = np.array([0.5, -1.5, 2.0])
    error = fd_check(lambda v: float(np.sum(v * v)), x, 3 * x)
    assert error == pytest.approx(1.0 / 3.0, rel=1e-6)


def test_relative_error_floor():
    """Test that tiny gradients are compared against the 1e-8 floor."""
    assert relative_error(np.array([0.0]), np.array([1e-10])) == pytest.approx(
        1e-2
    )


def test_numeric_gradient_reports_non_finite_coordinate():
    """Test that a non-finite value names the coordinate."""

    def f(v):
        return float("inf") if v[2] > 1.0 else float(np.sum(v))

    with pytest.raises(NonFiniteError) as exc_info:
        numeric_gradient(f, np.array([0.0, 0.0, 1.0]), 1e-3)
    assert exc_info.value.index == 2
