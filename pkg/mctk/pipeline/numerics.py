"""Dense-array kernels shared by the whole pipeline.

Tensors are numpy arrays. Pipeline outputs use float32; gradient checks run
the same code in float64 (analytic side) and ``numpy.longdouble``
(finite-difference side).
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
import numpy.typing as npt

from mctk.domain.exceptions import (
    CacheError,
    NonFiniteError,
    NumericError,
    ShapeError,
)
from mctk.domain.models import Mlp, Tensor

MASK_LOGIT = -1e9
REL_ERROR_FLOOR = 1e-8
EXTENDED = np.longdouble


class Softmax(NamedTuple):
    """Softmax values plus a per-slice fully-masked flag."""

    values: Tensor
    fully_masked: Tensor


@dataclass(frozen=True, slots=True, eq=False)
class MlpCache:
    """Forward activations kept for :func:`mlp_backward`."""

    mlp: Mlp
    inputs: tuple[Tensor, ...]
    pre_activations: tuple[Tensor, ...]
    input_shape: tuple[int, ...]


@dataclass(frozen=True, slots=True, eq=False)
class MlpGrads:
    """Gradients of every MLP parameter."""

    weights: tuple[Tensor, ...]
    biases: tuple[Tensor, ...]


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Row-major matrix product with fixed left-to-right summation over K.

    BLAS blocking depends on thread count, so the reduction is spelled out
    to keep results bit-identical across machines and worker counts.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {tuple(a.shape)} by {tuple(b.shape)}"
        )
    dtype = np.result_type(a, b)
    out = np.zeros((a.shape[0], b.shape[1]), dtype=dtype)
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def softmax(
    x: Tensor, axis: int = -1, mask_value: float = MASK_LOGIT
) -> Softmax:
    """Max-stabilised softmax.

    Slices whose entries all sit at ``mask_value`` return zeros and are
    flagged in ``fully_masked`` instead of producing NaN.
    """
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {x.shape}")
    full = np.all(x <= mask_value, axis=axis, keepdims=True)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.where(full, 0, np.exp(shifted)).astype(x.dtype)
    total = np.sum(e, axis=axis, keepdims=True)
    values = np.where(full, 0, e / np.where(full, 1, total)).astype(x.dtype)
    return Softmax(values=values, fully_masked=np.squeeze(full, axis=axis))


def gap(x: Tensor) -> Tensor:
    """Global average pooling over the last two (spatial) axes."""
    if x.ndim < 2:
        raise ShapeError(f"gap needs two spatial axes, got {x.shape}")
    return np.mean(x, axis=(-2, -1))


def gap_backward(grad: Tensor, spatial: tuple[int, int]) -> Tensor:
    """Adjoint of :func:`gap`: spread each gradient evenly over H×W."""
    h, w = spatial
    scaled = grad / (h * w)
    return np.broadcast_to(scaled[..., None, None], grad.shape + (h, w))


def _sigmoid(z: Tensor) -> Tensor:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activate(z: Tensor, activation: str) -> Tensor:
    if activation == "linear":
        return z
    return z * _sigmoid(z)


def _activate_grad(z: Tensor, activation: str) -> Tensor:
    if activation == "linear":
        return np.ones_like(z)
    s = _sigmoid(z)
    return s * (1.0 + z * (1.0 - s))


def init_mlp(
    dims: Sequence[int],
    seed: int,
    activation: str = "silu",
    dtype: npt.DTypeLike = np.float32,
) -> Mlp:
    """Seeded uniform fan-in initialisation, U(-1/√fan_in, 1/√fan_in)."""
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ShapeError(f"invalid MLP widths {list(dims)}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(
            rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype)
        )
        biases.append(rng.uniform(-bound, bound, fan_out).astype(dtype))
    return Mlp(tuple(weights), tuple(biases), activation)


def _forward(mlp: Mlp, x: Tensor) -> tuple[Tensor, MlpCache]:
    if x.shape[-1] != mlp.dims[0]:
        raise ShapeError(
            f"MLP expects last dimension {mlp.dims[0]}, got {tuple(x.shape)}"
        )
    a = x.reshape(-1, x.shape[-1])
    inputs = []
    pre = []
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        inputs.append(a)
        z = matmul(a, w) + b
        pre.append(z)
        a = z if i == last else _activate(z, mlp.activation)
    out = a.reshape(x.shape[:-1] + (mlp.dims[-1],))
    cache = MlpCache(mlp, tuple(inputs), tuple(pre), tuple(x.shape))
    return out, cache


def mlp_forward(mlp: Mlp, x: Tensor) -> Tensor:
    """Apply the MLP; the final layer returns raw logits."""
    return _forward(mlp, x)[0]


def mlp_forward_cached(mlp: Mlp, x: Tensor) -> tuple[Tensor, MlpCache]:
    """Like :func:`mlp_forward` but also return activations for backward."""
    return _forward(mlp, x)


def mlp_backward(
    mlp: Mlp, cache: Optional[MlpCache], grad_out: Tensor
) -> tuple[Tensor, MlpGrads]:
    """Exact reverse-mode gradients of :func:`mlp_forward`."""
    if cache is None:
        raise CacheError("mlp_backward called without a forward cache")
    if cache.mlp is not mlp:
        raise CacheError("forward cache was produced by a different MLP")
    expected = cache.input_shape[:-1] + (mlp.dims[-1],)
    if grad_out.shape != expected:
        raise ShapeError(
            f"grad_out shape {tuple(grad_out.shape)} does not match "
            f"forward output {expected}"
        )
    g = grad_out.reshape(-1, mlp.dims[-1])
    grad_w: list[Tensor] = [np.empty(0)] * len(mlp.weights)
    grad_b: list[Tensor] = [np.empty(0)] * len(mlp.weights)
    for i in range(len(mlp.weights) - 1, -1, -1):
        grad_w[i] = matmul(cache.inputs[i].T, g)
        grad_b[i] = np.sum(g, axis=0)
        g = matmul(g, mlp.weights[i].T)
        if i:
            g = g * _activate_grad(cache.pre_activations[i - 1], mlp.activation)
    grad_x = g.reshape(cache.input_shape)
    return grad_x, MlpGrads(tuple(grad_w), tuple(grad_b))


def flatten_params(mlp: Mlp) -> Tensor:
    """Concatenate all parameters, layer by layer, weights before biases."""
    parts = []
    for w, b in zip(mlp.weights, mlp.biases):
        parts.extend([w.ravel(), b.ravel()])
    return np.concatenate(parts)


def flatten_grads(grads: MlpGrads) -> Tensor:
    """Flatten gradients in :func:`flatten_params` order."""
    parts = []
    for w, b in zip(grads.weights, grads.biases):
        parts.extend([w.ravel(), b.ravel()])
    return np.concatenate(parts)


def with_params(mlp: Mlp, flat: Tensor) -> Mlp:
    """Rebuild ``mlp`` with parameters taken from a flat vector."""
    weights = []
    biases = []
    offset = 0
    for w, b in zip(mlp.weights, mlp.biases):
        weights.append(flat[offset : offset + w.size].reshape(w.shape))
        offset += w.size
        biases.append(flat[offset : offset + b.size].reshape(b.shape))
        offset += b.size
    if offset != flat.size:
        raise ShapeError(
            f"parameter vector has {flat.size} entries, MLP needs {offset}"
        )
    return Mlp(tuple(weights), tuple(biases), mlp.activation)


def numeric_gradient(
    f: Callable[[Tensor], float], x: Tensor, step: float
) -> Tensor:
    """Central differences (f(x+δ) − f(x−δ)) / 2δ for every coordinate."""
    point = np.array(x, copy=True)
    flat = point.reshape(-1)
    grad = np.empty(flat.size, dtype=flat.dtype)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = f(point)
        flat[i] = original - step
        minus = f(point)
        flat[i] = original
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise NonFiniteError(
                f"function is not finite around coordinate {i}", index=i
            )
        grad[i] = (plus - minus) / (2 * step)
    return grad.reshape(x.shape)


def relative_error(analytic: Tensor, numeric: Tensor) -> float:
    """Max over coordinates of |a−b| / max(|a|, |b|, 1e-8)."""
    if analytic.shape != numeric.shape:
        raise ShapeError(
            f"gradient shapes differ: {analytic.shape} vs {numeric.shape}"
        )
    if analytic.size == 0:
        return 0.0
    a = analytic.astype(numeric.dtype)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), REL_ERROR_FLOOR)
    return float(np.max(np.abs(a - numeric) / denom))


def fd_check(
    f: Callable[[Tensor], float],
    x: Tensor,
    analytic_grad: Tensor,
    step: float = 1e-6,
) -> float:
    """Compare an analytic gradient against central differences."""
    if not step > 0:
        raise NumericError(f"step must be positive, got {step}")
    return relative_error(
        np.asarray(analytic_grad), numeric_gradient(f, x, step)
    )
