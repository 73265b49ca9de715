"""Diffusion schedule math: ᾱ_t, forward noising, timestep embedding, loss."""

import math

import numpy as np
import numpy.typing as npt

from mctk.domain.exceptions import NumericError, ShapeError
from mctk.domain.models import NoiseSchedule, Tensor, TimestepEmbedding
from mctk.pipeline.numerics import init_mlp, mlp_forward

EMBED_BASE = 10000.0


def make_schedule(beta: Tensor) -> NoiseSchedule:
    """Build a schedule from β_1..β_T, each strictly inside (0, 1)."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 1 or beta.size < 1:
        raise ShapeError(f"beta must be a non-empty vector, got {beta.shape}")
    if np.any(beta <= 0) or np.any(beta >= 1):
        raise NumericError("every beta must lie strictly inside (0, 1)")
    return NoiseSchedule(beta=beta, alpha_bar=np.cumprod(1.0 - beta))


def linear_schedule(
    steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02
) -> NoiseSchedule:
    """Linear β ramp, the DDPM default."""
    if steps < 1:
        raise NumericError(f"schedule needs at least one step, got {steps}")
    return make_schedule(np.linspace(beta_start, beta_end, steps))


def alpha_bar_at(sched: NoiseSchedule, t: int) -> float:
    """ᾱ_t for a 1-based timestep."""
    if not 1 <= t <= sched.steps:
        raise NumericError(f"timestep {t} outside [1, {sched.steps}]")
    return float(sched.alpha_bar[t - 1])


def forward_noise(
    z0: Tensor, t: int, eps: Tensor, sched: NoiseSchedule
) -> Tensor:
    """z_t = √ᾱ_t·z0 + √(1−ᾱ_t)·ε."""
    if z0.shape != eps.shape:
        raise ShapeError(
            f"z0 {tuple(z0.shape)} and eps {tuple(eps.shape)} differ"
        )
    a = alpha_bar_at(sched, t)
    return (math.sqrt(a) * z0 + math.sqrt(1.0 - a) * eps).astype(z0.dtype)


def svd_loss(eps: Tensor, eps_pred: Tensor) -> float:
    """Mean squared error between true and predicted noise."""
    if eps.shape != eps_pred.shape:
        raise ShapeError(
            f"eps {tuple(eps.shape)} and prediction "
            f"{tuple(eps_pred.shape)} differ"
        )
    diff = np.asarray(eps, dtype=np.float64) - eps_pred
    return float(np.mean(diff * diff))


def init_timestep_embedding(
    dim: int, channels: int, seed: int, dtype: npt.DTypeLike = np.float32
) -> TimestepEmbedding:
    """Sinusoidal embedding with a seeded linear projection φ to C."""
    projection = init_mlp((dim, channels), seed, "linear", dtype)
    return TimestepEmbedding(dim=dim, projection=projection)


def sinusoidal_features(t: int, dim: int) -> Tensor:
    """[sin(t·f_i), cos(t·f_i)] over a geometric frequency ladder."""
    if t < 0:
        raise NumericError(f"timestep must be non-negative, got {t}")
    half = dim // 2
    freqs = np.exp(-math.log(EMBED_BASE) * np.arange(half) / half)
    args = float(t) * freqs
    return np.concatenate([np.sin(args), np.cos(args)])


def timestep_embed(t: int, emb: TimestepEmbedding) -> Tensor:
    """Project the sinusoidal features of ``t`` to the router width C."""
    dtype = emb.projection.dtype
    features = sinusoidal_features(t, emb.dim).astype(dtype)
    return mlp_forward(emb.projection, features)
