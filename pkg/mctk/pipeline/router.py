"""Adaptive multi-condition router.

Per-channel gates over the four condition branches are computed from pooled
summaries of the backbone feature, the projected timestep and every
available branch, then used to fuse the branches residually into the
backbone feature. Batch and time are flattened into the leading BT axis.
"""

from dataclasses import dataclass, replace
from typing import Any, Optional

import numpy as np
import numpy.typing as npt

from mctk.domain.exceptions import CacheError, NumericError, ShapeError
from mctk.domain.models import (
    BRANCHES,
    ConditionSet,
    GateStack,
    RouterConfig,
    Tensor,
    TimestepEmbedding,
)
from mctk.pipeline.numerics import (
    EXTENDED,
    MASK_LOGIT,
    MlpCache,
    MlpGrads,
    fd_check,
    flatten_grads,
    flatten_params,
    gap,
    gap_backward,
    init_mlp,
    mlp_backward,
    mlp_forward_cached,
    softmax,
    with_params,
)
from mctk.pipeline.schedule import timestep_embed
from mctk.util import get_logger

logger = get_logger("router")


@dataclass(frozen=True, slots=True, eq=False)
class RouterCache:
    """Everything :func:`router_backward` needs from the forward pass."""

    cfg: RouterConfig
    h: Tensor
    conds: ConditionSet
    t_emb: Tensor
    gates: GateStack
    psi_cache: MlpCache


@dataclass(frozen=True, slots=True, eq=False)
class RouterGrads:
    """Gradients of a scalar objective with respect to router inputs."""

    h: Tensor
    features: dict[str, Tensor]
    t_emb: Tensor
    psi: MlpGrads


def build_router(
    channels: int,
    seed: int,
    hidden_layers: int = 2,
    hidden_factor: int = 4,
    mask_logit: float = MASK_LOGIT,
    dtype: npt.DTypeLike = np.float32,
) -> RouterConfig:
    """Seeded router with ψ: 6C → (hidden_factor·C)×hidden_layers → 4C."""
    if channels < 1:
        raise NumericError(f"channels must be positive, got {channels}")
    n = len(BRANCHES)
    dims = (
        [(2 + n) * channels]
        + [hidden_factor * channels] * hidden_layers
        + [n * channels]
    )
    psi = init_mlp(dims, seed, "silu", dtype)
    return RouterConfig(channels=channels, psi=psi, mask_logit=mask_logit)


def router_header(cfg: RouterConfig) -> dict[str, Any]:
    """JSON-serialisable description of a router's fixed structure."""
    return {
        "channels": cfg.channels,
        "mask_logit": cfg.mask_logit,
        "branches": list(cfg.branches),
        "activation": cfg.psi.activation,
        "widths": list(cfg.psi.dims),
        "concat_order": ["u", "t"] + [f"s_{k}" for k in cfg.branches],
    }


def _check_inputs(h: Tensor, conds: ConditionSet, cfg: RouterConfig) -> None:
    if h.ndim != 4 or h.shape[1] != cfg.channels:
        raise ShapeError(
            f"backbone feature must be BT×{cfg.channels}×h×w, "
            f"got {tuple(h.shape)}"
        )
    for name in conds.alive:
        f = conds.features[name]
        if f.shape != h.shape:
            raise ShapeError(
                f"{name} feature {tuple(f.shape)} does not match "
                f"backbone feature {tuple(h.shape)}"
            )


def _route(
    h: Tensor, conds: ConditionSet, t_emb: Tensor, cfg: RouterConfig
) -> tuple[GateStack, MlpCache]:
    _check_inputs(h, conds, cfg)
    if t_emb.shape != (cfg.channels,):
        raise ShapeError(
            f"timestep embedding must have length {cfg.channels}, "
            f"got {tuple(t_emb.shape)}"
        )
    bt, c = h.shape[:2]
    n = len(cfg.branches)
    parts = [gap(h), np.broadcast_to(t_emb.astype(h.dtype), (bt, c))]
    for name, on in zip(cfg.branches, conds.mask):
        # masked data must never reach ψ, not even through its summary
        if on:
            parts.append(gap(conds.features[name]).astype(h.dtype))
        else:
            parts.append(np.zeros((bt, c), dtype=h.dtype))
    x = np.concatenate(parts, axis=1)
    flat, psi_cache = mlp_forward_cached(cfg.psi, x)
    logits = flat.reshape(bt, n, c).astype(h.dtype)
    dead = ~np.asarray(conds.mask, dtype=bool)
    logits = np.where(dead[None, :, None], cfg.mask_logit, logits)
    result = softmax(logits, axis=1, mask_value=cfg.mask_logit)
    fully = bool(np.all(result.fully_masked))
    return GateStack(gates=result.values, fully_masked=fully), psi_cache


def route_gates(
    h: Tensor, conds: ConditionSet, t_emb: Tensor, cfg: RouterConfig
) -> GateStack:
    """Per-channel softmax gates over the branches, masked branches at 0."""
    return _route(h, conds, t_emb, cfg)[0]


def fuse(h: Tensor, conds: ConditionSet, gates: GateStack) -> Tensor:
    """h̃ = h + Σ_k g_k ⊙ F_k over the available branches."""
    expected = (h.shape[0], len(BRANCHES), h.shape[1])
    if gates.gates.shape != expected:
        raise ShapeError(
            f"gates {tuple(gates.gates.shape)} do not match {expected}"
        )
    out = h.copy()
    if gates.fully_masked:
        return out
    for i, name in enumerate(BRANCHES):
        if conds.mask[i]:
            g = gates.gates[:, i, :, None, None]
            out = out + g * conds.features[name]
    return out.astype(h.dtype)


def additive_fuse(h: Tensor, conds: ConditionSet) -> Tensor:
    """Ungated baseline: h + Σ F_k over the available branches."""
    out = h.copy()
    for name in conds.alive:
        f = conds.features[name]
        if f.shape != h.shape:
            raise ShapeError(
                f"{name} feature {tuple(f.shape)} does not match "
                f"backbone feature {tuple(h.shape)}"
            )
        out = out + f
    return out.astype(h.dtype)


def route_embedded(
    h: Tensor, conds: ConditionSet, t_emb: Tensor, cfg: RouterConfig
) -> tuple[Tensor, GateStack, RouterCache]:
    """Route and fuse with an already projected timestep embedding."""
    gates, psi_cache = _route(h, conds, t_emb, cfg)
    fused = fuse(h, conds, gates)
    cache = RouterCache(cfg, h, conds, t_emb, gates, psi_cache)
    return fused, gates, cache


def router_forward(
    h: Tensor,
    conds: ConditionSet,
    t: int,
    sched_emb: TimestepEmbedding,
    cfg: RouterConfig,
) -> tuple[Tensor, GateStack, RouterCache]:
    """Embed ``t``, route, fuse, and keep a cache for the backward pass."""
    t_emb = timestep_embed(t, sched_emb).astype(h.dtype)
    fused, gates, cache = route_embedded(h, conds, t_emb, cfg)
    logger.debug(
        "routed %s with mask %s at t=%d (fully masked: %s)",
        tuple(h.shape),
        conds.mask,
        t,
        gates.fully_masked,
    )
    return fused, gates, cache


def router_backward(
    cache: Optional[RouterCache], grad_out: Tensor
) -> RouterGrads:
    """Reverse-mode gradients through fuse, softmax, ψ and both gap paths."""
    if cache is None:
        raise CacheError("router_backward called without a forward cache")
    h = cache.h
    if grad_out.shape != h.shape:
        raise CacheError(
            f"stale cache: gradient {tuple(grad_out.shape)} does not match "
            f"cached feature {tuple(h.shape)}"
        )
    cfg = cache.cfg
    conds = cache.conds
    gates = cache.gates.gates
    bt, c, hh, ww = h.shape
    n = len(cfg.branches)

    grad_h = grad_out.copy()
    grad_f: dict[str, Tensor] = {}
    grad_g = np.zeros_like(gates)
    for i, name in enumerate(cfg.branches):
        if conds.mask[i]:
            f = conds.features[name]
            grad_f[name] = gates[:, i, :, None, None] * grad_out
            grad_g[:, i, :] = np.sum(grad_out * f, axis=(-2, -1))
        else:
            grad_f[name] = np.zeros_like(h)

    inner = np.sum(gates * grad_g, axis=1, keepdims=True)
    grad_logits = gates * (grad_g - inner)
    dead = ~np.asarray(conds.mask, dtype=bool)
    grad_logits[:, dead, :] = 0

    grad_x, psi_grads = mlp_backward(
        cfg.psi, cache.psi_cache, grad_logits.reshape(bt, n * c)
    )
    grad_h = grad_h + gap_backward(grad_x[:, :c], (hh, ww))
    grad_t = np.sum(grad_x[:, c : 2 * c], axis=0)
    for i, name in enumerate(cfg.branches):
        if conds.mask[i]:
            s = grad_x[:, (2 + i) * c : (3 + i) * c]
            grad_f[name] = grad_f[name] + gap_backward(s, (hh, ww))
    return RouterGrads(h=grad_h, features=grad_f, t_emb=grad_t, psi=psi_grads)


def sample_condition_dropout(
    seed: int, p: float
) -> tuple[bool, bool, bool, bool]:
    """Drop each branch independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise NumericError(f"dropout probability must be in [0, 1], got {p}")
    keep = np.random.default_rng(seed).random(len(BRANCHES)) >= p
    a, b, c, d = (bool(v) for v in keep)
    return a, b, c, d


@dataclass(frozen=True, slots=True, eq=False)
class GradcheckReport:
    """Per-input maximum relative error of the router's analytic gradients."""

    seed: int
    step: float
    mask: tuple[bool, bool, bool, bool]
    coordinates: int
    errors: dict[str, float]

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def gradcheck_router(
    seed: int,
    step: float = 1e-6,
    channels: int = 4,
    spatial: tuple[int, int] = (3, 3),
    batch: int = 2,
    mask: Optional[tuple[bool, bool, bool, bool]] = None,
) -> GradcheckReport:
    """Check router_backward against central differences on a seeded case.

    The objective is Σ h̃ ⊙ R for a random R. Analytic gradients use
    float64; the difference quotients evaluate the objective in extended
    precision. Without an explicit ``mask`` one is drawn with at least one
    branch alive.
    """
    rng = np.random.default_rng(seed)
    n = len(BRANCHES)
    if mask is None:
        keep = rng.random(n) < 0.75
        if not keep.any():
            keep[rng.integers(n)] = True
        a, b, c, d = (bool(v) for v in keep)
        mask = (a, b, c, d)
    shape = (batch, channels) + tuple(spatial)
    h = rng.standard_normal(shape)
    feats = {k: rng.standard_normal(shape) for k in BRANCHES}
    t_emb = rng.standard_normal(channels)
    target = rng.standard_normal(shape)
    cfg = build_router(channels, seed, dtype=np.float64)

    _, _, cache = route_embedded(h, ConditionSet(feats, mask), t_emb, cfg)
    grads = router_backward(cache, target)

    h_x = h.astype(EXTENDED)
    t_x = t_emb.astype(EXTENDED)
    target_x = target.astype(EXTENDED)
    feats_x = {k: v.astype(EXTENDED) for k, v in feats.items()}
    cfg_x = replace(cfg, psi=cfg.psi.astype(EXTENDED))

    def objective(
        h_: Tensor, feats_: dict[str, Tensor], t_: Tensor, cfg_: RouterConfig
    ) -> Any:
        fused, _, _ = route_embedded(h_, ConditionSet(feats_, mask), t_, cfg_)
        return np.sum(fused * target_x)

    errors = {
        "h": fd_check(
            lambda x: objective(x, feats_x, t_x, cfg_x), h_x, grads.h, step
        ),
        "t_emb": fd_check(
            lambda x: objective(h_x, feats_x, x, cfg_x), t_x, grads.t_emb, step
        ),
    }
    for name in BRANCHES:
        errors[name] = fd_check(
            lambda x, k=name: objective(h_x, {**feats_x, k: x}, t_x, cfg_x),
            feats_x[name],
            grads.features[name],
            step,
        )
    params = flatten_params(cfg_x.psi)
    errors["psi"] = fd_check(
        lambda x: objective(
            h_x, feats_x, t_x, replace(cfg_x, psi=with_params(cfg_x.psi, x))
        ),
        params,
        flatten_grads(grads.psi),
        step,
    )
    coordinates = h.size * (1 + n) + t_emb.size + params.size
    logger.debug("router gradcheck seed=%d errors=%s", seed, errors)
    return GradcheckReport(seed, step, mask, coordinates, errors)
