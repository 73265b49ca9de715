"""Condition featurizers: audio windows, keypoint maps and patch adapters.

Every adapter is one seeded affine projection. Image-like inputs share the
projection across non-overlapping patches; audio windows are projected
straight onto the whole latent grid.
"""

from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt

from mctk.domain.exceptions import NumericError, ShapeError, UsageError
from mctk.domain.models import (
    BRANCHES,
    Adapter,
    AudioTrack,
    AudioWindows,
    ConditionSet,
    Tensor,
)
from mctk.pipeline.numerics import init_mlp, matmul
from mctk.util import get_logger

logger = get_logger("conditioning")


def build_audio_windows(track: AudioTrack, m: int) -> AudioWindows:
    """Centred windows of 2m+1 frames, replicating edge frames at the ends."""
    if m < 0:
        raise NumericError(f"window half-width must be >= 0, got {m}")
    t = np.arange(track.frames)
    offsets = np.arange(-m, m + 1)
    index = np.clip(t[:, None] + offsets[None, :], 0, track.frames - 1)
    return AudioWindows(windows=track.features[index], m=m)


def _affine(
    in_features: int, out_features: int, seed: int, dtype: npt.DTypeLike
) -> tuple[Tensor, Tensor]:
    layer = init_mlp((in_features, out_features), seed, "linear", dtype)
    return layer.weights[0], layer.biases[0]


def init_patch_adapter(
    in_channels: int,
    patch_size: int,
    out_channels: int,
    grid: tuple[int, int],
    seed: int,
    dtype: npt.DTypeLike = np.float32,
) -> Adapter:
    """Seeded patch projection Cin·p·p → C for a fixed output grid."""
    if patch_size < 1 or in_channels < 1 or out_channels < 1:
        raise NumericError("adapter sizes must be positive")
    in_features = in_channels * patch_size * patch_size
    weight, bias = _affine(in_features, out_channels, seed, dtype)
    return Adapter(
        kind="patch",
        patch_size=patch_size,
        in_features=in_features,
        out_channels=out_channels,
        grid=grid,
        weight=weight,
        bias=bias,
    )


def init_audio_adapter(
    window: int,
    tokens: int,
    audio_channels: int,
    out_channels: int,
    grid: tuple[int, int],
    seed: int,
    dtype: npt.DTypeLike = np.float32,
) -> Adapter:
    """Seeded projection of a flattened W×L×C_a window onto C×h×w."""
    h, w = grid
    in_features = window * tokens * audio_channels
    weight, bias = _affine(in_features, out_channels * h * w, seed, dtype)
    return Adapter(
        kind="audio",
        patch_size=1,
        in_features=in_features,
        out_channels=out_channels,
        grid=grid,
        weight=weight,
        bias=bias,
    )


def audio_to_spatial(windows: AudioWindows, adapter: Adapter) -> Tensor:
    """Project each frame's window to a C×h×w latent."""
    if adapter.kind != "audio":
        raise ShapeError(f"expected an audio adapter, got {adapter.kind!r}")
    t = windows.windows.shape[0]
    flat = windows.windows.reshape(t, -1)
    if flat.shape[1] != adapter.in_features:
        raise ShapeError(
            f"audio window flattens to {flat.shape[1]} values, adapter "
            f"expects {adapter.in_features}"
        )
    h, w = adapter.grid
    out = matmul(flat.astype(adapter.weight.dtype), adapter.weight)
    out = out + adapter.bias
    return out.reshape(t, adapter.out_channels, h, w)


def rasterize_keypoints(
    kps: Tensor, size: tuple[int, int], sigma: float
) -> Tensor:
    """Sum of unit-peak Gaussian splats at pixel centres, clamped to [0, 1]."""
    if not sigma > 0:
        raise NumericError(f"splat sigma must be positive, got {sigma}")
    h, w = size
    points = np.asarray(kps, dtype=np.float64).reshape(-1, 2)
    if points.shape[0] == 0:
        return np.zeros((1, h, w), dtype=np.float32)
    px = np.arange(w) + 0.5
    py = np.arange(h) + 0.5
    scale = -0.5 / (sigma * sigma)
    gx = np.exp(scale * (px[None, :] - points[:, 0:1]) ** 2)
    gy = np.exp(scale * (py[None, :] - points[:, 1:2]) ** 2)
    heat = matmul(gy.T, gx)
    return np.clip(heat, 0.0, 1.0).astype(np.float32)[None]


def patch_embed(image: Tensor, adapter: Adapter) -> Tensor:
    """Project non-overlapping p×p patches; patch (i, j) fills cell (i, j)."""
    if adapter.kind != "patch":
        raise ShapeError(f"expected a patch adapter, got {adapter.kind!r}")
    if image.ndim != 3:
        raise ShapeError(f"image must be Cin×H×W, got {tuple(image.shape)}")
    cin, height, width = image.shape
    p = adapter.patch_size
    if height % p or width % p:
        raise ShapeError(
            f"image {height}×{width} is not divisible by patch size {p}"
        )
    h, w = height // p, width // p
    if (h, w) != tuple(adapter.grid):
        raise ShapeError(
            f"image yields a {h}×{w} grid, adapter expects {adapter.grid}"
        )
    if cin * p * p != adapter.in_features:
        raise ShapeError(
            f"{cin}-channel patches have {cin * p * p} values, adapter "
            f"expects {adapter.in_features}"
        )
    patches = image.reshape(cin, h, p, w, p).transpose(1, 3, 0, 2, 4)
    patches = patches.reshape(h * w, adapter.in_features)
    out = matmul(patches.astype(adapter.weight.dtype), adapter.weight)
    out = out + adapter.bias
    return out.reshape(h, w, adapter.out_channels).transpose(2, 0, 1).copy()


def make_condition_set(
    reference: Optional[Tensor],
    shading_frames: Optional[Tensor],
    keypoint_maps: Optional[Tensor],
    audio_latent: Optional[Tensor],
    mask: Optional[Sequence[bool]] = None,
) -> list[ConditionSet]:
    """Per-frame condition sets in branch order.

    ``reference`` is one C×h×w latent shared by every frame; the other
    inputs are T×C×h×w. Absent inputs become masked zero placeholders, and
    ``mask`` can additionally switch off present branches.
    """
    series = {
        "shading": shading_frames,
        "motion": keypoint_maps,
        "audio": audio_latent,
    }
    lengths = {k: v.shape[0] for k, v in series.items() if v is not None}
    if len(set(lengths.values())) > 1:
        raise ShapeError(f"condition frame counts differ: {lengths}")
    frames = next(iter(lengths.values()), 1)

    shapes = {
        k: tuple(v.shape[1:]) for k, v in series.items() if v is not None
    }
    if reference is not None:
        shapes["reference"] = tuple(reference.shape)
    if len(set(shapes.values())) > 1:
        raise ShapeError(f"condition latents differ in shape: {shapes}")
    if not shapes:
        raise ShapeError("at least one condition input is required")
    latent = next(iter(shapes.values()))
    if len(latent) != 3:
        raise ShapeError(f"latents must be C×h×w, got {latent}")

    present = tuple(
        (reference if k == "reference" else series[k]) is not None
        for k in BRANCHES
    )
    wanted = tuple(bool(v) for v in mask) if mask is not None else present
    if len(wanted) != len(BRANCHES):
        raise UsageError(f"mask needs {len(BRANCHES)} entries")
    for name, want, have in zip(BRANCHES, wanted, present):
        if want and not have:
            raise UsageError(f"branch {name!r} is enabled but not provided")
    a, b, c, d = wanted

    dtype = np.result_type(
        *[v for v in [reference, *series.values()] if v is not None]
    )
    placeholder = np.zeros(latent, dtype=dtype)
    shared = reference if reference is not None else placeholder
    sets = []
    for t in range(frames):
        features = {"reference": shared}
        for name, value in series.items():
            features[name] = placeholder if value is None else value[t]
        sets.append(ConditionSet(features=features, mask=(a, b, c, d)))
    logger.debug("built %d condition sets with mask %s", frames, wanted)
    return sets


def batch_conditions(sets: Sequence[ConditionSet]) -> ConditionSet:
    """Stack per-frame condition sets along a leading BT axis."""
    if not sets:
        raise ShapeError("cannot batch an empty list of condition sets")
    mask = sets[0].mask
    if any(s.mask != mask for s in sets):
        raise ShapeError("condition sets in a batch must share one mask")
    features = {
        k: np.stack([s.features[k] for s in sets]) for k in BRANCHES
    }
    return ConditionSet(features=features, mask=mask)
