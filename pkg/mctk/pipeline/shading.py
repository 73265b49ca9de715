"""Spherical-harmonics shading and a deterministic z-buffer rasterizer.

SH basis order: [Y₀⁰, Y₁⁻¹, Y₁⁰, Y₁¹, Y₂⁻², Y₂⁻¹, Y₂⁰, Y₂¹, Y₂²], real and
orthonormal on the unit sphere. Pixel centres sit at (x+0.5, y+0.5); edge
ties follow the top-left rule; faces with non-positive signed area in image
space are culled.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from mctk.domain.exceptions import NumericError, ShapeError
from mctk.domain.models import (
    HeadAsset,
    HeadParams,
    ShadingFrame,
    ShLight,
    Tensor,
)
from mctk.pipeline.headmodel import (
    apply_pose,
    blendshape,
    project_weak_perspective,
    vertex_normals,
)
from mctk.pipeline.numerics import matmul
from mctk.util import get_logger

logger = get_logger("shading")

SH_C0 = 0.5 / math.sqrt(math.pi)
SH_C1 = math.sqrt(3.0 / (4.0 * math.pi))
SH_C2 = math.sqrt(15.0 / (4.0 * math.pi))
SH_C20 = math.sqrt(5.0 / (16.0 * math.pi))
SH_C22 = math.sqrt(15.0 / (16.0 * math.pi))

# clamped-cosine convolution per band
LAMBERT_BANDS = np.array(
    [math.pi] + [2.0 * math.pi / 3.0] * 3 + [math.pi / 4.0] * 5
)
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
UNIT_TOLERANCE = 1e-4


def sh_basis(normal: Tensor) -> Tensor:
    """Nine real SH basis values for each unit normal in ``normal[..., 3]``."""
    n = np.asarray(normal, dtype=np.float64)
    if n.shape[-1:] != (3,):
        raise ShapeError(f"normals must end in 3 components, got {n.shape}")
    length = np.linalg.norm(n, axis=-1)
    if np.any(np.abs(length - 1.0) > UNIT_TOLERANCE):
        raise NumericError("sh_basis requires unit-length normals")
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    return np.stack(
        [
            np.full_like(x, SH_C0),
            SH_C1 * y,
            SH_C1 * z,
            SH_C1 * x,
            SH_C2 * x * y,
            SH_C2 * y * z,
            SH_C20 * (3.0 * z * z - 1.0),
            SH_C2 * x * z,
            SH_C22 * (x * x - y * y),
        ],
        axis=-1,
    )


def sh_irradiance(normal: Tensor, light: ShLight) -> Tensor:
    """Per-channel dot product of the SH basis with the light; unclamped."""
    basis = sh_basis(normal)
    flat = matmul(basis.reshape(-1, 9), light.coeffs.astype(np.float64))
    return flat.reshape(basis.shape[:-1] + (3,))


def directional_light(
    direction: Sequence[float],
    intensity: float = 1.0,
    ambient: float = 0.0,
    color: Sequence[float] = (1.0, 1.0, 1.0),
) -> ShLight:
    """SH coefficients of a distant directional light on a Lambertian surface.

    ``direction`` points from the surface toward the light. ``ambient`` adds
    a constant irradiance through the DC term.
    """
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if d.shape != (3,) or norm == 0:
        raise NumericError("light direction must be a non-zero 3-vector")
    basis = sh_basis(d / norm)
    rgb = np.asarray(color, dtype=np.float64)
    coeffs = (LAMBERT_BANDS * basis * intensity)[:, None] * rgb[None, :]
    coeffs[0] += ambient * rgb / SH_C0
    return ShLight(coeffs=coeffs)


def _top_left(ax: float, ay: float, bx: float, by: float) -> bool:
    dy = by - ay
    return dy > 0 or (dy == 0 and bx - ax < 0)


def rasterize(
    xy_pixels: Tensor,
    depth: Tensor,
    faces: Tensor,
    vertex_rgb: Tensor,
    size: tuple[int, int],
) -> ShadingFrame:
    """Z-buffer rasterization with barycentric colour interpolation.

    Faces are visited in order; a pixel takes a face only when its
    interpolated depth is strictly nearer than what is already stored.
    """
    h, w = size
    if h < 1 or w < 1:
        raise NumericError(f"image size must be positive, got {size}")
    xy = np.asarray(xy_pixels, dtype=np.float64)
    zv = np.asarray(depth, dtype=np.float64)
    rgb = np.asarray(vertex_rgb, dtype=np.float64)
    tri = np.asarray(faces, dtype=np.int64)
    nv = xy.shape[0]
    if tri.size and (tri.min() < 0 or tri.max() >= nv):
        raise NumericError(f"face index out of range for {nv} vertices")
    channels = rgb.shape[1]
    zbuf = np.full((h, w), np.inf)
    color = np.zeros((h, w, channels))

    for i0, i1, i2 in tri:
        x0, y0 = xy[i0]
        x1, y1 = xy[i1]
        x2, y2 = xy[i2]
        area = (x2 - x0) * (y1 - y0) - (x1 - x0) * (y2 - y0)
        if not area > 0:
            continue
        # one pixel of slack so rounding can never hide a covered centre
        lo_x = max(int(math.floor(min(x0, x1, x2))) - 1, 0)
        hi_x = min(int(math.ceil(max(x0, x1, x2))) + 1, w - 1)
        lo_y = max(int(math.floor(min(y0, y1, y2))) - 1, 0)
        hi_y = min(int(math.ceil(max(y0, y1, y2))) + 1, h - 1)
        if lo_x > hi_x or lo_y > hi_y:
            continue
        px = (np.arange(lo_x, hi_x + 1) + 0.5)[None, :]
        py = (np.arange(lo_y, hi_y + 1) + 0.5)[:, None]
        w0 = (px - x1) * (y2 - y1) - (py - y1) * (x2 - x1)
        w1 = (px - x2) * (y0 - y2) - (py - y2) * (x0 - x2)
        w2 = (px - x0) * (y1 - y0) - (py - y0) * (x1 - x0)
        inside = (
            ((w0 > 0) | ((w0 == 0) & _top_left(x1, y1, x2, y2)))
            & ((w1 > 0) | ((w1 == 0) & _top_left(x2, y2, x0, y0)))
            & ((w2 > 0) | ((w2 == 0) & _top_left(x0, y0, x1, y1)))
        )
        if not inside.any():
            continue
        b0, b1, b2 = w0 / area, w1 / area, w2 / area
        z = b0 * zv[i0] + b1 * zv[i1] + b2 * zv[i2]
        region = zbuf[lo_y : hi_y + 1, lo_x : hi_x + 1]
        take = inside & (z < region)
        region[take] = z[take]
        patch = color[lo_y : hi_y + 1, lo_x : hi_x + 1]
        for ch in range(channels):
            value = b0 * rgb[i0, ch] + b1 * rgb[i1, ch] + b2 * rgb[i2, ch]
            patch[..., ch][take] = value[take]

    coverage = np.isfinite(zbuf)
    pixels = np.clip(color, 0.0, 1.0).astype(np.float32)
    return ShadingFrame(
        pixels=pixels, depth=zbuf.astype(np.float32), coverage=coverage
    )


def render_shading(
    asset: HeadAsset, params: HeadParams, size: tuple[int, int]
) -> ShadingFrame:
    """Render the posed, SH-lit head: the shading map of one frame."""
    vertices = blendshape(asset, params.shape, params.exp)
    posed = apply_pose(vertices, asset, params.head_rot, params.jaw)
    normals = vertex_normals(posed, asset.faces)
    rgb = sh_irradiance(normals, ShLight.from_vector(params.light))
    xy, depth = project_weak_perspective(posed, params.camera, size)
    return rasterize(xy, depth, asset.faces, rgb, size)


def render_frames(
    asset: HeadAsset,
    params: Sequence[HeadParams],
    size: tuple[int, int],
    threads: int = 1,
) -> list[ShadingFrame]:
    """Render a sequence; each frame is rasterized by exactly one worker."""
    if threads < 1:
        raise NumericError(f"worker count must be positive, got {threads}")
    logger.debug(
        "rendering %d frames at %s on %d workers", len(params), size, threads
    )
    if threads == 1:
        return [render_shading(asset, p, size) for p in params]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda p: render_shading(asset, p, size), params))


def to_luminance(frame: ShadingFrame) -> Tensor:
    """Single-channel shading: 0.299 R + 0.587 G + 0.114 B."""
    rgb = frame.pixels.astype(np.float64)
    luma = rgb[..., 0] * LUMA_WEIGHTS[0] + rgb[..., 1] * LUMA_WEIGHTS[1]
    luma = luma + rgb[..., 2] * LUMA_WEIGHTS[2]
    return np.clip(luma, 0.0, 1.0).astype(np.float32)


def frame_image(frame: ShadingFrame, mode: str = "rgb") -> Tensor:
    """Pixels for export: H×W×3 for ``rgb``, H×W for ``luma``."""
    if mode == "rgb":
        return frame.pixels
    if mode == "luma":
        return to_luminance(frame)
    raise NumericError(f"unknown shading mode {mode!r}")

