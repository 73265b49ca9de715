"""Mouth-crop operator, proxy lip features and the lip-consistency loss.

The crop box is derived from ground-truth landmarks only and applied
identically to predicted and ground-truth frames.
"""

import math
from typing import Optional

import numpy as np

from mctk.domain.exceptions import (
    NonFiniteError,
    NumericError,
    ShapeError,
    UsageError,
)
from mctk.domain.models import LandmarkTrack, LipEncoder, MouthBox, Tensor
from mctk.util import get_logger

logger = get_logger("liploss")

LIP_SIZE = 224
PROXY_GRID = 14
PROXY_ENCODER = LipEncoder(name="proxy-block14", dim=PROXY_GRID * PROXY_GRID)
LUMA = (0.299, 0.587, 0.114)


def stable_mouth_bbox(
    track: LandmarkTrack, pad: float, image_size: tuple[int, int]
) -> MouthBox:
    """Union of every frame's mouth box, padded, clamped, rounded outward.

    ``pad`` is a fraction of the union's width (height) added on each side.
    """
    if not track.mouth_indices:
        raise NumericError("landmark track has an empty mouth index set")
    if track.frames < 1:
        raise ShapeError("landmark track has no frames")
    if pad < 0:
        raise NumericError(f"mouth pad must be >= 0, got {pad}")
    pts = track.points[:, list(track.mouth_indices), :].reshape(-1, 2)
    xmin, ymin = (float(v) for v in pts.min(axis=0))
    xmax, ymax = (float(v) for v in pts.max(axis=0))
    dx = pad * (xmax - xmin)
    dy = pad * (ymax - ymin)
    h, w = image_size
    x0 = max(math.floor(xmin - dx), 0)
    y0 = max(math.floor(ymin - dy), 0)
    x1 = min(math.floor(xmax + dx) + 1, w)
    y1 = min(math.floor(ymax + dy) + 1, h)
    if x0 >= x1 or y0 >= y1:
        raise UsageError(
            f"mouth landmarks lie outside the {w}×{h} frame "
            f"(x {xmin:g}..{xmax:g}, y {ymin:g}..{ymax:g})"
        )
    return MouthBox(x0=x0, y0=y0, x1=x1, y1=y1)


def _axis_weights(
    in_size: int, out_size: int
) -> tuple[Tensor, Tensor, Tensor]:
    # half-pixel centres: src = (dst + 0.5) * in/out - 0.5, clamped
    scale = in_size / out_size
    src = (np.arange(out_size) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    return lo, hi, src - lo


def resize_bilinear(images: Tensor, size: tuple[int, int]) -> Tensor:
    """Bilinear resize over the last two axes (align-corners off)."""
    if images.ndim < 2:
        raise ShapeError(f"need at least two axes, got {images.shape}")
    oh, ow = size
    if oh < 1 or ow < 1:
        raise NumericError(f"resize target must be positive, got {size}")
    x = np.asarray(images, dtype=np.float64)
    ylo, yhi, fy = _axis_weights(x.shape[-2], oh)
    xlo, xhi, fx = _axis_weights(x.shape[-1], ow)
    fy = fy[:, None]
    rows = x[..., ylo, :] * (1.0 - fy) + x[..., yhi, :] * fy
    return rows[..., xlo] * (1.0 - fx) + rows[..., xhi] * fx


def crop_resize(
    frames: Tensor, box: MouthBox, size: int = LIP_SIZE
) -> Tensor:
    """Crop every frame to ``box`` and resize to ``size``×``size``."""
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ShapeError(f"frames must be T×3×H×W, got {frames.shape}")
    h, w = frames.shape[2:]
    if box.x0 < 0 or box.y0 < 0 or box.x1 > w or box.y1 > h:
        raise NumericError(f"mouth box {box} exceeds {h}×{w} frames")
    crop = frames[:, :, box.y0 : box.y1, box.x0 : box.x1]
    return resize_bilinear(crop, (size, size))


def proxy_lip_features(
    crops: Tensor, encoder: LipEncoder = PROXY_ENCODER
) -> Tensor:
    """Grayscale, 14×14 block means, flattened and mean-centred per frame."""
    if crops.ndim != 4 or crops.shape[1] != 3:
        raise ShapeError(f"crops must be T×3×S×S, got {crops.shape}")
    t, _, h, w = crops.shape
    grid = math.isqrt(encoder.dim)
    if grid * grid != encoder.dim or h != w or h % grid:
        raise ShapeError(
            f"{h}×{w} crops cannot be pooled to {encoder.dim} features"
        )
    x = np.asarray(crops, dtype=np.float64)
    gray = x[:, 0] * LUMA[0] + x[:, 1] * LUMA[1] + x[:, 2] * LUMA[2]
    b = h // grid
    blocks = gray.reshape(t, grid, b, grid, b).mean(axis=(2, 4))
    flat = blocks.reshape(t, encoder.dim)
    return flat - flat.mean(axis=1, keepdims=True)


def lip_consistency_loss(f_pred: Tensor, f_gt: Tensor) -> float:
    """1 − mean cosine similarity over frames; zero vectors count as cos 0."""
    if f_pred.shape != f_gt.shape or f_pred.ndim != 2 or not len(f_pred):
        raise ShapeError(
            f"feature shapes {tuple(f_pred.shape)} and "
            f"{tuple(f_gt.shape)} must be equal and T′×D with T′ ≥ 1"
        )
    a = np.asarray(f_pred, dtype=np.float64)
    b = np.asarray(f_gt, dtype=np.float64)
    norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    dots = np.sum(a * b, axis=1)
    cos = np.where(norms > 0, dots / np.where(norms > 0, norms, 1.0), 0.0)
    cos = np.clip(cos, -1.0, 1.0)
    return float(1.0 - np.mean(cos))


def total_loss(l_svd: float, l_app: float, l_lip: float) -> float:
    """Unweighted sum of the denoising, appearance and lip terms."""
    terms = (l_svd, l_app, l_lip)
    if not all(math.isfinite(v) for v in terms):
        raise NonFiniteError(f"loss terms must be finite, got {terms}")
    return l_svd + l_app + l_lip


def sample_supervision_frames(
    frames: int, t_prime: int = 2, seed: int = 0
) -> Tensor:
    """``t_prime`` distinct frame indices drawn without replacement, sorted."""
    if not 1 <= t_prime <= frames:
        raise UsageError(
            f"cannot sample {t_prime} supervision frames from {frames}"
        )
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(frames, size=t_prime, replace=False))


def lip_loss_from_frames(
    pred: Tensor,
    gt: Tensor,
    track: Optional[LandmarkTrack],
    pad: float = 0.1,
    t_prime: int = 2,
    seed: int = 0,
    size: int = LIP_SIZE,
    indices: Optional[Tensor] = None,
) -> float:
    """Crop both clips with the ground-truth box and compare lip features.

    Without a landmark track the whole frame is the mouth box.
    """
    if pred.shape != gt.shape or pred.ndim != 4:
        raise ShapeError(
            f"predicted {tuple(pred.shape)} and ground-truth "
            f"{tuple(gt.shape)} clips must both be T×3×H×W"
        )
    if track is None:
        box = MouthBox(0, 0, int(gt.shape[3]), int(gt.shape[2]))
    elif track.frames != gt.shape[0]:
        raise ShapeError(
            f"landmark track has {track.frames} frames, clip has {gt.shape[0]}"
        )
    else:
        box = stable_mouth_bbox(track, pad, (gt.shape[2], gt.shape[3]))
    if indices is None:
        indices = sample_supervision_frames(gt.shape[0], t_prime, seed)
    f_pred = proxy_lip_features(crop_resize(pred[indices], box, size))
    f_gt = proxy_lip_features(crop_resize(gt[indices], box, size))
    loss = lip_consistency_loss(f_pred, f_gt)
    logger.debug("lip loss %.6g over frames %s in box %s", loss, indices, box)
    return loss
