"""Linear-blendshape head model with a single jaw joint.

Conventions: right-handed coordinates, camera on +z looking toward −z,
image y pointing down. Jaw axis-angle components are (pitch, yaw, roll)
about (x, y, z). Geometry is evaluated in float64.
"""

from typing import Optional

import numpy as np

from mctk.domain.exceptions import NumericError, ShapeError
from mctk.domain.models import (
    EXP_DIM,
    LIGHT_DIM,
    SHAPE_DIM,
    HeadAsset,
    HeadParams,
    Tensor,
)
from mctk.pipeline.numerics import matmul
from mctk.util import get_logger

logger = get_logger("headmodel")

MAX_SUBDIVISIONS = 4
MAX_DISPLACEMENT = 0.1
JAW_TOP = -1.0 / 3.0
DEFAULT_SCALE = 0.8

_T = (1.0 + 5.0**0.5) / 2.0
_ICOSAHEDRON_VERTICES = (
    (-1, _T, 0), (1, _T, 0), (-1, -_T, 0), (1, -_T, 0),
    (0, -1, _T), (0, 1, _T), (0, -1, -_T), (0, 1, -_T),
    (_T, 0, -1), (_T, 0, 1), (-_T, 0, -1), (-_T, 0, 1),
)  # fmt: skip
_ICOSAHEDRON_FACES = (
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
)  # fmt: skip


def blendshape(asset: HeadAsset, s: Tensor, e: Tensor) -> Tensor:
    """template + shape_basis·s + exp_basis·e."""
    if s.shape != (SHAPE_DIM,) or e.shape != (EXP_DIM,):
        raise ShapeError(
            f"expected shape ({SHAPE_DIM},) and expression ({EXP_DIM},) "
            f"coefficients, got {tuple(s.shape)} and {tuple(e.shape)}"
        )
    v = asset.num_vertices
    shape_basis = asset.shape_basis.reshape(v * 3, SHAPE_DIM)
    exp_basis = asset.exp_basis.reshape(v * 3, EXP_DIM)
    offset = matmul(
        shape_basis.astype(np.float64), s.astype(np.float64)[:, None]
    ) + matmul(exp_basis.astype(np.float64), e.astype(np.float64)[:, None])
    return asset.template.astype(np.float64) + offset.reshape(v, 3)


def axis_angle_to_matrix(r: Tensor) -> Tensor:
    """Rodrigues' formula; r = 0 gives the identity exactly."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3,):
        raise ShapeError(f"axis-angle must have shape (3,), got {r.shape}")
    theta = float(np.linalg.norm(r))
    if theta == 0.0:
        return np.eye(3)
    k = r / theta
    skew = np.array(
        [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]
    )
    return (
        np.eye(3)
        + np.sin(theta) * skew
        + (1.0 - np.cos(theta)) * matmul(skew, skew)
    )


def apply_pose(
    vertices: Tensor, asset: HeadAsset, r_head: Tensor, jaw: Tensor
) -> Tensor:
    """Blend the jaw rotation by vertex weight, then rotate the whole head.

    Vertices with zero jaw weight are left bit-identical by the jaw step,
    and zero rotations skip their step entirely.
    """
    out = np.asarray(vertices, dtype=np.float64)
    if np.any(jaw != 0):
        rot = axis_angle_to_matrix(jaw)
        moving = asset.jaw_weights > 0
        pivot = asset.jaw_pivot.astype(np.float64)
        w = asset.jaw_weights[moving].astype(np.float64)[:, None]
        d = out[moving] - pivot
        turned = matmul(d, rot.T)
        out = out.copy()
        out[moving] = pivot + ((1.0 - w) * d + w * turned)
    if np.any(r_head != 0):
        out = matmul(out, axis_angle_to_matrix(r_head).T)
    return out


def project_weak_perspective(
    vertices: Tensor, c: Tensor, image_size: tuple[int, int]
) -> tuple[Tensor, Tensor]:
    """Scaled orthographic projection into y-down pixel coordinates.

    Returns pixel positions and depth = −z (larger is farther).
    """
    scale, tx, ty = (float(v) for v in c)
    if scale <= 0:
        raise NumericError(f"camera scale must be positive, got {scale}")
    h, w = image_size
    v = np.asarray(vertices, dtype=np.float64)
    x = (scale * v[:, 0] + tx + 1.0) * (w / 2.0)
    y = (1.0 - (scale * v[:, 1] + ty)) * (h / 2.0)
    return np.stack([x, y], axis=1), -v[:, 2]


def vertex_normals(vertices: Tensor, faces: Tensor) -> Tensor:
    """Area-weighted vertex normals; isolated vertices fall back to +z."""
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    face_n = np.cross(b - a, c - a)
    acc = np.zeros_like(v)
    for corner in range(3):
        np.add.at(acc, f[:, corner], face_n)
    length = np.linalg.norm(acc, axis=1, keepdims=True)
    up = np.broadcast_to(np.array([0.0, 0.0, 1.0]), v.shape)
    safe = np.where(length > 0, length, 1.0)
    return np.where(length > 0, acc / safe, up)


def _icosphere(subdivisions: int) -> tuple[Tensor, Tensor]:
    verts = [np.array(p, dtype=np.float64) for p in _ICOSAHEDRON_VERTICES]
    verts = [p / np.linalg.norm(p) for p in verts]
    faces = list(_ICOSAHEDRON_FACES)
    for _ in range(subdivisions):
        midpoints: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in midpoints:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                midpoints[key] = len(verts) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend(
                [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
            )
        faces = refined
    vertices = np.stack(verts)
    tri = np.array(faces, dtype=np.int64)
    # orient every face outward so the rasterizer's back-face cull agrees
    a, b, c = vertices[tri[:, 0]], vertices[tri[:, 1]], vertices[tri[:, 2]]
    inward = np.sum(np.cross(b - a, c - a) * (a + b + c), axis=1) < 0
    tri[inward] = tri[inward][:, [0, 2, 1]]
    return vertices, tri


def _smooth_fields(
    rng: np.random.Generator, vertices: Tensor, count: int, weight: Tensor
) -> Tensor:
    """Low-order polynomial displacement fields, each peaking at 0.1."""
    x, y, z = vertices[:, 0], vertices[:, 1], vertices[:, 2]
    one = np.ones_like(x)
    phi = np.stack(
        [one, x, y, z, x * y, y * z, z * x, x * x, y * y, z * z], axis=1
    )
    coeffs = rng.standard_normal((phi.shape[1], 3 * count))
    fields = matmul(phi, coeffs).reshape(-1, 3, count)
    fields = fields * weight[:, None, None]
    peak = np.max(np.linalg.norm(fields, axis=1), axis=0)
    return fields * (MAX_DISPLACEMENT / np.where(peak > 0, peak, 1.0))


def gen_desk_asset(seed: int, subdivisions: int = 3) -> HeadAsset:
    """Synthetic icosphere head with seeded smooth shape/expression bases."""
    if not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise NumericError(
            f"subdivisions must lie in [0, {MAX_SUBDIVISIONS}], "
            f"got {subdivisions}"
        )
    rng = np.random.default_rng(seed)
    vertices, faces = _icosphere(subdivisions)
    shape_basis = _smooth_fields(
        rng, vertices, SHAPE_DIM, np.ones(len(vertices))
    )
    # expressions live mostly on the front of the face
    frontal = 0.5 * (1.0 + vertices[:, 2])
    exp_basis = _smooth_fields(rng, vertices, EXP_DIM, frontal)

    u = np.clip((JAW_TOP - vertices[:, 1]) / (JAW_TOP + 1.0), 0.0, 1.0)
    jaw_weights = u * u * (3.0 - 2.0 * u)
    pivot = vertices[jaw_weights > 0].mean(axis=0)
    logger.debug(
        "generated desk asset: %d vertices, %d faces, %d jaw vertices",
        len(vertices),
        len(faces),
        int(np.count_nonzero(jaw_weights)),
    )
    return HeadAsset(
        template=vertices.astype(np.float32),
        faces=faces,
        shape_basis=shape_basis.astype(np.float32),
        exp_basis=exp_basis.astype(np.float32),
        jaw_weights=jaw_weights.astype(np.float32),
        jaw_pivot=pivot.astype(np.float32),
    )


def default_camera() -> Tensor:
    """Camera framing the unit-radius desk asset with a small margin."""
    return np.array([DEFAULT_SCALE, 0.0, 0.0], dtype=np.float32)


def neutral_params(light: Optional[Tensor] = None) -> HeadParams:
    """Zero shape, expression and pose at the default camera."""
    return HeadParams(
        shape=np.zeros(SHAPE_DIM, dtype=np.float32),
        exp=np.zeros(EXP_DIM, dtype=np.float32),
        jaw=np.zeros(3, dtype=np.float32),
        head_rot=np.zeros(3, dtype=np.float32),
        camera=default_camera(),
        light=(
            np.zeros(LIGHT_DIM, dtype=np.float32)
            if light is None
            else np.asarray(light, dtype=np.float32)
        ),
    )
