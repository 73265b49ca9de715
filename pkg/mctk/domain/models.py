"""Domain models for mctk.

All models are frozen, slotted dataclasses. Array-bearing models compare by
identity (``eq=False``); use the field arrays for value comparison.
Invariants are checked at construction time.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional

import numpy as np
import numpy.typing as npt

from mctk.domain.exceptions import NonFiniteError, NumericError, ShapeError

Tensor = npt.NDArray[Any]

BRANCHES: tuple[str, ...] = ("reference", "shading", "motion", "audio")
ACTIVATIONS: tuple[str, ...] = ("silu", "linear")

SHAPE_DIM = 100
EXP_DIM = 50
LIGHT_DIM = 27


def _require_length(name: str, value: Tensor, length: int) -> None:
    if value.shape != (length,):
        raise ShapeError(
            f"{name} must have shape ({length},), got {tuple(value.shape)}"
        )


def _require_finite(name: str, value: Tensor) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{name} contains non-finite values")


@dataclass(frozen=True, slots=True, eq=False)
class Mlp:
    """Affine layers with one activation between consecutive layers."""

    weights: tuple[Tensor, ...]
    biases: tuple[Tensor, ...]
    activation: str = "silu"

    def __post_init__(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise ShapeError("Mlp needs one bias per weight matrix")
        if self.activation not in ACTIVATIONS:
            raise NumericError(f"Unknown activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(
                    f"layer {i}: weight {w.shape} and bias {b.shape} "
                    f"do not form an affine map"
                )
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(
                    f"layer {i}: input {w.shape[0]} does not match "
                    f"previous output {self.weights[i - 1].shape[1]}"
                )

    @property
    def dims(self) -> tuple[int, ...]:
        """Layer widths from input to output."""
        return (self.weights[0].shape[0],) + tuple(
            w.shape[1] for w in self.weights
        )

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def astype(self, dtype: npt.DTypeLike) -> "Mlp":
        """Return a copy with every parameter cast to ``dtype``."""
        return replace(
            self,
            weights=tuple(w.astype(dtype) for w in self.weights),
            biases=tuple(b.astype(dtype) for b in self.biases),
        )


@dataclass(frozen=True, slots=True, eq=False)
class NoiseSchedule:
    """Variance-preserving diffusion schedule."""

    beta: Tensor
    alpha_bar: Tensor

    @property
    def steps(self) -> int:
        return int(self.beta.shape[0])


@dataclass(frozen=True, slots=True, eq=False)
class TimestepEmbedding:
    """Sinusoidal features of width ``dim`` projected to C channels."""

    dim: int
    projection: Mlp

    def __post_init__(self) -> None:
        if self.dim < 2 or self.dim % 2:
            raise ShapeError(f"embedding width must be even, got {self.dim}")
        if self.projection.dims[0] != self.dim:
            raise ShapeError(
                f"projection expects {self.projection.dims[0]} inputs, "
                f"embedding width is {self.dim}"
            )

    @property
    def channels(self) -> int:
        return self.projection.dims[-1]


@dataclass(frozen=True, slots=True, eq=False)
class ConditionSet:
    """Four spatially aligned condition maps and their availability."""

    features: Mapping[str, Tensor]
    mask: tuple[bool, bool, bool, bool] = (True, True, True, True)

    def __post_init__(self) -> None:
        if len(self.mask) != len(BRANCHES):
            raise ShapeError(f"mask needs {len(BRANCHES)} entries")
        missing = [k for k in BRANCHES if k not in self.features]
        if missing:
            raise ShapeError(f"missing condition branches: {missing}")

    def available(self, branch: str) -> bool:
        return bool(self.mask[BRANCHES.index(branch)])

    @property
    def alive(self) -> tuple[str, ...]:
        return tuple(k for k, on in zip(BRANCHES, self.mask) if on)


@dataclass(frozen=True, slots=True, eq=False)
class RouterConfig:
    """Gating MLP and masking constants of the condition router."""

    channels: int
    psi: Mlp
    mask_logit: float = -1e9
    branches: tuple[str, ...] = BRANCHES

    def __post_init__(self) -> None:
        n = len(self.branches)
        if self.psi.dims[0] != (2 + n) * self.channels:
            raise ShapeError(
                f"psi input width {self.psi.dims[0]} != "
                f"{2 + n}*C = {(2 + n) * self.channels}"
            )
        if self.psi.dims[-1] != n * self.channels:
            raise ShapeError(
                f"psi output width {self.psi.dims[-1]} != "
                f"{n}*C = {n * self.channels}"
            )


@dataclass(frozen=True, slots=True, eq=False)
class GateStack:
    """Per-sample, per-branch, per-channel gates."""

    gates: Tensor
    fully_masked: bool = False


@dataclass(frozen=True, slots=True, eq=False)
class HeadAsset:
    """Linear-blendshape head with a single jaw joint."""

    template: Tensor
    faces: Tensor
    shape_basis: Tensor
    exp_basis: Tensor
    jaw_weights: Tensor
    jaw_pivot: Tensor

    def __post_init__(self) -> None:
        v = self.template.shape[0]
        if self.template.shape != (v, 3):
            raise ShapeError(f"template must be V×3, got {self.template.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ShapeError(f"faces must be F×3, got {self.faces.shape}")
        if self.faces.size and (
            self.faces.min() < 0 or self.faces.max() >= v
        ):
            raise NumericError(f"face indices must lie in [0, {v})")
        f = self.faces
        repeated = (
            (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        )
        if np.any(repeated):
            raise NumericError("degenerate face with repeated vertex index")
        if self.shape_basis.shape != (v, 3, SHAPE_DIM):
            raise ShapeError(
                f"shape basis must be {(v, 3, SHAPE_DIM)}, "
                f"got {self.shape_basis.shape}"
            )
        if self.exp_basis.shape != (v, 3, EXP_DIM):
            raise ShapeError(
                f"expression basis must be {(v, 3, EXP_DIM)}, "
                f"got {self.exp_basis.shape}"
            )
        _require_length("jaw_weights", self.jaw_weights, v)
        _require_length("jaw_pivot", self.jaw_pivot, 3)
        if np.any(self.jaw_weights < 0) or np.any(self.jaw_weights > 1):
            raise NumericError("jaw weights must lie in [0, 1]")

    @property
    def num_vertices(self) -> int:
        return int(self.template.shape[0])


@dataclass(frozen=True, slots=True, eq=False)
class HeadParams:
    """Per-frame parametric face state."""

    shape: Tensor
    exp: Tensor
    jaw: Tensor
    head_rot: Tensor
    camera: Tensor
    light: Tensor

    def __post_init__(self) -> None:
        for name, length in (
            ("shape", SHAPE_DIM),
            ("exp", EXP_DIM),
            ("jaw", 3),
            ("head_rot", 3),
            ("camera", 3),
            ("light", LIGHT_DIM),
        ):
            value = getattr(self, name)
            _require_length(name, value, length)
            _require_finite(name, value)
        if self.camera[0] <= 0:
            raise NumericError(
                f"camera scale must be positive, got {self.camera[0]}"
            )


@dataclass(frozen=True, slots=True, eq=False)
class ShLight:
    """Nine SH coefficients per colour channel."""

    coeffs: Tensor

    def __post_init__(self) -> None:
        if self.coeffs.shape != (9, 3):
            raise ShapeError(f"SH light must be 9×3, got {self.coeffs.shape}")
        _require_finite("SH light", self.coeffs)

    @classmethod
    def from_vector(cls, light: Tensor) -> "ShLight":
        """Build from ℓ ∈ R²⁷ stored channel-major (R0..R8, G0..G8, B0..B8)."""
        _require_length("light", light, LIGHT_DIM)
        return cls(coeffs=np.ascontiguousarray(light.reshape(3, 9).T))

    def to_vector(self) -> Tensor:
        return self.coeffs.T.reshape(LIGHT_DIM).copy()


@dataclass(frozen=True, slots=True, eq=False)
class ShadingFrame:
    """Rendered shading image with depth buffer and coverage."""

    pixels: Tensor
    depth: Tensor
    coverage: Tensor

    @property
    def size(self) -> tuple[int, int]:
        return int(self.depth.shape[0]), int(self.depth.shape[1])


@dataclass(frozen=True, slots=True, eq=False)
class FrameParams:
    """One frame of tracked motion parameters from a single source."""

    exp_spectre: Tensor
    exp_deca_residual: Tensor
    jaw_spectre: Tensor
    jaw_deca_residual: Tensor
    head_rot: Tensor

    def __post_init__(self) -> None:
        for name, length in (
            ("exp_spectre", EXP_DIM),
            ("exp_deca_residual", EXP_DIM),
            ("jaw_spectre", 3),
            ("jaw_deca_residual", 3),
            ("head_rot", 3),
        ):
            value = getattr(self, name)
            _require_length(name, value, length)
            _require_finite(name, value)


@dataclass(frozen=True, slots=True, eq=False)
class ParamStream:
    """Fitted parameters of one source video."""

    fps: float
    shape: Tensor
    camera: Tensor
    light: Tensor
    frames: tuple[FrameParams, ...] = ()

    def __post_init__(self) -> None:
        if not self.fps > 0:
            raise NumericError(f"fps must be positive, got {self.fps}")
        _require_length("identity.shape", self.shape, SHAPE_DIM)
        _require_length("identity.camera", self.camera, 3)
        _require_length("lighting.sh", self.light, LIGHT_DIM)
        for name in ("shape", "camera", "light"):
            _require_finite(name, getattr(self, name))

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True, slots=True)
class Recipe:
    """Which stream supplies each of the four recombinable attributes."""

    identity: str
    lighting: str
    head: str
    mouth: str
    frame_count: Optional[int] = None

    @classmethod
    def single(cls, source: str) -> "Recipe":
        return cls(identity=source, lighting=source, head=source, mouth=source)


@dataclass(frozen=True, slots=True, eq=False)
class AudioTrack:
    """Per-frame token sequences from an upstream speech encoder."""

    features: Tensor

    def __post_init__(self) -> None:
        if self.features.ndim != 3 or self.features.shape[0] < 1:
            raise ShapeError(
                f"audio track must be T×L×C_a with T ≥ 1, "
                f"got {self.features.shape}"
            )
        _require_finite("audio track", self.features)

    @property
    def frames(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True, slots=True, eq=False)
class AudioWindows:
    """Centred windows of W = 2m+1 audio frames per output frame."""

    windows: Tensor
    m: int

    @property
    def width(self) -> int:
        return 2 * self.m + 1


@dataclass(frozen=True, slots=True, eq=False)
class Adapter:
    """Seeded affine projection lifting one modality into a latent grid.

    ``kind`` is ``"patch"`` for image-like inputs (weights shared across
    patches) or ``"audio"`` for flattened audio windows.
    """

    kind: str
    patch_size: int
    in_features: int
    out_channels: int
    grid: tuple[int, int]
    weight: Tensor
    bias: Tensor

    def __post_init__(self) -> None:
        if self.kind not in ("patch", "audio"):
            raise NumericError(f"Unknown adapter kind {self.kind!r}")
        if self.weight.shape[0] != self.in_features:
            raise ShapeError(
                f"adapter weight {self.weight.shape} does not take "
                f"{self.in_features} inputs"
            )


@dataclass(frozen=True, slots=True, eq=False)
class LandmarkTrack:
    """Per-frame 2D landmarks in pixel coordinates."""

    points: Tensor
    mouth_indices: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.points.ndim != 3 or self.points.shape[2] != 2:
            raise ShapeError(
                f"landmarks must be T×K×2, got {self.points.shape}"
            )
        _require_finite("landmarks", self.points)
        k = self.points.shape[1]
        if any(i < 0 or i >= k for i in self.mouth_indices):
            raise NumericError(f"mouth indices must lie in [0, {k})")

    @property
    def frames(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True, slots=True)
class MouthBox:
    """Half-open integer pixel box ``[x0, x1) × [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise NumericError(f"degenerate mouth box {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1


@dataclass(frozen=True, slots=True)
class LipEncoder:
    """Identifier and output width of a lip feature encoder."""

    name: str = "proxy-block14"
    dim: int = 196
