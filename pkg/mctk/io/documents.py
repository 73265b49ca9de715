"""JSON documents: parameter streams, recipes, landmark tracks, head params.

Parsers raise :class:`SchemaError` naming the offending field with a dotted
path such as ``frames[3].jaw_spectre``.
"""

import json
import math
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from mctk.domain.exceptions import NumericError, SchemaError
from mctk.domain.models import (
    EXP_DIM,
    LIGHT_DIM,
    SHAPE_DIM,
    FrameParams,
    HeadParams,
    LandmarkTrack,
    ParamStream,
    Recipe,
    Tensor,
)
from mctk.io.files import PathLike, atomic_write_text, read_bytes
from mctk.pipeline.fusion import assemble_pose

FRAME_FIELDS = (
    ("exp_spectre", EXP_DIM),
    ("exp_deca_residual", EXP_DIM),
    ("jaw_spectre", 3),
    ("jaw_deca_residual", 3),
    ("head_rot", 3),
)
HEAD_FIELDS = (
    ("shape", SHAPE_DIM),
    ("exp", EXP_DIM),
    ("jaw", 3),
    ("head_rot", 3),
    ("camera", 3),
    ("light", LIGHT_DIM),
)
RECIPE_SLOTS = ("identity", "lighting", "head", "mouth")


def load_json(path: PathLike) -> Any:
    try:
        return json.loads(read_bytes(path))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise SchemaError(f"{path} is not valid JSON: {e}") from None


def dump_json(path: PathLike, document: Any) -> None:
    """Write pretty, key-sorted JSON atomically."""
    text = json.dumps(document, indent=2, sort_keys=True)
    atomic_write_text(path, text + "\n")


def _located(path: PathLike, error: SchemaError) -> SchemaError:
    located = SchemaError(f"{path}: {error}")
    located.field = error.field
    return located


def _object(value: Any, field: str) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise SchemaError("expected an object", field=field)
    return value


def _number(value: Any, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError("expected a number", field=field)
    if not math.isfinite(value):
        raise SchemaError("expected a finite number", field=field)
    return float(value)


def _integer(value: Any, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError("expected an integer", field=field)
    return value


def _vector(value: Any, field: str, length: Optional[int] = None) -> Tensor:
    if not isinstance(value, list):
        raise SchemaError("expected an array", field=field)
    if length is not None and len(value) != length:
        raise SchemaError(
            f"expected {length} values, got {len(value)}", field=field
        )
    return np.array(
        [_number(v, f"{field}[{i}]") for i, v in enumerate(value)],
        dtype=np.float64,
    )


def _require(data: dict[str, Any], key: str, prefix: str = "") -> Any:
    if key not in data:
        raise SchemaError("required field is missing", field=prefix + key)
    return data[key]


def parse_param_stream(document: Any) -> ParamStream:
    """ParamStream from ``{fps, identity, lighting, frames}``."""
    data = _object(document, "<root>")
    fps = _number(_require(data, "fps"), "fps")
    identity = _object(_require(data, "identity"), "identity")
    lighting = _object(_require(data, "lighting"), "lighting")
    shape = _vector(
        _require(identity, "shape", "identity."), "identity.shape", SHAPE_DIM
    )
    camera = _vector(
        _require(identity, "camera", "identity."), "identity.camera", 3
    )
    light = _vector(_require(lighting, "sh", "lighting."), "lighting.sh", 27)
    raw_frames = _require(data, "frames")
    if not isinstance(raw_frames, list):
        raise SchemaError("expected an array", field="frames")
    frames = []
    for i, raw in enumerate(raw_frames):
        prefix = f"frames[{i}]"
        entry = _object(raw, prefix)
        values = {
            name: _vector(
                _require(entry, name, prefix + "."), f"{prefix}.{name}", n
            )
            for name, n in FRAME_FIELDS
        }
        frames.append(FrameParams(**values))
    try:
        return ParamStream(
            fps=fps,
            shape=shape,
            camera=camera,
            light=light,
            frames=tuple(frames),
        )
    except NumericError as e:
        raise SchemaError(str(e)) from e


def param_stream_to_dict(stream: ParamStream) -> dict[str, Any]:
    return {
        "fps": stream.fps,
        "identity": {
            "shape": stream.shape.tolist(),
            "camera": stream.camera.tolist(),
        },
        "lighting": {"sh": stream.light.tolist()},
        "frames": [
            {name: getattr(f, name).tolist() for name, _ in FRAME_FIELDS}
            for f in stream.frames
        ],
    }


def load_param_stream(path: PathLike) -> ParamStream:
    try:
        return parse_param_stream(load_json(path))
    except SchemaError as e:
        raise _located(path, e) from e


def parse_recipe(document: Any, base: Optional[Path] = None) -> Recipe:
    """Recipe from ``{identity, lighting, head, mouth, frame_count?}``.

    With ``base``, relative source paths are resolved against it.
    """
    data = _object(document, "<root>")
    sources = {}
    for slot in RECIPE_SLOTS:
        value = _require(data, slot)
        if not isinstance(value, str) or not value:
            raise SchemaError("expected a non-empty string", field=slot)
        if base is not None and not Path(value).is_absolute():
            value = str(base / value)
        sources[slot] = value
    frame_count = data.get("frame_count")
    if frame_count is not None:
        frame_count = _integer(frame_count, "frame_count")
        if frame_count < 1:
            raise SchemaError("must be at least 1", field="frame_count")
    return Recipe(frame_count=frame_count, **sources)


def recipe_to_dict(recipe: Recipe) -> dict[str, Any]:
    document: dict[str, Any] = {
        slot: getattr(recipe, slot) for slot in RECIPE_SLOTS
    }
    if recipe.frame_count is not None:
        document["frame_count"] = recipe.frame_count
    return document


def parse_landmarks(document: Any) -> LandmarkTrack:
    """LandmarkTrack from ``{frames: [[[x, y], ...], ...], mouth_indices}``."""
    data = _object(document, "<root>")
    raw_frames = _require(data, "frames")
    if not isinstance(raw_frames, list) or not raw_frames:
        raise SchemaError("expected a non-empty array", field="frames")
    frames = []
    for t, raw in enumerate(raw_frames):
        if not isinstance(raw, list):
            raise SchemaError("expected an array", field=f"frames[{t}]")
        points = [
            _vector(p, f"frames[{t}][{k}]", 2) for k, p in enumerate(raw)
        ]
        if frames and len(points) != len(frames[0]):
            raise SchemaError(
                f"expected {len(frames[0])} landmarks, got {len(points)}",
                field=f"frames[{t}]",
            )
        frames.append(points)
    count = len(frames[0])
    raw_indices = _require(data, "mouth_indices")
    if not isinstance(raw_indices, list) or not raw_indices:
        raise SchemaError("expected a non-empty array", field="mouth_indices")
    indices = tuple(
        _integer(v, f"mouth_indices[{i}]") for i, v in enumerate(raw_indices)
    )
    for i, v in enumerate(indices):
        if not 0 <= v < count:
            raise SchemaError(
                f"index {v} outside [0, {count})", field=f"mouth_indices[{i}]"
            )
    points = np.array(frames, dtype=np.float64).reshape(len(frames), count, 2)
    return LandmarkTrack(points=points, mouth_indices=indices)


def landmarks_to_dict(track: LandmarkTrack) -> dict[str, Any]:
    return {
        "frames": track.points.tolist(),
        "mouth_indices": list(track.mouth_indices),
    }


def load_landmarks(path: PathLike) -> LandmarkTrack:
    try:
        return parse_landmarks(load_json(path))
    except SchemaError as e:
        raise _located(path, e) from e


def head_params_to_dict(
    frames: Sequence[HeadParams], fps: Optional[float] = None
) -> dict[str, Any]:
    """Fused sequence document; ``pose`` is ``[r_head, θ_jaw]``."""
    document: dict[str, Any] = {
        "frames": [
            {
                **{name: getattr(p, name).tolist() for name, _ in HEAD_FIELDS},
                "pose": assemble_pose(p.head_rot, p.jaw).tolist(),
            }
            for p in frames
        ]
    }
    if fps is not None:
        document["fps"] = fps
    return document


def parse_head_params(document: Any) -> list[HeadParams]:
    """Sequence of HeadParams from ``{frames: [{shape, exp, ...}]}``."""
    data = _object(document, "<root>")
    raw_frames = _require(data, "frames")
    if not isinstance(raw_frames, list) or not raw_frames:
        raise SchemaError("expected a non-empty array", field="frames")
    params = []
    for i, raw in enumerate(raw_frames):
        prefix = f"frames[{i}]"
        entry = _object(raw, prefix)
        values = {
            name: _vector(
                _require(entry, name, prefix + "."), f"{prefix}.{name}", n
            )
            for name, n in HEAD_FIELDS
        }
        try:
            params.append(HeadParams(**values))
        except NumericError as e:
            raise SchemaError(str(e), field=prefix) from e
    return params


def load_head_params(path: PathLike) -> list[HeadParams]:
    try:
        return parse_head_params(load_json(path))
    except SchemaError as e:
        raise _located(path, e) from e
