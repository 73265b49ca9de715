"""Four-source parameter fusion and attribute recombination.

Identity (shape, camera), lighting, head motion and mouth motion may each
come from a different stream. Mouth motion is the tracked expression and
jaw plus their per-frame residual corrections.
"""

from typing import Mapping, Sequence

import numpy as np

from mctk.domain.exceptions import RecipeError, ShapeError
from mctk.domain.models import (
    EXP_DIM,
    FrameParams,
    HeadAsset,
    HeadParams,
    ParamStream,
    Recipe,
    ShadingFrame,
    Tensor,
)
from mctk.pipeline.shading import render_frames
from mctk.util import get_logger

logger = get_logger("fusion")


def _add(name: str, a: Tensor, b: Tensor, length: int) -> Tensor:
    if a.shape != (length,) or b.shape != (length,):
        raise ShapeError(
            f"{name} terms must both have shape ({length},), "
            f"got {tuple(a.shape)} and {tuple(b.shape)}"
        )
    return a + b


def fuse_expression(e_spectre: Tensor, d_deca: Tensor) -> Tensor:
    """Tracked expression plus its residual correction."""
    return _add("expression", e_spectre, d_deca, EXP_DIM)


def fuse_jaw(j_spectre: Tensor, d_deca: Tensor) -> Tensor:
    """Tracked jaw pose plus its residual correction."""
    return _add("jaw", j_spectre, d_deca, 3)


def assemble_pose(r_head: Tensor, jaw: Tensor) -> Tensor:
    """Fused pose ``[r_head, θ_jaw]``: head in 0..2, jaw in 3..5."""
    if r_head.shape != (3,) or jaw.shape != (3,):
        raise ShapeError(
            f"pose parts must have shape (3,), "
            f"got {tuple(r_head.shape)} and {tuple(jaw.shape)}"
        )
    return np.concatenate([r_head, jaw])


def _frame_params(
    identity: ParamStream,
    lighting: ParamStream,
    head: FrameParams,
    mouth: FrameParams,
) -> HeadParams:
    return HeadParams(
        shape=identity.shape,
        exp=fuse_expression(mouth.exp_spectre, mouth.exp_deca_residual),
        jaw=fuse_jaw(mouth.jaw_spectre, mouth.jaw_deca_residual),
        head_rot=head.head_rot,
        camera=identity.camera,
        light=lighting.light,
    )


def fuse_stream(stream: ParamStream) -> list[HeadParams]:
    """Fuse every frame of one stream using that stream for all attributes."""
    return [_frame_params(stream, stream, f, f) for f in stream.frames]


def _resolve(
    streams: Mapping[str, ParamStream], source: str, slot: str
) -> ParamStream:
    try:
        return streams[source]
    except KeyError:
        raise RecipeError(
            f"recipe {slot} source {source!r} is not a loaded stream"
        ) from None


def recombine(
    streams: Mapping[str, ParamStream], recipe: Recipe
) -> list[HeadParams]:
    """Assemble per-frame parameters from the recipe's four sources.

    Output length is ``recipe.frame_count`` when set, otherwise the shorter
    of the head and mouth streams. Streams are never resampled, so head and
    mouth must share a frame rate.
    """
    identity = _resolve(streams, recipe.identity, "identity")
    lighting = _resolve(streams, recipe.lighting, "lighting")
    head = _resolve(streams, recipe.head, "head")
    mouth = _resolve(streams, recipe.mouth, "mouth")
    if head.fps != mouth.fps:
        raise RecipeError(
            f"head stream runs at {head.fps} fps but mouth stream at "
            f"{mouth.fps} fps; resampling is not supported"
        )
    available = min(len(head), len(mouth))
    if available == 0:
        raise RecipeError("head and mouth streams share no frames")
    count = available
    if recipe.frame_count is not None:
        if not 1 <= recipe.frame_count <= available:
            raise RecipeError(
                f"frame_count {recipe.frame_count} outside [1, {available}]"
            )
        count = recipe.frame_count
    logger.debug(
        "recombining %d frames (head %d, mouth %d available)",
        count,
        len(head),
        len(mouth),
    )
    return [
        _frame_params(identity, lighting, head.frames[t], mouth.frames[t])
        for t in range(count)
    ]


def fuse_and_render(
    streams: Mapping[str, ParamStream],
    recipe: Recipe,
    asset: HeadAsset,
    size: tuple[int, int],
    threads: int = 1,
) -> Sequence[ShadingFrame]:
    """Recombine, then render one shading map per output frame."""
    return render_frames(asset, recombine(streams, recipe), size, threads)
