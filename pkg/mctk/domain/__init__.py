"""Domain models and types for mctk."""

from mctk.domain.models import (
    BRANCHES,
    Adapter,
    AudioTrack,
    AudioWindows,
    ConditionSet,
    FrameParams,
    GateStack,
    HeadAsset,
    HeadParams,
    LandmarkTrack,
    LipEncoder,
    Mlp,
    MouthBox,
    NoiseSchedule,
    ParamStream,
    Recipe,
    RouterConfig,
    ShadingFrame,
    ShLight,
    Tensor,
    TimestepEmbedding,
)

__all__ = [
    "BRANCHES",
    "Adapter",
    "AudioTrack",
    "AudioWindows",
    "ConditionSet",
    "FrameParams",
    "GateStack",
    "HeadAsset",
    "HeadParams",
    "LandmarkTrack",
    "LipEncoder",
    "Mlp",
    "MouthBox",
    "NoiseSchedule",
    "ParamStream",
    "Recipe",
    "RouterConfig",
    "ShLight",
    "ShadingFrame",
    "Tensor",
    "TimestepEmbedding",
]
