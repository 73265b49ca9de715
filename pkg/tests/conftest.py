"""Test configuration and fixtures."""

from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from mctk.domain.models import (
    EXP_DIM,
    LIGHT_DIM,
    SHAPE_DIM,
    FrameParams,
    HeadAsset,
    LandmarkTrack,
    ParamStream,
)
from mctk.io.images import write_pixmap
from mctk.pipeline.headmodel import gen_desk_asset

StreamFactory = Callable[..., ParamStream]


@pytest.fixture(autouse=True)
def isolated_config(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    """Keep user configuration and thread overrides out of every test."""
    monkeypatch.delenv("MCTK_CONFIG", raising=False)
    monkeypatch.delenv("MCTK_THREADS", raising=False)
    monkeypatch.setenv("HOME", str(tmp_path / "home"))


@pytest.fixture(scope="session")
def small_asset() -> HeadAsset:
    """Provide a coarse desk asset (162 vertices)."""
    return gen_desk_asset(seed=0, subdivisions=2)


@pytest.fixture
def make_stream() -> StreamFactory:
    """Provide a factory for seeded parameter streams."""

    def factory(
        frames: int = 4, fps: float = 25.0, seed: int = 0, scale: float = 0.1
    ) -> ParamStream:
        rng = np.random.default_rng(seed)

        def vec(n: int) -> np.ndarray:
            return scale * rng.standard_normal(n)

        return ParamStream(
            fps=fps,
            shape=vec(SHAPE_DIM),
            camera=np.array([0.8, 0.0, 0.0]) + np.array([0.0, *vec(2)]),
            light=vec(LIGHT_DIM),
            frames=tuple(
                FrameParams(
                    exp_spectre=vec(EXP_DIM),
                    exp_deca_residual=vec(EXP_DIM),
                    jaw_spectre=vec(3),
                    jaw_deca_residual=vec(3),
                    head_rot=vec(3),
                )
                for _ in range(frames)
            ),
        )

    return factory


@pytest.fixture
def mouth_track() -> LandmarkTrack:
    """Provide a three-frame track whose mouth drifts rightward."""
    points = np.array(
        [
            [[4.0, 4.0], [30.0, 40.0], [34.0, 44.0]],
            [[4.0, 4.0], [32.0, 40.0], [36.0, 44.0]],
            [[4.0, 4.0], [34.0, 40.0], [38.0, 44.0]],
        ]
    )
    return LandmarkTrack(points=points, mouth_indices=(1, 2))


@pytest.fixture
def textured_clip() -> np.ndarray:
    """Provide a 3-frame 64×64 RGB clip with non-constant content."""
    yy, xx = np.mgrid[0:64, 0:64] / 63.0
    frames = []
    for t in range(3):
        r = 0.5 + 0.5 * np.sin(6.0 * xx + t)
        g = 0.5 + 0.5 * np.cos(4.0 * yy - t)
        b = (xx * yy + 0.1 * t) % 1.0
        frames.append(np.stack([r, g, b]))
    return np.stack(frames).astype(np.float32)


@pytest.fixture
def write_clip() -> Callable[[Path, np.ndarray], Path]:
    """Provide a writer for T×3×H×W clips as numbered P6 frames."""

    def writer(directory: Path, clip: np.ndarray) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        for t, frame in enumerate(clip):
            name = f"frame_{t:04d}.ppm"
            write_pixmap(directory / name, frame.transpose(1, 2, 0))
        return directory

    return writer
