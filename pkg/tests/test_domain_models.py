"""Tests for domain models."""

import numpy as np
import pytest

from mctk.domain.exceptions import NonFiniteError, NumericError, ShapeError
from mctk.domain.models import (
    BRANCHES,
    EXP_DIM,
    LIGHT_DIM,
    SHAPE_DIM,
    ConditionSet,
    HeadParams,
    LandmarkTrack,
    Mlp,
    MouthBox,
    ParamStream,
    Recipe,
    ShLight,
)


def _head_params(**overrides):
    values = {
        "shape": np.zeros(SHAPE_DIM),
        "exp": np.zeros(EXP_DIM),
        "jaw": np.zeros(3),
        "head_rot": np.zeros(3),
        "camera": np.array([1.0, 0.0, 0.0]),
        "light": np.zeros(LIGHT_DIM),
    }
    values.update(overrides)
    return HeadParams(**values)


def test_head_params_creation():
    """Test HeadParams model creation."""
    params = _head_params(
        head_rot=np.array([1.0, 2.0, 3.0]), jaw=np.array([4.0, 5.0, 6.0])
    )
    np.testing.assert_array_equal(params.head_rot, [1, 2, 3])
    np.testing.assert_array_equal(params.jaw, [4, 5, 6])


def test_head_params_immutable():
    """Test that HeadParams is immutable."""
    params = _head_params()
    with pytest.raises(AttributeError):
        params.jaw = np.ones(3)


def test_head_params_validation():
    """Test lengths, finiteness and the camera scale."""
    with pytest.raises(ShapeError, match="exp"):
        _head_params(exp=np.zeros(EXP_DIM + 1))
    with pytest.raises(NonFiniteError):
        _head_params(jaw=np.array([0.0, np.nan, 0.0]))
    with pytest.raises(NumericError, match="scale"):
        _head_params(camera=np.zeros(3))


def test_sh_light_channel_major_vector():
    """Test ℓ = (R0..R8, G0..G8, B0..B8) ↔ 9×3 coefficients."""
    light = np.arange(LIGHT_DIM, dtype=np.float64)
    sh = ShLight.from_vector(light)
    assert sh.coeffs.shape == (9, 3)
    np.testing.assert_array_equal(sh.coeffs[:, 0], range(9))
    np.testing.assert_array_equal(sh.coeffs[0], [0, 9, 18])
    np.testing.assert_array_equal(sh.to_vector(), light)
    with pytest.raises(ShapeError):
        ShLight(np.zeros((3, 9)))


def test_mouth_box():
    """Test the half-open box and degenerate boxes."""
    box = MouthBox(x0=2, y0=3, x1=6, y1=5)
    assert (box.width, box.height) == (4, 2)
    assert box.contains(2, 3)
    assert not box.contains(6, 4)
    with pytest.raises(NumericError):
        MouthBox(x0=2, y0=3, x1=2, y1=5)


def test_recipe_single():
    """Test that a single-source recipe names one stream four times."""
    recipe = Recipe.single("clip.json")
    assert {recipe.identity, recipe.lighting, recipe.head, recipe.mouth} == {
        "clip.json"
    }
    assert recipe.frame_count is None
    assert recipe == Recipe.single("clip.json")


def test_condition_set():
    """Test branch lookup and mask validation."""
    features = {k: np.zeros((1, 2, 2, 2)) for k in BRANCHES}
    conds = ConditionSet(features, (True, False, True, False))
    assert conds.alive == ("reference", "motion")
    assert conds.available("reference")
    assert not conds.available("audio")
    with pytest.raises(ShapeError):
        ConditionSet(features, (True, True))
    with pytest.raises(ShapeError, match="missing"):
        ConditionSet({"reference": features["reference"]})


def test_mlp_validation():
    """Test dims and mismatched layers."""
    mlp = Mlp(
        weights=(np.zeros((4, 3)), np.zeros((3, 2))),
        biases=(np.zeros(3), np.zeros(2)),
    )
    assert mlp.dims == (4, 3, 2)
    assert mlp.astype(np.float32).dtype == np.float32
    with pytest.raises(ShapeError):
        Mlp(
            weights=(np.zeros((4, 3)), np.zeros((2, 2))),
            biases=(np.zeros(3), np.zeros(2)),
        )
    with pytest.raises(NumericError):
        Mlp(
            weights=(np.zeros((1, 1)),),
            biases=(np.zeros(1),),
            activation="relu",
        )


def test_param_stream_validation(make_stream):
    """Test fps and identity checks of a parameter stream."""
    stream = make_stream(frames=3)
    assert len(stream) == 3
    with pytest.raises(NumericError, match="fps"):
        ParamStream(
            fps=0.0,
            shape=stream.shape,
            camera=stream.camera,
            light=stream.light,
        )
    with pytest.raises(ShapeError, match="lighting"):
        ParamStream(
            fps=25.0,
            shape=stream.shape,
            camera=stream.camera,
            light=np.zeros(9),
        )


def test_landmark_track_validation():
    """Test the T×K×2 contract and mouth index range."""
    track = LandmarkTrack(np.zeros((2, 5, 2)), mouth_indices=(3, 4))
    assert track.frames == 2
    with pytest.raises(ShapeError):
        LandmarkTrack(np.zeros((2, 5, 3)))
    with pytest.raises(NumericError):
        LandmarkTrack(np.zeros((2, 5, 2)), mouth_indices=(5,))
