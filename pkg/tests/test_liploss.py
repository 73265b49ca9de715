"""Tests for the mouth crop, proxy lip features and lip-consistency loss."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mctk.domain.exceptions import (
    NonFiniteError,
    NumericError,
    ShapeError,
    UsageError,
)
from mctk.domain.models import LandmarkTrack, MouthBox
from mctk.pipeline.liploss import (
    crop_resize,
    lip_consistency_loss,
    lip_loss_from_frames,
    proxy_lip_features,
    resize_bilinear,
    sample_supervision_frames,
    stable_mouth_bbox,
    total_loss,
)


def test_mouth_bbox_single_frame_without_pad():
    """Test (10,10) and (20,30) with pad 0 → [10,21) × [10,31)."""
    track = LandmarkTrack(np.array([[[10.0, 10.0], [20.0, 30.0]]]), (0, 1))
    box = stable_mouth_bbox(track, 0.0, (64, 64))
    assert box == MouthBox(x0=10, y0=10, x1=21, y1=31)


def test_mouth_bbox_is_union_over_frames(mouth_track):
    """Test that the drifting mouth is covered on every frame."""
    box = stable_mouth_bbox(mouth_track, 0.1, (64, 64))
    assert box == MouthBox(x0=29, y0=39, x1=39, y1=45)
    pts = mouth_track.points[:, list(mouth_track.mouth_indices)]
    assert all(box.contains(x, y) for x, y in pts.reshape(-1, 2))


def test_mouth_bbox_clamps_to_frame():
    """Test that a large pad stays inside the image."""
    track = LandmarkTrack(np.array([[[1.0, 1.0], [60.0, 62.0]]]), (0, 1))
    box = stable_mouth_bbox(track, 0.5, (64, 64))
    assert box == MouthBox(x0=0, y0=0, x1=64, y1=64)


def test_mouth_bbox_errors(mouth_track):
    """Test empty mouth sets and negative pads."""
    with pytest.raises(NumericError):
        stable_mouth_bbox(LandmarkTrack(mouth_track.points), 0.1, (64, 64))
    with pytest.raises(NumericError):
        stable_mouth_bbox(mouth_track, -0.1, (64, 64))


def test_mouth_bbox_rejects_landmarks_off_frame():
    """Test that a mouth entirely outside the image is a usage error."""
    track = LandmarkTrack(np.array([[[80.0, 10.0], [90.0, 20.0]]]), (0, 1))
    with pytest.raises(UsageError, match="outside"):
        stable_mouth_bbox(track, 0.1, (64, 64))


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    frames=st.integers(1, 6),
    points=st.integers(1, 8),
    pad=st.floats(0.0, 0.5),
)
def test_mouth_bbox_contains_every_mouth_landmark(seed, frames, points, pad):
    """Test that the union box covers all mouth points of a random track."""
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 63.999, size=(frames, points, 2))
    mouth = tuple(range(int(rng.integers(0, points)), points))
    track = LandmarkTrack(coords, mouth)
    box = stable_mouth_bbox(track, pad, (64, 64))
    assert 0 <= box.x0 < box.x1 <= 64
    assert 0 <= box.y0 < box.y1 <= 64
    for x, y in coords[:, list(mouth)].reshape(-1, 2):
        assert box.contains(x, y)


def test_resize_bilinear_half_pixel_weights():
    """Test 2×2 → 4×4 with 0.25/0.75 blends and clamped borders."""
    image = np.array([[0.0, 1.0], [2.0, 3.0]])
    out = resize_bilinear(image, (4, 4))
    np.testing.assert_allclose(out[0], [0.0, 0.25, 0.75, 1.0])
    np.testing.assert_allclose(out[:, 0], [0.0, 0.5, 1.5, 2.0])
    assert out[1, 1] == pytest.approx(0.75)


def test_resize_bilinear_same_size_is_identity(textured_clip):
    """Test that resizing to the input size changes nothing."""
    out = resize_bilinear(textured_clip, (64, 64))
    np.testing.assert_array_equal(out, textured_clip.astype(np.float64))


def test_resize_bilinear_rejects_bad_target():
    """Test non-positive sizes and missing axes."""
    with pytest.raises(NumericError):
        resize_bilinear(np.zeros((4, 4)), (0, 4))
    with pytest.raises(ShapeError):
        resize_bilinear(np.zeros(4), (2, 2))


def test_crop_resize_full_frame_identity():
    """Test that a 224 frame cropped to itself is unchanged."""
    rng = np.random.default_rng(0)
    frames = rng.random((2, 3, 224, 224))
    out = crop_resize(frames, MouthBox(0, 0, 224, 224))
    assert out.shape == (2, 3, 224, 224)
    np.testing.assert_array_equal(out, frames)


def test_crop_resize_constant_crop_stays_constant():
    """Test that a uniform region resizes to the same value."""
    frames = np.zeros((1, 3, 32, 32))
    frames[:, :, 8:16, 8:20] = 0.5
    out = crop_resize(frames, MouthBox(8, 8, 20, 16), size=28)
    np.testing.assert_allclose(out, 0.5)


def test_crop_resize_errors():
    """Test boxes outside the frame and non-RGB input."""
    with pytest.raises(NumericError):
        crop_resize(np.zeros((1, 3, 16, 16)), MouthBox(0, 0, 17, 16))
    with pytest.raises(ShapeError):
        crop_resize(np.zeros((1, 1, 16, 16)), MouthBox(0, 0, 8, 8))


def test_proxy_features_constant_crop_is_zero():
    """Test that mean-centring removes a flat crop entirely."""
    feats = proxy_lip_features(np.full((2, 3, 224, 224), 0.3))
    assert feats.shape == (2, 196)
    np.testing.assert_allclose(feats, 0.0, atol=1e-12)


def test_proxy_features_block_locality():
    """Test that a bright top-left block raises only the first feature."""
    crops = np.zeros((1, 3, 224, 224))
    crops[:, :, :16, :16] = 1.0
    feats = proxy_lip_features(crops)[0]
    assert int(np.argmax(feats)) == 0
    np.testing.assert_allclose(feats[1:], feats[1])
    assert feats.sum() == pytest.approx(0.0, abs=1e-12)


def test_proxy_features_reject_unpoolable_size():
    """Test crops that do not split into 14×14 blocks."""
    with pytest.raises(ShapeError):
        proxy_lip_features(np.zeros((1, 3, 30, 30)))


@pytest.mark.parametrize(
    "pred,gt,expected",
    [
        ([[1.0, 2.0]], [[1.0, 2.0]], 0.0),
        ([[1.0, 0.0]], [[0.0, 1.0]], 1.0),
        ([[1.0, 0.0]], [[-1.0, 0.0]], 2.0),
        ([[1.0, 0.0], [1.0, 0.0]], [[2.0, 0.0], [0.0, 3.0]], 0.5),
        ([[0.0, 0.0]], [[1.0, 0.0]], 1.0),
    ],
)
def test_lip_consistency_loss_examples(pred, gt, expected):
    """Test identical, orthogonal, antiparallel, mixed and zero vectors."""
    loss = lip_consistency_loss(np.array(pred), np.array(gt))
    assert loss == pytest.approx(expected, abs=1e-12)


def test_lip_consistency_loss_shape_errors():
    """Test mismatched and empty features."""
    with pytest.raises(ShapeError):
        lip_consistency_loss(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        lip_consistency_loss(np.zeros((0, 3)), np.zeros((0, 3)))


def test_total_loss():
    """Test the plain sum and non-finite terms."""
    assert total_loss(1.0, 2.0, 3.0) == 6.0
    with pytest.raises(NonFiniteError):
        total_loss(1.0, math.nan, 0.0)
    with pytest.raises(NonFiniteError):
        total_loss(math.inf, 0.0, 0.0)


def test_sample_supervision_frames():
    """Test full draws, seeded determinism and the range check."""
    np.testing.assert_array_equal(sample_supervision_frames(5, 5), range(5))
    a = sample_supervision_frames(20, 4, seed=3)
    b = sample_supervision_frames(20, 4, seed=3)
    np.testing.assert_array_equal(a, b)
    assert len(set(a.tolist())) == 4
    assert list(a) == sorted(a)
    for t_prime in (0, 21):
        with pytest.raises(UsageError):
            sample_supervision_frames(20, t_prime)


def test_lip_loss_identical_clips_is_zero(textured_clip, mouth_track):
    """Test pred == gt → loss ≈ 0 with and without landmarks."""
    for track in (mouth_track, None):
        loss = lip_loss_from_frames(
            textured_clip, textured_clip, track, size=28
        )
        assert loss == pytest.approx(0.0, abs=1e-9)


def test_lip_loss_inverted_clip_is_antiparallel(textured_clip, mouth_track):
    """Test that 1 − frame negates the centred features → loss 2."""
    loss = lip_loss_from_frames(
        1.0 - textured_clip, textured_clip, mouth_track, size=28
    )
    assert loss == pytest.approx(2.0, abs=1e-9)


def test_lip_loss_uses_explicit_indices(textured_clip):
    """Test a caller-supplied frame selection."""
    pred = textured_clip.copy()
    pred[0] = 1.0 - pred[0]
    only_last = lip_loss_from_frames(
        pred, textured_clip, None, size=28, indices=np.array([2])
    )
    only_first = lip_loss_from_frames(
        pred, textured_clip, None, size=28, indices=np.array([0])
    )
    assert only_last == pytest.approx(0.0, abs=1e-9)
    assert only_first == pytest.approx(2.0, abs=1e-9)


def test_lip_loss_shape_errors(textured_clip, mouth_track):
    """Test clip mismatches and a short landmark track."""
    with pytest.raises(ShapeError):
        lip_loss_from_frames(textured_clip[:2], textured_clip, None)
    short = LandmarkTrack(mouth_track.points[:2], mouth_track.mouth_indices)
    with pytest.raises(ShapeError, match="landmark"):
        lip_loss_from_frames(textured_clip, textured_clip, short)


@pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0, 1e4])
def test_lip_consistency_loss_positive_scale_invariance(scale):
    """Test that scaling any feature row by λ > 0 keeps the loss."""
    rng = np.random.default_rng(8)
    f_pred = rng.standard_normal((3, 196))
    f_gt = rng.standard_normal((3, 196))
    base = lip_consistency_loss(f_pred, f_gt)
    scaled_pred = f_pred.copy()
    scaled_pred[1] *= scale
    scaled_gt = f_gt.copy()
    scaled_gt[2] *= scale
    assert lip_consistency_loss(scaled_pred, f_gt) == pytest.approx(
        base, abs=1e-6
    )
    assert lip_consistency_loss(f_pred, scaled_gt) == pytest.approx(
        base, abs=1e-6
    )


def test_crop_depends_only_on_ground_truth_landmarks(
    textured_clip, mouth_track
):
    """Test that editing predicted frames never moves the mouth box."""
    box = stable_mouth_bbox(mouth_track, 0.1, (64, 64))
    pred = textured_clip.copy()
    outside = np.ones((64, 64), dtype=bool)
    outside[box.y0 : box.y1, box.x0 : box.x1] = False
    pred[:, :, outside] = np.random.default_rng(1).random(
        (3, 3, int(outside.sum()))
    )
    np.testing.assert_array_equal(
        crop_resize(pred, box, 28), crop_resize(textured_clip, box, 28)
    )
    loss = lip_loss_from_frames(pred, textured_clip, mouth_track, size=28)
    assert loss == pytest.approx(0.0, abs=1e-9)

    inside = textured_clip.copy()
    inside[:, :, box.y0 : box.y1, box.x0 : box.x1] = 0.5
    moved = lip_loss_from_frames(inside, textured_clip, mouth_track, size=28)
    assert moved > 1e-3
