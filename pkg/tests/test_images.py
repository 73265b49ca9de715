"""Tests for pixmap I/O."""

import numpy as np
import pytest

from mctk.domain.exceptions import FormatError, ShapeError, UsageError
from mctk.io.images import (
    decode_pixmap,
    encode_pixmap,
    list_frames,
    quantize,
    read_frame_dir,
    read_pixmap,
    write_pixmap,
)


def test_quantize_round_half_up():
    """Test ⌊255·v + ½⌋ with clamping."""
    values = np.array([0.0, 0.5, 1.0, -0.2, 1.7, 1.0 / 255.0])
    np.testing.assert_array_equal(quantize(values), [0, 128, 255, 0, 255, 1])


def test_zero_frame_has_zero_payload():
    """Test that a black P6 frame is header plus zero bytes."""
    data = encode_pixmap(np.zeros((4, 5, 3)))
    assert data.startswith(b"P6")
    assert data.endswith(bytes(4 * 5 * 3))


@pytest.mark.parametrize("shape", [(6, 7, 3), (6, 7)])
def test_pixmap_round_trip(tmp_path, shape):
    """Test P6 and P5 files through Pillow."""
    rng = np.random.default_rng(0)
    pixels = rng.random(shape)
    path = tmp_path / "frame.ppm"
    write_pixmap(path, pixels)
    back = read_pixmap(path)
    assert back.shape == shape
    assert back.dtype == np.float32
    np.testing.assert_array_equal(
        decode_pixmap(path.read_bytes()), quantize(pixels)
    )
    np.testing.assert_allclose(back, pixels, atol=0.5 / 255 + 1e-7)


def test_encode_rejects_bad_shape():
    """Test that only H×W and H×W×3 can be written."""
    with pytest.raises(ShapeError):
        encode_pixmap(np.zeros((4, 4, 2)))


def test_decode_rejects_invalid_data():
    """Test that non-pixmap bytes are a format error."""
    with pytest.raises(FormatError):
        decode_pixmap(b"P6\n2 2\n255\n\x00")
    with pytest.raises(FormatError):
        decode_pixmap(b"hello world")


def test_list_frames_orders_and_filters(tmp_path):
    """Test name order, suffix filtering and empty directories."""
    with pytest.raises(UsageError, match="not found"):
        list_frames(tmp_path / "missing")
    with pytest.raises(UsageError, match="no pixmap"):
        list_frames(tmp_path)
    for name in ("frame_0002.ppm", "frame_0001.ppm", "notes.txt"):
        (tmp_path / name).write_bytes(encode_pixmap(np.zeros((2, 2, 3))))
    assert [p.name for p in list_frames(tmp_path)] == [
        "frame_0001.ppm",
        "frame_0002.ppm",
    ]


def test_read_frame_dir(tmp_path, textured_clip, write_clip):
    """Test a clip written frame by frame reads back as T×3×H×W."""
    clip = read_frame_dir(write_clip(tmp_path / "clip", textured_clip))
    assert clip.shape == (3, 3, 64, 64)
    np.testing.assert_allclose(clip, textured_clip, atol=0.5 / 255 + 1e-6)


def test_read_frame_dir_gray_and_mixed_sizes(tmp_path):
    """Test P5 frames expand to RGB and size mismatches fail."""
    write_pixmap(tmp_path / "a.pgm", np.full((3, 3), 0.2))
    clip = read_frame_dir(tmp_path)
    assert clip.shape == (1, 3, 3, 3)
    np.testing.assert_array_equal(clip[0, 0], clip[0, 2])
    write_pixmap(tmp_path / "b.pgm", np.zeros((4, 4)))
    with pytest.raises(FormatError, match="differ"):
        read_frame_dir(tmp_path)


def test_randomized_pixmaps_round_trip_bit_exact(tmp_path):
    """Test fifty seeded P5/P6 frames decode to their quantized bytes."""
    rng = np.random.default_rng(21)
    for index in range(50):
        h, w = (int(v) for v in rng.integers(1, 40, size=2))
        shape = (h, w, 3) if index % 2 else (h, w)
        pixels = rng.random(shape)
        path = tmp_path / f"frame_{index:02d}.ppm"
        write_pixmap(path, pixels)
        data = path.read_bytes()
        np.testing.assert_array_equal(decode_pixmap(data), quantize(pixels))
        assert encode_pixmap(read_pixmap(path)) == data
