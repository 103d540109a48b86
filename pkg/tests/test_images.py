import numpy as np
import pytest
from PIL import Image

from edgesr.images import (
    MalformedPngError,
    UnsupportedPngError,
    load_png,
    quantize_plane,
    rgb_to_ycbcr,
    save_png,
    save_plane_png,
    ycbcr_to_rgb,
)


def test_round_trip_identity(tmp_path, rng):
    pixels = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    p = tmp_path / "img.png"
    save_png(pixels, p)
    assert np.array_equal(load_png(p), pixels)


def test_one_by_one_black(tmp_path):
    p = tmp_path / "black.png"
    save_png(np.zeros((1, 1, 3), dtype=np.uint8), p)
    assert load_png(p).tolist() == [[[0, 0, 0]]]


def test_grayscale_promoted_by_replication(tmp_path, rng):
    gray = rng.integers(0, 256, size=(8, 8), dtype=np.uint8)
    p = tmp_path / "gray.png"
    Image.fromarray(gray, mode="L").save(p)
    rgb = load_png(p)
    for c in range(3):
        assert np.array_equal(rgb[..., c], gray)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_png("/nonexistent/nope.png")


def test_truncated_file_is_malformed(tmp_path, rng):
    p = tmp_path / "trunc.png"
    save_png(rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8), p)
    data = p.read_bytes()
    p.write_bytes(data[: len(data) // 2])
    with pytest.raises(MalformedPngError):
        load_png(p)


def test_not_a_png_is_malformed(tmp_path):
    p = tmp_path / "junk.png"
    p.write_bytes(b"this is not a png at all")
    with pytest.raises(MalformedPngError):
        load_png(p)


def test_16bit_png_unsupported(tmp_path):
    p = tmp_path / "deep.png"
    im = Image.new("I;16", (4, 4))
    im.putdata([0] * 16)
    im.save(p)
    with pytest.raises(UnsupportedPngError):
        load_png(p)


def test_alpha_stripped_with_warning(tmp_path, rng):
    rgba = rng.integers(0, 256, size=(8, 8, 4), dtype=np.uint8)
    p = tmp_path / "rgba.png"
    Image.fromarray(rgba, mode="RGBA").save(p)
    with pytest.warns(UserWarning, match="alpha"):
        rgb = load_png(p)
    assert rgb.shape == (8, 8, 3)


def test_ycbcr_white_black_red():
    white = np.full((1, 1, 3), 255, dtype=np.uint8)
    y, cb, cr = rgb_to_ycbcr(white)
    assert y[0, 0] == pytest.approx(1.0, abs=1e-7)
    black = np.zeros((1, 1, 3), dtype=np.uint8)
    y, _, _ = rgb_to_ycbcr(black)
    assert y[0, 0] == 0.0
    red = np.zeros((1, 1, 3), dtype=np.uint8)
    red[..., 0] = 255
    y, _, _ = rgb_to_ycbcr(red)
    assert y[0, 0] == pytest.approx(0.299, abs=1e-7)


def test_ycbcr_round_trip_luminance(rng):
    rgb = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    y0, cb, cr = rgb_to_ycbcr(rgb)
    back = ycbcr_to_rgb(y0, cb, cr)
    y1, _, _ = rgb_to_ycbcr(back)
    assert np.abs(y1.astype(np.float64) - y0.astype(np.float64)).max() < 2.0 / 255.0
    assert y0.min() >= 0.0 and y0.max() <= 1.0


def test_quantize_round_half_up():
    plane = np.array([[0.0, 0.5 / 255.0, 1.0, 1.5]])
    assert quantize_plane(plane).tolist() == [[0, 1, 255, 255]]


def test_save_plane_png(tmp_path):
    p = tmp_path / "plane.png"
    save_plane_png(np.full((4, 4), 0.5), p)
    rgb = load_png(p)
    assert rgb[..., 0].min() == rgb[..., 0].max() == 128  # 0.5*255 + 0.5 -> 128
