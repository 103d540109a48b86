import numpy as np
import pytest

from conftest import CANNY_DIR, load_y
from edgesr.resample import (
    DegradationSpec,
    bicubic_resize,
    correlate1d_replicate,
    correlate1d_replicate_adjoint,
    gaussian_blur,
    gaussian_kernel1d,
    synthesize_pair,
)
from oracles.reference import oracle_bicubic, oracle_gaussian_blur


def test_degradation_spec_validation():
    DegradationSpec(scale=2)
    DegradationSpec(scale=8, blur_radius=2.0)
    with pytest.raises(ValueError):
        DegradationSpec(scale=5)
    with pytest.raises(ValueError):
        DegradationSpec(scale=2, blur_radius=0.0)


@pytest.mark.parametrize("size", [(5, 7), (16, 16), (9, 3)])
def test_bicubic_preserves_constant(size):
    img = np.full((12, 10), 0.5, dtype=np.float32)
    out = bicubic_resize(img, size[0], size[1])
    assert out.shape == (size[1], size[0])
    assert np.array_equal(out, np.full((size[1], size[0]), 0.5, dtype=np.float32))


@pytest.mark.parametrize("scale", [2, 3, 4, 8])
def test_bicubic_constant_all_scales(scale, rng):
    c = float(rng.random())
    img = np.full((24, 24), c, dtype=np.float32)
    down = bicubic_resize(img, 24 // scale, 24 // scale)
    assert np.abs(down.astype(np.float64) - c).max() < 1e-6


def test_bicubic_identity_resize(rng):
    img = rng.random((11, 13)).astype(np.float32)
    out = bicubic_resize(img, 13, 11)
    assert np.abs(out - img).max() < 1e-6


def test_bicubic_matches_kernel_sum_oracle():
    ramp = np.linspace(0.0, 1.0, 64, dtype=np.float64).reshape(8, 8)
    mine = bicubic_resize(ramp, 4, 4)
    ref = oracle_bicubic(ramp, 4, 4)
    assert np.abs(mine - ref).max() < 1e-4


def test_bicubic_upscale_matches_oracle(rng):
    img = rng.random((6, 5))
    mine = bicubic_resize(img, 10, 12)
    ref = oracle_bicubic(img, 10, 12)
    assert np.abs(mine - ref).max() < 1e-10


def test_blur_constant_unchanged():
    img = np.full((9, 9), 0.3, dtype=np.float32)
    assert np.abs(gaussian_blur(img, 2.0) - 0.3).max() < 1e-6


def test_blur_impulse_matches_2d_kernel_oracle():
    img = np.zeros((15, 15))
    img[7, 7] = 1.0
    mine = gaussian_blur(img, 2.0)
    ref = oracle_gaussian_blur(img, 2.0)
    assert np.abs(mine - ref).max() < 1e-12
    k = gaussian_kernel1d(2.0)
    assert mine[7, 7] == pytest.approx(k[len(k) // 2] ** 2, rel=1e-12)


def test_blur_semigroup_on_photo():
    # Edge clamping breaks the semigroup identity only within one kernel
    # half-width of the border; compare the interior.
    y = load_y(CANNY_DIR / "inputs" / "camera.png").astype(np.float64)
    twice = gaussian_blur(gaussian_blur(y, 2.0), 2.0)
    once = gaussian_blur(y, np.sqrt(8.0))
    m = int(np.ceil(3.0 * np.sqrt(8.0)))
    assert np.abs(twice - once)[m:-m, m:-m].max() < 5e-3


def test_blur_preserves_mean_on_photo():
    y = load_y(CANNY_DIR / "inputs" / "coins.png").astype(np.float64)
    assert abs(gaussian_blur(y, 2.0).mean() - y.mean()) < 1e-3


def test_correlate_adjoint_identity(rng):
    for axis in (0, 1):
        for wlen in (3, 9):
            x = rng.standard_normal((6, 8))
            y = rng.standard_normal((6, 8))
            w = rng.standard_normal(wlen)
            lhs = np.sum(correlate1d_replicate(x, w, axis) * y)
            rhs = np.sum(x * correlate1d_replicate_adjoint(y, w, axis))
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_synthesize_pair_crop_rule(rng):
    hr = rng.random((33, 33)).astype(np.float32)
    pair = synthesize_pair(hr, DegradationSpec(scale=2))
    assert pair.hr.shape == (32, 32)
    assert pair.lr.shape == (16, 16)
    assert np.array_equal(pair.hr, hr[:32, :32])


@pytest.mark.parametrize("scale", [2, 3, 4, 8])
def test_synthesize_pair_dimension_contract(scale, rng):
    hr = rng.random((50, 41)).astype(np.float32)
    pair = synthesize_pair(hr, DegradationSpec(scale=scale))
    assert pair.lr.shape[0] * scale == pair.hr.shape[0]
    assert pair.lr.shape[1] * scale == pair.hr.shape[1]


def test_two_pipelines_differ(rng):
    hr = load_y(CANNY_DIR / "inputs" / "camera.png")[:64, :64]
    plain = synthesize_pair(hr, DegradationSpec(scale=2))
    blurred = synthesize_pair(hr, DegradationSpec(scale=2, blur_radius=2.0))
    assert np.array_equal(plain.hr, blurred.hr)
    assert not np.array_equal(plain.lr, blurred.lr)


def test_both_pipelines_preserve_constants():
    hr = np.full((20, 20), 0.25, dtype=np.float32)
    for spec in (DegradationSpec(scale=2), DegradationSpec(scale=2, blur_radius=2.0)):
        pair = synthesize_pair(hr, spec)
        assert np.abs(pair.lr.astype(np.float64) - 0.25).max() < 1e-6


def test_too_small_for_scale():
    with pytest.raises(ValueError):
        synthesize_pair(np.zeros((3, 40), dtype=np.float32), DegradationSpec(scale=4))
