import os

import numpy as np
import pytest
from PIL import Image

from evocortex import grids


def _write_png(path, arr):
    Image.fromarray(arr).save(path)


class TestLoadImage:
    def test_pure_red_pixel(self, tmp_path):
        p = tmp_path / "red.png"
        _write_png(p, np.array([[[255, 0, 0]]], dtype=np.uint8))
        img = grids.load_image(p)
        assert img.shape == (1, 1, 3)
        assert img[0, 0, 0] == 1.0 and img[0, 0, 1] == 0.0 and img[0, 0, 2] == 0.0

    def test_black_pixel(self, tmp_path):
        p = tmp_path / "black.png"
        _write_png(p, np.zeros((1, 1, 3), dtype=np.uint8))
        assert np.all(grids.load_image(p) == 0.0)

    def test_grayscale_replicated(self, tmp_path):
        p = tmp_path / "gray.png"
        _write_png(p, np.full((2, 2), 128, dtype=np.uint8))
        img = grids.load_image(p)
        assert img.shape == (2, 2, 3)
        assert np.allclose(img, 128 / 255)
        assert np.array_equal(img[..., 0], img[..., 1])

    def test_missing_file_names_path(self, tmp_path):
        missing = tmp_path / "nope.png"
        with pytest.raises(grids.ImageLoadError, match="nope.png"):
            grids.load_image(missing)

    def test_non_image_file(self, tmp_path):
        p = tmp_path / "junk.png"
        p.write_bytes(b"this is not an image")
        with pytest.raises(grids.ImageLoadError, match="junk.png"):
            grids.load_image(p)


def _bicubic_oracle(img, w_out, h_out):
    """Direct per-pixel bicubic resampling with the Keys kernel, written
    independently of the production separable-matrix path."""
    def kernel(x, a=-0.5):
        x = abs(x)
        if x <= 1:
            return (a + 2) * x ** 3 - (a + 3) * x ** 2 + 1
        if x < 2:
            return a * x ** 3 - 5 * a * x ** 2 + 8 * a * x - 4 * a
        return 0.0

    h_in, w_in = img.shape
    out = np.zeros((h_out, w_out))
    for oy in range(h_out):
        sy = (oy + 0.5) * h_in / h_out - 0.5
        by = int(np.floor(sy))
        for ox in range(w_out):
            sx = (ox + 0.5) * w_in / w_out - 0.5
            bx = int(np.floor(sx))
            acc = 0.0
            for ky in range(-1, 3):
                wy = kernel(sy - (by + ky))
                iy = min(max(by + ky, 0), h_in - 1)
                for kx in range(-1, 3):
                    wx = kernel(sx - (bx + kx))
                    ix = min(max(bx + kx, 0), w_in - 1)
                    acc += wy * wx * img[iy, ix]
            out[oy, ox] = acc
    return np.clip(out, 0.0, 1.0)


class TestResize:
    def test_constant_stays_constant(self):
        img = np.full((5, 7), 0.3)
        out = grids.resize(img, 13, 4)
        assert out.shape == (4, 13)
        assert np.allclose(out, 0.3, atol=1e-12)

    def test_identity_dimensions(self):
        rng = np.random.default_rng(0)
        img = rng.random((9, 6))
        assert np.abs(grids.resize(img, 6, 9) - img).max() < 1e-9

    def test_matches_direct_convolution_oracle(self):
        # bilinear ramp, downscale 4x4 -> 2x2
        yy, xx = np.mgrid[0:4, 0:4]
        ramp = (xx + yy) / 6.0
        got = grids.resize(ramp, 2, 2)
        want = _bicubic_oracle(ramp, 2, 2)
        assert np.abs(got - want).max() < 1e-6

    def test_oracle_on_random_images(self):
        rng = np.random.default_rng(3)
        for w_out, h_out in [(3, 5), (8, 8), (11, 4)]:
            img = rng.random((6, 7))
            got = grids.resize(img, w_out, h_out)
            want = _bicubic_oracle(img, w_out, h_out)
            assert np.abs(got - want).max() < 1e-6

    def test_output_range_clamped(self):
        rng = np.random.default_rng(1)
        img = (rng.random((8, 8)) > 0.5).astype(float)  # overshoot-prone
        out = grids.resize(img, 32, 32)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_invalid_target(self):
        with pytest.raises(ValueError):
            grids.resize(np.zeros((4, 4)), 0, 4)


class TestDecomposeColors:
    def test_pure_red(self):
        d = grids.decompose_colors(np.array([[[1.0, 0.0, 0.0]]]))
        assert d["h"][0, 0] == 0.0
        assert d["s"][0, 0] == 1.0 and d["v"][0, 0] == 1.0
        assert d["c"][0, 0] == 0.0 and d["m"][0, 0] == 1.0
        assert d["y"][0, 0] == 1.0 and d["k"][0, 0] == 0.0

    def test_black_conventions(self):
        d = grids.decompose_colors(np.zeros((1, 1, 3)))
        assert d["k"][0, 0] == 1.0
        assert d["c"][0, 0] == d["m"][0, 0] == d["y"][0, 0] == 0.0
        assert d["v"][0, 0] == 0.0 and d["s"][0, 0] == 0.0 and d["h"][0, 0] == 0.0

    def test_reference_pixel(self):
        # hexcone and cmyk formulas evaluated by hand for (0.2, 0.4, 0.6)
        d = grids.decompose_colors(np.array([[[0.2, 0.4, 0.6]]]))
        assert abs(d["k"][0, 0] - 0.4) < 1e-12
        assert abs(d["c"][0, 0] - 2 / 3) < 1e-12
        assert abs(d["m"][0, 0] - 1 / 3) < 1e-12
        assert abs(d["y"][0, 0] - 0.0) < 1e-12
        assert abs(d["h"][0, 0] - 0.5833333333333334) < 1e-9
        assert abs(d["s"][0, 0] - 2 / 3) < 1e-9
        assert abs(d["v"][0, 0] - 0.6) < 1e-12

    def test_all_channels_present_and_bounded(self):
        rng = np.random.default_rng(2)
        img = rng.random((16, 16, 3))
        d = grids.decompose_colors(img)
        assert set(d) == set(grids.CHANNELS)
        for name, ch in d.items():
            assert ch.shape == (16, 16)
            assert ch.min() >= 0.0 and ch.max() <= 1.0, name

    def test_hsv_round_trip(self):
        rng = np.random.default_rng(4)
        img = 0.05 + 0.9 * rng.random((32, 32, 3))  # keep s, v nondegenerate
        d = grids.decompose_colors(img)
        rt = grids.hsv_to_rgb(d["h"], d["s"], d["v"])
        assert np.abs(rt - img).max() < 1e-6


def _blur_oracle(img, sigma):
    """Direct 2-D convolution with an explicitly built Gaussian kernel and
    replicated borders."""
    r = int(np.ceil(3 * sigma))
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    k = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    k /= k.sum()
    h, w = img.shape
    out = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy = min(max(i + dy, 0), h - 1)
                    xx = min(max(j + dx, 0), w - 1)
                    acc += k[dy + r, dx + r] * img[yy, xx]
            out[i, j] = acc
    return out


class TestGaussianBlur:
    def test_constant_preserved(self):
        img = np.full((8, 8), 0.4)
        assert np.abs(grids.gaussian_blur(img, 1.5) - 0.4).max() < 1e-9

    def test_impulse_separable(self):
        img = np.zeros((9, 9))
        img[4, 4] = 1.0
        k = grids.gaussian_kernel_1d(1.0)  # radius 3
        want = np.zeros((9, 9))
        want[1:8, 1:8] = np.outer(k, k)
        got = grids.gaussian_blur(img, 1.0)
        assert np.abs(got - want).max() < 1e-9

    def test_matches_direct_2d_oracle(self):
        rng = np.random.default_rng(5)
        img = rng.random((16, 16))
        got = grids.gaussian_blur(img, 2.0)
        want = _blur_oracle(img, 2.0)
        assert np.abs(got - want).max() < 1e-7

    def test_linearity(self):
        rng = np.random.default_rng(6)
        x, y = rng.random((12, 12)), rng.random((12, 12))
        a, b = 0.7, -1.3
        lhs = grids.gaussian_blur(a * x + b * y, 1.0)
        rhs = a * grids.gaussian_blur(x, 1.0) + b * grids.gaussian_blur(y, 1.0)
        assert np.abs(lhs - rhs).max() < 1e-9

    def test_kernel_radius(self):
        assert grids.gaussian_kernel_1d(1.0).size == 7  # radius ceil(3)
        assert grids.gaussian_kernel_1d(0.1).size == 3  # radius stays >= 1

    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            grids.gaussian_blur(np.zeros((4, 4)), 0.0)


class TestDownsampleHalf:
    def test_single_block_mean(self):
        out = grids.downsample_half(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert out.shape == (1, 1)
        assert out[0, 0] == 0.5

    def test_constant(self):
        out = grids.downsample_half(np.full((6, 4), 0.2))
        assert out.shape == (3, 2)
        assert np.allclose(out, 0.2)

    def test_ramp_block_means(self):
        img = np.arange(16, dtype=float).reshape(4, 4) / 15.0
        got = grids.downsample_half(img)
        want = np.array([[img[0:2, 0:2].mean(), img[0:2, 2:4].mean()],
                         [img[2:4, 0:2].mean(), img[2:4, 2:4].mean()]])
        assert np.allclose(got, want)

    def test_odd_dimensions_floor(self):
        out = grids.downsample_half(np.zeros((5, 7)))
        assert out.shape == (2, 3)

    def test_degenerate_size(self):
        with pytest.raises(ValueError, match="too small"):
            grids.downsample_half(np.zeros((1, 4)))


class TestMinmaxRescale:
    def test_constant_to_zero(self):
        assert np.all(grids.minmax_rescale(np.full((4, 4), 3.7)) == 0.0)

    def test_range_and_endpoints(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(5, 5))
        out = grids.minmax_rescale(x)
        assert out.min() == 0.0 and out.max() == 1.0

    def test_idempotent_on_rescaled(self):
        rng = np.random.default_rng(8)
        out = grids.minmax_rescale(rng.normal(size=(6, 6)))
        again = grids.minmax_rescale(out)
        assert np.array_equal(out, again)

    def test_batched_slices_independent(self):
        rng = np.random.default_rng(9)
        batch = rng.normal(size=(3, 5, 5))
        got = grids.minmax_rescale(batch)
        for i in range(3):
            assert np.array_equal(got[i], grids.minmax_rescale(batch[i]))


def test_operations_are_pure():
    rng = np.random.default_rng(10)
    img = rng.random((10, 10))
    for op in (lambda x: grids.resize(x, 7, 5),
               lambda x: grids.gaussian_blur(x, 1.0),
               grids.downsample_half,
               grids.minmax_rescale):
        a, b = op(img.copy()), op(img.copy())
        assert np.array_equal(a, b)
