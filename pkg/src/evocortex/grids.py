"""Raster grids, color decomposition and the primitive transforms.

A single-channel image ("grid") is a 2-D float ndarray with values nominally
in [0, 1]. An RGB image is an (h, w, 3) float ndarray. All functions here are
pure; batched variants accept leading axes, operating on the last two.
"""

import functools

import numpy as np
from numba import njit
from scipy.ndimage import correlate1d

# Channel order of a full color decomposition.
CHANNELS = ("r", "g", "b", "c", "m", "y", "k", "h", "s", "v")


class ImageLoadError(Exception):
    """Raised when an image file cannot be read or decoded."""


def load_image(path):
    """Load a PNG or JPEG file as an (h, w, 3) float64 array in [0, 1].

    Grayscale and palette images are expanded to three identical channels.
    Raises ImageLoadError naming the path on unreadable or unsupported files.
    """
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise ImageLoadError(f"cannot load image {path!r}: {exc}") from exc
    return arr / 255.0


def _cubic_kernel(x, a=-0.5):
    """Keys cubic convolution kernel; weights sum to 1 over any unit shift."""
    ax = np.abs(x)
    out = np.zeros_like(ax)
    near = ax <= 1.0
    far = (ax > 1.0) & (ax < 2.0)
    out[near] = (a + 2.0) * ax[near] ** 3 - (a + 3.0) * ax[near] ** 2 + 1.0
    out[far] = a * ax[far] ** 3 - 5.0 * a * ax[far] ** 2 + 8.0 * a * ax[far] - 4.0 * a
    return out


@functools.lru_cache(maxsize=128)
def _resample_matrix(n_in, n_out, dtype=np.float64):
    """Dense (n_out, n_in) bicubic interpolation matrix, borders replicated.

    Cached per size pair; callers must treat the result as read-only.
    """
    scale = n_in / n_out
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    t = src - base
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for k in range(-1, 3):
        w = _cubic_kernel(t - k)
        idx = np.clip(base + k, 0, n_in - 1)
        np.add.at(mat, (dst.astype(np.int64), idx), w)
    return mat.astype(dtype, copy=False)


def resize(img, w, h):
    """Bicubic resize of a grid to (h, w), output clamped to [0, 1].

    Accepts (..., h_in, w_in); separable Keys kernel (a = -0.5), sample
    centers aligned, borders replicated. Resizing to the source dimensions
    reproduces the input.
    """
    img = np.asarray(img)
    if w < 1 or h < 1:
        raise ValueError(f"target size must be >= 1, got ({w}, {h})")
    h_in, w_in = img.shape[-2], img.shape[-1]
    ah = _resample_matrix(h_in, h, img.dtype)
    aw = _resample_matrix(w_in, w, img.dtype)
    out = ah @ img @ aw.T
    return np.clip(out, 0.0, 1.0)


def resize_rgb(img, w, h):
    """Bicubic resize of an (h, w, 3) image, channel by channel."""
    img = np.asarray(img)
    chans = [resize(img[..., c], w, h) for c in range(img.shape[-1])]
    return np.stack(chans, axis=-1)


def decompose_colors(img):
    """Split an RGB image into the ten channels r,g,b,c,m,y,k,h,s,v.

    Returns a dict keyed by channel name, each an array shaped like one input
    channel, values in [0, 1]. CMYK uses k = 1 - max(r,g,b) with c = m = y = 0
    at pure black; HSV follows the hexcone formulas with hue scaled to [0, 1)
    and zero hue for achromatic pixels.
    """
    img = np.asarray(img, dtype=np.float64)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    v = np.maximum(np.maximum(r, g), b)
    lo = np.minimum(np.minimum(r, g), b)
    delta = v - lo

    k = 1.0 - v
    denom = np.where(v > 0.0, v, 1.0)
    c = np.where(v > 0.0, (1.0 - r - k) / denom, 0.0)
    m = np.where(v > 0.0, (1.0 - g - k) / denom, 0.0)
    y = np.where(v > 0.0, (1.0 - b - k) / denom, 0.0)

    s = np.where(v > 0.0, delta / denom, 0.0)

    safe_delta = np.where(delta > 0.0, delta, 1.0)
    h_r = np.mod((g - b) / safe_delta, 6.0)
    h_g = (b - r) / safe_delta + 2.0
    h_b = (r - g) / safe_delta + 4.0
    h = np.where(v == r, h_r, np.where(v == g, h_g, h_b)) / 6.0
    h = np.where(delta > 0.0, h, 0.0)
    h = np.where(h >= 1.0, h - 1.0, h)

    return {
        "r": r.copy(), "g": g.copy(), "b": b.copy(),
        "c": c, "m": m, "y": y, "k": k,
        "h": h, "s": s, "v": v.copy(),
    }


def hsv_to_rgb(h, s, v):
    """Inverse hexcone conversion, used to check decomposition identities."""
    h6 = np.asarray(h, dtype=np.float64) * 6.0
    i = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def gaussian_kernel_1d(sigma):
    """Normalized sampled Gaussian with radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img, sigma):
    """Separable Gaussian smoothing; borders replicated, no clamping.

    The kernel sums to 1, so constants pass through and the operator is
    linear. Accepts (..., h, w).
    """
    img = np.asarray(img)
    k = gaussian_kernel_1d(sigma).astype(img.dtype, copy=False)
    out = correlate1d(img, k, axis=-1, mode="nearest")
    return correlate1d(out, k, axis=-2, mode="nearest")


def downsample_half(img):
    """Halve both dimensions by averaging 2x2 blocks.

    Odd trailing rows/columns are dropped. Raises on grids smaller than 2x2.
    """
    img = np.asarray(img)
    h, w = img.shape[-2], img.shape[-1]
    if h < 2 or w < 2:
        raise ValueError(f"grid too small to downsample: {h}x{w}")
    h2, w2 = h // 2, w // 2
    trimmed = img[..., : 2 * h2, : 2 * w2]
    shape = trimmed.shape[:-2] + (h2, 2, w2, 2)
    return trimmed.reshape(shape).mean(axis=(-3, -1))


@njit(cache=True, nogil=True)
def _minmax_rows(flat):
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        row = flat[i]
        lo = row[0]
        hi = row[0]
        for j in range(row.shape[0]):
            v = row[j]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        span = hi - lo
        if span > 0.0:
            for j in range(row.shape[0]):
                out[i, j] = (row[j] - lo) / span
        else:
            for j in range(row.shape[0]):
                out[i, j] = 0.0
    return out


def minmax_rescale(img):
    """Affine rescale of each (h, w) slice to [0, 1]; constant slices to 0.

    Division by the span keeps the slice maximum at exactly 1.0, so a
    second rescale is the identity on non-constant slices.
    """
    img = np.asarray(img)
    flat = np.ascontiguousarray(img).reshape(-1, img.shape[-2] * img.shape[-1])
    return _minmax_rows(flat).reshape(img.shape)
