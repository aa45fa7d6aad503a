"""Deterministic 2D raster filtering primitives.

Pixels live in uint8 arrays wrapped by :class:`ImageBuffer`: shape ``(h, w)``
for grayscale, ``(h, w, 3)`` for RGB. Every filter accumulates in float64 (or
exact integer arithmetic where the inputs allow it), rounds half away from
zero, and saturates to [0, 255] at each output write, so identical inputs
produce byte-identical outputs on every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class BadKernelSize(ValueError):
    """Kernel extent violates a size/parity requirement."""


class ChannelMismatch(ValueError):
    """Operation received an image with the wrong channel count."""


class ImageTooSmall(ValueError):
    """Image is too small for the requested neighborhood operation."""


class SizeMismatch(ValueError):
    """Two images that must share dimensions do not."""


class BorderMode(Enum):
    """How samples outside the image are synthesized.

    REFLECT101 mirrors without repeating the edge sample (``dcb|abcd|cba``);
    REPLICATE repeats the edge sample (``aaa|abcd|ddd``).
    """

    REFLECT101 = "reflect101"
    REPLICATE = "replicate"


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """8-bit raster, 1 or 3 channels, row-major; 3-channel order is R,G,B."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise TypeError(f"pixels must be uint8, got {px.dtype}")
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise ChannelMismatch(f"expected (h, w) or (h, w, 3), got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"image must be at least 1x1, got shape {px.shape}")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    def tobytes(self) -> bytes:
        """Raw interleaved samples, row-major."""
        return self.pixels.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and self.tobytes() == other.tobytes()

    @classmethod
    def full(cls, width: int, height: int, value) -> "ImageBuffer":
        """Constant image; `value` is a scalar (grayscale) or an (r, g, b) triple."""
        if np.isscalar(value):
            return cls(np.full((height, width), value, dtype=np.uint8))
        return cls(np.full((height, width, 3), 0, dtype=np.uint8) + np.asarray(value, dtype=np.uint8))


@dataclass(frozen=True)
class Kernel1D:
    """Symmetric, normalized 1D tap vector of odd length."""

    coefficients: tuple[float, ...]

    def __post_init__(self) -> None:
        c = self.coefficients
        if len(c) < 1 or len(c) % 2 == 0:
            raise BadKernelSize(f"1D kernel length must be odd and >= 1, got {len(c)}")
        if abs(math.fsum(c) - 1.0) > 1e-12:
            raise ValueError("1D kernel must sum to 1 within 1e-12")
        if any(abs(a - b) > 1e-12 for a, b in zip(c, reversed(c))):
            raise ValueError("1D kernel must be symmetric about its center")

    @property
    def size(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True, eq=False)
class Kernel2D:
    """Real 2D kernel with an explicit anchor (row, col offset into the kernel)."""

    coefficients: np.ndarray
    anchor: tuple[int, int]

    def __post_init__(self) -> None:
        k = np.asarray(self.coefficients, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] < 1 or k.shape[1] < 1:
            raise BadKernelSize(f"2D kernel must be a non-empty matrix, got shape {k.shape}")
        ar, ac = self.anchor
        if not (0 <= ar < k.shape[0] and 0 <= ac < k.shape[1]):
            raise ValueError(f"anchor {self.anchor} outside kernel bounds {k.shape}")
        k.setflags(write=False)
        object.__setattr__(self, "coefficients", k)

    @property
    def shape(self) -> tuple[int, int]:
        return self.coefficients.shape


#: Fixed unit-DC-gain sharpening kernel applied as the final pipeline stage.
SHARPEN_KERNEL = Kernel2D(
    np.array([[-1, -2, -1], [-2, 13, -2], [-1, -2, -1]], dtype=np.float64),
    anchor=(1, 1),
)

# Rec.601 luma weights scaled to integers over /1000 so grayscale is exact.
_LUMA_R, _LUMA_G, _LUMA_B = 299, 587, 114


def _fold_indices(idx: np.ndarray, n: int, mode: BorderMode) -> np.ndarray:
    if mode is BorderMode.REPLICATE:
        return np.clip(idx, 0, n - 1)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    j = np.mod(idx, period)
    return np.where(j >= n, period - j, j)


def _extend(px: np.ndarray, top: int, bottom: int, left: int, right: int,
            mode: BorderMode) -> np.ndarray:
    """Pad by border extension; pad extents may exceed the image size."""
    h, w = px.shape[:2]
    rows = _fold_indices(np.arange(-top, h + bottom), h, mode)
    cols = _fold_indices(np.arange(-left, w + right), w, mode)
    return px[rows[:, None], cols[None, :]]


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0.0, np.floor(x + 0.5), np.ceil(x - 0.5))


def saturate_samples(acc: np.ndarray) -> np.ndarray:
    """Round half away from zero and clamp to [0, 255] as uint8."""
    return np.clip(_round_half_away(acc), 0.0, 255.0).astype(np.uint8)


def _require_odd(name: str, k: int, minimum: int = 1) -> None:
    if k < minimum or k % 2 == 0:
        raise BadKernelSize(f"{name} must be odd and >= {minimum}, got {k}")


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Rec.601 luma: y = round_half_away(0.299 R + 0.587 G + 0.114 B).

    Computed in exact integer arithmetic, so ties at .5 always round up.
    """
    if img.channels != 3:
        raise ChannelMismatch(f"to_grayscale needs 3 channels, got {img.channels}")
    px = img.pixels.astype(np.int64)
    num = _LUMA_R * px[..., 0] + _LUMA_G * px[..., 1] + _LUMA_B * px[..., 2]
    y = (2 * num + 1000) // 2000
    return ImageBuffer(y.astype(np.uint8))


def replicate_to_rgb(img: ImageBuffer) -> ImageBuffer:
    """Copy a grayscale plane into all three channels."""
    if img.channels != 1:
        raise ChannelMismatch(f"replicate_to_rgb needs 1 channel, got {img.channels}")
    return ImageBuffer(np.repeat(img.pixels[:, :, None], 3, axis=2))


def gaussian_sigma(ksize: int) -> float:
    """Size-derived sigma: 0.3 * ((ksize - 1)/2 - 1) + 0.8."""
    _require_odd("gaussian ksize", ksize)
    return 0.3 * ((ksize - 1) / 2 - 1) + 0.8


def make_gaussian_kernel(ksize: int) -> Kernel1D:
    """Normalized 1D Gaussian taps with sigma derived from the kernel size."""
    _require_odd("gaussian ksize", ksize)
    sigma = gaussian_sigma(ksize)
    center = (ksize - 1) / 2
    x = np.arange(ksize, dtype=np.float64)
    taps = np.exp(-((x - center) ** 2) / (2.0 * sigma * sigma))
    taps /= taps.sum()
    return Kernel1D(tuple(float(t) for t in taps))


def _separable_pass(px: np.ndarray, coef: np.ndarray, axis: int) -> np.ndarray:
    k = coef.size
    anchor = k // 2
    h, w = px.shape[:2]
    if axis == 1:
        padded = _extend(px, 0, 0, anchor, k - 1 - anchor, BorderMode.REFLECT101)
    else:
        padded = _extend(px, anchor, k - 1 - anchor, 0, 0, BorderMode.REFLECT101)
    acc = np.zeros(px.shape, dtype=np.float64)
    for j in range(k):
        sl = padded[:, j:j + w] if axis == 1 else padded[j:j + h]
        acc += coef[j] * sl
    return saturate_samples(acc)


def gaussian_blur(img: ImageBuffer, ksize: int) -> ImageBuffer:
    """Separable Gaussian blur, Reflect101 border.

    Horizontal then vertical pass; each pass rounds and saturates at its
    final per-pixel write, so the result matches a direct 2D convolution
    with the outer-product kernel within +/-1 per sample.
    """
    coef = np.asarray(make_gaussian_kernel(ksize).coefficients)
    out = _separable_pass(img.pixels, coef, axis=1)
    out = _separable_pass(out, coef, axis=0)
    return ImageBuffer(out)


def box_blur(img: ImageBuffer, kw: int, kh: int) -> ImageBuffer:
    """Mean over a kw x kh window, Reflect101 border, exact integer arithmetic.

    The anchor offset is floor(k/2) before the pixel, so an even extent k
    covers indices [x - k//2, x + k - 1 - k//2] (for k=20: [x-10, x+9]).
    """
    if kw < 1 or kh < 1:
        raise BadKernelSize(f"box extents must be >= 1, got {kw}x{kh}")
    h, w = img.pixels.shape[:2]
    padded = _extend(img.pixels, kh // 2, kh - 1 - kh // 2, kw // 2, kw - 1 - kw // 2,
                     BorderMode.REFLECT101).astype(np.int64)
    # Prefix sums keep window totals exact; the rounded mean of a
    # nonnegative integer sum s over n samples is (2s + n) // (2n).
    s0 = np.zeros((padded.shape[0] + 1,) + padded.shape[1:], dtype=np.int64)
    np.cumsum(padded, axis=0, out=s0[1:])
    rows = s0[kh:] - s0[:-kh]
    s1 = np.zeros((rows.shape[0], rows.shape[1] + 1) + rows.shape[2:], dtype=np.int64)
    np.cumsum(rows, axis=1, out=s1[:, 1:])
    sums = s1[:, kw:] - s1[:, :-kw]
    n = kw * kh
    return ImageBuffer(((2 * sums + n) // (2 * n)).astype(np.uint8))


def median_blur(img: ImageBuffer, ksize: int) -> ImageBuffer:
    """Exact window median (sorted index (k*k - 1)/2), Replicate border."""
    _require_odd("median ksize", ksize, minimum=3)
    r = ksize // 2
    padded = _extend(img.pixels, r, r, r, r, BorderMode.REPLICATE)
    win = sliding_window_view(padded, (ksize, ksize), axis=(0, 1))
    flat = win.reshape(win.shape[:-2] + (ksize * ksize,))
    mid = (ksize * ksize - 1) // 2
    med = np.partition(flat, mid, axis=-1)[..., mid]
    return ImageBuffer(np.ascontiguousarray(med))


def convolve(img: ImageBuffer, kernel: Kernel2D, border: BorderMode) -> ImageBuffer:
    """Correlation (kernel not flipped) with double accumulation and saturation.

    Also serves as the oracle path for the separable filters: run it with an
    outer-product kernel to cross-check gaussian_blur.
    """
    ker = kernel.coefficients
    kh, kw = ker.shape
    ar, ac = kernel.anchor
    h, w = img.pixels.shape[:2]
    padded = _extend(img.pixels, ar, kh - 1 - ar, ac, kw - 1 - ac, border)
    acc = np.zeros(img.pixels.shape, dtype=np.float64)
    for r in range(kh):
        for c in range(kw):
            coef = ker[r, c]
            if coef == 0.0:
                continue
            acc += coef * padded[r:r + h, c:c + w]
    return ImageBuffer(saturate_samples(acc))


def sharpen(img: ImageBuffer) -> ImageBuffer:
    """Apply the fixed sharpening kernel to a grayscale image (Reflect101)."""
    if img.channels != 1:
        raise ChannelMismatch(f"sharpen needs 1 channel, got {img.channels}")
    return convolve(img, SHARPEN_KERNEL, BorderMode.REFLECT101)


def highband_energy(img: ImageBuffer) -> float:
    """Mean squared 3x3 Laplacian response over interior pixels, unclamped.

    Quantifies how much high-frequency detail an image carries; blurring a
    non-constant image strictly lowers it.
    """
    if img.channels != 1:
        raise ChannelMismatch(f"highband_energy needs 1 channel, got {img.channels}")
    if img.width < 3 or img.height < 3:
        raise ImageTooSmall(f"need at least 3x3, got {img.width}x{img.height}")
    p = img.pixels.astype(np.float64)
    lap = p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * p[1:-1, 1:-1]
    return float(np.mean(lap * lap))
