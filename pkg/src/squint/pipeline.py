"""The five-stage transform that reveals hidden low-frequency figures.

Stage order: Gaussian blur, box blur, median blur, grayscale conversion,
sharpen. The default configuration is the fixed production setting; only
the kernel sizes are configurable, the sharpening kernel never is.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import imaging
from .imaging import BadKernelSize, ChannelMismatch, ImageBuffer


@dataclass(frozen=True)
class FilterConfig:
    gaussian_ksize: int = 61
    box_kw: int = 20
    box_kh: int = 20
    median_ksize: int = 5


DEFAULT_FILTER = FilterConfig()


def validate_config(cfg: FilterConfig) -> None:
    """Raise BadKernelSize naming the offending field if any size is invalid."""
    if cfg.gaussian_ksize < 1 or cfg.gaussian_ksize % 2 == 0:
        raise BadKernelSize(f"gaussian_ksize must be odd and >= 1, got {cfg.gaussian_ksize}")
    if cfg.box_kw < 1:
        raise BadKernelSize(f"box_kw must be >= 1, got {cfg.box_kw}")
    if cfg.box_kh < 1:
        raise BadKernelSize(f"box_kh must be >= 1, got {cfg.box_kh}")
    if cfg.median_ksize < 3 or cfg.median_ksize % 2 == 0:
        raise BadKernelSize(f"median_ksize must be odd and >= 3, got {cfg.median_ksize}")


def lowpass_stages(img: ImageBuffer, cfg: FilterConfig = DEFAULT_FILTER) -> ImageBuffer:
    """The three blur stages only (Gaussian, box, median), channels preserved."""
    validate_config(cfg)
    out = imaging.gaussian_blur(img, cfg.gaussian_ksize)
    out = imaging.box_blur(out, cfg.box_kw, cfg.box_kh)
    return imaging.median_blur(out, cfg.median_ksize)


def reveal(img: ImageBuffer, cfg: FilterConfig = DEFAULT_FILTER) -> ImageBuffer:
    """Full pipeline on an RGB image; returns grayscale of the same size."""
    if img.channels != 3:
        raise ChannelMismatch(f"reveal needs a 3-channel image, got {img.channels}")
    return imaging.sharpen(imaging.to_grayscale(lowpass_stages(img, cfg)))
