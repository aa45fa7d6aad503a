"""Procedural synthetic illusions: a smooth low-frequency glyph hidden in a
high-frequency noise carrier, plus a template-matching oracle classifier.

The glyph carries its energy in low spatial frequencies and the carrier in
high ones, which is exactly the split the reveal() pipeline exploits, so the
filter's benefit is measurable end to end with no external models.

Determinism: every random value derives from the spec seed through
splitmix64, so identical specs produce identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imageio
from .dataset import NO_ILLUSION, LabelSet, Manifest, SampleRecord, save_manifest
from .imaging import ImageBuffer, SizeMismatch, saturate_samples, to_grayscale
from .pipeline import DEFAULT_FILTER, FilterConfig, reveal


class BadClassId(ValueError):
    """Class id outside the glyph table."""


GLYPH_NAMES = ("disk", "bar-vertical", "bar-horizontal", "ring", "stripe-down",
               "stripe-up", "cross", "x-cross", "twin-disks", "triangle")

TEMPLATE_SIZE = 16

# Calibrated by scripts/calibrate_synth.py: the threshold sits in the gap
# between the highest oracle score any pure carrier reaches (0.31) and the
# lowest score an alpha=1 composite reaches (0.95) over the calibration seed
# set, giving a false no-illusion rate of 0 there; the alpha default sits
# mid-band where filtered minus unfiltered oracle accuracy is widest.
DEFAULT_ORACLE_THRESHOLD = 0.6
DEFAULT_STUDY_ALPHA = 0.14

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(seed: int, index: int) -> int:
    """Output `index` of the splitmix64 stream seeded at `seed`.

    This is the single mix function used to derive every per-sample and
    per-field seed, so parallel generation by sample index is reproducible.
    """
    z = (seed + (index + 1) * _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _uniform_stream(seed: int, count: int) -> np.ndarray:
    """`count` float64 uniforms in [0, 1) from the splitmix64 stream."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK) + idx * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class SynthSpec:
    class_count: int = 10
    image_size: int = 128
    alpha: float = DEFAULT_STUDY_ALPHA
    carrier_scale: float = 3.0
    seed: int = 0
    no_illusion_fraction: float = 0.0

    def __post_init__(self) -> None:
        if not 2 <= self.class_count <= len(GLYPH_NAMES):
            raise ValueError(f"class_count must be in [2, {len(GLYPH_NAMES)}], "
                             f"got {self.class_count}")
        if self.image_size < TEMPLATE_SIZE:
            raise ValueError(f"image_size must be >= {TEMPLATE_SIZE}, got {self.image_size}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.carrier_scale <= 0:
            raise ValueError(f"carrier_scale must be > 0, got {self.carrier_scale}")
        if not 0.0 <= self.no_illusion_fraction <= 1.0:
            raise ValueError(f"no_illusion_fraction must be in [0, 1], "
                             f"got {self.no_illusion_fraction}")


def _edge_distances(u: np.ndarray, v: np.ndarray,
                    vertices: list[tuple[float, float]]) -> np.ndarray:
    """Max signed distance to the edges of a convex polygon (negative inside)."""
    d = np.full(u.shape, -np.inf)
    n = len(vertices)
    for i in range(n):
        px, py = vertices[i]
        qx, qy = vertices[(i + 1) % n]
        ex, ey = qx - px, qy - py
        norm = math.hypot(ex, ey)
        d = np.maximum(d, (-ey * (u - px) + ex * (v - py)) / norm)
    return d


def _glyph_field(class_id: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Signed distance (negative inside) of one glyph on [-1, 1]^2 coordinates."""
    r = np.hypot(u, v)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    if class_id == 0:
        return r - 0.45
    if class_id == 1:
        return np.abs(u) - 0.28
    if class_id == 2:
        return np.abs(v) - 0.28
    if class_id == 3:
        return np.abs(r - 0.60) - 0.18
    if class_id == 4:
        return np.abs(u - v) * inv_sqrt2 - 0.28
    if class_id == 5:
        return np.abs(u + v) * inv_sqrt2 - 0.28
    if class_id == 6:
        return np.minimum(np.abs(u), np.abs(v)) - 0.24
    if class_id == 7:
        return np.minimum(np.abs(u - v), np.abs(u + v)) * inv_sqrt2 - 0.24
    if class_id == 8:
        return np.minimum(np.hypot(u - 0.55, v), np.hypot(u + 0.55, v)) - 0.30
    if class_id == 9:
        return _edge_distances(u, v, [(0.0, -0.75), (-0.72, 0.62), (0.72, 0.62)])
    raise BadClassId(f"class_id must be in [0, {len(GLYPH_NAMES) - 1}], got {class_id}")


_EDGE_SOFTNESS = 0.25


def _rasterize_glyph(class_id: int, size: int, dx: float = 0.0, dy: float = 0.0,
                     scale: float = 1.0) -> np.ndarray:
    """Soft-edged glyph raster as float64 in [0, 255]."""
    centers = (2.0 * np.arange(size) + 1.0) / size - 1.0
    u = (centers[None, :] - dx) / scale
    v = (centers[:, None] - dy) / scale
    d = np.broadcast_to(_glyph_field(class_id, u, v), (size, size))
    c = np.clip(0.5 - d / (2.0 * _EDGE_SOFTNESS), 0.0, 1.0)
    return 255.0 * c * c * (3.0 - 2.0 * c)


def render_concept(class_id: int, size: int, seed: int) -> ImageBuffer:
    """Smooth class glyph with small seed-derived position/scale jitter."""
    if not 0 <= class_id < len(GLYPH_NAMES):
        raise BadClassId(f"class_id must be in [0, {len(GLYPH_NAMES) - 1}], got {class_id}")
    jit = _uniform_stream(seed, 3)
    dx = (jit[0] - 0.5) * 0.10
    dy = (jit[1] - 0.5) * 0.10
    scale = 1.0 + (jit[2] - 0.5) * 0.12
    return ImageBuffer(saturate_samples(_rasterize_glyph(class_id, size, dx, dy, scale)))


def _value_noise(size: int, spacing: float, seed: int) -> np.ndarray:
    """Smoothstep-interpolated lattice noise, float64 in [0, 1]."""
    cells = int(math.ceil(size / spacing)) + 1
    lattice = _uniform_stream(seed, cells * cells).reshape(cells, cells)
    pos = np.arange(size, dtype=np.float64) / spacing
    i0 = np.floor(pos).astype(np.int64)
    t = pos - i0
    t = t * t * (3.0 - 2.0 * t)
    i1 = i0 + 1
    a = lattice[np.ix_(i0, i0)]
    b = lattice[np.ix_(i0, i1)]
    c = lattice[np.ix_(i1, i0)]
    d = lattice[np.ix_(i1, i1)]
    tx, ty = t[None, :], t[:, None]
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty


_OCTAVES = ((1.0, 0.25), (2.0, 0.25), (4.0, 0.5))  # (spacing multiple, weight)


def render_carrier(size: int, carrier_scale: float, seed: int) -> ImageBuffer:
    """High-frequency colored texture, contrast-normalized to mean 128, std 40."""
    if carrier_scale <= 0:
        raise ValueError(f"carrier_scale must be > 0, got {carrier_scale}")
    acc = np.zeros((size, size, 3), dtype=np.float64)
    for oi, (mult, weight) in enumerate(_OCTAVES):
        for ch in range(3):
            sub = splitmix64(seed, 7000 + 3 * oi + ch)
            acc[:, :, ch] += weight * (_value_noise(size, carrier_scale * mult, sub) - 0.5)
    std = float(acc.std())
    if std < 1e-12:
        return ImageBuffer.full(size, size, (128, 128, 128))
    return ImageBuffer(saturate_samples(128.0 + 40.0 * (acc - acc.mean()) / std))


def compose_illusion(concept: ImageBuffer, carrier: ImageBuffer, alpha: float) -> ImageBuffer:
    """Blend carrier luminance toward the concept value with weight alpha.

    alpha=0 returns the carrier exactly; alpha=1 collapses each pixel to the
    concept value on all channels.
    """
    if concept.channels != 1 or carrier.channels != 3:
        raise SizeMismatch("compose_illusion needs a 1-channel concept and 3-channel carrier")
    if (concept.height, concept.width) != (carrier.height, carrier.width):
        raise SizeMismatch(f"size mismatch: concept {concept.width}x{concept.height} vs "
                           f"carrier {carrier.width}x{carrier.height}")
    mix = ((1.0 - alpha) * carrier.pixels.astype(np.float64)
           + alpha * concept.pixels.astype(np.float64)[:, :, None])
    return ImageBuffer(saturate_samples(mix))


@dataclass(frozen=True, eq=False)
class TemplateBank:
    """Canonical per-class glyphs at template resolution plus normalized copies."""

    class_names: tuple[str, ...]
    templates: np.ndarray   # (C, T, T) uint8
    normalized: np.ndarray  # (C, T, T) float64, zero mean, unit variance


def template_bank(class_count: int = len(GLYPH_NAMES)) -> TemplateBank:
    if not 1 <= class_count <= len(GLYPH_NAMES):
        raise BadClassId(f"class_count must be in [1, {len(GLYPH_NAMES)}], got {class_count}")
    templates = np.stack([saturate_samples(_rasterize_glyph(cid, TEMPLATE_SIZE))
                          for cid in range(class_count)])
    floats = templates.astype(np.float64)
    normalized = np.zeros_like(floats)
    for i, t in enumerate(floats):
        std = t.std()
        if std > 1e-12:
            normalized[i] = (t - t.mean()) / std
    return TemplateBank(GLYPH_NAMES[:class_count], templates, normalized)


def _box_downsample(arr: np.ndarray, target: int) -> np.ndarray:
    """Area-average a 2D array down to target x target (float64)."""
    h, w = arr.shape
    rb = (np.arange(target + 1) * h) // target
    cb = (np.arange(target + 1) * w) // target
    rows = np.add.reduceat(arr.astype(np.float64), rb[:-1], axis=0)
    cells = np.add.reduceat(rows, cb[:-1], axis=1)
    weights = np.outer(np.diff(rb), np.diff(cb))
    return cells / weights


def oracle_scores(img: ImageBuffer, bank: TemplateBank) -> np.ndarray:
    """Normalized cross-correlation of the pooled image with every template."""
    gray = to_grayscale(img) if img.channels == 3 else img
    pooled = _box_downsample(gray.pixels, TEMPLATE_SIZE)
    std = pooled.std()
    if std < 1e-9:
        return np.zeros(len(bank.class_names))
    z = (pooled - pooled.mean()) / std
    return np.array([float(np.mean(z * t)) for t in bank.normalized])


def oracle_classify(img: ImageBuffer, bank: TemplateBank,
                    threshold: float = DEFAULT_ORACLE_THRESHOLD) -> str:
    """Best-matching class by NCC, or the no-illusion label below threshold.

    Ties break toward the earlier class; a constant image scores 0 everywhere
    and therefore lands on the no-illusion label.
    """
    scores = oracle_scores(img, bank)
    best = int(np.argmax(scores))
    if scores[best] < threshold:
        return NO_ILLUSION
    return bank.class_names[best]


def _sample_plan(spec: SynthSpec, n: int) -> list[int | None]:
    """Per-index class ids; None marks a pure-carrier (no illusion) sample."""
    if n < spec.class_count:
        raise ValueError(f"need n >= class_count, got n={n} < {spec.class_count}")
    n_no = int(round(n * spec.no_illusion_fraction))
    n_concept = n - n_no
    plan: list[int | None] = [i % spec.class_count for i in range(n_concept)]
    plan += [None] * n_no
    return plan


def _render_sample(spec: SynthSpec, index: int, class_id: int | None) -> ImageBuffer:
    s = splitmix64(spec.seed, index)
    carrier = render_carrier(spec.image_size, spec.carrier_scale, splitmix64(s, 101))
    if class_id is None:
        return carrier
    concept = render_concept(class_id, spec.image_size, splitmix64(s, 202))
    return compose_illusion(concept, carrier, spec.alpha)


def _labelset_for(spec: SynthSpec, with_no_illusion: bool) -> LabelSet:
    names = GLYPH_NAMES[:spec.class_count]
    if with_no_illusion:
        return LabelSet("synthetic-glyphs", names + (NO_ILLUSION,), True)
    return LabelSet("synthetic-glyphs", names, False)


def generate_set(spec: SynthSpec, n: int, out_dir: str | Path) -> Manifest:
    """Write n synthetic samples (balanced classes) plus their manifest.

    no_illusion_fraction of the samples are pure carrier labeled with the
    no-illusion class; the rest split evenly over the glyph classes.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    plan = _sample_plan(spec, n)
    records = []
    for i, class_id in enumerate(plan):
        sample_id = f"s{i:05d}"
        rel = f"images/{sample_id}.png"
        imageio.write_image(out_dir / rel, _render_sample(spec, i, class_id))
        label = NO_ILLUSION if class_id is None else GLYPH_NAMES[class_id]
        records.append(SampleRecord(sample_id, rel, "illusion", "classification",
                                    label, "test"))
    manifest = Manifest(tuple(records),
                        _labelset_for(spec, any(c is None for c in plan)))
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest


@dataclass(frozen=True)
class StudyResult:
    total: int
    unfiltered_correct: int
    filtered_correct: int

    @property
    def unfiltered_accuracy(self) -> float:
        return 100.0 * self.unfiltered_correct / self.total

    @property
    def filtered_accuracy(self) -> float:
        return 100.0 * self.filtered_correct / self.total

    @property
    def gap(self) -> float:
        return self.filtered_accuracy - self.unfiltered_accuracy


def benefit_study(spec: SynthSpec, n: int,
                  filter_config: FilterConfig = DEFAULT_FILTER,
                  threshold: float = DEFAULT_ORACLE_THRESHOLD) -> StudyResult:
    """Oracle accuracy on raw composites vs the same composites after reveal()."""
    bank = template_bank(spec.class_count)
    plan = _sample_plan(spec, n)
    raw_ok = filt_ok = 0
    for i, class_id in enumerate(plan):
        truth = NO_ILLUSION if class_id is None else GLYPH_NAMES[class_id]
        image = _render_sample(spec, i, class_id)
        if oracle_classify(image, bank, threshold) == truth:
            raw_ok += 1
        filtered = reveal(image, filter_config)
        if oracle_classify(filtered, bank, threshold) == truth:
            filt_ok += 1
    return StudyResult(len(plan), raw_ok, filt_ok)
