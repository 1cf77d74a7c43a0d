"""Slice preprocessing: bias correction, CLAHE, denoising, canonical framing.

The canonical frame is 800 rows x 256 columns with intensities in [0, 1].
Every step is a pure function of its inputs; provenance of applied steps is
carried along on the slice metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import median_filter

CANONICAL_SHAPE = (800, 256)

FOREGROUND_FRACTION = 0.05  # of max intensity; pixels above count as body


@dataclass(frozen=True)
class SliceMeta:
    source: str = "unknown"
    patient_id: str = "unknown"
    slice_index: int = 0
    provenance: tuple[str, ...] = ()

    def with_step(self, step: str) -> "SliceMeta":
        return replace(self, provenance=self.provenance + (step,))


@dataclass
class RawSlice:
    """Arbitrary-size non-negative 2-D intensity image."""

    pixels: np.ndarray
    meta: SliceMeta = field(default_factory=SliceMeta)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or min(self.pixels.shape) < 1:
            raise ValueError(f"expected 2-D image, got shape {self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("pixel values must be finite")
        if self.pixels.min() < 0:
            raise ValueError("pixel values must be non-negative")


@dataclass
class CanonicalSlice:
    """Exactly 800x256, values in [0, 1]."""

    pixels: np.ndarray
    meta: SliceMeta = field(default_factory=SliceMeta)

    expected_shape = CANONICAL_SHAPE

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != CANONICAL_SHAPE:
            raise ValueError(
                f"canonical slice must be {CANONICAL_SHAPE}, got {self.pixels.shape}"
            )
        if self.pixels.min() < 0 or self.pixels.max() > 1:
            raise ValueError("canonical values must lie in [0, 1]")


@dataclass(frozen=True)
class BiasConfig:
    polynomial_degree: int = 3
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.polynomial_degree < 0:
            raise ValueError("polynomial_degree must be >= 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True)
class ClaheConfig:
    clip_limit: float = 2.0
    tile_grid: tuple[int, int] = (8, 8)
    bins: int = 256

    def __post_init__(self):
        if self.clip_limit <= 0:
            raise ValueError("clip_limit must be > 0")
        if min(self.tile_grid) < 1:
            raise ValueError("tile grid dimensions must be >= 1")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")


def _poly_terms(y: np.ndarray, x: np.ndarray, degree: int) -> np.ndarray:
    """Design matrix of all monomials y^i * x^j with i + j <= degree."""
    cols = [y**i * x**j for i in range(degree + 1) for j in range(degree + 1 - i)]
    return np.stack(cols, axis=-1)


def correct_bias(slc: RawSlice, cfg: BiasConfig | None = None) -> RawSlice:
    """Divide out a smooth multiplicative field estimated in the log domain.

    A polynomial of total degree cfg.polynomial_degree is least-squares fit
    to log(pixels + epsilon) over foreground pixels; the image is divided by
    the (mean-one-normalized) exponential of the fit and rescaled to preserve
    the input's mean intensity.
    """
    cfg = cfg or BiasConfig()
    img = slc.pixels
    vmax = img.max()
    if vmax <= 0:
        return RawSlice(img.copy(), slc.meta.with_step("bias-skip"))

    fg = img > FOREGROUND_FRACTION * vmax
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w]
    # normalized coordinates keep the design matrix well conditioned
    yn = yy / max(h - 1, 1)
    xn = xx / max(w - 1, 1)

    terms = _poly_terms(yn[fg], xn[fg], cfg.polynomial_degree)
    target = np.log(img[fg] + cfg.epsilon)
    coef, *_ = np.linalg.lstsq(terms, target, rcond=None)

    log_field = _poly_terms(yn, xn, cfg.polynomial_degree) @ coef
    field = np.exp(log_field - log_field[fg].mean())  # mean-one on foreground
    out = img / np.maximum(field, cfg.epsilon)
    if out.mean() > 0:
        out *= img.mean() / out.mean()
    out = np.clip(out, 0.0, None)
    return RawSlice(out, slc.meta.with_step("bias"))


def _clipped_cdf(tile: np.ndarray, bins: int, clip_limit: float, vmax: float) -> np.ndarray:
    """Clipped-histogram CDF mapping for one tile, as a bins-long lookup."""
    hist, _ = np.histogram(tile, bins=bins, range=(0.0, vmax))
    hist = hist.astype(np.float64)
    limit = clip_limit * tile.size / bins
    excess = np.clip(hist - limit, 0, None).sum()
    hist = np.minimum(hist, limit) + excess / bins
    cdf = np.cumsum(hist)
    cdf /= cdf[-1]
    return cdf * vmax


def _tile_mappings(img: np.ndarray, cfg: ClaheConfig, vmax: float):
    """Per-tile CDF lookup tables and tile-center coordinates."""
    h, w = img.shape
    rows, cols = cfg.tile_grid
    if h // rows < 1 or w // cols < 1:
        rows = cols = 1  # tiles larger than the image: single global tile
    r_edges = np.linspace(0, h, rows + 1).astype(int)
    c_edges = np.linspace(0, w, cols + 1).astype(int)
    maps = np.empty((rows, cols, cfg.bins))
    r_centers = np.empty(rows)
    c_centers = np.empty(cols)
    for i in range(rows):
        r_centers[i] = (r_edges[i] + r_edges[i + 1] - 1) / 2
        for j in range(cols):
            c_centers[j] = (c_edges[j] + c_edges[j + 1] - 1) / 2
            tile = img[r_edges[i]:r_edges[i + 1], c_edges[j]:c_edges[j + 1]]
            maps[i, j] = _clipped_cdf(tile, cfg.bins, cfg.clip_limit, vmax)
    return maps, r_centers, c_centers


def equalize_contrast(slc: RawSlice, cfg: ClaheConfig | None = None) -> RawSlice:
    """Contrast-limited adaptive histogram equalization.

    Tile-wise clipped-histogram equalization with bilinear interpolation
    between the four surrounding tile mappings. Output stays within
    [0, max(input)].
    """
    cfg = cfg or ClaheConfig()
    img = slc.pixels
    vmax = img.max()
    if vmax <= 0:
        return RawSlice(img.copy(), slc.meta.with_step("clahe"))

    maps, r_centers, c_centers = _tile_mappings(img, cfg, vmax)
    rows, cols = maps.shape[:2]
    h, w = img.shape

    bin_idx = np.minimum((img / vmax * cfg.bins).astype(int), cfg.bins - 1)

    # fractional tile coordinates of every pixel, clamped to the center grid
    yy = np.arange(h)[:, None]
    xx = np.arange(w)[None, :]
    if rows > 1:
        ri = np.clip(np.searchsorted(r_centers, yy.ravel(), side="right") - 1, 0, rows - 2)
    else:
        ri = np.zeros(h, dtype=int)
    if cols > 1:
        ci = np.clip(np.searchsorted(c_centers, xx.ravel(), side="right") - 1, 0, cols - 2)
    else:
        ci = np.zeros(w, dtype=int)
    ri = np.broadcast_to(ri.reshape(h, 1), (h, w))
    ci = np.broadcast_to(ci.reshape(1, w), (h, w))

    if rows > 1:
        fy = (yy - r_centers[ri]) / (r_centers[ri + 1] - r_centers[ri])
        fy = np.clip(fy, 0.0, 1.0)
    else:
        fy = np.zeros((h, w))
    if cols > 1:
        fx = (xx - c_centers[ci]) / (c_centers[ci + 1] - c_centers[ci])
        fx = np.clip(fx, 0.0, 1.0)
    else:
        fx = np.zeros((h, w))

    ri1 = np.minimum(ri + 1, rows - 1)
    ci1 = np.minimum(ci + 1, cols - 1)
    m00 = maps[ri, ci, bin_idx]
    m01 = maps[ri, ci1, bin_idx]
    m10 = maps[ri1, ci, bin_idx]
    m11 = maps[ri1, ci1, bin_idx]
    out = (m00 * (1 - fy) * (1 - fx) + m01 * (1 - fy) * fx
           + m10 * fy * (1 - fx) + m11 * fy * fx)
    out = np.clip(out, 0.0, vmax)
    return RawSlice(out, slc.meta.with_step("clahe"))


def denoise(slc: RawSlice) -> RawSlice:
    """3x3 median filter with edge replication."""
    img = slc.pixels
    if img.shape[0] < 3 or img.shape[1] < 3:
        return RawSlice(img.copy(), slc.meta.with_step("denoise-skip"))
    out = median_filter(img, size=3, mode="nearest")
    return RawSlice(out, slc.meta.with_step("denoise"))


def _crop_pad_axis(arr: np.ndarray, axis: int, target: int) -> np.ndarray:
    size = arr.shape[axis]
    if size > target:
        start = (size - target) // 2
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(start, start + target)
        return arr[tuple(sl)]
    if size < target:
        before = (target - size) // 2
        after = target - size - before  # extra pixel on the trailing side
        pad = [(0, 0)] * arr.ndim
        pad[axis] = (before, after)
        return np.pad(arr, pad, mode="constant")
    return arr


def canonicalize(slc: RawSlice) -> CanonicalSlice:
    """Center-crop / zero-pad to the canonical frame, then min-max to [0,1].

    Constant images map to all zeros.
    """
    img = _crop_pad_axis(slc.pixels, 0, CANONICAL_SHAPE[0])
    img = _crop_pad_axis(img, 1, CANONICAL_SHAPE[1])
    lo, hi = img.min(), img.max()
    if hi > lo:
        img = (img - lo) / (hi - lo)
    else:
        img = np.zeros_like(img)
    return CanonicalSlice(img, slc.meta.with_step("canonicalize"))


def preprocess_pipeline(
    slc: RawSlice,
    bias: BiasConfig | None = None,
    clahe: ClaheConfig | None = None,
) -> CanonicalSlice:
    """Full chain: bias correction -> CLAHE -> denoise -> canonicalize."""
    out = correct_bias(slc, bias)
    out = equalize_contrast(out, clahe)
    out = denoise(out)
    return canonicalize(out)
