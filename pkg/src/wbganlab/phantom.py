"""Synthetic body-like phantom slices, a stand-in for real coronal wbMRI data.

Each phantom composes a torso ellipse, a head disc, limb capsules and a
brighter spine column, with per-slice anatomical jitter and optional additive
Gaussian noise. Generation is a pure function of (seed, n, noise_level):
slice i is drawn from an RNG seeded by (seed, i).
"""

from __future__ import annotations

import numpy as np

from .preprocess import RawSlice, SliceMeta

BODY = 0.45
HEAD = 0.50
LIMB = 0.38
SPINE = 0.85


def _ellipse(mask_shape, center, *, ry, rx, value, out):
    h, w = mask_shape
    yy, xx = np.ogrid[0:h, 0:w]
    m = ((yy - center[0]) / ry) ** 2 + ((xx - center[1]) / rx) ** 2 <= 1.0
    out[m] = value


def _capsule(shape, p0, p1, radius, value, out):
    """Thick line segment (stadium shape) between p0 and p1."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    p0 = np.asarray(p0, dtype=float)
    d = np.asarray(p1, dtype=float) - p0
    denom = float(d @ d) or 1.0
    t = np.clip(((yy - p0[0]) * d[0] + (xx - p0[1]) * d[1]) / denom, 0.0, 1.0)
    dist2 = (yy - (p0[0] + t * d[0])) ** 2 + (xx - (p0[1] + t * d[1])) ** 2
    out[dist2 <= radius**2] = value


def _one_phantom(rng: np.random.Generator, noise_level: float) -> np.ndarray:
    h = int(rng.integers(780, 821))
    w = int(rng.integers(246, 267))
    img = np.zeros((h, w))

    jit = lambda s: float(rng.normal(0, s))

    head_r = 0.055 * h * (1 + 0.1 * jit(1))
    head_c = (0.09 * h + jit(0.01 * h), w / 2 + jit(0.03 * w))
    torso_cy = 0.38 * h + jit(0.01 * h)
    torso_cx = w / 2 + jit(0.02 * w)
    torso_ry = 0.24 * h * (1 + 0.05 * jit(1))
    torso_rx = 0.30 * w * (1 + 0.05 * jit(1))

    # torso and head
    _ellipse((h, w), (torso_cy, torso_cx), ry=torso_ry, rx=torso_rx, value=BODY, out=img)
    _ellipse((h, w), head_c, ry=head_r, rx=head_r * 0.8, value=HEAD, out=img)
    # neck
    _capsule((h, w), head_c, (torso_cy - torso_ry * 0.8, torso_cx), 0.03 * w, BODY, img)

    # arms
    shoulder_y = torso_cy - torso_ry * 0.7
    for side in (-1, 1):
        sx = torso_cx + side * torso_rx * 0.9
        hand = (shoulder_y + 0.30 * h + jit(0.02 * h),
                torso_cx + side * (torso_rx * 1.2 + jit(0.02 * w)))
        _capsule((h, w), (shoulder_y, sx), hand, 0.035 * w, LIMB, img)

    # legs
    hip_y = torso_cy + torso_ry * 0.9
    for side in (-1, 1):
        hx = torso_cx + side * torso_rx * 0.45
        foot = (min(hip_y + 0.42 * h + jit(0.02 * h), h - 3),
                hx + side * jit(0.01 * w))
        _capsule((h, w), (hip_y, hx), foot, 0.045 * w, LIMB, img)

    # spine: brighter column down the torso midline
    _capsule((h, w), (torso_cy - torso_ry * 0.95, torso_cx + jit(0.005 * w)),
             (torso_cy + torso_ry * 0.95, torso_cx + jit(0.005 * w)),
             0.018 * w, SPINE, img)

    if noise_level > 0:
        img = img + rng.normal(0, noise_level, size=img.shape)
        img = np.clip(img, 0.0, None)
    return img


def phantom_generate(seed: int, n: int, noise_level: float = 0.02) -> list[RawSlice]:
    """Generate n deterministic body-like phantom slices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    slices = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        img = _one_phantom(rng, noise_level)
        meta = SliceMeta(source="phantom", patient_id=f"phantom-{seed}", slice_index=i)
        slices.append(RawSlice(img, meta))
    return slices
