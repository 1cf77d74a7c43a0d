"""Anomaly detection by generative latent inversion, plus the circle-based
tumour simulator, a marker-based watershed baseline, and accuracy sweeps.

A query image is inverted into the healthy-trained generator's latent space
by gradient descent; the absolute difference between the query and its
reconstruction localizes candidate anomalies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import stats as scipy_stats
from skimage.filters import sobel, threshold_otsu
from skimage.measure import label as cc_label
from skimage.segmentation import watershed

FOREGROUND_LEVEL = 0.05


@dataclass(frozen=True)
class Circle:
    radius: float
    intensity: float
    offset: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("intensity must be in [0, 1]")


@dataclass(frozen=True)
class TumourSpec:
    center: tuple[int, int]
    circles: tuple[Circle, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.circles:
            raise ValueError("need at least one circle")


@dataclass(frozen=True)
class InversionConfig:
    steps: int = 500
    step_size: float = 0.05
    feature_weight: float = 0.1   # weight of the discriminator feature term
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0.0 <= self.feature_weight <= 1.0:
            raise ValueError("feature_weight must be in [0, 1]")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class AnomalyResult:
    z_star: np.ndarray
    reconstruction: np.ndarray
    diff_map: np.ndarray
    mask: np.ndarray
    score: float
    loss_trace: list[float] = field(default_factory=list)


@dataclass
class SweepReport:
    axis: str
    grid: list[float]
    accuracy: dict[str, list[float]]   # method -> accuracy per grid value
    iou_rate: dict[str, list[float]]   # IoU >= 0.3 sub-criterion alone
    argmax_rate: dict[str, list[float]]  # saliency-argmax sub-criterion alone
    trials: int
    criterion: str = "IoU>=0.3 OR saliency argmax inside ground truth"

    def to_json(self) -> dict:
        return {
            "axis": self.axis,
            "grid": self.grid,
            "accuracy": self.accuracy,
            "iou_rate": self.iou_rate,
            "argmax_rate": self.argmax_rate,
            "trials": self.trials,
            "criterion": self.criterion,
            "methods": sorted(self.accuracy),
        }


def _pixels(img) -> np.ndarray:
    return img.pixels if hasattr(img, "pixels") else np.asarray(img, dtype=np.float64)


def random_tumour_spec(rng: np.random.Generator, image, n_circles: int = 3,
                       radius: float = 8.0, intensity: float = 0.9,
                       margin: int = 4) -> TumourSpec:
    """Random tumour inside the body foreground with jittered sub-circles."""
    img = _pixels(image)
    fg = np.argwhere(img > FOREGROUND_LEVEL)
    fg = fg[(fg[:, 0] > margin) & (fg[:, 0] < img.shape[0] - margin)
            & (fg[:, 1] > margin) & (fg[:, 1] < img.shape[1] - margin)]
    if len(fg) == 0:
        raise ValueError("image has no usable foreground")
    center = tuple(int(v) for v in fg[rng.integers(len(fg))])
    jit = max(1, int(round(radius / 2)))
    circles = [Circle(radius=max(1.0, radius * float(rng.uniform(0.6, 1.0))),
                      intensity=intensity,
                      offset=(int(rng.integers(-jit, jit + 1)),
                              int(rng.integers(-jit, jit + 1))))
               for _ in range(n_circles)]
    circles[0] = Circle(radius=max(1.0, radius), intensity=intensity, offset=(0, 0))
    return TumourSpec(center=center, circles=tuple(circles),
                      seed=int(rng.integers(2**31)))


def simulate_tumour(image, spec: TumourSpec) -> tuple[np.ndarray, np.ndarray]:
    """Draw the spec's circles onto the image; returns (image, truth mask).

    Later circles overwrite earlier ones; pixels outside the union of discs
    are untouched. The center must lie in the body foreground.
    """
    img = _pixels(image).copy()
    h, w = img.shape
    r0, c0 = spec.center
    if not (0 <= r0 < h and 0 <= c0 < w) or img[r0, c0] <= FOREGROUND_LEVEL:
        raise ValueError("tumour center must lie inside the body foreground")
    yy, xx = np.ogrid[0:h, 0:w]
    mask = np.zeros((h, w), dtype=bool)
    drew = False
    for circ in spec.circles:
        cr, cc = r0 + circ.offset[0], c0 + circ.offset[1]
        disc = (yy - cr) ** 2 + (xx - cc) ** 2 <= circ.radius**2
        if not disc.any():
            continue
        drew = True
        img[disc] = circ.intensity
        mask |= disc
    if not drew:
        raise ValueError("no circle intersects the image")
    return np.clip(img, 0.0, 1.0), mask


def invert_to_latent(query, ckpt, cfg: InversionConfig | None = None,
                     ) -> tuple[np.ndarray, list[float]]:
    """Gradient search for the latent whose generated image matches the query.

    Loss: (1-lambda) * mean|q - G(z)| + lambda * mean|f(q) - f(G(z))| with f
    the discriminator's designated feature layer. Best of cfg.restarts by
    final loss; the returned trace is the best-so-far loss per step.
    """
    cfg = cfg or InversionConfig()
    gen = ckpt.build_generator()
    disc = ckpt.build_discriminator()
    q = torch.from_numpy(_pixels(query)).float()[None, None]
    lam = cfg.feature_weight
    with torch.no_grad():
        q_feat = disc.features(q) if lam > 0 else None

    rng = torch.Generator().manual_seed(cfg.seed)
    best_z, best_loss = None, float("inf")
    best_trace: list[float] = []
    for _ in range(cfg.restarts):
        z = torch.randn(1, gen.spec.latent_dim, generator=rng).requires_grad_(True)
        opt = torch.optim.Adam([z], lr=cfg.step_size)
        trace, run_best = [], float("inf")
        final = float("nan")
        for _ in range(cfg.steps):
            out = gen(z, noise_mode="const")
            loss = (1 - lam) * (q - out).abs().mean()
            if lam > 0:
                loss = loss + lam * (q_feat - disc.features(out)).abs().mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            final = float(loss.detach())
            if np.isfinite(final):
                run_best = min(run_best, final)
            trace.append(run_best)
        if np.isfinite(final) and final < best_loss:
            best_loss, best_z, best_trace = final, z.detach(), trace
    if best_z is None:
        raise RuntimeError("all inversion restarts produced non-finite losses")
    return best_z.numpy()[0].astype(np.float64), best_trace


def reconstruct(z: np.ndarray, ckpt) -> np.ndarray:
    gen = ckpt.build_generator()
    zt = torch.from_numpy(np.asarray(z, dtype=np.float32))[None]
    with torch.no_grad():
        return gen(zt, noise_mode="const")[0, 0].numpy().astype(np.float64)


def detect(query, ckpt, cfg: InversionConfig | None = None,
           threshold: float = 0.2) -> AnomalyResult:
    """Invert, subtract and threshold; score is the mean absolute difference."""
    q = _pixels(query)
    z_star, trace = invert_to_latent(q, ckpt, cfg)
    recon = reconstruct(z_star, ckpt)
    diff = np.abs(q - recon)
    return AnomalyResult(z_star=z_star, reconstruction=recon, diff_map=diff,
                         mask=diff > threshold, score=float(diff.mean()),
                         loss_trace=trace)


def calibrate_threshold(clean_images, ckpt, cfg: InversionConfig | None = None,
                        quantile: float = 0.95) -> float:
    """Detection threshold: the given quantile of diff-map values over a
    clean calibration set."""
    diffs = []
    for img in clean_images:
        z, _ = invert_to_latent(img, ckpt, cfg)
        diffs.append(np.abs(_pixels(img) - reconstruct(z, ckpt)).ravel())
    return float(np.quantile(np.concatenate(diffs), quantile))


def watershed_baseline(image, marker_quantile: float = 0.98) -> np.ndarray:
    """Marker-based watershed candidate-anomaly mask.

    Foreground markers come from the top-intensity quantile, background
    markers from below the Otsu threshold; flooding runs on the Sobel
    gradient magnitude. Returns the union of regions grown from the bright
    markers.
    """
    img = _pixels(image)
    if img.max() - img.min() < 1e-9:
        return np.zeros(img.shape, dtype=bool)
    otsu = threshold_otsu(img)
    hi = np.quantile(img, marker_quantile)
    bright = img >= max(hi, otsu)  # bright markers must sit above background
    if not bright.any() or bright.all():
        return np.zeros(img.shape, dtype=bool)
    markers = np.zeros(img.shape, dtype=np.int32)
    markers[img < otsu] = 1
    bright_cc = cc_label(bright)
    markers[bright_cc > 0] = bright_cc[bright_cc > 0] + 1
    labels = watershed(sobel(img), markers)
    return labels > 1


def _trial_outcome(mask: np.ndarray, saliency: np.ndarray | None,
                   truth: np.ndarray) -> tuple[bool, bool]:
    """(IoU >= 0.3, saliency argmax inside truth) sub-criteria."""
    union = np.logical_or(mask, truth).sum()
    iou = np.logical_and(mask, truth).sum() / union if union else 0.0
    iou_hit = bool(iou >= 0.3)
    argmax_hit = False
    if saliency is not None and np.ptp(saliency) > 0:
        idx = np.unravel_index(int(np.argmax(saliency)), saliency.shape)
        argmax_hit = bool(truth[idx])
    return iou_hit, argmax_hit


DEFAULT_INTENSITY_GRID = (0.3, 0.45, 0.6, 0.75, 0.9)
DEFAULT_RADIUS_GRID = (2.0, 4.0, 8.0, 12.0, 16.0)


def accuracy_sweep(ckpt, test_slices, axis: str, grid=None, trials: int = 20,
                   cfg: InversionConfig | None = None, threshold: float | None = None,
                   seed: int = 0, default_radius: float = 8.0,
                   default_intensity: float = 0.9, scale: float = 1.0,
                   n_circles: int = 3) -> SweepReport:
    """Detection accuracy of GAN inversion and the watershed baseline over a
    grid of tumour intensities or radii.

    A trial counts correct when the detected mask's IoU with ground truth is
    at least 0.3 or the saliency argmax lies inside the ground-truth mask
    (diff map for the GAN, masked image intensity for the watershed).
    Per-trial RNG streams derive from (seed, axis, grid index, trial index).
    """
    if axis not in ("intensity", "radius"):
        raise ValueError("axis must be 'intensity' or 'radius'")
    if grid is None:
        grid = DEFAULT_INTENSITY_GRID if axis == "intensity" else \
            tuple(r * scale for r in DEFAULT_RADIUS_GRID)
    grid = [float(g) for g in grid]
    if not grid or trials < 1:
        raise ValueError("grid must be non-empty and trials >= 1")
    cfg = cfg or InversionConfig()
    if threshold is None:
        threshold = calibrate_threshold(test_slices[: min(3, len(test_slices))], ckpt, cfg)

    axis_id = 0 if axis == "intensity" else 1
    acc = {"gan": [], "watershed": []}
    iou_rate = {"gan": [], "watershed": []}
    arg_rate = {"gan": [], "watershed": []}
    for gi, value in enumerate(grid):
        hits = {"gan": 0, "watershed": 0}
        iou_hits = {"gan": 0, "watershed": 0}
        arg_hits = {"gan": 0, "watershed": 0}
        for t in range(trials):
            rng = np.random.default_rng([seed, axis_id, gi, t])
            base = test_slices[int(rng.integers(len(test_slices)))]
            radius = value if axis == "radius" else default_radius * scale
            intensity = value if axis == "intensity" else default_intensity
            spec = random_tumour_spec(rng, base, n_circles=n_circles,
                                      radius=radius, intensity=intensity)
            tumour_img, truth = simulate_tumour(base, spec)

            res = detect(tumour_img, ckpt,
                         InversionConfig(steps=cfg.steps, step_size=cfg.step_size,
                                         feature_weight=cfg.feature_weight,
                                         restarts=cfg.restarts,
                                         seed=int(rng.integers(2**31))),
                         threshold=threshold)
            gi_iou, gi_arg = _trial_outcome(res.mask, res.diff_map, truth)
            hits["gan"] += gi_iou or gi_arg
            iou_hits["gan"] += gi_iou
            arg_hits["gan"] += gi_arg

            ws_mask = watershed_baseline(tumour_img)
            saliency = np.where(ws_mask, tumour_img, 0.0) if ws_mask.any() else None
            ws_iou, ws_arg = _trial_outcome(ws_mask, saliency, truth)
            hits["watershed"] += ws_iou or ws_arg
            iou_hits["watershed"] += ws_iou
            arg_hits["watershed"] += ws_arg
        for m in ("gan", "watershed"):
            acc[m].append(hits[m] / trials)
            iou_rate[m].append(iou_hits[m] / trials)
            arg_rate[m].append(arg_hits[m] / trials)
    return SweepReport(axis=axis, grid=grid, accuracy=acc, iou_rate=iou_rate,
                       argmax_rate=arg_rate, trials=trials)


def spearman_trend(values: list[float], grid: list[float]) -> float:
    """Spearman rank correlation between accuracy values and the grid."""
    rho = scipy_stats.spearmanr(grid, values).statistic
    return float(rho) if np.isfinite(rho) else 0.0


def save_sweep_report(report: SweepReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=2))
