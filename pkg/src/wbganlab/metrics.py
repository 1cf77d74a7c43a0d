"""Fréchet distances between feature-space Gaussians.

FID uses Inception-v3 pool features (2048-d); the domain Fréchet distance
(DFD) uses the 512-d mean vector of a VAE encoder trained on the same
dataset. The trace term uses a symmetric-eigendecomposition PSD matrix
square root: Tr((S1 S2)^{1/2}) = Tr((sqrt(S1) S2 sqrt(S1))^{1/2}).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

FEATURE_DIMS = {"inception_pool": 2048, "vae_encoder": 512}

# seed for the pinned fallback initialization of the Inception extractor,
# used when no pretrained weight file is configured
_INCEPTION_INIT_SEED = 20240817


@dataclass
class FeatureStats:
    """Gaussian summary (mean, covariance) of a feature-space sample."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.n < 2:
            raise ValueError("need at least 2 samples")
        if self.sigma.shape != (self.mu.size, self.mu.size):
            raise ValueError("sigma shape must match mu dimension")
        asym = np.abs(self.sigma - self.sigma.T).max()
        if asym > 1e-8 * max(1.0, np.abs(self.sigma).max()):
            raise ValueError("sigma must be symmetric")


def matrix_sqrt_psd(sigma: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-tol * max_eig, 0) are clamped to zero; anything more
    negative, or visible asymmetry, is rejected.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    scale = max(1.0, np.abs(sigma).max())
    if np.abs(sigma - sigma.T).max() > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh((sigma + sigma.T) / 2)
    floor = -tol * max(vals.max(), 0.0) if vals.size else 0.0
    if vals.min() < floor - 1e-12 * scale:
        raise ValueError(f"matrix has eigenvalue {vals.min():.3e} below tolerance")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), clamped at 0."""
    if a.mu.size != b.mu.size:
        raise ValueError("feature dimensions do not match")
    sqrt_a = matrix_sqrt_psd(a.sigma)
    inner = matrix_sqrt_psd(sqrt_a @ b.sigma @ sqrt_a)
    d2 = (np.sum((a.mu - b.mu) ** 2)
          + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * np.trace(inner))
    return float(max(d2, 0.0))


def _as_image_stack(images) -> np.ndarray:
    arrays = [img.pixels if hasattr(img, "pixels") else np.asarray(img, dtype=np.float64)
              for img in images]
    return np.stack(arrays)


class InceptionExtractor:
    """Inception-v3 pool-layer features (2048-d).

    Grayscale images are replicated to 3 channels, bilinearly resized to
    299x299 and mapped to [-1, 1]. Weights come from the file named by the
    WBGANLAB_INCEPTION_WEIGHTS environment variable when set; otherwise a
    pinned fixed-seed initialization is used so scores are reproducible
    across runs (absolute values are then not comparable to published FIDs).
    """

    kind = "inception_pool"
    feature_dim = FEATURE_DIMS["inception_pool"]

    _cached = None

    def __init__(self, batch: int = 8):
        self.batch = batch
        if InceptionExtractor._cached is None:
            InceptionExtractor._cached = self._build()
        self.model = InceptionExtractor._cached

    @staticmethod
    def _build():
        from torchvision.models import inception_v3

        weights_path = os.environ.get("WBGANLAB_INCEPTION_WEIGHTS")
        torch.manual_seed(_INCEPTION_INIT_SEED)
        model = inception_v3(weights=None, aux_logits=True, init_weights=True)
        if weights_path:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
        model.fc = torch.nn.Identity()
        model.eval()
        for p in model.parameters():
            p.requires_grad_(False)
        return model

    def __call__(self, images) -> np.ndarray:
        stack = _as_image_stack(images)
        x = torch.from_numpy(stack).float().unsqueeze(1)
        feats = []
        with torch.no_grad():
            for start in range(0, x.shape[0], self.batch):
                chunk = x[start:start + self.batch]
                chunk = F.interpolate(chunk, size=(299, 299), mode="bilinear",
                                      align_corners=False)
                chunk = chunk.repeat(1, 3, 1, 1) * 2.0 - 1.0
                feats.append(self.model(chunk).numpy())
        return np.concatenate(feats).astype(np.float64)


class VaeEncoderExtractor:
    """Encoder mean vector (512-d) of a trained domain VAE."""

    kind = "vae_encoder"
    feature_dim = FEATURE_DIMS["vae_encoder"]

    def __init__(self, vae_ckpt, batch: int = 32):
        self.vae = vae_ckpt.build_vae()
        self.resolution = tuple(self.vae.spec.output_resolution)
        self.batch = batch

    def __call__(self, images) -> np.ndarray:
        stack = _as_image_stack(images)
        x = torch.from_numpy(stack).float().unsqueeze(1)
        if tuple(x.shape[2:]) != self.resolution:
            x = F.interpolate(x, size=self.resolution, mode="bilinear",
                              align_corners=False)
        feats = []
        with torch.no_grad():
            for start in range(0, x.shape[0], self.batch):
                mu, _ = self.vae.encode(x[start:start + self.batch])
                feats.append(mu.numpy())
        return np.concatenate(feats).astype(np.float64)


def compute_stats(images, extractor) -> FeatureStats:
    """Sample mean and unbiased covariance of extracted features."""
    feats = extractor(images) if callable(extractor) else np.asarray(images)
    if feats.shape[0] < 2:
        raise ValueError("need at least 2 images")
    mu = feats.mean(axis=0)
    sigma = np.cov(feats, rowvar=False)
    sigma = np.atleast_2d(sigma)
    return FeatureStats(mu=mu, sigma=sigma, n=feats.shape[0])


def fid(real, fake, extractor: InceptionExtractor | None = None) -> float:
    """Fréchet distance in Inception pool-feature space."""
    ex = extractor or InceptionExtractor()
    return frechet_distance(compute_stats(real, ex), compute_stats(fake, ex))


def dfd(real, fake, vae_ckpt) -> float:
    """Fréchet distance in the domain VAE encoder feature space."""
    ex = VaeEncoderExtractor(vae_ckpt)
    return frechet_distance(compute_stats(real, ex), compute_stats(fake, ex))
