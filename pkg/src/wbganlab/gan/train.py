"""Adversarial and VAE training loops, checkpointing, and sampling.

Training uses the non-saturating GAN loss with annealed instance noise on
both real and fake batches. StyleGAN2 adds lazy R1 and path-length
regularization; the progressive variant grows through stages with linear
fade-in. Adam runs with betas (0.0, 0.99) for the adversarial nets.
"""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import autograd

from .networks import Discriminator, Generator, VAE, build_discriminator, build_generator
from .specs import DiscriminatorSpec, GeneratorSpec, NoiseSchedule, TrainConfig, instance_noise_sigma

FORMAT_VERSION = 1


class Checkpoint:
    """Single-file training snapshot with a versioned header."""

    def __init__(self, payload: dict, path: Path | None = None):
        if payload.get("format_version") != FORMAT_VERSION:
            raise ValueError("unsupported or missing checkpoint format version")
        self.payload = payload
        self.path = path

    @property
    def variant(self) -> str:
        return self.payload["variant"]

    @property
    def step(self) -> int:
        return self.payload["step"]

    @property
    def kind(self) -> str:
        return self.payload["kind"]

    def generator_spec(self) -> GeneratorSpec:
        d = dict(self.payload["spec"])
        d["base_shape"] = tuple(d["base_shape"])
        d["channel_schedule"] = tuple(d["channel_schedule"])
        d["output_resolution"] = tuple(d["output_resolution"])
        return GeneratorSpec(**d)

    def build_generator(self) -> Generator:
        g = build_generator(self.generator_spec())
        g.load_state_dict(self.payload["g_state"])
        g.eval()
        return g

    def build_discriminator(self) -> Discriminator:
        d = build_discriminator(self.generator_spec())
        d.load_state_dict(self.payload["d_state"])
        d.eval()
        return d

    def build_vae(self) -> VAE:
        if self.kind != "vae":
            raise ValueError("not a VAE checkpoint")
        vae = VAE(self.generator_spec())
        vae.load_state_dict(self.payload["vae_state"])
        vae.eval()
        return vae

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.payload, path)
        self.path = path
        return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ValueError(f"{path} is not a wbganlab checkpoint")
    return Checkpoint(payload, Path(path))


def _dataset_tensor(dataset, resolution: tuple[int, int]) -> torch.Tensor:
    """Stack slices to (N, 1, H, W) in [0,1], resizing if the spec is scaled."""
    arrays = [s.pixels if hasattr(s, "pixels") else np.asarray(s) for s in dataset]
    if not arrays:
        raise ValueError("dataset is empty")
    x = torch.from_numpy(np.stack(arrays)).float().unsqueeze(1)
    if tuple(x.shape[2:]) != tuple(resolution):
        x = F.interpolate(x, size=resolution, mode="bilinear", align_corners=False)
    return x.clamp(0.0, 1.0)


class ProgressiveSchedule:
    """Maps a global step to (stage, fade alpha) for progressive growth."""

    def __init__(self, n_stages: int, max_steps: int, fade_frac: float):
        self.n_stages = n_stages
        self.steps_per_stage = max(1, -(-max_steps // n_stages))
        self.fade_steps = max(1, int(self.steps_per_stage * fade_frac))

    def at(self, step: int) -> tuple[int, float]:
        stage = min(step // self.steps_per_stage + 1, self.n_stages)
        if stage == 1:
            return 1, 1.0
        into = step - (stage - 1) * self.steps_per_stage
        return stage, min(1.0, into / self.fade_steps)

    @property
    def growth_complete_step(self) -> int:
        """Step at which the final stage finishes fading in."""
        return (self.n_stages - 1) * self.steps_per_stage + self.fade_steps


def _gan_payload(variant, spec, step, cfg, gen, disc):
    return {
        "format_version": FORMAT_VERSION,
        "kind": "gan",
        "variant": variant,
        "spec": dataclasses.asdict(spec),
        "step": step,
        "config": dataclasses.asdict(cfg),
        "g_state": {k: v.clone() for k, v in gen.state_dict().items()},
        "d_state": {k: v.clone() for k, v in disc.state_dict().items()},
        "torch_rng": torch.get_rng_state(),
    }


def _write_trace(trace: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["step", "d_loss", "g_loss", "sigma"])
        writer.writeheader()
        writer.writerows(trace)


def _save_grid(gen: Generator, path: Path, seed: int = 0, n: int = 8) -> None:
    from ..io_utils import save_png

    rng = torch.Generator().manual_seed(seed)
    z = torch.randn(n, gen.spec.latent_dim, generator=rng)
    with torch.no_grad():
        imgs = gen(z, noise_mode="const").squeeze(1).numpy()
    rows = np.concatenate([np.concatenate(imgs[i:i + 4], axis=1)
                           for i in range(0, n, 4)], axis=0)
    save_png(rows, path)


def train(variant: str, dataset, cfg: TrainConfig, out_dir: str | Path | None = None,
          ) -> tuple[Checkpoint, list[dict]]:
    """Train one adversarial variant; returns the final checkpoint and trace.

    With out_dir set, periodic checkpoints, a step-0 checkpoint, fixed-seed
    sample grids, and the loss trace CSV are persisted there.
    """
    spec = GeneratorSpec.create(variant, cfg.resolution_scale, cfg.channel_scale)
    progressive = variant == "pg_stylegan"
    if progressive and not isinstance(cfg.batch_size, list):
        raise ValueError("pg_stylegan requires a per-stage batch size list")
    if progressive and isinstance(cfg.batch_size, list) \
            and len(cfg.batch_size) != spec.n_stages:
        raise ValueError(
            f"pg_stylegan needs {spec.n_stages} batch sizes, got {len(cfg.batch_size)}"
        )

    torch.manual_seed(cfg.seed)
    gen = build_generator(spec)
    disc = build_discriminator(spec)
    data = _dataset_tensor(dataset, spec.output_resolution)

    sched = ProgressiveSchedule(spec.n_stages, cfg.max_steps, cfg.fade_frac) \
        if progressive else None
    noise_start = sched.growth_complete_step if progressive else 0
    noise_sched = NoiseSchedule(sigma0=0.2 if cfg.instance_noise_steps > 0 else 0.0,
                                total_steps=cfg.instance_noise_steps,
                                start_step=noise_start)

    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.alpha, betas=cfg.adam_betas)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.alpha, betas=cfg.adam_betas)
    rng = np.random.default_rng(cfg.seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        Checkpoint(_gan_payload(variant, spec, 0, cfg, gen, disc)).save(
            out_dir / "ckpt_step0.pt")

    trace: list[dict] = []
    pl_mean = torch.zeros(())
    sg2 = variant == "stylegan2"

    for step in range(cfg.max_steps):
        stage, alpha = sched.at(step) if progressive else (spec.n_stages, 1.0)
        batch = cfg.batch_for_stage(stage)
        sigma = instance_noise_sigma(step, noise_sched)

        idx = rng.choice(len(data), size=min(batch, len(data)), replace=len(data) < batch)
        real = data[torch.from_numpy(idx)]
        if progressive and stage < spec.n_stages:
            real = F.interpolate(real, size=spec.stage_resolution(stage),
                                 mode="bilinear", align_corners=False)

        # discriminator step
        z = torch.randn(real.shape[0], spec.latent_dim)
        with torch.no_grad():
            fake = gen(z, stage=stage, alpha=alpha)
        real_in = real + sigma * torch.randn_like(real) if sigma > 0 else real
        fake_in = fake + sigma * torch.randn_like(fake) if sigma > 0 else fake
        d_loss = (F.softplus(-disc(real_in, stage=stage, alpha=alpha)).mean()
                  + F.softplus(disc(fake_in, stage=stage, alpha=alpha)).mean())
        if sg2 and cfg.r1_interval > 0 and step % cfg.r1_interval == 0:
            real_req = real_in.detach().requires_grad_(True)
            out = disc(real_req, stage=stage, alpha=alpha)
            grad = autograd.grad(out.sum(), real_req, create_graph=True)[0]
            r1 = grad.pow(2).sum(dim=(1, 2, 3)).mean()
            d_loss = d_loss + 0.5 * cfg.r1_gamma * r1 * cfg.r1_interval
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()

        # generator step
        z = torch.randn(real.shape[0], spec.latent_dim)
        fake = gen(z, stage=stage, alpha=alpha)
        fake_in = fake + sigma * torch.randn_like(fake) if sigma > 0 else fake
        g_loss = F.softplus(-disc(fake_in, stage=stage, alpha=alpha)).mean()
        if sg2 and cfg.pl_interval > 0 and step % cfg.pl_interval == 0 and step > 0:
            z_pl = torch.randn(max(2, real.shape[0] // 2), spec.latent_dim,
                               requires_grad=True)
            y = gen(z_pl, stage=stage, alpha=alpha)
            noise = torch.randn_like(y) / np.sqrt(y.shape[2] * y.shape[3])
            grad = autograd.grad((y * noise).sum(), z_pl, create_graph=True)[0]
            lengths = grad.pow(2).sum(dim=1).sqrt()
            pl_mean = pl_mean.lerp(lengths.mean().detach(), 0.01)
            g_loss = g_loss + cfg.pl_weight * ((lengths - pl_mean) ** 2).mean() \
                * cfg.pl_interval
        opt_g.zero_grad()
        g_loss.backward()
        opt_g.step()

        d_val, g_val = float(d_loss.detach()), float(g_loss.detach())
        trace.append({"step": step, "d_loss": d_val, "g_loss": g_val, "sigma": sigma})

        if not (np.isfinite(d_val) and np.isfinite(g_val)):
            if out_dir:
                Checkpoint(_gan_payload(variant, spec, step, cfg, gen, disc)).save(
                    out_dir / f"ckpt_diagnostic_step{step}.pt")
                _write_trace(trace, out_dir / "trace.csv")
            raise RuntimeError(f"non-finite loss at step {step} (d={d_val}, g={g_val})")

        if out_dir and cfg.checkpoint_every > 0 and (step + 1) % cfg.checkpoint_every == 0:
            ck = Checkpoint(_gan_payload(variant, spec, step + 1, cfg, gen, disc))
            ck.save(out_dir / f"ckpt_step{step + 1}.pt")
            _save_grid(gen, out_dir / f"samples_step{step + 1}.png")

    final = Checkpoint(_gan_payload(variant, spec, cfg.max_steps, cfg, gen, disc))
    if out_dir:
        final.save(out_dir / "ckpt_final.pt")
        _save_grid(gen, out_dir / "samples_final.png")
        _write_trace(trace, out_dir / "trace.csv")
    return final, trace


def sample(ckpt: Checkpoint, n: int, seed: int, batch: int = 16) -> list[np.ndarray]:
    """Draw n images in [0,1] from a checkpointed generator, deterministically."""
    if n < 0:
        raise ValueError("n must be >= 0")
    gen = ckpt.build_generator()
    rng = torch.Generator().manual_seed(seed)
    out: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, n, batch):
            k = min(batch, n - start)
            z = torch.randn(k, gen.spec.latent_dim, generator=rng)
            imgs = gen(z, noise_mode="const")
            out.extend(imgs.squeeze(1).numpy().astype(np.float64))
    return out


def train_vae(dataset, cfg: TrainConfig, out_dir: str | Path | None = None,
              ) -> tuple[Checkpoint, list[dict]]:
    """Train the VAE (reconstruction + KL) used for domain Fréchet features."""
    spec = GeneratorSpec.create("dcgan", cfg.resolution_scale, cfg.channel_scale)
    torch.manual_seed(cfg.seed)
    vae = VAE(spec)
    data = _dataset_tensor(dataset, spec.output_resolution)
    opt = torch.optim.Adam(vae.parameters(), lr=cfg.alpha, betas=(0.9, 0.999))
    rng = np.random.default_rng(cfg.seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    trace: list[dict] = []
    batch = cfg.batch_for_stage(1)
    for step in range(cfg.max_steps):
        idx = rng.choice(len(data), size=min(batch, len(data)), replace=len(data) < batch)
        x = data[torch.from_numpy(idx)]
        recon, mu, logvar = vae(x)
        loss, rec, kl = VAE.loss(recon, x, mu, logvar)
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append({"step": step, "d_loss": float(rec.detach()),
                      "g_loss": float(kl.detach()), "sigma": 0.0})
        if not np.isfinite(float(loss.detach())):
            raise RuntimeError(f"non-finite VAE loss at step {step}")

    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "vae",
        "variant": "vae",
        "spec": dataclasses.asdict(spec),
        "step": cfg.max_steps,
        "config": dataclasses.asdict(cfg),
        "vae_state": {k: v.clone() for k, v in vae.state_dict().items()},
        "g_state": {},
        "d_state": {},
        "torch_rng": torch.get_rng_state(),
    }
    ckpt = Checkpoint(payload)
    if out_dir:
        ckpt.save(out_dir / "vae_final.pt")
        _write_trace(trace, out_dir / "trace.csv")
    return ckpt, trace
