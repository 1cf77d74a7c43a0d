"""Umbrella CLI: wbganlab <subcommand>.

Exit codes: 0 success, 1 domain error, 2 usage error (click's default).
Config precedence: CLI flag > config file > built-in default; the effective
training config is printed at startup.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(__version__, prog_name="wbganlab")
def main():
    """Lab for wbMRI-like GAN synthesis, scoring, anomaly detection and studies."""


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--bias-degree", default=3, show_default=True)
@click.option("--clip-limit", default=2.0, show_default=True)
def preprocess(in_dir, out_dir, bias_degree, clip_limit):
    """Run the correction/equalization/denoise/canonicalize chain on a directory."""
    from .io_utils import load_raw, save_canonical
    from .preprocess import BiasConfig, ClaheConfig, preprocess_pipeline

    paths = sorted(p for p in Path(in_dir).iterdir()
                   if p.suffix.lower() in (".png", ".npy"))
    if not paths:
        _fail(f"no .png or .npy inputs in {in_dir}")
    bias = BiasConfig(polynomial_degree=bias_degree)
    clahe = ClaheConfig(clip_limit=clip_limit)
    for p in paths:
        try:
            slc = preprocess_pipeline(load_raw(p), bias, clahe)
        except ValueError as exc:
            _fail(f"{p}: {exc}")
        save_canonical(slc, out_dir, p.stem)
    click.echo(f"preprocessed {len(paths)} slices -> {out_dir}")


@main.command()
@click.option("--seed", default=0, show_default=True)
@click.option("--count", default=1, show_default=True)
@click.option("--noise", default=0.02, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def phantom(seed, count, noise, out_dir):
    """Generate synthetic body-like phantom slices."""
    from .phantom import phantom_generate

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        slices = phantom_generate(seed, count, noise)
    except ValueError as exc:
        _fail(str(exc))
    for i, s in enumerate(slices):
        np.save(out / f"phantom_{i:04d}.npy", s.pixels.astype(np.float32))
    click.echo(f"wrote {count} phantoms -> {out_dir}")


@main.command()
@click.option("--variant", required=True,
              type=click.Choice(["dcgan", "stylegan", "pg_stylegan", "stylegan2", "vae"]))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="override config seed")
def train(variant, data_dir, config_file, out_dir, seed):
    """Train a generator variant or the VAE on canonical slices."""
    from .gan.specs import TrainConfig, parse_train_config
    from .gan.train import train as train_gan, train_vae
    from .io_utils import load_image_dir

    try:
        cfg = parse_train_config(Path(config_file).read_text()) if config_file \
            else TrainConfig()
    except ValueError as exc:
        _fail(str(exc))
    if seed is not None:
        cfg.seed = seed
    click.echo(f"effective config: {dataclasses.asdict(cfg)}")
    try:
        data = load_image_dir(data_dir)
        if variant == "vae":
            ckpt, _ = train_vae(data, cfg, out_dir=out_dir)
        else:
            ckpt, _ = train_gan(variant, data, cfg, out_dir=out_dir)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        _fail(str(exc))
    click.echo(f"final checkpoint: {ckpt.path}")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--n", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def sample(ckpt_path, n, seed, out_dir):
    """Sample images from a trained checkpoint."""
    from .gan.train import load_checkpoint, sample as draw
    from .io_utils import save_png

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        ckpt = load_checkpoint(ckpt_path)
        imgs = draw(ckpt, n, seed)
    except (ValueError, RuntimeError) as exc:
        _fail(str(exc))
    for i, img in enumerate(imgs):
        np.save(out / f"sample_{i:04d}.npy", img.astype(np.float32))
        save_png(img, out / f"sample_{i:04d}.png")
    click.echo(f"wrote {n} samples -> {out_dir}")


@main.command()
@click.option("--metric", required=True, type=click.Choice(["fid", "dfd"]))
@click.option("--real", "real_dir", required=True, type=click.Path(exists=True))
@click.option("--fake", "fake_dir", required=True, type=click.Path(exists=True))
@click.option("--vae-ckpt", "vae_path", type=click.Path(exists=True))
@click.option("--out", "report_path", required=True, type=click.Path())
def score(metric, real_dir, fake_dir, vae_path, report_path):
    """Compute FID or DFD between two image directories."""
    from .gan.train import load_checkpoint
    from .io_utils import load_image_dir
    from .metrics import FEATURE_DIMS, dfd, fid

    try:
        real = load_image_dir(real_dir)
        fake = load_image_dir(fake_dir)
        if metric == "fid":
            value, extractor = fid(real, fake), "inception_pool"
        else:
            if not vae_path:
                _fail("dfd requires --vae-ckpt")
            value, extractor = dfd(real, fake, load_checkpoint(vae_path)), "vae_encoder"
    except (ValueError, FileNotFoundError) as exc:
        _fail(str(exc))
    report = {"metric": metric, "value": value, "n_real": len(real),
              "n_fake": len(fake), "extractor": extractor,
              "feature_dim": FEATURE_DIMS[extractor]}
    Path(report_path).write_text(json.dumps(report, indent=2))
    click.echo(json.dumps(report))


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--center", required=True, help="row,col")
@click.option("--radius", default=8.0, show_default=True)
@click.option("--intensity", default=0.9, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def simulate(in_path, center, radius, intensity, out_path):
    """Impute a simulated circular tumour into a canonical slice."""
    from .anomaly import Circle, TumourSpec, simulate_tumour
    from .io_utils import save_png

    try:
        row, col = (int(v) for v in center.split(","))
        img = np.load(in_path) if in_path.endswith(".npy") else None
        if img is None:
            from .io_utils import load_raw
            img = load_raw(in_path).pixels / 255.0
        spec = TumourSpec(center=(row, col),
                          circles=(Circle(radius=radius, intensity=intensity),))
        tumour, mask = simulate_tumour(img, spec)
    except ValueError as exc:
        _fail(str(exc))
    out = Path(out_path)
    np.save(out.with_suffix(".npy"), tumour.astype(np.float32))
    save_png(tumour, out.with_suffix(".png"))
    np.save(out.with_suffix(".mask.npy"), mask)
    click.echo(f"tumour slice -> {out.with_suffix('.npy')}")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--query", "query_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--threshold", default=0.2, show_default=True)
@click.option("--steps", default=500, show_default=True)
@click.option("--restarts", default=3, show_default=True)
def detect(ckpt_path, query_path, out_dir, threshold, steps, restarts):
    """Detect anomalies in a query slice by latent inversion."""
    from .anomaly import InversionConfig, detect as run_detect
    from .gan.train import load_checkpoint
    from .io_utils import save_png

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        query = np.load(query_path)
        res = run_detect(query, load_checkpoint(ckpt_path),
                         InversionConfig(steps=steps, restarts=restarts),
                         threshold=threshold)
    except (ValueError, RuntimeError) as exc:
        _fail(str(exc))
    np.save(out / "diff_map.npy", res.diff_map.astype(np.float32))
    np.save(out / "mask.npy", res.mask)
    np.save(out / "reconstruction.npy", res.reconstruction.astype(np.float32))
    save_png(res.diff_map / max(res.diff_map.max(), 1e-9), out / "diff_map.png")
    save_png(res.reconstruction, out / "reconstruction.png")
    click.echo(json.dumps({"score": res.score, "mask_pixels": int(res.mask.sum())}))


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--axis", required=True, type=click.Choice(["intensity", "radius"]))
@click.option("--out", "report_path", required=True, type=click.Path())
@click.option("--trials", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
def sweep(ckpt_path, data_dir, axis, report_path, trials, seed):
    """Accuracy sweep of GAN detection vs watershed over tumour parameters."""
    from .anomaly import accuracy_sweep, save_sweep_report
    from .gan.train import load_checkpoint
    from .io_utils import load_image_dir

    try:
        ckpt = load_checkpoint(ckpt_path)
        data = load_image_dir(data_dir)
        report = accuracy_sweep(ckpt, data, axis, trials=trials, seed=seed)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        _fail(str(exc))
    save_sweep_report(report, report_path)
    click.echo(f"sweep report -> {report_path}")


@main.group()
def study():
    """Build, serve, and report blinded rating studies."""


@study.command("build")
@click.option("--real", "real_dir", required=True, type=click.Path(exists=True))
@click.option("--fake", "fake_specs", multiple=True, required=True,
              help="model=DIR, repeatable")
@click.option("--seed", default=0, show_default=True)
@click.option("--root", default="studies", show_default=True, type=click.Path())
@click.option("--n-real", default=10, show_default=True)
@click.option("--n-per-model", default=10, show_default=True)
def study_build(real_dir, fake_specs, seed, root, n_real, n_per_model):
    from .io_utils import load_image_dir
    from .study import Study

    try:
        fake_dirs = dict(s.split("=", 1) for s in fake_specs)
        generated = {m: load_image_dir(d) for m, d in fake_dirs.items()}
        s = Study.build(load_image_dir(real_dir), generated, seed=seed, root=root,
                        n_real=n_real, n_per_model=n_per_model)
    except (ValueError, FileNotFoundError) as exc:
        _fail(str(exc))
    click.echo(json.dumps({"study_id": s.study_id, "n_items": len(s.items)}))


@study.command("serve")
@click.option("--root", default="studies", show_default=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def study_serve(root, host, port):
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(root), host=host, port=port)


@study.command("report")
@click.option("--root", default="studies", show_default=True, type=click.Path())
@click.argument("study_id")
def study_report(root, study_id):
    from .study import Study

    try:
        s = Study.load(root, study_id)
    except FileNotFoundError:
        _fail(f"unknown study {study_id!r}")
    click.echo(json.dumps(s.report(), indent=2))


@main.command()
@click.argument("name")
@click.option("--config", "config_file", type=click.Path(exists=True),
              help="JSON file of recipe config overrides")
@click.option("--out", "out_dir", default="runs", show_default=True,
              type=click.Path())
def recipe(name, config_file, out_dir):
    """Run an end-to-end experiment recipe (e.g. toy-e2e)."""
    from .orchestration import run_recipe

    overrides = json.loads(Path(config_file).read_text()) if config_file else {}
    try:
        manifest = run_recipe(name, overrides, out_dir=out_dir)
    except (ValueError, RuntimeError) as exc:
        _fail(str(exc))
    click.echo(json.dumps({"recipe": name,
                           "stages": manifest.stages_completed,
                           "artifacts": manifest.artifacts}, indent=2))


if __name__ == "__main__":
    main()
