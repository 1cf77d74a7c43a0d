"""Image and array file I/O: PNG, .npy raw arrays, provenance sidecars."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .preprocess import CanonicalSlice, RawSlice, SliceMeta


def load_raw(path: str | Path) -> RawSlice:
    """Load a grayscale PNG (8/16-bit) or .npy array as a RawSlice."""
    path = Path(path)
    if path.suffix.lower() == ".npy":
        arr = np.load(path)
    else:
        img = Image.open(path)
        if img.mode not in ("L", "I;16", "I", "F"):
            img = img.convert("L")
        arr = np.asarray(img, dtype=np.float64)
    meta = SliceMeta(source=str(path), patient_id=path.stem)
    return RawSlice(np.asarray(arr, dtype=np.float64), meta)


def save_canonical(slc: CanonicalSlice, out_dir: str | Path, stem: str) -> dict:
    """Persist a canonical slice: float32 .npy, 8-bit PNG preview, JSON sidecar.

    Returns the paths written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    npy_path = out_dir / f"{stem}.npy"
    png_path = out_dir / f"{stem}.png"
    json_path = out_dir / f"{stem}.json"
    np.save(npy_path, slc.pixels.astype(np.float32))
    save_png(slc.pixels, png_path)
    sidecar = {
        "source": slc.meta.source,
        "patient_id": slc.meta.patient_id,
        "slice_index": slc.meta.slice_index,
        "provenance": list(slc.meta.provenance),
        "shape": list(slc.pixels.shape),
    }
    json_path.write_text(json.dumps(sidecar, indent=2))
    return {"npy": npy_path, "png": png_path, "sidecar": json_path}


def save_png(pixels: np.ndarray, path: str | Path) -> None:
    """Write a [0,1] float image as 8-bit grayscale PNG."""
    arr = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((arr * 255).round().astype(np.uint8), mode="L").save(path)


def load_image_dir(path: str | Path) -> list[np.ndarray]:
    """Load all .npy/.png images in a directory as [0,1] float arrays."""
    path = Path(path)
    arrays = []
    for p in sorted(path.iterdir()):
        if p.suffix.lower() == ".npy":
            arrays.append(np.load(p).astype(np.float64))
        elif p.suffix.lower() == ".png":
            arrays.append(np.asarray(Image.open(p).convert("L"), dtype=np.float64) / 255.0)
    if not arrays:
        raise FileNotFoundError(f"no .npy or .png images in {path}")
    return arrays


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_array(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()
