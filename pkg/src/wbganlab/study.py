"""Blinded real-vs-fake rating studies.

A study samples real images and generated images per model, hides the
source behind opaque item ids, fixes a seeded random presentation order,
collects one rating per (item, rater) into an append-only log, and reports
per-model false-positive rates (fraction of generated items labeled real).
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io_utils import save_png

LABELS = ("real", "fake")
REAL_SOURCE = "real"


@dataclass(frozen=True)
class StudyItem:
    item_id: str
    image_path: str
    hidden_source: str
    presentation_index: int


@dataclass(frozen=True)
class RatingRecord:
    item_id: str
    rater_id: str
    label: str
    timestamp: float

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}")


@dataclass
class Study:
    study_id: str
    seed: int
    items: list[StudyItem]
    root: Path
    ratings: list[RatingRecord] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    # --- construction -----------------------------------------------------

    @staticmethod
    def build(real_pool, generated: dict[str, list], seed: int, root: str | Path,
              n_real: int = 10, n_per_model: int = 10,
              study_id: str | None = None) -> "Study":
        """Sample a blinded study and persist its manifest and images.

        real_pool: list of [0,1] images (arrays or objects with .pixels).
        generated: model name -> list of generated images.
        """
        if len(real_pool) < n_real:
            raise ValueError(f"need at least {n_real} real images")
        if not generated:
            raise ValueError("need at least one model's generated images")
        for model, imgs in generated.items():
            if len(imgs) < n_per_model:
                raise ValueError(f"model {model!r} supplied fewer than {n_per_model} images")

        rng = np.random.default_rng(seed)
        study_id = study_id or secrets.token_hex(8)
        root = Path(root) / study_id
        (root / "images").mkdir(parents=True, exist_ok=True)

        chosen: list[tuple[str, np.ndarray]] = []
        for i in rng.choice(len(real_pool), size=n_real, replace=False):
            chosen.append((REAL_SOURCE, _pixels(real_pool[int(i)])))
        for model in sorted(generated):
            imgs = generated[model]
            for i in rng.choice(len(imgs), size=n_per_model, replace=False):
                chosen.append((model, _pixels(imgs[int(i)])))

        order = presentation_order(len(chosen), rng)
        items = []
        for pos, idx in enumerate(order):
            source, img = chosen[int(idx)]
            item_id = secrets.token_hex(12)
            path = root / "images" / f"{item_id}.png"
            save_png(img, path)
            items.append(StudyItem(item_id=item_id, image_path=str(path),
                                   hidden_source=source, presentation_index=pos))
        study = Study(study_id=study_id, seed=seed, items=items, root=root)
        study._write_manifest()
        return study

    @staticmethod
    def load(root: str | Path, study_id: str) -> "Study":
        root = Path(root) / study_id
        manifest = json.loads((root / "manifest.json").read_text())
        items = [StudyItem(**it) for it in manifest["items"]]
        study = Study(study_id=manifest["study_id"], seed=manifest["seed"],
                      items=items, root=root)
        log = root / "ratings.jsonl"
        if log.exists():
            for line in log.read_text().splitlines():
                if line.strip():
                    study.ratings.append(RatingRecord(**json.loads(line)))
        return study

    def _write_manifest(self) -> None:
        manifest = {
            "study_id": self.study_id,
            "seed": self.seed,
            "items": [vars(it) for it in self.items],
        }
        (self.root / "manifest.json").write_text(json.dumps(manifest, indent=2))

    # --- rating flow --------------------------------------------------------

    def ordered_items(self) -> list[StudyItem]:
        return sorted(self.items, key=lambda it: it.presentation_index)

    def item_by_id(self, item_id: str) -> StudyItem | None:
        return next((it for it in self.items if it.item_id == item_id), None)

    def rated_ids(self, rater_id: str) -> set[str]:
        return {r.item_id for r in self.ratings if r.rater_id == rater_id}

    def next_item(self, rater_id: str) -> StudyItem | None:
        """First unrated item in presentation order, or None when finished."""
        done = self.rated_ids(rater_id)
        for it in self.ordered_items():
            if it.item_id not in done:
                return it
        return None

    def record_rating(self, rating: RatingRecord) -> None:
        """Append one rating; duplicates and unknown items are rejected."""
        if self.item_by_id(rating.item_id) is None:
            raise KeyError(f"unknown item {rating.item_id!r}")
        with self._lock:
            if any(r.item_id == rating.item_id and r.rater_id == rating.rater_id
                   for r in self.ratings):
                raise ValueError("item already rated by this rater")
            self.ratings.append(rating)
            with open(self.root / "ratings.jsonl", "a") as f:
                f.write(json.dumps(vars(rating)) + "\n")

    # --- reporting ----------------------------------------------------------

    def report(self) -> dict:
        """Per-model false-positive rates plus real-image accuracy.

        FPR = generated items labeled real / generated items shown. Reported
        pooled over raters and per rater; incomplete studies are flagged.
        """
        sources = {it.item_id: it.hidden_source for it in self.items}
        raters = sorted({r.rater_id for r in self.ratings})
        models = sorted({s for s in sources.values() if s != REAL_SOURCE})

        def tally(records):
            per_model = {}
            for m in models:
                shown = [r for r in records if sources[r.item_id] == m]
                real_votes = sum(r.label == "real" for r in shown)
                per_model[m] = {
                    "false_positive_rate": real_votes / len(shown) if shown else None,
                    "labeled_real": real_votes,
                    "shown": len(shown),
                }
            reals = [r for r in records if sources[r.item_id] == REAL_SOURCE]
            real_correct = sum(r.label == "real" for r in reals)
            return {
                "per_model": per_model,
                "real_accuracy": real_correct / len(reals) if reals else None,
                "real_shown": len(reals),
                "n_ratings": len(records),
            }

        complete = all(len(self.rated_ids(r)) == len(self.items) for r in raters) \
            and bool(raters)
        return {
            "study_id": self.study_id,
            "n_items": len(self.items),
            "raters": raters,
            "complete": complete,
            "pooled": tally(self.ratings),
            "per_rater": {r: tally([x for x in self.ratings if x.rater_id == r])
                          for r in raters},
        }


def presentation_order(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random presentation permutation of n items."""
    return rng.permutation(n)


def _pixels(img) -> np.ndarray:
    return img.pixels if hasattr(img, "pixels") else np.asarray(img, dtype=np.float64)


def make_rating(item_id: str, rater_id: str, label: str) -> RatingRecord:
    return RatingRecord(item_id=item_id, rater_id=rater_id, label=label,
                        timestamp=time.time())
