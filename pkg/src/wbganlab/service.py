"""HTTP service for rating studies.

Endpoints (all rater-visible payloads are free of the hidden source):
  POST /studies                         build a study from a manifest
  GET  /studies/{id}/raters/{rid}/next  next unrated item for a rater
  POST /studies/{id}/ratings            submit one rating
  GET  /studies/{id}/report             aggregated report
  GET  /studies/{id}/images/{token}.png blinded item image

The rater UI, when built, is served as static assets under /ui.
"""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .io_utils import load_image_dir
from .study import LABELS, Study, make_rating


class BuildStudyRequest(BaseModel):
    real_dir: str
    fake_dirs: dict[str, str]
    seed: int = 0
    n_real: int = 10
    n_per_model: int = 10


class BuildStudyResponse(BaseModel):
    study_id: str
    n_items: int


class Progress(BaseModel):
    rated: int
    total: int


class NextItemResponse(BaseModel):
    item_id: str | None = None
    image_url: str | None = None
    progress: Progress
    finished: bool


class RatingRequest(BaseModel):
    rater_id: str = Field(min_length=1)
    item_id: str
    label: str


class AckResponse(BaseModel):
    status: str = "ok"


class StudyStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._studies: dict[str, Study] = {}

    def add(self, study: Study) -> None:
        self._studies[study.study_id] = study

    def get(self, study_id: str) -> Study:
        if study_id not in self._studies:
            path = self.root / study_id / "manifest.json"
            if not path.exists():
                raise HTTPException(404, f"unknown study {study_id!r}")
            self._studies[study_id] = Study.load(self.root, study_id)
        return self._studies[study_id]


def create_app(data_root: str | Path | None = None) -> FastAPI:
    root = Path(data_root or os.environ.get("WBGANLAB_STUDY_ROOT", "studies"))
    app = FastAPI(title="wbganlab study service")
    store = StudyStore(root)
    app.state.store = store

    @app.post("/studies", response_model=BuildStudyResponse)
    def build_study(req: BuildStudyRequest) -> BuildStudyResponse:
        try:
            real = load_image_dir(req.real_dir)
            generated = {m: load_image_dir(d) for m, d in req.fake_dirs.items()}
            study = Study.build(real, generated, seed=req.seed, root=root,
                                n_real=req.n_real, n_per_model=req.n_per_model)
        except (ValueError, FileNotFoundError) as exc:
            raise HTTPException(400, str(exc))
        store.add(study)
        return BuildStudyResponse(study_id=study.study_id, n_items=len(study.items))

    @app.get("/studies/{study_id}/raters/{rater_id}/next",
             response_model=NextItemResponse)
    def next_item(study_id: str, rater_id: str) -> NextItemResponse:
        study = store.get(study_id)
        rated = len(study.rated_ids(rater_id))
        progress = Progress(rated=rated, total=len(study.items))
        item = study.next_item(rater_id)
        if item is None:
            return NextItemResponse(progress=progress, finished=True)
        return NextItemResponse(
            item_id=item.item_id,
            image_url=f"/studies/{study_id}/images/{item.item_id}.png",
            progress=progress, finished=False,
        )

    @app.post("/studies/{study_id}/ratings", response_model=AckResponse)
    def submit_rating(study_id: str, req: RatingRequest) -> AckResponse:
        study = store.get(study_id)
        if req.label not in LABELS:
            raise HTTPException(422, f"label must be one of {LABELS}")
        try:
            study.record_rating(make_rating(req.item_id, req.rater_id, req.label))
        except KeyError as exc:
            raise HTTPException(404, str(exc))
        except ValueError as exc:
            raise HTTPException(409, str(exc))
        return AckResponse()

    @app.get("/studies/{study_id}/report")
    def report(study_id: str) -> dict:
        return store.get(study_id).report()

    @app.get("/studies/{study_id}/images/{token}.png")
    def image(study_id: str, token: str) -> FileResponse:
        study = store.get(study_id)
        item = study.item_by_id(token)
        if item is None:
            raise HTTPException(404, "unknown image")
        return FileResponse(item.image_path, media_type="image/png")

    ui_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if not ui_dist.exists():
        ui_dist = Path(os.environ.get("WBGANLAB_UI_DIST", "frontend/dist"))
    if ui_dist.exists():
        app.mount("/ui", StaticFiles(directory=ui_dist, html=True), name="ui")

    return app
