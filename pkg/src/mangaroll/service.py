"""Local web service for the editor UI and scripts: projects, async
analyze/render jobs, suggestions, timeline edits, assets, thumbnails.

Projects live on disk, one directory per project id (project file + assets
+ report); there is no database. Mutation is serialized per project with a
non-blocking writer lock: a concurrent writer gets 409 instead of queueing.
"""
from __future__ import annotations

import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from . import pipeline as pipeline_mod
from . import timeline as timeline_mod
from .render import (
    EncoderSink,
    ImageSequenceSink,
    plan as build_plan,
    render as run_render,
    render_output_frame,
)
from .broll import AssetStore
from .errors import (
    InvariantViolation,
    MangarollError,
    MissingAsset,
    SchemaVersionMismatch,
    UnknownClip,
    UnreadableSource,
    ValidationFailed,
)
from .gateway import GenAiGateway
from .media import FrameSource, probe
from .timeline import PipelineConfig, TimelineProject

PORT_ENV = "MANGAROLL_PORT"
UI_ORIGIN_ENV = "MANGAROLL_UI_ORIGIN"

PROJECT_FILENAME = "project.mangaroll.json"


class WriterConflict(MangarollError):
    pass


@dataclass
class JobStatus:
    id: str
    kind: str  # analyze | render | suggest
    state: str = "queued"  # queued -> running -> done | failed
    progress: float = 0.0
    error: str | None = None
    result: dict | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
            "error": self.error,
            "result": self.result,
        }


class JobRegistry:
    def __init__(self, workers: int = 2):
        self._jobs: dict[str, JobStatus] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers)

    def get(self, job_id: str) -> JobStatus | None:
        with self._lock:
            return self._jobs.get(job_id)

    def alias(self, key: str, job: JobStatus):
        with self._lock:
            self._jobs[key] = job

    def submit(self, kind: str, fn) -> JobStatus:
        job = JobStatus(id=uuid.uuid4().hex[:12], kind=kind)
        with self._lock:
            self._jobs[job.id] = job

        def runner():
            job.state = "running"
            try:
                job.result = fn(lambda fraction: self._bump(job, fraction))
                job.progress = 1.0
                job.state = "done"
            except Exception as exc:  # surface any failure through the job
                job.error = f"{type(exc).__name__}: {exc}"
                job.state = "failed"

        self._pool.submit(runner)
        return job

    @staticmethod
    def _bump(job: JobStatus, fraction: float):
        job.progress = max(job.progress, min(float(fraction), 1.0))


class ProjectStore:
    """Disk-backed project registry with per-project writer locks."""

    def __init__(self, workspace):
        self.root = Path(workspace)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._meta = threading.Lock()
        self._idempotent: dict[tuple[str, str], dict] = {}

    def _lock_for(self, project_id: str) -> threading.Lock:
        with self._meta:
            return self._locks.setdefault(project_id, threading.Lock())

    def dir(self, project_id: str) -> Path:
        return self.root / project_id

    def project_path(self, project_id: str) -> Path:
        return self.dir(project_id) / PROJECT_FILENAME

    def exists(self, project_id: str) -> bool:
        return self.project_path(project_id).is_file()

    def create(self, source_path) -> tuple[str, TimelineProject]:
        info = probe(source_path)
        project_id = uuid.uuid4().hex[:12]
        project = TimelineProject.a_roll_only(info, str(source_path))
        timeline_mod.save(project, self.project_path(project_id))
        return project_id, project

    def load(self, project_id: str) -> TimelineProject:
        return timeline_mod.load(self.project_path(project_id))

    def save(self, project_id: str, project: TimelineProject):
        timeline_mod.save(project, self.project_path(project_id))

    def asset_store(self, project: TimelineProject, project_id: str) -> AssetStore:
        return AssetStore(self.dir(project_id) / project.asset_dir)

    def apply_patch(self, project_id: str, op: dict, idem_key: str | None = None) -> dict:
        """Atomic edit: either the stored file is replaced or left untouched."""
        key = (project_id, idem_key) if idem_key else None
        if key and key in self._idempotent:
            return self._idempotent[key]
        lock = self._lock_for(project_id)
        if not lock.acquire(blocking=False):
            raise WriterConflict(project_id)
        try:
            project = self.load(project_id)
            edited = timeline_mod.apply_edit(project, op)
            self.save(project_id, edited)
            doc = edited.to_dict()
            if key:
                self._idempotent[key] = doc
            return doc
        finally:
            lock.release()


def _error_response(status: int, violation: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"violation": violation, "detail": detail})


def create_app(
    workspace,
    gateway: GenAiGateway | None = None,
    workers: int = 2,
    ui_origin: str | None = None,
) -> FastAPI:
    store = ProjectStore(workspace)
    jobs = JobRegistry(workers=workers)
    app = FastAPI(title="mangaroll", version="0.1.0")
    app.state.store = store
    app.state.jobs = jobs
    app.state.gateway = gateway
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[ui_origin or os.environ.get(UI_ORIGIN_ENV, "*")],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _gateway() -> GenAiGateway:
        if app.state.gateway is None:
            return GenAiGateway(mode="live")
        return app.state.gateway

    @app.exception_handler(MangarollError)
    def handle_engine_error(request: Request, exc: MangarollError):
        if isinstance(exc, WriterConflict):
            return _error_response(409, "writer_conflict", str(exc))
        if isinstance(exc, (UnknownClip, MissingAsset)):
            return _error_response(404, type(exc).__name__, str(exc))
        if isinstance(exc, InvariantViolation):
            return _error_response(422, exc.which, str(exc))
        if isinstance(exc, (ValidationFailed, SchemaVersionMismatch)):
            return _error_response(422, "validation_failed", str(exc))
        if isinstance(exc, UnreadableSource):
            return _error_response(404, "unreadable_source", str(exc))
        return _error_response(500, type(exc).__name__, str(exc))

    @app.post("/projects")
    async def create_project(request: Request, filename: str | None = None):
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("application/json"):
            body = await request.json()
            source = body.get("path")
            if not source:
                return _error_response(422, "missing_path", "body must carry {'path': ...}")
        else:
            data = await request.body()
            if not data:
                return _error_response(422, "empty_upload", "no bytes uploaded")
            uploads = store.root / "uploads"
            uploads.mkdir(parents=True, exist_ok=True)
            source = uploads / (filename or f"upload-{uuid.uuid4().hex[:8]}.bin")
            source.write_bytes(data)
        project_id, project = store.create(source)
        return {"id": project_id, "media": project.media.to_dict()}

    @app.get("/projects/{project_id}")
    def get_project(project_id: str):
        if not store.exists(project_id):
            return _error_response(404, "unknown_project", project_id)
        return store.load(project_id).to_dict()

    @app.post("/projects/{project_id}/analyze")
    def analyze(project_id: str, body: dict, request: Request):
        if not store.exists(project_id):
            return _error_response(404, "unknown_project", project_id)
        idem = request.headers.get("idempotency-key")
        if idem and (job := jobs.get(f"analyze:{project_id}:{idem}")):
            return {"job_id": job.id}
        project = store.load(project_id)
        config = PipelineConfig.from_dict(body or {})
        gateway = _gateway()

        def work(progress):
            pipeline_mod.run(
                project.source,
                config,
                gateway,
                store.project_path(project_id),
                progress=lambda name, fraction: progress(fraction),
            )
            return {"project_id": project_id}

        job = jobs.submit("analyze", work)
        if idem:
            jobs.alias(f"analyze:{project_id}:{idem}", job)
        return {"job_id": job.id}

    @app.get("/projects/{project_id}/suggestions")
    def suggestions(project_id: str, level: str = Query("on_demand")):
        if not store.exists(project_id):
            return _error_response(404, "unknown_project", project_id)
        project = store.load(project_id)
        if level == "off":
            return {"level": level, "suggestions": []}
        try:
            result = pipeline_mod.suggest(
                project,
                level,
                gateway=_gateway() if level == "proactive" else None,
                asset_store=store.asset_store(project, project_id) if level == "proactive" else None,
            )
        except ValueError as exc:
            return _error_response(422, "no_narrative_state", str(exc))
        if level == "on_demand":
            return {"level": level, "suggestions": [s.to_dict() for s in result]}
        items = [
            {
                "id": a.id,
                "kind": a.kind,
                "caption": a.caption,
                "prompt_text": a.prompt_text,
                "source_frame": a.source_frame,
            }
            for a in result
        ]
        return {"level": level, "suggestions": items}

    @app.patch("/projects/{project_id}/timeline")
    def patch_timeline(project_id: str, op: dict, request: Request):
        if not store.exists(project_id):
            return _error_response(404, "unknown_project", project_id)
        return store.apply_patch(project_id, op, request.headers.get("idempotency-key"))

    @app.get("/projects/{project_id}/assets/{asset_id}")
    def get_asset(project_id: str, asset_id: str):
        if not store.exists(project_id):
            return _error_response(404, "unknown_project", project_id)
        project = store.load(project_id)
        png = store.asset_store(project, project_id).png_bytes(asset_id)
        return Response(content=png, media_type="image/png")

    @app.post("/projects/{project_id}/render")
    def render_project(project_id: str, body: dict, request: Request):
        if not store.exists(project_id):
            return _error_response(404, "unknown_project", project_id)
        idem = request.headers.get("idempotency-key")
        if idem and (job := jobs.get(f"render:{project_id}:{idem}")):
            return {"job_id": job.id}
        sink_spec = (body or {}).get("sink", {})
        project = store.load(project_id)

        def work(progress):
            plan_ = build_plan(project)
            progress(0.25)
            kind = sink_spec.get("kind", "image_sequence")
            if kind == "image_sequence":
                out_dir = store.dir(project_id) / sink_spec.get("dir", "render")
                sink = ImageSequenceSink(out_dir)
            elif kind == "encoder":
                sink = EncoderSink(
                    sink_spec.get("destination", store.dir(project_id) / "out.bin"),
                    plan_.width,
                    plan_.height,
                    plan_.frame_rate,
                    command=sink_spec.get("command"),
                )
            else:
                raise ValidationFailed([f"unknown sink kind {kind!r}"])
            stats = run_render(
                plan_, sink, FrameSource(project.source), store.asset_store(project, project_id)
            )
            return {"frames_written": stats.frames_written, "digest": stats.digest}

        job = jobs.submit("render", work)
        if idem:
            jobs.alias(f"render:{project_id}:{idem}", job)
        return {"job_id": job.id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            return _error_response(404, "unknown_job", job_id)
        return job.to_dict()

    @app.get("/projects/{project_id}/thumbnail")
    def thumbnail(project_id: str, frame: int = Query(0, ge=0)):
        if not store.exists(project_id):
            return _error_response(404, "unknown_project", project_id)
        project = store.load(project_id)
        pixels = render_output_frame(
            project, frame, FrameSource(project.source), store.asset_store(project, project_id)
        )
        from .gateway import encode_png

        return Response(content=encode_png(pixels), media_type="image/png")

    return app
