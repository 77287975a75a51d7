"""Local HTTP facade over run directories for the review UI.

Every endpoint is a thin view of the artifacts the pipeline wrote — the JSON
bodies mirror the on-disk schemas rather than introducing a second data
model. The service binds to loopback by default: it is a single expert's
workbench, not a deployment, and carries no authentication.
"""

from __future__ import annotations

import json
import logging
import math
import mimetypes
import os
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .dataset import Padding, load_manifest
from .evaluation import Category
from .pipeline import (
    Annotation,
    RemediationPlan,
    append_annotation,
    apply_remediation,
    compare_runs,
    list_runs,
    load_annotations,
    load_categories,
    load_remediations,
    load_run,
    new_run_id,
    run_dir,
)

logger = logging.getLogger(__name__)

PAGE_SIZE = 50


class ApiError(Exception):
    """A non-success response: one HTTP status, one machine code, one message."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _not_found(message: str) -> ApiError:
    return ApiError(404, "not_found", message)


def _bad_request(message: str) -> ApiError:
    return ApiError(400, "bad_request", message)


def _conflict(message: str) -> ApiError:
    return ApiError(409, "conflict", message)


def _run_in_progress(message: str) -> ApiError:
    return ApiError(409, "run_in_progress", message)


class _RemediationRegistry:
    """At most one remediation child in flight per parent run."""

    def __init__(self):
        self._lock = threading.Lock()
        self._in_flight: dict[str, str] = {}

    def start(self, parent_id: str, child_id: str) -> None:
        with self._lock:
            existing = self._in_flight.get(parent_id)
            if existing is not None:
                raise _conflict(
                    f"run {parent_id!r} already has remediation child {existing!r} in flight"
                )
            self._in_flight[parent_id] = child_id

    def finish(self, parent_id: str) -> None:
        with self._lock:
            self._in_flight.pop(parent_id, None)

    def child_of(self, parent_id: str) -> str | None:
        with self._lock:
            return self._in_flight.get(parent_id)


def _default_ui_dir() -> Path | None:
    env = os.environ.get("DETLENS_UI_DIR")
    if env:
        return Path(env)
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.exists() else None


def create_app(runs_root: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    runs_root = Path(runs_root)
    if not runs_root.is_dir():
        raise ValueError(f"runs root {runs_root} is not a directory")

    app = FastAPI(title="detlens")
    registry = _RemediationRegistry()

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    def _get_run(run_id: str):
        try:
            return load_run(runs_root, run_id)
        except FileNotFoundError:
            raise _not_found(f"no run {run_id!r}") from None

    def _artifact_path(run_id: str, name: str) -> Path:
        """Resolve a per-run artifact, explaining why it may be absent."""
        record = _get_run(run_id)
        path = run_dir(runs_root, run_id) / name
        if not path.exists():
            if record.status == "running":
                raise _run_in_progress(f"run {run_id!r} is still executing; {name} not ready")
            raise _not_found(f"run {run_id!r} has no {name} (status: {record.status})")
        return path

    def _categories(run_id: str) -> dict:
        return load_categories(_artifact_path(run_id, "categories.json"))

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.get("/api/runs")
    async def runs_index():
        summaries = []
        for record in list_runs(runs_root):
            summaries.append(
                {
                    "run_id": record.run_id,
                    "status": record.status,
                    "created_at": record.created_at,
                    "parent_run_id": record.parent_run_id,
                    "error": record.error,
                }
            )
        return {"runs": summaries}

    @app.get("/api/runs/{run_id}")
    async def run_detail(run_id: str):
        return _get_run(run_id).to_json_dict()

    @app.get("/api/runs/{run_id}/stats")
    async def run_stats(run_id: str):
        return _categories(run_id)["stats"]

    @app.get("/api/runs/{run_id}/images")
    async def run_images(run_id: str, category: str | None = None, page: int = 1):
        if page < 1:
            raise _bad_request(f"page must be >= 1, got {page}")
        images = _categories(run_id)["images"]
        if category is not None:
            try:
                wanted = Category(category).value
            except ValueError:
                raise _bad_request(
                    f"unknown category {category!r}; expected one of "
                    f"{[c.value for c in Category]}"
                ) from None
            images = [img for img in images if img["category"] == wanted]
        total = len(images)
        start = (page - 1) * PAGE_SIZE
        return {
            "images": images[start : start + PAGE_SIZE],
            "total": total,
            "page": page,
            "page_size": PAGE_SIZE,
            "pages": max(1, math.ceil(total / PAGE_SIZE)),
        }

    @app.get("/api/runs/{run_id}/images/{image_id}/explanations")
    async def image_explanations(run_id: str, image_id: str):
        record = _get_run(run_id)
        known = {img["id"] for img in _categories(run_id)["images"]}
        if image_id not in known:
            raise _not_found(f"run {run_id!r} has no image {image_id!r}")
        entries = [e for e in record.explanations if e["image_id"] == image_id]
        return {"image_id": image_id, "explanations": entries}

    @app.get("/api/runs/{run_id}/images/{image_id}/file")
    async def image_file(run_id: str, image_id: str):
        _get_run(run_id)
        manifest = load_manifest(_artifact_path(run_id, "manifest.jsonl"))
        try:
            record = manifest.get(image_id)
        except KeyError:
            raise _not_found(f"run {run_id!r} has no image {image_id!r}") from None
        if not Path(record.path).exists():
            raise _not_found(f"source image file missing: {record.path}")
        media_type = mimetypes.guess_type(record.path)[0] or "application/octet-stream"
        return FileResponse(record.path, media_type=media_type)

    @app.get("/api/runs/{run_id}/files/{artifact:path}")
    async def artifact_file(run_id: str, artifact: str):
        _get_run(run_id)
        directory = run_dir(runs_root, run_id).resolve()
        path = (directory / artifact).resolve()
        if directory != path and directory not in path.parents:
            raise _bad_request(f"artifact path {artifact!r} escapes the run directory")
        if not path.is_file():
            raise _not_found(f"run {run_id!r} has no artifact {artifact!r}")
        media_type = mimetypes.guess_type(str(path))[0] or "application/octet-stream"
        return FileResponse(path, media_type=media_type)

    @app.get("/api/runs/{run_id}/audit")
    async def run_audit(run_id: str):
        return json.loads(_artifact_path(run_id, "audit.json").read_text())

    @app.get("/api/runs/{run_id}/annotations")
    async def annotations_index(run_id: str):
        _get_run(run_id)
        return {
            "annotations": [a.to_json_dict() for a in load_annotations(runs_root, run_id)]
        }

    @app.post("/api/runs/{run_id}/annotations", status_code=201)
    async def annotations_create(run_id: str, payload: dict):
        _get_run(run_id)
        try:
            annotation = Annotation(
                run_id=run_id,
                image_id=str(payload["image_id"]),
                hypothesis=str(payload.get("hypothesis", "")),
                note=str(payload.get("note", "")),
                author=str(payload.get("author", "")),
                box_index=payload.get("box_index"),
            )
            append_annotation(runs_root, annotation)
        except KeyError as exc:
            raise _bad_request(f"annotation needs field {exc.args[0]!r}") from exc
        except ValueError as exc:
            raise _bad_request(str(exc)) from exc
        return {"annotation": annotation.to_json_dict()}

    @app.get("/api/runs/{run_id}/remediations")
    async def remediations_index(run_id: str):
        _get_run(run_id)
        return {
            "remediations": [p.to_json_dict() for p in load_remediations(runs_root, run_id)],
            "in_flight": registry.child_of(run_id),
        }

    @app.post("/api/runs/{run_id}/remediations", status_code=202)
    async def remediations_create(run_id: str, payload: dict):
        record = _get_run(run_id)
        if record.status == "running":
            raise _run_in_progress(f"run {run_id!r} is still executing")
        if record.status != "completed":
            raise _bad_request(f"cannot remediate run {run_id!r} (status: {record.status})")
        try:
            padding = payload.get("padding")
            plan = RemediationPlan(
                run_id=run_id,
                action=str(payload.get("action", "")),
                padding=Padding(*(int(v) for v in padding)) if padding else None,
                fill=int(payload.get("fill", 128)),
                note=str(payload.get("note", "")),
            )
        except (TypeError, ValueError) as exc:
            raise _bad_request(str(exc)) from exc

        child_id = new_run_id(runs_root)
        registry.start(run_id, child_id)

        def _execute():
            try:
                apply_remediation(plan, runs_root, run_id=child_id)
            except Exception:
                logger.exception("remediation of run %s failed", run_id)
            finally:
                registry.finish(run_id)

        threading.Thread(target=_execute, name=f"remediate-{run_id}", daemon=True).start()
        return {"parent_run_id": run_id, "child_run_id": child_id, "status": "started"}

    @app.get("/api/compare")
    async def compare(base: str, target: str):
        try:
            comparison = compare_runs(runs_root, base, target)
        except FileNotFoundError as exc:
            raise _not_found(str(exc)) from exc
        except ValueError as exc:
            if "not completed" in str(exc):
                raise _run_in_progress(str(exc)) from exc
            raise _bad_request(str(exc)) from exc
        return comparison.to_json_dict()

    # The UI bundle mounts last so /api/* keeps precedence.
    ui = Path(ui_dir) if ui_dir is not None else _default_ui_dir()
    if ui is not None and (ui / "index.html").exists():
        app.mount("/", StaticFiles(directory=ui, html=True), name="ui")

    return app
