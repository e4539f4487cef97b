"""HTTP facade over the annotation queue.

Endpoints: list-queue, claim, submit, review-verify, export-accepted, plus
two helpers the annotation UI leans on: run-tests (sandbox evaluation of a
refinement draft) and edit-distance (the service-side ratio the UI gauge
must agree with). Payloads are plain JSON records; domain errors map to
400 (validation) and 409 (state or claim conflicts).
"""

from __future__ import annotations

from typing import Any, Mapping

from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse

from .annotation import (
    AnnotationQueue,
    ConflictError,
    StateError,
    levenshtein,
)
from .errors import ValidationError
from .sandbox import SandboxConfig, run_suite
from .tasks import RenderedTask, Task, render_task

__all__ = ["build_app", "edit_distance_ratio"]


def edit_distance_ratio(a: str, b: str) -> dict[str, Any]:
    """Distance plus the acceptance-filter ratio; 0.5 is the cutoff."""
    distance = levenshtein(a, b)
    longest = max(len(a), len(b))
    return {"distance": distance, "ratio": distance / longest if longest else 0.0}


def build_app(
    queue: AnnotationQueue,
    tasks: Mapping[int, Task] | Mapping[int, RenderedTask],
    sandbox_config: SandboxConfig = SandboxConfig(),
) -> FastAPI:
    """Assemble the service around an existing queue and task table."""
    rendered: dict[int, RenderedTask] = {}
    for task_id, task in tasks.items():
        rendered[task_id] = task if isinstance(task, RenderedTask) else render_task(task)

    app = FastAPI(title="annotation-service")

    @app.exception_handler(ValidationError)
    async def _validation(request, exc):
        return JSONResponse(status_code=400, content={"error": "validation", "detail": str(exc)})

    @app.exception_handler(StateError)
    async def _state(request, exc):
        return JSONResponse(status_code=409, content={"error": "state", "detail": str(exc)})

    @app.exception_handler(ConflictError)
    async def _conflict(request, exc):
        return JSONResponse(status_code=409, content={"error": "conflict", "detail": str(exc)})

    @app.get("/queue")
    def list_queue() -> list[dict[str, Any]]:
        return [item.to_record() for item in queue.list_items()]

    @app.get("/tasks/{task_id}")
    def get_task(task_id: int) -> dict[str, Any]:
        if task_id not in rendered:
            raise StateError(f"unknown task {task_id}")
        r = rendered[task_id]
        return {
            "task_id": r.task_id,
            "description": r.description,
            "prompt_text": r.prompt_text,
            "embedded_test": r.embedded_test,
            "heldout_tests": list(r.heldout_tests),
            "setup_code": r.setup_code,
        }

    @app.post("/claim")
    def claim(payload: dict = Body(...)) -> dict[str, Any]:
        annotator_id = payload.get("annotator_id", "")
        task_id = payload.get("task_id")
        if task_id is None:
            item = queue.next_item(annotator_id)
            if item is None:
                return JSONResponse(status_code=404, content={"error": "empty", "detail": "no open items"})
        else:
            item = queue.claim(annotator_id, int(task_id))
        return item.to_record()

    @app.post("/release")
    def release(payload: dict = Body(...)) -> dict[str, Any]:
        item = queue.release(payload.get("annotator_id", ""), int(payload["task_id"]))
        return item.to_record()

    @app.post("/submit")
    def submit(payload: dict = Body(...)) -> dict[str, Any]:
        receipt = queue.submit(
            annotator_id=payload.get("annotator_id", ""),
            task_id=int(payload["task_id"]),
            feedback_text=payload.get("feedback_text", ""),
            refinement_text=payload.get("refinement_text", ""),
            program_index=int(payload.get("program_index", 0)),
            bug_tags=payload.get("bug_tags"),
            bugs_addressed=payload.get("bugs_addressed"),
        )
        return receipt.to_record()

    @app.post("/review-verify")
    def review_verify(payload: dict = Body(...)) -> dict[str, Any]:
        result = queue.review_verify(int(payload["task_id"]), bool(payload["verified"]))
        record = result.to_record()
        record["status"] = queue.get_item(int(payload["task_id"])).status.value
        return record

    @app.get("/export-accepted")
    def export_accepted() -> list[dict[str, Any]]:
        return queue.export_accepted()

    @app.post("/run-tests")
    def run_tests(payload: dict = Body(...)) -> dict[str, Any]:
        task_id = int(payload["task_id"])
        program_text = payload.get("program_text", "")
        if not program_text.strip():
            raise ValidationError("program_text must be non-empty")
        if task_id not in rendered:
            raise StateError(f"unknown task {task_id}")
        outcome = run_suite(program_text, rendered[task_id], sandbox_config)
        return outcome.to_record()

    @app.post("/edit-distance")
    def edit_distance(payload: dict = Body(...)) -> dict[str, Any]:
        return edit_distance_ratio(payload.get("a", ""), payload.get("b", ""))

    return app
