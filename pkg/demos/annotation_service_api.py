"""
The annotation service, endpoint by endpoint
============================================

The queue from annotation_queue.py can also be served over HTTP so a
browser UI (or curl) can drive it. This script assembles the app and walks
the whole annotator session through an in-process test client; `ilf serve`
exposes the identical app from a run directory.
"""

from fastapi.testclient import TestClient

from ilf.annotation import AnnotationQueue
from ilf.sandbox import SandboxConfig, run_suite
from ilf.service import build_app
from ilf.tasks import Origin, ProgramSample, Task, render_task

# ---------------------------------------------------------------------------
# 1. Assembling the app from a queue and a task table
# ---------------------------------------------------------------------------

task = Task(
    id=311,
    description="Write a function area(w, h) that returns the rectangle area.",
    tests=(
        "assert area(2, 3) == 6",
        "assert area(1, 1) == 1",
        "assert area(4, 5) == 20",
    ),
)
rendered = render_task(task)
config = SandboxConfig(wall_clock_timeout=5.0)

broken_text = "def area(w, h):\n    return w + h"
broken = ProgramSample(
    task_id=task.id,
    program_text=broken_text,
    origin=Origin.BASE_MODEL,
    temperature=0.8,
    index=0,
).with_eval(run_suite(broken_text, rendered, config))

queue = AnnotationQueue(evaluate=lambda text, task_id: run_suite(text, rendered, config))
queue.add_item(task.id, (broken,))

client = TestClient(build_app(queue, {task.id: task}, config))

# ---------------------------------------------------------------------------
# 2. An annotator session over HTTP
# ---------------------------------------------------------------------------

print("GET /queue ->", client.get("/queue").json())

item = client.post("/claim", json={"annotator_id": "sam"}).json()
print("POST /claim ->", item["task_id"], item["status"])

detail = client.get(f"/tasks/{task.id}").json()
print("GET /tasks/311 -> description:", detail["description"][:40], "...")

# The editor runs candidate code against the held-out tests before the
# annotator commits to a submission.
attempt = client.post(
    "/run-tests", json={"task_id": task.id, "program_text": "def area(w, h):\n    return w * h"}
).json()
print("POST /run-tests -> passed:", attempt["passed"])

# The edit-distance gauge in the UI polls this endpoint as the annotator
# types; the ratio must stay under 0.5 for the filter to accept.
gauge = client.post(
    "/edit-distance",
    json={"a": broken_text, "b": "def area(w, h):\n    return w * h"},
).json()
print("POST /edit-distance ->", gauge)

receipt = client.post(
    "/submit",
    json={
        "annotator_id": "sam",
        "task_id": task.id,
        "feedback_text": "The function adds the sides; multiply them instead.",
        "refinement_text": "def area(w, h):\n    return w * h",
        "bug_tags": ["wrong-operator"],
    },
).json()
print("POST /submit ->", receipt["status"], "accepted:", receipt["accepted"])

verdict = client.post("/review-verify", json={"task_id": task.id, "verified": True}).json()
print("POST /review-verify ->", verdict)

exported = client.get("/export-accepted").json()
print("GET /export-accepted ->", len(exported), "record(s); feedback:",
      exported[0]["feedback_text"][:40], "...")

# ---------------------------------------------------------------------------
# 3. Errors are structured, not stack traces
# ---------------------------------------------------------------------------

conflict = client.post("/claim", json={"annotator_id": "alex"})
print("second claim ->", conflict.status_code, conflict.json())
