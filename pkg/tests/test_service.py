"""Annotation service endpoints over a live queue, via the ASGI test client."""

import pytest
from fastapi.testclient import TestClient

from ilf.annotation import AnnotationQueue
from ilf.sandbox import SandboxConfig, run_suite
from ilf.service import build_app, edit_distance_ratio
from ilf.tasks import Origin, ProgramSample, Task, render_task

CONFIG = SandboxConfig(wall_clock_timeout=20.0, memory_limit_bytes=None)


def make_client(task_ids=(311, 400)):
    tasks = {
        tid: render_task(
            Task(id=tid, description=f"Write solve{tid}.", tests=(f"assert solve{tid}(2) == 4",))
        )
        for tid in task_ids
    }

    def evaluate(refinement_text, task_id):
        return run_suite(refinement_text, tasks[task_id], CONFIG)

    queue = AnnotationQueue(evaluate=evaluate)
    for tid in task_ids:
        broken = ProgramSample(
            task_id=tid,
            program_text=f"def solve{tid}(x):\n    return x - 2",
            origin=Origin.BASE_MODEL,
            temperature=0.8,
            index=0,
        )
        outcome = run_suite(broken.program_text, tasks[tid], CONFIG)
        queue.add_item(tid, [broken.with_eval(outcome)])
    return TestClient(build_app(queue, tasks, CONFIG))


def good(tid):
    return f"def solve{tid}(x):\n    return x + 2"


@pytest.fixture(scope="module")
def client():
    return make_client()


class TestReadEndpoints:
    def test_queue_lists_open_items(self, client):
        body = client.get("/queue").json()
        assert [item["task_id"] for item in body] == [311, 400]
        assert all(item["status"] == "open" for item in body)
        assert body[0]["failing_programs"][0]["eval"]["passed"] is False

    def test_task_detail(self, client):
        body = client.get("/tasks/311").json()
        assert body["task_id"] == 311
        assert "assert solve311(2) == 4" in body["prompt_text"]

    def test_unknown_task_is_409(self, client):
        assert client.get("/tasks/999").status_code == 409


class TestAnnotationFlow:
    def test_full_accept_flow(self):
        client = make_client()

        claimed = client.post("/claim", json={"annotator_id": "ann-1"}).json()
        assert claimed["task_id"] == 311
        assert claimed["status"] == "claimed"

        second = client.post("/claim", json={"annotator_id": "ann-1", "task_id": 311})
        assert second.status_code == 409

        run = client.post("/run-tests", json={"task_id": 311, "program_text": good(311)}).json()
        assert run["passed"] is True

        gauge = client.post(
            "/edit-distance",
            json={"a": claimed["failing_programs"][0]["program_text"], "b": good(311)},
        ).json()
        assert gauge["ratio"] < 0.5

        receipt = client.post(
            "/submit",
            json={
                "annotator_id": "ann-1",
                "task_id": 311,
                "feedback_text": "Add 2 instead of subtracting.",
                "refinement_text": good(311),
                "bug_tags": ["logic"],
                "bugs_addressed": 1,
            },
        ).json()
        assert receipt["status"] == "submitted"
        assert receipt["accepted"] is None
        assert receipt["eval"]["passed"] is True

        review = client.post("/review-verify", json={"task_id": 311, "verified": True}).json()
        assert review["accepted"] is True
        assert review["status"] == "accepted"

        exported = client.get("/export-accepted").json()
        assert len(exported) == 1
        assert exported[0]["task_id"] == 311
        assert exported[0]["refinement_text"] == good(311)
        assert exported[0]["bug_tags"] == ["logic"]

    def test_failing_refinement_rejected_with_reason(self):
        client = make_client()
        client.post("/claim", json={"annotator_id": "ann-1", "task_id": 311})
        receipt = client.post(
            "/submit",
            json={
                "annotator_id": "ann-1",
                "task_id": 311,
                "feedback_text": "Still wrong.",
                "refinement_text": "def solve311(x):\n    return x - 1",
            },
        ).json()
        assert receipt["status"] == "rejected"
        assert receipt["reason"] == "test_failure"
        assert client.get("/export-accepted").json() == []

    def test_release_reopens_item(self):
        client = make_client()
        client.post("/claim", json={"annotator_id": "ann-1", "task_id": 400})
        released = client.post("/release", json={"annotator_id": "ann-1", "task_id": 400}).json()
        assert released["status"] == "open"
        reclaimed = client.post("/claim", json={"annotator_id": "ann-2", "task_id": 400}).json()
        assert reclaimed["claimed_by"] == "ann-2"

    def test_claim_on_drained_queue_is_404(self):
        client = make_client(task_ids=(311,))
        client.post("/claim", json={"annotator_id": "ann-1"})
        response = client.post("/claim", json={"annotator_id": "ann-2"})
        assert response.status_code == 404

    def test_review_before_submit_is_409(self):
        client = make_client()
        response = client.post("/review-verify", json={"task_id": 311, "verified": True})
        assert response.status_code == 409

    def test_empty_feedback_is_400(self):
        client = make_client()
        client.post("/claim", json={"annotator_id": "ann-1", "task_id": 311})
        response = client.post(
            "/submit",
            json={
                "annotator_id": "ann-1",
                "task_id": 311,
                "feedback_text": "   ",
                "refinement_text": good(311),
            },
        )
        assert response.status_code == 400
        assert response.json()["error"] == "validation"


class TestHelpers:
    def test_run_tests_reports_failure_kinds(self):
        client = make_client()
        body = client.post(
            "/run-tests", json={"task_id": 311, "program_text": "def solve311(x):\n    return x"}
        ).json()
        assert body["passed"] is False
        assert body["failure_kind"] == "assertion_failure"

    def test_run_tests_rejects_empty_program(self):
        client = make_client()
        assert client.post("/run-tests", json={"task_id": 311, "program_text": " "}).status_code == 400

    def test_edit_distance_matches_library(self):
        client = make_client()
        body = client.post("/edit-distance", json={"a": "kitten", "b": "sitting"}).json()
        assert body == edit_distance_ratio("kitten", "sitting")
        assert body["distance"] == 3
        assert body["ratio"] == pytest.approx(3 / 7)

    def test_edit_distance_of_empty_strings(self):
        assert edit_distance_ratio("", "") == {"distance": 0, "ratio": 0.0}
