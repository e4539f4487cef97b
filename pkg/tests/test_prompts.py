"""Prompt assembly and its exact inverse, template files, exemplar loading."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilf.errors import ValidationError
from ilf.prompts import (
    DEFAULT_TEMPLATE,
    EmptyCompletionError,
    Exemplar,
    MarkerCollisionError,
    PromptError,
    RefinePromptTemplate,
    build_feedback_elicitation_prompt,
    build_generation_prompt,
    build_refine_prompt,
    extract_completion_code,
    load_exemplars,
    load_template,
    parse_refine_prompt,
    save_template,
)
from ilf.records import write_jsonl
from ilf.tasks import Task, render_task

EXEMPLAR = Exemplar(
    task_text="Write add.\nassert add(1, 1) == 2",
    old_code="def add(a, b):\n    return a - b",
    feedback="The function subtracts; it should add.",
    new_code="def add(a, b):\n    return a + b",
)


def rendered(tid=300):
    return render_task(Task(id=tid, description=f"Write solve{tid}.", tests=(f"assert solve{tid}(1) == 1",)))


class TestGenerationPrompt:
    def test_is_the_rendered_task_text(self):
        task = rendered()
        assert build_generation_prompt(task) == task.prompt_text

    def test_contains_the_embedded_test(self):
        task = rendered()
        assert task.embedded_test in build_generation_prompt(task)


class TestRefinePrompt:
    def test_zero_shot_structure(self):
        task = rendered()
        prompt = build_refine_prompt(DEFAULT_TEMPLATE, task, "bad code", "fix the sign")
        assert prompt.startswith(DEFAULT_TEMPLATE.task_marker + "\n")
        assert prompt.endswith(DEFAULT_TEMPLATE.new_code_marker + "\n")
        assert "bad code" in prompt and "fix the sign" in prompt

    def test_shots_prepend_filled_instances(self):
        template = RefinePromptTemplate(exemplars=(EXEMPLAR,))
        task = rendered()
        zero = build_refine_prompt(template, task, "x = 1", "wrong", shots=0)
        one = build_refine_prompt(template, task, "x = 1", "wrong", shots=1)
        assert one.endswith(zero)
        assert EXEMPLAR.new_code in one
        assert EXEMPLAR.new_code not in zero

    def test_too_many_shots_rejected(self):
        with pytest.raises(PromptError, match="2 shots"):
            build_refine_prompt(RefinePromptTemplate(exemplars=(EXEMPLAR,)), rendered(), "c", "f", shots=2)

    def test_marker_collision_rejected(self):
        with pytest.raises(MarkerCollisionError):
            build_refine_prompt(DEFAULT_TEMPLATE, rendered(), "### Feedback\nsneaky", "fix")

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValidationError):
            build_refine_prompt(DEFAULT_TEMPLATE, rendered(), "", "fix")
        with pytest.raises(ValidationError):
            build_refine_prompt(DEFAULT_TEMPLATE, rendered(), "code", "   ")

    def test_parse_recovers_query_sections(self):
        task = rendered()
        prompt = build_refine_prompt(DEFAULT_TEMPLATE, task, "old code", "the feedback")
        instances = parse_refine_prompt(DEFAULT_TEMPLATE, prompt)
        assert len(instances) == 1
        query = instances[0]
        assert query["task"] == task.prompt_text
        assert query["old_code"] == "old code"
        assert query["feedback"] == "the feedback"
        assert query["new_code"] is None  # completion point

    def test_parse_recovers_exemplars_and_query(self):
        template = RefinePromptTemplate(exemplars=(EXEMPLAR, EXEMPLAR))
        task = rendered()
        prompt = build_refine_prompt(template, task, "bad", "advice", shots=2)
        instances = parse_refine_prompt(template, prompt)
        assert len(instances) == 3
        for shot in instances[:2]:
            assert shot["task"] == EXEMPLAR.task_text
            assert shot["old_code"] == EXEMPLAR.old_code
            assert shot["feedback"] == EXEMPLAR.feedback
            assert shot["new_code"] == EXEMPLAR.new_code
        assert instances[2]["new_code"] is None


class TestElicitationPrompt:
    def test_stops_at_feedback_marker(self):
        prompt = build_feedback_elicitation_prompt(DEFAULT_TEMPLATE, rendered(), "bad code")
        assert prompt.endswith(DEFAULT_TEMPLATE.feedback_marker + "\n")
        assert DEFAULT_TEMPLATE.new_code_marker not in prompt

    def test_shots_show_feedback_but_never_new_code(self):
        template = RefinePromptTemplate(exemplars=(EXEMPLAR,))
        prompt = build_feedback_elicitation_prompt(template, rendered(), "bad code", shots=1)
        assert EXEMPLAR.feedback in prompt
        assert EXEMPLAR.new_code not in prompt

    def test_parse_sees_feedback_completion_point(self):
        prompt = build_feedback_elicitation_prompt(DEFAULT_TEMPLATE, rendered(), "bad code")
        instances = parse_refine_prompt(DEFAULT_TEMPLATE, prompt)
        assert instances[-1]["feedback"] is None
        assert "new_code" not in instances[-1]


class TestExtraction:
    def test_truncates_at_first_marker(self):
        raw = "def f():\n    return 1\n### Task\nfabricated next instance"
        assert extract_completion_code(raw, DEFAULT_TEMPLATE) == "def f():\n    return 1"

    def test_truncates_at_extra_stop_sequence(self):
        raw = "code line\nSTOP\nmore"
        assert extract_completion_code(raw, DEFAULT_TEMPLATE, stop_sequences=("STOP",)) == "code line"

    def test_whole_completion_when_no_marker(self):
        assert extract_completion_code("def f(): pass\n\n", DEFAULT_TEMPLATE) == "def f(): pass"

    def test_earliest_cut_wins(self):
        raw = "x### Feedback\ny### Task"
        assert extract_completion_code(raw, DEFAULT_TEMPLATE) == "x"

    def test_empty_after_truncation_is_an_error(self):
        with pytest.raises(EmptyCompletionError):
            extract_completion_code("\n### Task\nstuff", DEFAULT_TEMPLATE)


class TestTemplateValidation:
    def test_duplicate_markers_rejected(self):
        with pytest.raises(ValidationError):
            RefinePromptTemplate(task_marker="### X", old_code_marker="### X")

    def test_substring_markers_rejected(self):
        with pytest.raises(ValidationError):
            RefinePromptTemplate(task_marker="### Code", old_code_marker="### Code Old")

    def test_empty_marker_rejected(self):
        with pytest.raises(ValidationError):
            RefinePromptTemplate(task_marker="")

    def test_stop_sequences_are_the_markers(self):
        assert DEFAULT_TEMPLATE.stop_sequences() == DEFAULT_TEMPLATE.markers


class TestTemplateFiles:
    def test_save_load_round_trip(self, tmp_path):
        path = tmp_path / "refine.txt"
        save_template(DEFAULT_TEMPLATE, path)
        loaded = load_template(path)
        assert loaded.markers == DEFAULT_TEMPLATE.markers

    def test_custom_markers_round_trip(self, tmp_path):
        template = RefinePromptTemplate(
            task_marker="[PROBLEM]",
            old_code_marker="[BROKEN]",
            feedback_marker="[ADVICE]",
            new_code_marker="[FIXED]",
        )
        path = tmp_path / "custom.txt"
        save_template(template, path)
        assert load_template(path).markers == template.markers

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("no placeholders here\n")
        with pytest.raises(PromptError):
            load_template(path)

    def test_loaded_template_builds_prompts(self, tmp_path):
        path = tmp_path / "refine.txt"
        save_template(DEFAULT_TEMPLATE, path)
        loaded = load_template(path, exemplars=(EXEMPLAR,))
        prompt = build_refine_prompt(loaded, rendered(), "c", "f", shots=1)
        assert parse_refine_prompt(loaded, prompt)[0]["new_code"] == EXEMPLAR.new_code


class TestLoadExemplars:
    def test_reads_annotation_format_records(self, tmp_path):
        task = rendered(tid=42)
        path = tmp_path / "exemplars.jsonl"
        write_jsonl(
            path,
            [
                {
                    "task_id": 42,
                    "target_program": {"program_text": "def solve42(x):\n    return x - 1"},
                    "feedback_text": "Off by one.",
                    "refinement_text": "def solve42(x):\n    return x",
                }
            ],
        )
        exemplars = load_exemplars(path, {42: task})
        assert len(exemplars) == 1
        assert exemplars[0].task_text == task.prompt_text
        assert exemplars[0].new_code == "def solve42(x):\n    return x"

    def test_unknown_task_rejected(self, tmp_path):
        path = tmp_path / "exemplars.jsonl"
        write_jsonl(path, [{"task_id": 7, "target_program": {"program_text": "x"}, "feedback_text": "f"}])
        with pytest.raises(PromptError, match="unknown task"):
            load_exemplars(path, {})

    def test_missing_refinement_rejected(self, tmp_path):
        task = rendered(tid=42)
        path = tmp_path / "exemplars.jsonl"
        write_jsonl(path, [{"task_id": 42, "target_program": {"program_text": "x"}, "feedback_text": "f"}])
        with pytest.raises(PromptError, match="refinement"):
            load_exemplars(path, {42: task})


# Content strategy: anything marker-free, including leading/trailing newlines
# and blank lines, must survive fill -> parse unchanged.
section_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\r"),
    min_size=1,
    max_size=80,
).filter(lambda s: s.strip() and not any(m in s for m in DEFAULT_TEMPLATE.markers))


@settings(max_examples=150, deadline=None)
@given(task=section_text, old=section_text, feedback=section_text, new=section_text)
def test_fill_parse_identity(task, old, feedback, new):
    filled = DEFAULT_TEMPLATE.fill_instance(task, old, feedback, new)
    instances = parse_refine_prompt(DEFAULT_TEMPLATE, filled)
    assert instances == [{"task": task, "old_code": old, "feedback": feedback, "new_code": new}]


@settings(max_examples=60, deadline=None)
@given(old=section_text, feedback=section_text)
def test_query_parse_identity(old, feedback):
    task = rendered()
    prompt = build_refine_prompt(DEFAULT_TEMPLATE, task, old, feedback)
    query = parse_refine_prompt(DEFAULT_TEMPLATE, prompt)[-1]
    assert query["old_code"] == old
    assert query["feedback"] == feedback
    assert query["new_code"] is None
