"""Context memory semantics and the budgeted prompt assembly."""

from __future__ import annotations

import copy

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crashresolver.config import CodebaseConfig
from crashresolver.crash_report import parse_crash_report
from crashresolver.errors import BudgetImpossible, EmptyNote
from crashresolver.memory import (
    ContextMemory,
    assemble_analysis_prompt,
    estimate_tokens,
    memory_from_json,
    memory_to_json,
)
from crashresolver.symbols import SymbolDefinition

CONFIG = CodebaseConfig(
    name="fixture",
    prompt_preamble="You investigate crashes in the fixture tree.",
    analysis_examples=[{"user": "example crash", "assistant": "example reply"}],
)

REPORT = parse_crash_report("oops: fixture crash\n frob+0x1/0x2 fs/frob.c:7\n")


def make_def(name="frob", file="fs/frob.c", start=5, body="int frob(void)\n{\n}") -> SymbolDefinition:
    end = start + body.count("\n")
    return SymbolDefinition(name, "function", file, start, end, body)


# --- basic memory operations --------------------------------------------------------


def test_open_definition_idempotent():
    memory = ContextMemory()
    memory.open_definition(make_def())
    memory.open_definition(make_def())
    assert len(memory.open_definitions["fs/frob.c"]) == 1


def test_same_name_different_files_both_stored():
    memory = ContextMemory()
    memory.open_definition(make_def(file="a.c"))
    memory.open_definition(make_def(file="b.c"))
    assert set(memory.open_definitions) == {"a.c", "b.c"}


def test_close_definition_and_unknown_noop():
    memory = ContextMemory()
    memory.open_definition(make_def(name="foo"))
    assert memory.close_definition("foo") is True
    assert memory.open_definitions == {}
    assert memory.close_definition("nope") is False


def test_close_then_reopen_restores():
    memory = ContextMemory()
    d = make_def(name="foo")
    memory.open_definition(d)
    memory.close_definition("foo")
    memory.open_definition(d)
    assert memory.open_definitions["fs/frob.c"] == [d]


def test_close_open_inverse_extensional_equality():
    memory = ContextMemory()
    memory.open_definition(make_def(name="keep", file="x.c"))
    memory.append_scratchpad("a note")
    snapshot = copy.deepcopy(memory)
    d = make_def(name="transient", file="y.c")
    memory.open_definition(d)
    memory.close_definition("transient")
    assert memory == snapshot


def test_record_query_stamping_and_order():
    memory = ContextMemory()
    memory.step_counter = 2
    for i in range(3):
        memory.record_query(2, "search_code", f"p{i}", f"results {i}", i)
    assert [e.pattern for e in memory.query_log] == ["p0", "p1", "p2"]
    assert all(e.step == 2 for e in memory.query_log)
    with pytest.raises(ValueError):
        memory.record_query(5, "search_code", "x", "r", 0)


def test_record_query_empty_results_retained():
    memory = ContextMemory()
    memory.record_query(0, "search_code", "needle", "No matches.", 0)
    assert memory.query_log[0].result_count == 0


def test_scratchpad_rules():
    memory = ContextMemory()
    memory.append_scratchpad("first")
    memory.append_scratchpad("second")
    assert memory.scratchpad == ["first", "second"]
    with pytest.raises(EmptyNote):
        memory.append_scratchpad("   ")


def test_scratchpad_survives_definition_closure():
    memory = ContextMemory()
    memory.open_definition(make_def(name="foo"))
    memory.append_scratchpad("keep me")
    memory.close_definition("foo")
    assert memory.scratchpad == ["keep me"]


# --- token estimation ---------------------------------------------------------------


def test_estimate_tokens_examples():
    assert estimate_tokens("") == 0
    assert estimate_tokens("x" * 400) == 100
    assert estimate_tokens("abc") == 1


@given(st.text(max_size=300), st.text(max_size=300))
def test_estimate_subadditive(a, b):
    assert estimate_tokens(a + b) <= estimate_tokens(a) + estimate_tokens(b) + 1


@given(st.text(max_size=300), st.text(max_size=300))
def test_estimate_monotone_under_extension(a, b):
    assert estimate_tokens(a + b) >= estimate_tokens(a)


# --- prompt assembly ----------------------------------------------------------------


def assemble(memory, trajectory, budget=50_000):
    return assemble_analysis_prompt(memory, trajectory, CONFIG, REPORT, token_budget=budget)


def test_bundle_structure_and_sections():
    memory = ContextMemory()
    memory.open_definition(make_def(start=7))
    memory.append_scratchpad("the frob pointer can be NULL")
    bundle = assemble(memory, [("assistant", "thinking"), ("user", "go on")])
    roles = [role for role, _ in bundle.messages]
    assert roles[0] == "system"
    assert "Crash report under investigation" in bundle.messages[1][1]
    joined = "\n".join(text for _, text in bundle.messages)
    assert "Open definitions in memory:" in joined
    assert "the frob pointer can be NULL" in joined
    assert bundle.messages[-1] == ("user", "go on")


def test_definition_annotation_marks_crash_line():
    memory = ContextMemory()
    memory.open_definition(make_def(start=7))  # crash frame is fs/frob.c:7
    bundle = assemble(memory, [])
    joined = "\n".join(text for _, text in bundle.messages)
    assert "crash report references this line" in joined


def test_previous_step_queries_only():
    # A query recorded at step s appears in the prompt for step s+1 and
    # in no other prompt.
    memory = ContextMemory()
    prompts_by_step = {}
    for step in range(4):
        prompts_by_step[step] = assemble(memory, [])
        memory.record_query(step, "search_code", f"pat{step}", f"RESULT-{step}", 1)
        memory.step_counter += 1
    prompts_by_step[4] = assemble(memory, [])

    for step in range(5):
        joined = "\n".join(text for _, text in prompts_by_step[step].messages)
        for issued in range(4):
            marker = f"RESULT-{issued}"
            if issued == step - 1:
                assert marker in joined, f"step {step} must show step {issued} results"
            else:
                assert marker not in joined, f"step {step} must not show step {issued} results"


def test_no_elision_when_short():
    memory = ContextMemory()
    trajectory = [("assistant", f"msg {i}") for i in range(6)]
    bundle = assemble(memory, trajectory)
    texts = [text for _, text in bundle.messages]
    for i in range(6):
        assert f"msg {i}" in texts


def test_elision_drops_oldest_middles_first():
    memory = ContextMemory()
    trajectory = [("assistant", "FIRST" + "a" * 4000)]
    trajectory += [("assistant", f"MIDDLE-{i} " + "b" * 4000) for i in range(10)]
    trajectory += [("assistant", "LAST" + "c" * 4000)]
    bundle = assemble(memory, trajectory, budget=8_000)
    joined = "\n".join(text for _, text in bundle.messages)
    assert "FIRST" in joined and "LAST" in joined
    assert "MIDDLE-0 " not in joined
    assert "elided" in joined
    assert bundle.token_estimate <= 8_000


def test_definition_truncation_marker_when_needed():
    memory = ContextMemory()
    memory.open_definition(make_def(name="huge", body="int huge(void)\n{" + "\n    x();" * 3000 + "\n}"))
    bundle = assemble(memory, [], budget=2_000)
    joined = "\n".join(text for _, text in bundle.messages)
    assert bundle.token_estimate <= 2_000
    assert "truncated to fit the context budget" in joined


def test_budget_impossible():
    memory = ContextMemory()
    with pytest.raises(BudgetImpossible):
        assemble(memory, [("assistant", "z" * 200_000)], budget=10_000)


# --- budget safety property ----------------------------------------------------------


def _memory_from_shape(shape) -> ContextMemory:
    from crashresolver.memory import QueryEntry

    defs, queries, notes, step = shape
    memory = ContextMemory(step_counter=step)
    for i, (file_idx, body_len) in enumerate(defs):
        memory.open_definition(
            make_def(name=f"sym{i}", file=f"f{file_idx}.c", start=1, body="x" * body_len)
        )
    for i, (qstep, text_len) in enumerate(queries):
        memory.query_log.append(
            QueryEntry(min(qstep, step), "search_code", f"q{i}", "r" * text_len, 1)
        )
    for i in range(notes):
        memory.append_scratchpad(f"note {i} " + "n" * 50)
    return memory


memory_shapes = st.tuples(
    st.lists(st.tuples(st.integers(0, 3), st.integers(0, 20_000)), max_size=6),  # defs
    st.lists(st.tuples(st.integers(0, 6), st.integers(0, 20_000)), max_size=6),  # queries
    st.integers(0, 4),  # scratchpad notes
    st.integers(0, 6),  # step counter
)
trajectory_shape = st.lists(st.integers(0, 8_000), max_size=14)  # message sizes


@settings(max_examples=200, deadline=None)
@given(memory_shapes, trajectory_shape)
def test_budget_safety_property(shape, trajectory_sizes):
    memory = _memory_from_shape(shape)
    trajectory = [
        ("assistant" if i % 2 == 0 else "user", f"m{i} " + "t" * size)
        for i, size in enumerate(trajectory_sizes)
    ]
    bundle = assemble(memory, trajectory)
    assert bundle.token_estimate <= 50_000
    assert sum(estimate_tokens(text) for _, text in bundle.messages) <= 50_000
    if trajectory:
        texts = [text for _, text in bundle.messages]
        assert trajectory[0][1] in texts
        assert trajectory[-1][1] in texts


# --- serialization -------------------------------------------------------------------


def test_memory_json_round_trip():
    memory = ContextMemory()
    memory.open_definition(make_def())
    memory.record_query(0, "search_commits", "leak", "commit abc", 1)
    memory.step_counter = 1
    memory.append_scratchpad("remember this")
    clone = memory_from_json(memory_to_json(memory))
    assert clone == memory
