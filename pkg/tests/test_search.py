"""Search tools against an independent naive full-scan oracle."""

from __future__ import annotations

import random
import re
import subprocess
from pathlib import Path

import pytest

from crashresolver.crash_report import parse_crash_report
from crashresolver.errors import InvalidPattern
from crashresolver.memory import ContextMemory
from crashresolver.search import (
    build_scope_plan,
    search_code,
    search_commits,
    single_tier_plan,
)
from crashresolver.symbols import SymbolDefinition, split_lines
from crashresolver.workspace import list_tracked_files, open_snapshot, read_file

from conftest import RepoBuilder

# Patterns restricted to the dialect where git's ERE and Python's re agree.
ORACLE_PATTERNS = [
    "ptr == NULL",
    "memory leak",
    r"handle->size|free_slot\(",
    r"if \(idx > [0-9]+\)",
    "return -1;",
    "panic_log",
    r"counter_[0-9]+ = [0-9]+",
    "no_such_token_anywhere",
]

_LINE_POOL = [
    "int counter_{n} = {n};",
    "if (ptr == NULL)",
    "    return -1;",
    "handle->size = {n};",
    "free_slot(entry_{n});",
    "/* refill cache {n} */",
    "memcpy(dst, src, {n});",
    "if (idx > {n})",
    '    panic_log("overflow");',
    "spin_lock(&table_lock);",
]

_MSG_POOL = [
    "fix memory leak in cache layer",
    "net: tighten bounds checking",
    "refactor handle lifetime",
    "fs: avoid double free on error path",
    "drivers: quiet warning",
    "rework slot allocation pass {n}",
    "add null check before deref",
]


def build_synthetic_repo(root: Path, seed: int) -> tuple[Path, str]:
    """Deterministic repo: <= 50 files, <= 30 commits, plantable patterns."""
    rng = random.Random(seed)
    builder = RepoBuilder(root)
    dirs = ["core", "net", "fs", "drivers"]
    paths = [f"{rng.choice(dirs)}/file{i:02d}.c" for i in range(rng.randint(18, 36))]

    def gen_file() -> str:
        lines = [rng.choice(_LINE_POOL).format(n=rng.randint(0, 99)) for _ in range(rng.randint(5, 32))]
        return "\n".join(lines) + "\n"

    for path in paths[: len(paths) // 2]:
        builder.write(path, gen_file())
    builder.commit(_MSG_POOL[0])
    for c in range(rng.randint(8, 24)):
        for _ in range(rng.randint(1, 3)):
            builder.write(rng.choice(paths), gen_file())
        builder.commit(rng.choice(_MSG_POOL).format(n=c))
    head = subprocess.run(
        ["git", "-C", str(builder.root), "rev-parse", "HEAD"],
        capture_output=True,
        text=True,
        check=True,
    ).stdout.strip()
    return builder.root, head


# --- naive oracles ----------------------------------------------------------------


def naive_code_scan(handle, pattern: str) -> list[tuple]:
    """Full scan over every tracked file, 2-line context; the oracle."""
    regex = re.compile(pattern)
    out = []
    for ref in sorted(list_tracked_files(handle), key=lambda r: r.path):
        lines = split_lines(read_file(handle, ref.path))
        for i, line in enumerate(lines, start=1):
            if regex.search(line):
                out.append(
                    (
                        ref.path,
                        i,
                        lines[max(0, i - 3) : i - 1],
                        line,
                        lines[i : min(len(lines), i + 2)],
                    )
                )
    return out


def dump_history(repo: Path, head: str) -> list[tuple[int, str, str, str]]:
    """(ctime, id, message, patch) for every reachable commit, via git only."""
    rows = subprocess.run(
        ["git", "-C", str(repo), "log", "--format=%H %ct", head],
        capture_output=True,
        text=True,
        check=True,
    ).stdout.splitlines()
    history = []
    for row in rows:
        commit_id, ctime = row.split()
        message = subprocess.run(
            ["git", "-C", str(repo), "log", "-1", "--format=%B", commit_id],
            capture_output=True,
            text=True,
            check=True,
        ).stdout.rstrip("\n")
        patch = subprocess.run(
            ["git", "-C", str(repo), "show", "--no-color", "--format=", "--patch", commit_id],
            capture_output=True,
            text=True,
            check=True,
        ).stdout
        history.append((int(ctime), commit_id, message, patch))
    return history


def naive_commit_scan(history: list[tuple[int, str, str, str]], pattern: str) -> list[tuple]:
    """Match message lines and +/- patch lines over a dumped history; the oracle."""
    regex = re.compile(pattern)
    records = []
    for ctime, commit_id, message, patch in history:
        in_message = any(regex.search(line) for line in message.splitlines())
        in_diff = any(
            regex.search(line[1:])
            for line in patch.splitlines()
            if line[:1] in "+-" and not line.startswith(("+++", "---"))
        )
        if in_message or in_diff:
            source = "both" if (in_message and in_diff) else ("message" if in_message else "diff")
            patch_lines = patch.splitlines()
            records.append(
                (
                    ctime,
                    commit_id,
                    message,
                    "\n".join(patch_lines[:100]),
                    len(patch_lines) > 100,
                    source,
                )
            )
    records.sort(key=lambda r: (-r[0], r[1]))
    return records


@pytest.fixture(scope="module", params=[101, 202, 303])
def synthetic_repo(request, tmp_path_factory):
    root = tmp_path_factory.mktemp(f"syn{request.param}") / "repo"
    repo, head = build_synthetic_repo(root, request.param)
    handle = open_snapshot(repo, head)
    yield repo, handle, dump_history(repo, head)
    handle.cleanup()


@pytest.mark.parametrize("pattern", ORACLE_PATTERNS)
def test_code_search_equals_naive_scan(synthetic_repo, pattern):
    _, handle, _ = synthetic_repo
    expected = naive_code_scan(handle, pattern)
    results = search_code(handle, pattern, single_tier_plan(handle))
    got = [
        (m.file, m.line, m.context_before, m.matched_line, m.context_after)
        for m in results.matches
    ]
    assert got == expected[:5]
    if len(expected) > 5:
        assert results.cap_hit
    assert not results.timed_out


@pytest.mark.parametrize("pattern", ORACLE_PATTERNS)
def test_commit_search_equals_naive_scan(synthetic_repo, pattern):
    _, handle, history = synthetic_repo
    expected = naive_commit_scan(history, pattern)
    results = search_commits(handle, pattern, single_tier_plan(handle))
    got = [
        (r.commit_id, r.message, r.diff_excerpt, r.truncated, r.match_source)
        for r in results.records
    ]
    want = [(r[1], r[2], r[3], r[4], r[5]) for r in expected[:5]]
    assert got == want
    if len(expected) > 5:
        assert results.cap_hit


def test_invalid_pattern_rejected(synthetic_repo):
    _, handle, _ = synthetic_repo
    with pytest.raises(InvalidPattern):
        search_code(handle, "(", single_tier_plan(handle))
    with pytest.raises(InvalidPattern):
        search_commits(handle, "(", single_tier_plan(handle))


# --- scope plans -------------------------------------------------------------------


REPORT = """\
oops in vfs layer
 vfs_open+0x10/0x20 fs/vfs.c:3
"""


def test_scope_plan_construction(simple_repo):
    root, head = simple_repo
    with open_snapshot(root, head) as handle:
        report = parse_crash_report(REPORT)
        plan = build_scope_plan(None, report, handle)
        assert plan.tiers[0] == []
        assert plan.tiers[1] == ["fs/vfs.c"]
        assert plan.tiers[2] == ["fs/vfs.h"]
        assert plan.tiers[3] == ["docs/notes.txt", "main.c"]


def test_scope_plan_memory_files_leave_lower_tiers(simple_repo):
    root, head = simple_repo
    with open_snapshot(root, head) as handle:
        report = parse_crash_report(REPORT)
        memory = ContextMemory()
        memory.open_definition(
            SymbolDefinition("vfs_open", "function", "fs/vfs.c", 1, 6, "body")
        )
        plan = build_scope_plan(memory, report, handle)
        assert plan.tiers[0] == ["fs/vfs.c"]
        assert plan.tiers[1] == []  # deduplicated out of the report tier


def test_scope_plan_partitions_all_tracked_files(synthetic_repo):
    _, handle, _ = synthetic_repo
    report = parse_crash_report("boom\n core_fn+0x1/0x2 core/file00.c:1\n")
    plan = build_scope_plan(None, report, handle)
    tracked = {ref.path for ref in list_tracked_files(handle)}
    seen: set[str] = set()
    for tier in plan.tiers:
        assert not (set(tier) & seen), "tiers must be disjoint"
        seen.update(tier)
    assert seen == tracked


def test_tier_priority_under_cap(repo_builder):
    # 12 matching lines spread over tiers; all 5 results come from the
    # earliest tiers, in (tier, path, line) order.
    builder = repo_builder
    builder.write("fs/hot.c", "needle_a\nneedle_a\nneedle_a\n")
    builder.write("fs/warm.c", "needle_a\nneedle_a\nneedle_a\n")
    builder.write("lib/cold.c", "needle_a\n" * 6)
    head = builder.commit("seed matches")
    with open_snapshot(builder.root, head) as handle:
        report = parse_crash_report("crash\n frob+0x1/0x2 fs/hot.c:2\n")
        plan = build_scope_plan(None, report, handle)
        assert plan.tiers[1] == ["fs/hot.c"]
        assert plan.tiers[2] == ["fs/warm.c"]
        results = search_code(handle, "needle_a", plan)
    files = [m.file for m in results.matches]
    assert files == ["fs/hot.c"] * 3 + ["fs/warm.c"] * 2
    assert results.cap_hit


def test_commit_patch_truncated_at_100_lines(repo_builder):
    builder = repo_builder
    builder.write("big.c", "\n".join(f"int filler_{i};" for i in range(250)) + "\n")
    head = builder.commit("introduce enormous table")
    with open_snapshot(builder.root, head) as handle:
        results = search_commits(handle, "filler_", single_tier_plan(handle))
    (record,) = results.records
    assert record.truncated
    assert len(record.diff_excerpt.splitlines()) == 100
    assert record.match_source == "diff"


def test_commit_match_sources(repo_builder):
    builder = repo_builder
    builder.write("a.c", "int base;\n")
    builder.commit("initial state")
    builder.write("a.c", "int base;\nint frobnicate;\n")
    builder.commit("fix frobnicate handling")  # message AND diff match
    builder.write("b.c", "int other;\n")
    builder.commit("frobnicate: note in message only")
    with open_snapshot(builder.root, "HEAD") as handle:
        results = search_commits(handle, "frobnicate", single_tier_plan(handle))
    sources = [r.match_source for r in results.records]
    assert sources == ["message", "both"]  # newest first


def test_code_search_timeout_reports_partial(synthetic_repo):
    _, handle, _ = synthetic_repo
    results = search_code(handle, "return", single_tier_plan(handle), timeout=0.0)
    assert results.timed_out


def test_search_results_deterministic(synthetic_repo):
    _, handle, _ = synthetic_repo
    plan = single_tier_plan(handle)
    first = search_code(handle, "return -1;", plan)
    second = search_code(handle, "return -1;", plan)
    assert first == second
