"""Regex search over the snapshot tree and its commit history.

Code search matches with ``git grep -E`` semantics; commit search unions
``git log -E -G`` (diff adds/removes) with ``git log -E --grep`` (messages).
Both searches walk a scope plan of four progressively wider tiers — files of
in-memory definitions, crash-report files, subsystem directories, then the
whole tree — and stop early once the result cap is reached.
"""

from __future__ import annotations

import logging
import subprocess
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import InvalidPattern
from .limits import (
    CODE_SCAN_TIMEOUT,
    COMMIT_DIFF_MAX_LINES,
    CONTEXT_LINES,
    HISTORY_SCAN_TIMEOUT,
    MAX_RESULTS,
)
from .symbols import split_lines
from .workspace import WorkspaceHandle, list_tracked_files, read_file

if TYPE_CHECKING:  # pragma: no cover
    from .crash_report import CrashReport
    from .memory import ContextMemory

logger = logging.getLogger(__name__)

# git's well-known empty tree object; grepping it is a free pattern check.
_EMPTY_TREE = "4b825dc642cb6eb9a060e54bf8d69288fbee4904"

# Above this many explicit paths, a tier is addressed by pathspec magic instead.
_PATHSPEC_LIMIT = 200


@dataclass
class ScopePlan:
    """Disjoint search tiers, ordered narrow to wide; union = all tracked files."""

    tiers: list[list[str]]
    # Ingredients kept for compact pathspec construction on large tiers.
    memory_files: list[str] = field(default_factory=list)
    report_files: list[str] = field(default_factory=list)
    hint_dirs: list[str] = field(default_factory=list)

    def all_files(self) -> list[str]:
        return [path for tier in self.tiers for path in tier]


@dataclass(frozen=True)
class CodeMatch:
    file: str
    line: int
    context_before: list[str]
    matched_line: str
    context_after: list[str]


@dataclass(frozen=True)
class CommitRecord:
    commit_id: str
    message: str
    diff_excerpt: str
    truncated: bool
    match_source: str  # "message" | "diff" | "both"


@dataclass
class CodeSearchResults:
    matches: list[CodeMatch]
    cap_hit: bool = False
    timed_out: bool = False


@dataclass
class CommitSearchResults:
    records: list[CommitRecord]
    cap_hit: bool = False
    timed_out: bool = False


def single_tier_plan(handle: WorkspaceHandle) -> ScopePlan:
    """Whole-tree plan for standalone searches (no memory, no report)."""
    return ScopePlan(tiers=[[ref.path for ref in list_tracked_files(handle)], [], [], []])


def build_scope_plan(
    memory: "ContextMemory | None",
    report: "CrashReport | None",
    handle: WorkspaceHandle,
) -> ScopePlan:
    """Assign every tracked file to exactly one tier.

    Tier 1: files whose definitions sit in context memory.
    Tier 2: files referenced by the crash report.
    Tier 3: files under the report's subsystem directories.
    Tier 4: everything else.
    """
    tracked = [ref.path for ref in list_tracked_files(handle)]
    tracked_set = set(tracked)

    memory_files = []
    if memory is not None:
        memory_files = sorted(
            {path for path, defs in memory.open_definitions.items() if defs} & tracked_set
        )
    seen = set(memory_files)

    report_files: list[str] = []
    hint_dirs: list[str] = []
    if report is not None:
        report_files = sorted(set(report.referenced_files) & tracked_set - seen)
        hint_dirs = sorted(set(report.subsystem_hints))
    seen.update(report_files)

    tier3 = sorted(
        path
        for path in tracked
        if path not in seen and any(path.startswith(d + "/") for d in hint_dirs)
    )
    seen.update(tier3)

    tier4 = sorted(path for path in tracked if path not in seen)
    return ScopePlan(
        tiers=[memory_files, report_files, tier3, tier4],
        memory_files=memory_files,
        report_files=report_files,
        hint_dirs=hint_dirs,
    )


def _tier_pathspecs(plan: ScopePlan, tier_index: int) -> list[str]:
    """Pathspec list addressing one tier without enumerating huge file sets."""
    tier = plan.tiers[tier_index]
    if not tier:
        return []
    if len(tier) <= _PATHSPEC_LIMIT:
        return list(tier)
    if tier_index == 2:
        specs = [d + "/" for d in plan.hint_dirs]
        specs += [f":(exclude){p}" for p in plan.memory_files + plan.report_files]
        return specs
    # Tier 4: the remainder of the tree.
    specs = ["."]
    specs += [f":(exclude){d}/" for d in plan.hint_dirs]
    specs += [f":(exclude){p}" for p in plan.memory_files + plan.report_files]
    return specs


def validate_pattern(handle: WorkspaceHandle, pattern: str) -> None:
    """Reject patterns git's extended-regex engine cannot compile."""
    proc = subprocess.run(
        ["git", "-C", str(handle.repo_root), "grep", "-E", "-e", pattern, _EMPTY_TREE, "--"],
        capture_output=True,
    )
    if proc.returncode not in (0, 1):
        raise InvalidPattern(proc.stderr.decode(errors="replace").strip())


def _run_with_deadline(
    cmd: list[str], cwd: str, timeout: float
) -> tuple[bytes, int | None, bool]:
    """Run a command, returning (stdout, returncode, timed_out).

    On timeout the process is killed and whatever output accumulated is
    returned with ``timed_out=True``.
    """
    proc = subprocess.Popen(cmd, cwd=cwd, stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    try:
        out, err = proc.communicate(timeout=timeout)
        if proc.returncode not in (0, 1):
            raise InvalidPattern(err.decode(errors="replace").strip())
        return out, proc.returncode, False
    except subprocess.TimeoutExpired:
        proc.kill()
        out, _ = proc.communicate()
        logger.warning("search command timed out after %.0fs: %s", timeout, " ".join(cmd[:6]))
        return out or b"", None, True


def _grep_tier(
    handle: WorkspaceHandle, pattern: str, pathspecs: list[str], timeout: float
) -> tuple[list[tuple[str, int]], bool]:
    """(path, line) hits for one tier, sorted, plus a timed-out flag."""
    cmd = [
        "git",
        "-C",
        str(handle.repo_root),
        "grep",
        "-I",
        "-n",
        "-z",
        "-E",
        "-e",
        pattern,
        handle.snapshot_commit,
        "--",
        *pathspecs,
    ]
    out, _, timed_out = _run_with_deadline(cmd, str(handle.repo_root), timeout)
    prefix = (handle.snapshot_commit + ":").encode()
    hits: list[tuple[str, int]] = []
    for raw in out.split(b"\n"):
        if not raw.startswith(prefix):
            continue
        fields = raw[len(prefix) :].split(b"\0")
        if len(fields) < 2:
            continue
        path = fields[0].decode("utf-8", "surrogateescape")
        hits.append((path, int(fields[1])))
    hits.sort()
    return hits, timed_out


def search_code(
    handle: WorkspaceHandle,
    pattern: str,
    plan: ScopePlan,
    timeout: float = CODE_SCAN_TIMEOUT,
) -> CodeSearchResults:
    """Tree search with 2-line context windows, capped at 5 matches.

    Tiers are scanned in order and scanning stops as soon as the cap fills;
    within a tier, matches are ordered by (path, line).  A timeout yields
    whatever accumulated, flagged as partial rather than raised.
    """
    validate_pattern(handle, pattern)
    deadline = time.monotonic() + timeout
    matches: list[CodeMatch] = []
    cap_hit = False
    timed_out = False
    line_cache: dict[str, list[str]] = {}

    for tier_index in range(len(plan.tiers)):
        if len(matches) >= MAX_RESULTS:
            cap_hit = True
            break
        pathspecs = _tier_pathspecs(plan, tier_index)
        if not pathspecs:
            continue
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            timed_out = True
            break
        hits, tier_timed_out = _grep_tier(handle, pattern, pathspecs, remaining)
        timed_out = timed_out or tier_timed_out
        for path, lineno in hits:
            if len(matches) >= MAX_RESULTS:
                cap_hit = True
                break
            if path not in line_cache:
                line_cache[path] = split_lines(read_file(handle, path))
            lines = line_cache[path]
            lo = max(0, lineno - 1 - CONTEXT_LINES)
            hi = min(len(lines), lineno + CONTEXT_LINES)
            matches.append(
                CodeMatch(
                    file=path,
                    line=lineno,
                    context_before=lines[lo : lineno - 1],
                    matched_line=lines[lineno - 1],
                    context_after=lines[lineno:hi],
                )
            )
        if tier_timed_out:
            break
    return CodeSearchResults(matches=matches, cap_hit=cap_hit, timed_out=timed_out)


def _log_scan(
    handle: WorkspaceHandle,
    log_args: list[str],
    pathspecs: list[str],
    timeout: float,
) -> tuple[list[tuple[str, int]], bool]:
    """Commit (hash, committer-time) pairs from one history scan."""
    cmd = [
        "git",
        "-C",
        str(handle.repo_root),
        "log",
        "--format=%H %ct",
        *log_args,
        handle.snapshot_commit,
    ]
    if pathspecs:
        cmd += ["--", *pathspecs]
    out, _, timed_out = _run_with_deadline(cmd, str(handle.repo_root), timeout)
    commits: list[tuple[str, int]] = []
    for raw in out.decode(errors="replace").splitlines():
        parts = raw.split()
        if len(parts) == 2 and parts[1].isdigit():
            commits.append((parts[0], int(parts[1])))
    return commits, timed_out


def _commit_patch(handle: WorkspaceHandle, commit_id: str) -> tuple[str, str, bool]:
    """(message, diff excerpt ≤ 100 lines, truncated) for one commit."""
    message = (
        subprocess.run(
            ["git", "-C", str(handle.repo_root), "log", "-1", "--format=%B", commit_id],
            capture_output=True,
        )
        .stdout.decode("utf-8", "surrogateescape")
        .rstrip("\n")
    )
    patch = subprocess.run(
        ["git", "-C", str(handle.repo_root), "show", "--no-color", "--format=", "--patch", commit_id],
        capture_output=True,
    ).stdout.decode("utf-8", "surrogateescape")
    patch_lines = patch.splitlines()
    truncated = len(patch_lines) > COMMIT_DIFF_MAX_LINES
    excerpt = "\n".join(patch_lines[:COMMIT_DIFF_MAX_LINES])
    return message, excerpt, truncated


def search_commits(
    handle: WorkspaceHandle,
    pattern: str,
    plan: ScopePlan,
    timeout: float = HISTORY_SCAN_TIMEOUT,
) -> CommitSearchResults:
    """Union of message hits and diff hits, newest first, capped at 5.

    The diff scan (``-G``) walks scope tiers with early exit; the message
    scan is path-independent and runs once.  Every underlying history scan
    gets its own wall-clock timeout and contributes whatever it accumulated.
    """
    validate_pattern(handle, pattern)

    message_hits, msg_timed_out = _log_scan(
        handle, ["-E", f"--grep={pattern}"], [], timeout
    )
    diff_hits: dict[str, int] = {}
    diff_timed_out = False
    for tier_index in range(len(plan.tiers)):
        if len(diff_hits) >= MAX_RESULTS:
            break
        pathspecs = _tier_pathspecs(plan, tier_index)
        if not pathspecs:
            continue
        hits, tier_timed_out = _log_scan(handle, ["-E", f"-G{pattern}"], pathspecs, timeout)
        diff_timed_out = diff_timed_out or tier_timed_out
        for commit_id, ctime in hits:
            diff_hits.setdefault(commit_id, ctime)
        if tier_timed_out:
            break

    merged: dict[str, tuple[int, str]] = {}
    for commit_id, ctime in message_hits:
        merged[commit_id] = (ctime, "message")
    for commit_id, ctime in diff_hits.items():
        if commit_id in merged:
            merged[commit_id] = (merged[commit_id][0], "both")
        else:
            merged[commit_id] = (ctime, "diff")

    ordered = sorted(merged.items(), key=lambda kv: (-kv[1][0], kv[0]))
    cap_hit = len(ordered) > MAX_RESULTS
    records = []
    for commit_id, (_, source) in ordered[:MAX_RESULTS]:
        message, excerpt, truncated = _commit_patch(handle, commit_id)
        records.append(
            CommitRecord(
                commit_id=commit_id,
                message=message,
                diff_excerpt=excerpt,
                truncated=truncated,
                match_source=source,
            )
        )
    return CommitSearchResults(
        records=records, cap_hit=cap_hit, timed_out=msg_timed_out or diff_timed_out
    )
