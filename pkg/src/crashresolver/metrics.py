"""Benchmark metrics: pass@k, crash-resolution rate, recall, overlap ratios.

A candidate that produced no patch carries an empty edited-file set and
counts against every metric; recall buckets are mutually exclusive
(all ground-truth files edited / some but not all / none).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import EmptyBenchmark, NoCommits, NoGroundTruth, NoSymbols

SYMBOL_OVERLAP_THRESHOLD = 0.33

BUCKET_ALL = "all"
BUCKET_ANY = "any"
BUCKET_NONE = "none"


@dataclass
class CandidateOutcome:
    edited_files: set[str] = field(default_factory=set)
    resolved: bool = False
    trajectory_symbols: set[str] = field(default_factory=set)
    trajectory_commits: set[str] = field(default_factory=set)


@dataclass
class BugResult:
    bug_id: str
    ground_truth_files: set[str]
    candidates: list[CandidateOutcome]


def pass_at_k(bug: BugResult) -> int:
    """1 iff any of the k candidates resolved the crash."""
    return 1 if any(c.resolved for c in bug.candidates) else 0


def crr(bugs: list[BugResult]) -> float:
    """Crash resolution rate: 100 x mean pass@k over the benchmark."""
    if not bugs:
        raise EmptyBenchmark("no bug results to aggregate")
    return 100.0 * sum(pass_at_k(b) for b in bugs) / len(bugs)


def _bucket(edited: set[str], truth: set[str]) -> str:
    hit = edited & truth
    if hit == truth:
        return BUCKET_ALL
    if hit:
        return BUCKET_ANY
    return BUCKET_NONE


def recall_metrics(bug: BugResult) -> tuple[float, float, float, float]:
    """(avg recall, %all, %any, %none) over this bug's candidates.

    Recall per candidate is |edited ∩ truth| / |truth|; the three bucket
    percentages are mutually exclusive and sum to 100.
    """
    truth = bug.ground_truth_files
    if not truth:
        raise NoGroundTruth(f"bug {bug.bug_id} has no ground-truth files")
    k = len(bug.candidates)
    recalls = [len(c.edited_files & truth) / len(truth) for c in bug.candidates]
    buckets = [_bucket(c.edited_files, truth) for c in bug.candidates]
    return (
        sum(recalls) / k,
        100.0 * buckets.count(BUCKET_ALL) / k,
        100.0 * buckets.count(BUCKET_ANY) / k,
        100.0 * buckets.count(BUCKET_NONE) / k,
    )


def symbol_overlap(bug: BugResult, commit_message_symbols: set[str]) -> list[bool]:
    """Per candidate: did the trajectory open at least a third of the symbols
    the developer's fix-commit message mentions?"""
    if not commit_message_symbols:
        raise NoSymbols(f"bug {bug.bug_id}: commit message symbol set is empty")
    out = []
    for candidate in bug.candidates:
        ratio = len(candidate.trajectory_symbols & commit_message_symbols) / len(
            commit_message_symbols
        )
        out.append(ratio >= SYMBOL_OVERLAP_THRESHOLD)
    return out


def normalize_commit_ids(candidate_ids: set[str], reference_ids: set[str]) -> set[str]:
    """Map abbreviated ids onto the reference spelling before set comparison."""
    normalized = set()
    for ref in reference_ids:
        for cand in candidate_ids:
            if cand.lower().startswith(ref.lower()) or ref.lower().startswith(cand.lower()):
                normalized.add(ref)
                break
    return normalized


def commit_overlap(bug: BugResult, referenced_commits: set[str]) -> list[bool]:
    """Per candidate: did the trajectory retrieve every referenced commit?"""
    if not referenced_commits:
        raise NoCommits(f"bug {bug.bug_id}: referenced commit set is empty")
    out = []
    for candidate in bug.candidates:
        seen = normalize_commit_ids(candidate.trajectory_commits, referenced_commits)
        out.append(seen == set(referenced_commits))
    return out


# --- aggregation -----------------------------------------------------------------


def aggregate(bugs: list[BugResult]) -> dict:
    """Benchmark-level report: CRR plus per-bug-averaged recall metrics."""
    if not bugs:
        raise EmptyBenchmark("no bug results to aggregate")
    per_bug = []
    for bug in bugs:
        avg_recall, pct_all, pct_any, pct_none = recall_metrics(bug)
        per_bug.append(
            {
                "bug_id": bug.bug_id,
                "pass_at_k": pass_at_k(bug),
                "avg_recall": avg_recall,
                "all_pct": pct_all,
                "any_pct": pct_any,
                "none_pct": pct_none,
                "k": len(bug.candidates),
            }
        )
    n = len(bugs)
    return {
        "bug_count": n,
        "crr": crr(bugs),
        "avg_recall": sum(row["avg_recall"] for row in per_bug) / n,
        "all_pct": sum(row["all_pct"] for row in per_bug) / n,
        "any_pct": sum(row["any_pct"] for row in per_bug) / n,
        "none_pct": sum(row["none_pct"] for row in per_bug) / n,
        "per_bug": per_bug,
    }


def render_table(report: dict) -> str:
    """Human-readable summary matching the CRR / Avg. Recall / All-Any-None layout."""
    lines = [
        f"{'Bugs':>6}  {'CRR (%)':>8}  {'Avg. Recall':>12}  {'All/Any/None (%)':>20}",
        f"{report['bug_count']:>6}  {report['crr']:>8.2f}  {report['avg_recall']:>12.4f}  "
        f"{report['all_pct']:.1f}/{report['any_pct']:.1f}/{report['none_pct']:.1f}".rjust(20),
    ]
    return "\n".join(lines)


# --- extraction helpers ------------------------------------------------------------

# Code symbols in commit messages: identifier-shaped tokens that carry a code
# signal — an underscore, a digit, mixed case, or a call-style "()" suffix.
_TOKEN_RE = re.compile(r"\b[A-Za-z_][A-Za-z0-9_]*\b(?:\(\))?")
_COMMIT_ID_RE = re.compile(r"\b[0-9a-f]{12,40}\b")


def extract_identifiers(message: str) -> set[str]:
    """Deterministic stand-in for judge-based symbol extraction."""
    found = set()
    for token in _TOKEN_RE.findall(message):
        name = token[:-2] if token.endswith("()") else token
        has_code_signal = (
            token.endswith("()")
            or "_" in name
            or any(ch.isdigit() for ch in name)
            or (name.lower() != name and name.upper() != name)
        )
        if has_code_signal and len(name) >= 2:
            found.add(name)
    return found


def extract_commit_ids(message: str) -> set[str]:
    """Hex strings of at least 12 chars, the usual abbreviated-commit form."""
    return set(_COMMIT_ID_RE.findall(message.lower()))
