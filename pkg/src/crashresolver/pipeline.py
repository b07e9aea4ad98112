"""End-to-end pipeline: index, k trajectories, synthesis, validation, artifacts.

Everything an operator needs to inspect a run lands as plain files under the
results root: per-candidate trajectory, memory snapshot, persisted prompts,
raw patch markup, unified diff, verdict, and a summary JSON.  The ground
truth (fix commit) is never read here — only ``evaluate_results`` touches it.
"""

from __future__ import annotations

import json
import logging
import subprocess
from pathlib import Path
from typing import Callable

from .analysis import (
    STOP_FATAL,
    Trajectory,
    TrajectoryStep,
    run_analysis,
)
from .config import CodebaseConfig, InstanceSpec, load_instance_spec
from .crash_report import parse_crash_report
from .errors import ApplyFailure, ConfigError, MissingResults, NoWellFormedPatch
from .gateway import CallScope, ModelGateway, count_calls
from .memory import dump_memory
from .metrics import (
    BugResult,
    CandidateOutcome,
    aggregate,
    commit_overlap,
    crr,
    extract_commit_ids,
    extract_identifiers,
    symbol_overlap,
)
from .symbols import build_index
from .synthesis import filter_memory, generate_patch
from .validation import validate
from .workspace import list_tracked_files, open_snapshot

logger = logging.getLogger(__name__)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_instance(
    config: CodebaseConfig,
    instance: InstanceSpec,
    make_backend: Callable[[int], object],
    out_dir: str | Path,
    k: int | None = None,
    on_step: Callable[[TrajectoryStep], None] | None = None,
) -> Path:
    """Run the full pipeline for one bug; returns the bug's results directory.

    Completion (not resolution) is the success condition: every candidate
    gets a summary even when it produced no patch or failed validation.
    """
    if config.hooks is None:
        raise ConfigError(f"config '{config.name}' has no validation hooks; run needs them")
    k = k or config.k
    bug_dir = Path(out_dir) / instance.bug_id
    bug_dir.mkdir(parents=True, exist_ok=True)

    with open_snapshot(instance.repo, instance.commit) as handle:
        tracked = {ref.path for ref in list_tracked_files(handle)}
        report_text = instance.crash_report_path.read_text(
            encoding="utf-8", errors="surrogateescape"
        )
        report = parse_crash_report(report_text, known_paths=tracked)
        logger.info("building symbol index at %s", handle.snapshot_commit[:12])
        index = build_index(handle)

        summaries = []
        for i in range(1, k + 1):
            candidate_dir = bug_dir / f"candidate-{i}"
            candidate_dir.mkdir(parents=True, exist_ok=True)
            scope = CallScope(
                name=f"{instance.bug_id}/candidate-{i}", prompt_dir=candidate_dir / "prompts"
            )
            gateway = ModelGateway(make_backend(i - 1))

            memory, trajectory = run_analysis(
                report,
                handle,
                index,
                config,
                gateway,
                scope,
                budget=config.budget,
                persist_path=candidate_dir / "trajectory.json",
                seed_hint=i - 1,
                instance_id=f"{instance.bug_id}#{i}",
                on_step=on_step,
            )
            (candidate_dir / "memory.json").write_text(
                dump_memory(memory), encoding="utf-8", errors="surrogateescape"
            )

            summary = {
                "bug_id": instance.bug_id,
                "candidate_index": i,
                "stop_reason": trajectory.stop_reason,
                "produced_patch": False,
                "patch_error": None,
                "attempt_temperature": None,
                "edited_files": [],
                "built": False,
                "crashed": False,
                "resolved": False,
                "opened_symbols": sorted(trajectory.opened_symbols),
                "retrieved_commits": sorted(trajectory.retrieved_commits),
            }

            if trajectory.stop_reason == STOP_FATAL:
                summary["patch_error"] = f"analysis failed: {trajectory.error}"
                summaries.append(summary)
                _write_json(candidate_dir / "candidate.json", summary)
                continue

            calls_left = config.budget.max_calls - count_calls(scope)
            filtered = filter_memory(
                memory,
                trajectory,
                report,
                gateway if calls_left >= 1 else None,
                scope,
            )
            _write_json(
                candidate_dir / "filtered_memory.json",
                {
                    "kept_definitions": [
                        f"{d.file}:{d.start_line} {d.name}" for d in filtered.kept_definitions
                    ],
                    "kept_queries": [
                        f"step {e.step}: {e.action_kind}({e.pattern})"
                        for e in filtered.kept_queries
                    ],
                    "dropped_count": filtered.dropped_count,
                    "token_estimate": filtered.token_estimate,
                },
            )

            try:
                candidate = generate_patch(
                    filtered,
                    trajectory,
                    report,
                    gateway,
                    scope,
                    config,
                    handle,
                    index,
                    budget=config.budget,
                )
            except (NoWellFormedPatch, ApplyFailure) as exc:
                logger.info("candidate %d produced no usable patch: %s", i, exc)
                summary["patch_error"] = str(exc)
                summaries.append(summary)
                _write_json(candidate_dir / "candidate.json", summary)
                continue

            (candidate_dir / "patch.markup").write_text(
                candidate.raw_markup, encoding="utf-8", errors="surrogateescape"
            )
            (candidate_dir / "patch.diff").write_text(
                candidate.unified_diff, encoding="utf-8", errors="surrogateescape"
            )
            summary["produced_patch"] = True
            summary["attempt_temperature"] = candidate.attempt_temperature
            summary["edited_files"] = sorted(candidate.edited_files)

            verdict = validate(candidate.scratch_tree, instance.reproducer_path, config.hooks)
            _write_json(candidate_dir / "verdict.json", verdict.to_json())
            summary["built"] = verdict.built
            summary["crashed"] = verdict.crashed
            summary["resolved"] = verdict.accepted
            summaries.append(summary)
            _write_json(candidate_dir / "candidate.json", summary)

        _write_json(
            bug_dir / "run.json",
            {
                "bug_id": instance.bug_id,
                "snapshot_commit": handle.snapshot_commit,
                "k": k,
                "resolved": any(s["resolved"] for s in summaries),
                "candidates": summaries,
            },
        )
    return bug_dir


# --- evaluation over a results directory ------------------------------------------


def _ground_truth(instance: InstanceSpec) -> tuple[set[str], str]:
    """(files changed by the fix commit, its message); needs fix_commit."""
    if not instance.fix_commit:
        return set(), ""
    files = subprocess.run(
        [
            "git",
            "-C",
            str(instance.repo),
            "diff-tree",
            "-r",
            "--no-commit-id",
            "--name-only",
            f"{instance.fix_commit}^",
            instance.fix_commit,
        ],
        capture_output=True,
        text=True,
        check=True,
    ).stdout.splitlines()
    message = subprocess.run(
        ["git", "-C", str(instance.repo), "log", "-1", "--format=%B", instance.fix_commit],
        capture_output=True,
        text=True,
        check=True,
    ).stdout
    return {f for f in files if f}, message


def _load_candidates(bug_dir: Path) -> list[dict]:
    out = []
    for candidate_dir in sorted(bug_dir.glob("candidate-*")):
        summary_path = candidate_dir / "candidate.json"
        if summary_path.exists():
            out.append(json.loads(summary_path.read_text(encoding="utf-8")))
    return sorted(out, key=lambda s: s["candidate_index"])


def evaluate_results(results_root: str | Path, instance_paths: list[Path]) -> dict:
    """Score a results directory against the instances' ground truth.

    CRR covers every bug found; recall and overlap metrics cover the bugs
    whose instances carry a fix commit.  Deterministic: identical inputs
    produce an identical report.
    """
    results_root = Path(results_root)
    bugs_all: list[BugResult] = []
    bugs_with_truth: list[BugResult] = []
    overlap_rows = []

    for spec_path in instance_paths:
        instance = load_instance_spec(spec_path)
        bug_dir = results_root / instance.bug_id
        candidates = _load_candidates(bug_dir)
        if not candidates:
            continue
        truth_files, fix_message = _ground_truth(instance)
        outcomes = [
            CandidateOutcome(
                edited_files=set(c["edited_files"]),
                resolved=bool(c["resolved"]),
                trajectory_symbols=set(c.get("opened_symbols", [])),
                trajectory_commits=set(c.get("retrieved_commits", [])),
            )
            for c in candidates
        ]
        bug = BugResult(
            bug_id=instance.bug_id, ground_truth_files=truth_files, candidates=outcomes
        )
        bugs_all.append(bug)
        if truth_files:
            bugs_with_truth.append(bug)
        message_symbols = extract_identifiers(fix_message) if fix_message else set()
        message_commits = extract_commit_ids(fix_message) if fix_message else set()
        row = {"bug_id": instance.bug_id}
        if message_symbols:
            row["symbol_overlap"] = symbol_overlap(bug, message_symbols)
        if message_commits:
            row["commit_overlap"] = commit_overlap(bug, message_commits)
        if len(row) > 1:
            overlap_rows.append(row)

    if not bugs_all:
        raise MissingResults(f"no candidate results under {results_root}")

    report: dict = {"bug_count": len(bugs_all), "crr": crr(bugs_all)}
    if bugs_with_truth:
        recall_report = aggregate(bugs_with_truth)
        report.update(
            {
                "avg_recall": recall_report["avg_recall"],
                "all_pct": recall_report["all_pct"],
                "any_pct": recall_report["any_pct"],
                "none_pct": recall_report["none_pct"],
                "recall_bug_count": recall_report["bug_count"],
                "per_bug": recall_report["per_bug"],
            }
        )
    if overlap_rows:
        report["overlaps"] = overlap_rows
    return report


def render_report(report: dict) -> str:
    lines = [f"bugs: {report['bug_count']}   CRR: {report['crr']:.2f}%"]
    if "avg_recall" in report:
        lines.append(
            f"avg recall: {report['avg_recall']:.4f}   "
            f"All/Any/None: {report['all_pct']:.1f}/{report['any_pct']:.1f}/"
            f"{report['none_pct']:.1f} (over {report['recall_bug_count']} bug(s))"
        )
    return "\n".join(lines)
