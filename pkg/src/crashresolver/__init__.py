"""Crash investigation, patch synthesis, and validation over git snapshots."""

from .analysis import AnalysisBudget, Trajectory, run_analysis, sample_trajectories
from .crash_report import CrashReport, StackFrame, important_lines, parse_crash_report
from .gateway import (
    CallScope,
    ChatRequest,
    HttpChatBackend,
    MockBackend,
    ModelGateway,
    ScriptedBehavior,
    ScriptStep,
    count_calls,
)
from .memory import ContextMemory, PromptBundle, assemble_analysis_prompt, estimate_tokens
from .metrics import (
    BugResult,
    CandidateOutcome,
    commit_overlap,
    crr,
    pass_at_k,
    recall_metrics,
    symbol_overlap,
)
from .pipeline import evaluate_results, run_instance
from .search import (
    CodeMatch,
    CommitRecord,
    ScopePlan,
    build_scope_plan,
    search_code,
    search_commits,
)
from .symbols import (
    SymbolDefinition,
    SymbolIndex,
    build_index,
    lookup_definition,
    render_annotated,
)
from .synthesis import (
    FilteredMemory,
    PatchCandidate,
    SymbolRewrite,
    apply_rewrites,
    filter_memory,
    generate_patch,
    parse_patch_markup,
)
from .validation import ValidationHooks, Verdict, validate
from .workspace import (
    WorkspaceHandle,
    list_tracked_files,
    materialize_scratch_copy,
    open_snapshot,
    read_file,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisBudget",
    "BugResult",
    "CallScope",
    "CandidateOutcome",
    "ChatRequest",
    "CodeMatch",
    "CommitRecord",
    "ContextMemory",
    "CrashReport",
    "FilteredMemory",
    "HttpChatBackend",
    "MockBackend",
    "ModelGateway",
    "PatchCandidate",
    "PromptBundle",
    "ScopePlan",
    "ScriptStep",
    "ScriptedBehavior",
    "StackFrame",
    "SymbolDefinition",
    "SymbolIndex",
    "SymbolRewrite",
    "Trajectory",
    "ValidationHooks",
    "Verdict",
    "WorkspaceHandle",
    "apply_rewrites",
    "assemble_analysis_prompt",
    "build_index",
    "build_scope_plan",
    "commit_overlap",
    "count_calls",
    "crr",
    "estimate_tokens",
    "evaluate_results",
    "filter_memory",
    "generate_patch",
    "important_lines",
    "list_tracked_files",
    "lookup_definition",
    "materialize_scratch_copy",
    "open_snapshot",
    "parse_crash_report",
    "parse_patch_markup",
    "pass_at_k",
    "read_file",
    "recall_metrics",
    "render_annotated",
    "run_analysis",
    "run_instance",
    "sample_trajectories",
    "search_code",
    "search_commits",
    "symbol_overlap",
    "validate",
]
