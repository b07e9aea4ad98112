"""Per-trajectory context memory and budgeted prompt assembly.

The memory holds opened symbol definitions (shown on every step), search
query results (shown only on the step after they were issued), and a
scratchpad.  Prompt assembly enforces a hard estimated-token budget by,
in order: eliding intermediate conversation messages oldest-first,
truncating definition bodies oldest-first, and finally dropping whole
sections — while never touching the crash report or the first and last
conversation messages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from . import prompts
from .errors import BudgetImpossible, EmptyNote
from .limits import TOKEN_BUDGET
from .symbols import SymbolDefinition

if TYPE_CHECKING:  # pragma: no cover
    from .config import CodebaseConfig
    from .crash_report import CrashReport

MEMORY_SCHEMA_VERSION = 1

_ELISION_MARKER = "[{count} earlier message(s) elided to fit the context budget]"
_OMITTED_SECTION = "[{what} omitted to fit the context budget]"


def estimate_tokens(text: str) -> int:
    """Deterministic monotone token estimate: ceil(utf-8 bytes / 4).

    A pluggable exact tokenizer can replace this at the call sites that
    accept an ``estimator`` argument; the default keeps budgets
    backend-agnostic.
    """
    return (len(text.encode("utf-8", "surrogateescape")) + 3) // 4


@dataclass
class QueryEntry:
    step: int
    action_kind: str  # "search_code" | "search_commits"
    pattern: str
    results: str  # rendered results, as shown to the agent
    result_count: int


@dataclass
class PromptBundle:
    messages: list[tuple[str, str]]
    token_estimate: int


@dataclass
class ContextMemory:
    open_definitions: dict[str, list[SymbolDefinition]] = field(default_factory=dict)
    query_log: list[QueryEntry] = field(default_factory=list)
    scratchpad: list[str] = field(default_factory=list)
    step_counter: int = 0

    def open_definition(self, definition: SymbolDefinition) -> None:
        """Store a definition under its file; re-opening is a no-op."""
        bucket = self.open_definitions.setdefault(definition.file, [])
        for existing in bucket:
            if (existing.name, existing.start_line) == (definition.name, definition.start_line):
                return
        bucket.append(definition)

    def close_definition(self, name: str) -> bool:
        """Remove all open definitions named *name*; False if none existed."""
        removed = False
        for file in list(self.open_definitions):
            kept = [d for d in self.open_definitions[file] if d.name != name]
            if len(kept) != len(self.open_definitions[file]):
                removed = True
                if kept:
                    self.open_definitions[file] = kept
                else:
                    del self.open_definitions[file]
        return removed

    def record_query(
        self, step: int, action_kind: str, pattern: str, results: str, result_count: int
    ) -> None:
        if step != self.step_counter:
            raise ValueError(f"query stamped step {step} but memory is at {self.step_counter}")
        self.query_log.append(QueryEntry(step, action_kind, pattern, results, result_count))

    def append_scratchpad(self, note: str) -> None:
        if not note.strip():
            raise EmptyNote("scratchpad notes must be nonempty")
        self.scratchpad.append(note)

    def definitions_in_order(self) -> list[SymbolDefinition]:
        """All open definitions, file insertion order then per-file order."""
        return [d for defs in self.open_definitions.values() for d in defs]


def assemble_analysis_prompt(
    memory: ContextMemory,
    trajectory: list[tuple[str, str]],
    config: "CodebaseConfig",
    report: "CrashReport",
    token_budget: int = TOKEN_BUDGET,
    estimator=estimate_tokens,
) -> PromptBundle:
    """Build the next analysis prompt, guaranteed within the token budget.

    Raises :class:`BudgetImpossible` when the irreducible core (system
    message, crash report, first and last conversation messages) alone
    exceeds the budget.
    """
    system_text = prompts.analysis_system_prompt(config)
    report_text = prompts.crash_report_message(report)

    first = trajectory[0] if trajectory else None
    middles = trajectory[1:-1] if len(trajectory) >= 2 else []
    last = trajectory[-1] if len(trajectory) >= 2 else None

    core_cost = estimator(system_text) + estimator(report_text)
    for msg in (first, last):
        if msg is not None:
            core_cost += estimator(msg[1])
    if core_cost > token_budget:
        raise BudgetImpossible(
            f"system + crash report + pinned messages estimate {core_cost} tokens "
            f"> budget {token_budget}"
        )

    definitions = memory.definitions_in_order()
    previous_queries = [e for e in memory.query_log if e.step == memory.step_counter - 1]

    # The tightening loop below re-evaluates candidate bundles many times on
    # adversarial memories; cache section strings and per-text estimates.
    _full = [prompts.render_definition(d, report) for d in definitions]
    _cut = [prompts.render_definition(d, report, truncated=True) for d in definitions]
    _sections: dict[int, str] = {}
    _costs: dict[int, int] = {}

    def defs_section(truncated: int) -> str | None:
        if not definitions:
            return None
        if truncated not in _sections:
            parts = [_cut[i] if i < truncated else _full[i] for i in range(len(definitions))]
            _sections[truncated] = prompts.DEFINITIONS_HEADER + "\n\n" + "\n\n".join(parts)
        return _sections[truncated]

    def cached_estimator(text: str) -> int:
        key = id(text)
        if key not in _costs:
            _costs[key] = estimator(text)
        return _costs[key]

    queries_text = prompts.query_results_section(previous_queries)
    scratchpad_text = prompts.scratchpad_section(memory.scratchpad)

    def build(
        elided: int, truncated: int, drop_queries: bool, drop_scratch: bool, drop_defs: bool
    ) -> list[tuple[str, str]]:
        messages = [("system", system_text), ("user", report_text)]
        section = defs_section(truncated)
        if section is not None:
            if drop_defs:
                messages.append(("user", _OMITTED_SECTION.format(what="open definitions")))
            else:
                messages.append(("user", section))
        if queries_text is not None:
            if drop_queries:
                messages.append(("user", _OMITTED_SECTION.format(what="query results")))
            else:
                messages.append(("user", queries_text))
        if scratchpad_text is not None:
            if drop_scratch:
                messages.append(("user", _OMITTED_SECTION.format(what="scratchpad")))
            else:
                messages.append(("user", scratchpad_text))
        if first is not None:
            messages.append(first)
        if elided:
            messages.append(("user", _ELISION_MARKER.format(count=elided)))
        messages.extend(middles[elided:])
        if last is not None:
            messages.append(last)
        return messages

    def total(messages: list[tuple[str, str]]) -> int:
        return sum(cached_estimator(text) for _, text in messages)

    elided = 0
    truncated = 0
    drop_queries = drop_scratch = drop_defs = False
    while True:
        messages = build(elided, truncated, drop_queries, drop_scratch, drop_defs)
        cost = total(messages)
        if cost <= token_budget:
            return PromptBundle(messages=messages, token_estimate=cost)
        if elided < len(middles):
            elided += 1
        elif truncated < len(definitions):
            truncated += 1
        elif not drop_queries:
            drop_queries = True
        elif not drop_scratch:
            drop_scratch = True
        elif not drop_defs:
            drop_defs = True
        else:
            # Irreducible core only; fits by the BudgetImpossible check above.
            messages = [("system", system_text), ("user", report_text)]
            if first is not None:
                messages.append(first)
            if last is not None:
                messages.append(last)
            return PromptBundle(messages=messages, token_estimate=total(messages))


# --- serialization -------------------------------------------------------------


def memory_to_json(memory: ContextMemory) -> dict:
    return {
        "schema_version": MEMORY_SCHEMA_VERSION,
        "step_counter": memory.step_counter,
        "open_definitions": {
            file: [
                {
                    "name": d.name,
                    "kind": d.kind,
                    "file": d.file,
                    "start_line": d.start_line,
                    "end_line": d.end_line,
                    "body": d.body,
                }
                for d in defs
            ]
            for file, defs in memory.open_definitions.items()
        },
        "query_log": [
            {
                "step": e.step,
                "action_kind": e.action_kind,
                "pattern": e.pattern,
                "results": e.results,
                "result_count": e.result_count,
            }
            for e in memory.query_log
        ],
        "scratchpad": list(memory.scratchpad),
    }


def memory_from_json(payload: dict) -> ContextMemory:
    if payload.get("schema_version") != MEMORY_SCHEMA_VERSION:
        raise ValueError(f"unsupported memory schema: {payload.get('schema_version')!r}")
    memory = ContextMemory(step_counter=payload["step_counter"])
    for file, defs in payload["open_definitions"].items():
        memory.open_definitions[file] = [SymbolDefinition(**d) for d in defs]
    memory.query_log = [QueryEntry(**e) for e in payload["query_log"]]
    memory.scratchpad = list(payload["scratchpad"])
    return memory


def dump_memory(memory: ContextMemory) -> str:
    return json.dumps(memory_to_json(memory), indent=2, sort_keys=True)
