"""Memory filtering, patch markup, and rewrite application.

The patch format rewrites whole symbol definitions: the model emits a
hypothesis plus ``<symbol file=... name=... start_line=...>`` tags whose
bodies replace the located definitions.  Locators resolve against the
symbol index, tolerating small line drift when the (file, name) pair is
unambiguous.  See docs/patch-markup.md.
"""

from __future__ import annotations

import difflib
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from . import prompts
from .analysis import AnalysisBudget, Trajectory
from .crash_report import CrashReport
from .errors import ApplyFailure, GatewayError, MarkupError, NoWellFormedPatch
from .gateway import CallScope, ChatRequest, ModelGateway, count_calls
from .limits import MAX_PATCH_ATTEMPTS, SYNTHESIS_TEMPERATURES, TOKEN_BUDGET
from .memory import ContextMemory, QueryEntry, estimate_tokens
from .symbols import SymbolDefinition, SymbolIndex, split_lines
from .workspace import (
    WorkspaceHandle,
    encode_blob,
    materialize_scratch_copy,
    read_file,
)

logger = logging.getLogger(__name__)


@dataclass
class FilteredMemory:
    kept_definitions: list[SymbolDefinition]
    kept_queries: list[QueryEntry]
    dropped_count: int
    token_estimate: int


@dataclass(frozen=True)
class SymbolRewrite:
    file: str
    name: str
    start_line: int
    new_body: str


@dataclass
class PatchCandidate:
    hypothesis: str
    rewrites: list[SymbolRewrite]
    unified_diff: str
    edited_files: set[str]
    attempt_temperature: float
    scratch_tree: Path
    raw_markup: str = ""


# --- memory filtering -----------------------------------------------------------


def _definition_cost(definition: SymbolDefinition, report: CrashReport | None) -> int:
    return estimate_tokens(prompts.render_definition(definition, report))


def _query_cost(entry: QueryEntry) -> int:
    return estimate_tokens(
        f"--- {entry.action_kind}({entry.pattern}) -> {entry.result_count} result(s) ---\n"
        f"{entry.results}"
    )


def memory_token_estimate(memory: ContextMemory, report: CrashReport | None) -> int:
    """Budget-relevant size of a memory: rendered definitions plus query blocks."""
    total = sum(_definition_cost(d, report) for d in memory.definitions_in_order())
    total += sum(_query_cost(e) for e in memory.query_log)
    return total


_KEEP_BLOCK_RE = re.compile(r"(?ms)^```keep[ \t]*\n(.*?)^```[ \t]*$")
_KEEP_ID_RE = re.compile(r"\b([DQ])(\d+)\b")


def _parse_keep_list(reply: str) -> tuple[set[int], set[int]] | None:
    """(definition indices, query indices), 1-based; None when no keep block."""
    match = _KEEP_BLOCK_RE.search(reply)
    if match is None:
        return None
    defs: set[int] = set()
    queries: set[int] = set()
    for kind, number in _KEEP_ID_RE.findall(match.group(1)):
        (defs if kind == "D" else queries).add(int(number))
    return defs, queries


def filter_memory(
    memory: ContextMemory,
    trajectory: Trajectory,
    report: CrashReport,
    gateway: ModelGateway | None,
    scope: CallScope | None = None,
    token_budget: int = TOKEN_BUDGET,
) -> FilteredMemory:
    """Single model call selects what to keep, then a deterministic budget pass.

    The model sees an inventory of ids and replies with a keep-list; unknown
    ids are ignored and nothing can be fabricated.  If the call fails (or no
    gateway is supplied), everything is kept and the budget pass alone trims.
    The budget pass fits definitions first, then query results newest-first.
    """
    definitions = memory.definitions_in_order()
    queries = list(memory.query_log)

    inventory = [
        f"D{i}: {d.kind} {d.name} ({d.file}:{d.start_line}-{d.end_line})"
        for i, d in enumerate(definitions, start=1)
    ]
    inventory += [
        f"Q{i}: {e.action_kind}({e.pattern}) -> {e.result_count} result(s) at step {e.step}"
        for i, e in enumerate(queries, start=1)
    ]

    kept_def_idx = set(range(1, len(definitions) + 1))
    kept_query_idx = set(range(1, len(queries) + 1))
    if gateway is not None and inventory:
        request = ChatRequest(
            messages=[
                ("system", prompts.FILTER_INSTRUCTIONS),
                (
                    "user",
                    prompts.filter_user_prompt(report, inventory, trajectory.reasoning_trace()),
                ),
            ],
            temperature=0.0,
        )
        try:
            reply = gateway.complete(request, scope or CallScope(name="filter"))
        except GatewayError as exc:
            logger.warning("filter model call failed, keeping everything: %s", exc)
        else:
            parsed = _parse_keep_list(reply)
            if parsed is None:
                logger.warning("filter reply had no keep block, keeping everything")
            else:
                kept_def_idx = parsed[0] & kept_def_idx
                kept_query_idx = parsed[1] & kept_query_idx

    model_defs = [d for i, d in enumerate(definitions, start=1) if i in kept_def_idx]
    model_queries = [e for i, e in enumerate(queries, start=1) if i in kept_query_idx]

    # Deterministic budget pass: definitions first, then queries newest-first.
    kept_definitions: list[SymbolDefinition] = []
    total = 0
    for definition in model_defs:
        cost = _definition_cost(definition, report)
        if total + cost > token_budget:
            break
        kept_definitions.append(definition)
        total += cost

    kept_newest: list[QueryEntry] = []
    for entry in reversed(model_queries):
        cost = _query_cost(entry)
        if total + cost > token_budget:
            break
        kept_newest.append(entry)
        total += cost
    kept_ids = {id(e) for e in kept_newest}
    kept_queries = [e for e in model_queries if id(e) in kept_ids]  # back to log order

    dropped = (len(definitions) - len(kept_definitions)) + (len(queries) - len(kept_queries))
    return FilteredMemory(
        kept_definitions=kept_definitions,
        kept_queries=kept_queries,
        dropped_count=dropped,
        token_estimate=total,
    )


# --- patch markup -----------------------------------------------------------------


_HYPOTHESIS_RE = re.compile(r"(?s)<hypothesis>(.*?)</hypothesis>")
_PATCH_RE = re.compile(r"(?s)<patch>(.*?)</patch>")
_SYMBOL_RE = re.compile(r"(?s)<symbol\b([^>]*)>(.*?)</symbol>")
_ATTR_RE = re.compile(r'(\w+)\s*=\s*"([^"]*)"')


def parse_patch_markup(text: str) -> tuple[str, list[SymbolRewrite]]:
    """Extract the hypothesis and every symbol rewrite, bodies byte-exact.

    The newline straight after the opening tag and the one straight before
    the closing tag belong to the markup, not the body.  Raises
    :class:`MarkupError` with a reason suitable for a retry prompt.
    """
    hypothesis_match = _HYPOTHESIS_RE.search(text)
    if hypothesis_match is None:
        if "<hypothesis>" in text:
            raise MarkupError("unbalanced <hypothesis> tag: closing </hypothesis> not found")
        raise MarkupError("missing <hypothesis> section")
    patch_match = _PATCH_RE.search(text)
    if patch_match is None:
        if "<patch>" in text:
            raise MarkupError("unbalanced <patch> tag: closing </patch> not found")
        raise MarkupError("missing <patch> section")

    patch_body = patch_match.group(1)
    rewrites: list[SymbolRewrite] = []
    for attr_text, body in _SYMBOL_RE.findall(patch_body):
        attrs = dict(_ATTR_RE.findall(attr_text))
        for required in ("file", "name", "start_line"):
            if required not in attrs:
                raise MarkupError(f'symbol tag is missing the required attribute "{required}"')
        try:
            start_line = int(attrs["start_line"])
        except ValueError:
            raise MarkupError(
                f'start_line must be an integer, got "{attrs["start_line"]}"'
            ) from None
        if start_line < 1:
            raise MarkupError("start_line must be a positive integer")
        if body.startswith("\n"):
            body = body[1:]
        if body.endswith("\n"):
            body = body[:-1]
        rewrites.append(
            SymbolRewrite(
                file=attrs["file"], name=attrs["name"], start_line=start_line, new_body=body
            )
        )
    if not rewrites:
        if "<symbol" in patch_body:
            raise MarkupError("unbalanced or malformed <symbol> tag inside <patch>")
        raise MarkupError("the <patch> section contains no <symbol> tags")
    return hypothesis_match.group(1).strip(), rewrites


# --- rewrite application ------------------------------------------------------------


def _file_lines_keepends(text: str) -> list[str]:
    parts = text.split("\n")
    lines = [p + "\n" for p in parts[:-1]]
    if parts[-1] != "":
        lines.append(parts[-1])
    return lines


def unified_diff_text(old: str, new: str, path: str, context: int = 3) -> str:
    """Unified diff consumable by standard patch utilities."""
    out: list[str] = []
    for entry in difflib.unified_diff(
        _file_lines_keepends(old),
        _file_lines_keepends(new),
        fromfile=f"a/{path}",
        tofile=f"b/{path}",
        n=context,
    ):
        if entry.endswith("\n"):
            out.append(entry)
        else:
            out.append(entry + "\n\\ No newline at end of file\n")
    return "".join(out)


def _resolve_rewrite(rewrite: SymbolRewrite, index: SymbolIndex):
    candidates = [
        loc for loc in index.entries.get(rewrite.name, []) if loc.file == rewrite.file
    ]
    exact = [loc for loc in candidates if loc.start_line == rewrite.start_line]
    if exact:
        return exact[0]
    if len(candidates) == 1:
        return candidates[0]
    raise ApplyFailure(
        f"cannot locate '{rewrite.name}' in {rewrite.file}: "
        f"{len(candidates)} candidate definition(s) and start_line {rewrite.start_line} "
        "matches none"
    )


def apply_rewrites(
    handle: WorkspaceHandle,
    rewrites: list[SymbolRewrite],
    index: SymbolIndex,
) -> tuple[Path, str, set[str]]:
    """Apply rewrites to a fresh scratch copy; returns (tree, diff, edited files).

    Multiple rewrites to one file are applied bottom-up by start line so
    earlier spans stay valid.  A rewrite identical to the existing body
    contributes nothing to the diff or the edited-file set.
    """
    if not rewrites:
        raise ValueError("rewrites must be nonempty")

    by_file: dict[str, list[tuple[SymbolRewrite, object]]] = {}
    for rewrite in rewrites:
        by_file.setdefault(rewrite.file, []).append((rewrite, _resolve_rewrite(rewrite, index)))

    scratch = materialize_scratch_copy(handle)
    diff_parts: list[str] = []
    edited: set[str] = set()
    for path in sorted(by_file):
        old_text = read_file(handle, path)
        lines = split_lines(old_text)
        for rewrite, loc in sorted(
            by_file[path], key=lambda pair: pair[1].start_line, reverse=True
        ):
            lines[loc.start_line - 1 : loc.end_line] = split_lines(rewrite.new_body)
        new_text = "\n".join(lines)
        if new_text == old_text:
            continue
        edited.add(path)
        diff_parts.append(unified_diff_text(old_text, new_text, path))
        (scratch / path).parent.mkdir(parents=True, exist_ok=True)
        (scratch / path).write_bytes(encode_blob(new_text))
    return scratch, "".join(diff_parts), edited


# --- patch generation ------------------------------------------------------------


def filtered_context_sections(filtered: FilteredMemory, report: CrashReport) -> list[str]:
    sections: list[str] = []
    if filtered.kept_definitions:
        sections.append(
            "Relevant definitions:\n\n"
            + "\n\n".join(
                prompts.render_definition(d, report) for d in filtered.kept_definitions
            )
        )
    if filtered.kept_queries:
        sections.append(
            "Relevant search results:\n\n"
            + "\n\n".join(
                f"--- {e.action_kind}({e.pattern}) -> {e.result_count} result(s) ---\n{e.results}"
                for e in filtered.kept_queries
            )
        )
    return sections


def generate_patch(
    filtered: FilteredMemory,
    trajectory: Trajectory,
    report: CrashReport,
    gateway: ModelGateway,
    scope: CallScope,
    config,
    handle: WorkspaceHandle,
    index: SymbolIndex,
    budget: AnalysisBudget | None = None,
) -> PatchCandidate:
    """Sample patches at temperatures 0, 0.3, 0.6 until the markup parses.

    At most three attempts (fewer if the call budget runs out first); markup
    failures feed their reason into the next attempt's prompt.  Raises
    :class:`NoWellFormedPatch` on exhaustion and :class:`ApplyFailure` when
    a parsed rewrite cannot be located.
    """
    budget = budget or AnalysisBudget()
    system_text = prompts.patch_system_prompt(config)
    sections = filtered_context_sections(filtered, report)
    reasoning = trajectory.reasoning_trace()

    retry_reason: str | None = None
    attempts = 0
    for temperature in SYNTHESIS_TEMPERATURES[:MAX_PATCH_ATTEMPTS]:
        if count_calls(scope) >= budget.max_calls:
            break
        attempts += 1
        request = ChatRequest(
            messages=[
                ("system", system_text),
                ("user", prompts.patch_user_prompt(report, sections, reasoning, retry_reason)),
            ],
            temperature=temperature,
        )
        reply = gateway.complete(request, scope)
        try:
            hypothesis, rewrites = parse_patch_markup(reply)
        except MarkupError as exc:
            logger.info("patch attempt at temperature %.1f unparseable: %s", temperature, exc)
            retry_reason = str(exc)
            continue

        for rewrite in rewrites:
            if rewrite.name not in trajectory.opened_symbols:
                logger.warning(
                    "rewrite targets '%s', which was never opened during analysis",
                    rewrite.name,
                )
        scratch, diff, edited = apply_rewrites(handle, rewrites, index)
        return PatchCandidate(
            hypothesis=hypothesis,
            rewrites=rewrites,
            unified_diff=diff,
            edited_files=edited,
            attempt_temperature=temperature,
            scratch_tree=scratch,
            raw_markup=reply,
        )
    raise NoWellFormedPatch(
        f"no well-formed patch after {attempts} attempt(s); last problem: {retry_reason}"
    )
