"""Parse model replies into actions and render tool results as observations.

The grammar is line-oriented: actions live one per line inside a fenced
````` ```actions ````` block, notes inside a ````` ```scratchpad ````` block,
and everything else is reasoning.  See docs/action-grammar.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .search import CodeSearchResults, CommitSearchResults
from .symbols import SymbolDefinition, render_annotated

SEARCH_DEFINITION = "search_definition"
SEARCH_CODE = "search_code"
SEARCH_COMMITS = "search_commits"
CLOSE_DEFINITION = "close_definition"
DONE = "done"

ACTION_KINDS = (SEARCH_DEFINITION, SEARCH_CODE, SEARCH_COMMITS, CLOSE_DEFINITION, DONE)

_FENCE_RE = re.compile(r"(?ms)^```(actions|scratchpad)[ \t]*\n(.*?)^```[ \t]*$")


@dataclass(frozen=True)
class Action:
    kind: str
    argument: str = ""
    file_scope: str | None = None


@dataclass
class StepOutput:
    reasoning: str
    scratchpad_notes: list[str] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    invalid_lines: list[tuple[str, str]] = field(default_factory=list)  # (line, reason)


@dataclass(frozen=True)
class ParseFailure:
    reason: str


def _parse_action_line(line: str) -> Action | str:
    """One action, or a human-readable reason string when the line is bad."""
    if line in (DONE, f"{DONE}()"):
        return Action(kind=DONE)
    open_idx = line.find("(")
    if open_idx < 0 or not line.endswith(")"):
        return f"not of the form action_name(argument): {line!r}"
    kind = line[:open_idx].strip()
    argument = line[open_idx + 1 : -1]
    if kind not in ACTION_KINDS:
        return f"unknown action {kind!r} (expected one of {', '.join(ACTION_KINDS)})"
    if kind == DONE:
        if argument.strip():
            return "done takes no argument"
        return Action(kind=DONE)
    if kind == SEARCH_DEFINITION:
        file_scope = None
        if ", file=" in argument:
            argument, _, file_scope = argument.rpartition(", file=")
            file_scope = file_scope.strip()
        argument = argument.strip()
        if not argument:
            return "search_definition needs a symbol name"
        return Action(kind=kind, argument=argument, file_scope=file_scope)
    if kind == CLOSE_DEFINITION:
        argument = argument.strip()
    if not argument:
        return f"{kind} needs a nonempty argument"
    return Action(kind=kind, argument=argument)


def parse_step(message: str) -> StepOutput | ParseFailure:
    """Split a model reply into reasoning, scratchpad notes, and actions.

    A reply with no usable action yields a :class:`ParseFailure` whose
    reason is injected back into the conversation so the model can retry.
    ``done`` is honored only as the sole action of the step.
    """
    notes: list[str] = []
    actions: list[Action] = []
    invalid: list[tuple[str, str]] = []
    saw_actions_block = False

    for match in _FENCE_RE.finditer(message):
        block_kind, body = match.group(1), match.group(2)
        if block_kind == "scratchpad":
            notes.extend(line.strip() for line in body.splitlines() if line.strip())
            continue
        saw_actions_block = True
        for raw_line in body.splitlines():
            line = raw_line.strip()
            if not line:
                continue
            parsed = _parse_action_line(line)
            if isinstance(parsed, Action):
                actions.append(parsed)
            else:
                invalid.append((line, parsed))

    reasoning = _FENCE_RE.sub("", message).strip()

    if not saw_actions_block:
        return ParseFailure(
            "no ```actions block found; issue at least one action inside a fenced "
            "```actions block (one per line)"
        )
    if not actions:
        detail = "; ".join(reason for _, reason in invalid) or "the block was empty"
        return ParseFailure(f"no valid action found: {detail}")
    if any(a.kind == DONE for a in actions) and len(actions) > 1:
        return ParseFailure("done must be the only action in its block")
    return StepOutput(
        reasoning=reasoning, scratchpad_notes=notes, actions=actions, invalid_lines=invalid
    )


def format_action(action: Action) -> str:
    """Canonical textual form; re-parsing it yields an equal action."""
    if action.kind == DONE:
        return DONE
    if action.kind == SEARCH_DEFINITION and action.file_scope:
        return f"{SEARCH_DEFINITION}({action.argument}, file={action.file_scope})"
    return f"{action.kind}({action.argument})"


# Examples embedded in the grammar documentation; each must round-trip.
DOC_EXAMPLES = (
    Action(SEARCH_DEFINITION, "dbMount"),
    Action(SEARCH_DEFINITION, "dbMount", file_scope="fs/jfs/jfs_dmap.c"),
    Action(SEARCH_CODE, r"if\s*\(ptr\s*==\s*NULL\)"),
    Action(SEARCH_COMMITS, r"handle->size|crypto_fun\("),
    Action(CLOSE_DEFINITION, "dbAlloc"),
    Action(DONE),
)


# --- observation rendering ------------------------------------------------------


def _render_definitions(action: Action, definitions: list[SymbolDefinition], report) -> str:
    from .crash_report import important_lines  # local import avoids a cycle

    if not definitions:
        scope = f" in {action.file_scope}" if action.file_scope else ""
        return f"No definition found for '{action.argument}'{scope}."
    parts = []
    for d in definitions:
        marks = important_lines(report, d.file) if report is not None else set()
        parts.append(
            f"{d.kind} {d.name} ({d.file}:{d.start_line}-{d.end_line}):\n"
            + render_annotated(d, marks)
        )
    text = "\n\n".join(parts)
    if len(definitions) >= 5:
        text += "\n\n(result cap of 5 reached; further definitions may exist)"
    return text


def _render_code_matches(results: CodeSearchResults) -> str:
    if not results.matches:
        text = "No matches."
    else:
        parts = []
        for m in results.matches:
            window = []
            lineno = m.line - len(m.context_before)
            for line in m.context_before:
                window.append(f"{m.file}:{lineno}  {line}")
                lineno += 1
            window.append(f"{m.file}:{m.line}: {m.matched_line}")
            lineno = m.line + 1
            for line in m.context_after:
                window.append(f"{m.file}:{lineno}  {line}")
                lineno += 1
            parts.append("\n".join(window))
        text = "\n--\n".join(parts)
    if results.cap_hit:
        text += "\n(result cap of 5 reached; more matches may exist)"
    if results.timed_out:
        text += "\n(search timed out; results are partial)"
    return text


def _render_commit_records(results: CommitSearchResults) -> str:
    if not results.records:
        text = "No matching commits."
    else:
        parts = []
        for r in results.records:
            block = f"commit {r.commit_id} (matched: {r.match_source})\n{r.message}"
            if r.diff_excerpt:
                block += f"\n\n{r.diff_excerpt}"
            if r.truncated:
                block += "\n[patch truncated to 100 lines]"
            parts.append(block)
        text = "\n--\n".join(parts)
    if results.cap_hit:
        text += "\n(result cap of 5 reached; more commits may exist)"
    if results.timed_out:
        text += "\n(history scan timed out; results are partial)"
    return text


def render_observation(action: Action, result: object, report=None) -> str:
    """Deterministic text for one executed action's outcome."""
    if action.kind == SEARCH_DEFINITION:
        assert isinstance(result, list)
        return _render_definitions(action, result, report)
    if action.kind == SEARCH_CODE:
        assert isinstance(result, CodeSearchResults)
        return _render_code_matches(result)
    if action.kind == SEARCH_COMMITS:
        assert isinstance(result, CommitSearchResults)
        return _render_commit_records(result)
    if action.kind == CLOSE_DEFINITION:
        if result:
            return f"Removed definition(s) named '{action.argument}' from memory."
        return f"No open definition named '{action.argument}'; nothing removed."
    if action.kind == DONE:
        return "Analysis phase finished."
    raise ValueError(f"unknown action kind {action.kind!r}")
