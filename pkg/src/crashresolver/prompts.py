"""Prompt text: system instructions, section rendering, synthesis templates.

Everything codebase-specific (preamble, few-shot examples) comes from the
codebase config; everything here is fixed wording shared across codebases.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from .crash_report import CrashReport, important_lines
from .symbols import SymbolDefinition, render_annotated

if TYPE_CHECKING:  # pragma: no cover
    from .config import CodebaseConfig
    from .memory import QueryEntry

ACTION_GRAMMAR = """\
Issue actions in a fenced block, one per line:

```actions
search_definition(name)
search_definition(name, file=path/to/file.c)
search_code(regex)
search_commits(regex)
close_definition(name)
done
```

- search_definition looks up the full definition of a function, struct,
  union, enum, macro, typedef, or global variable; pass `file=` to restrict
  the lookup to one file. Opened definitions stay visible on every later
  step until you close them with close_definition.
- search_code scans all tracked files for lines matching a POSIX extended
  regular expression and shows each match with two lines of context.
- search_commits scans the commit history: it matches the regex against
  commit messages and against lines added or removed by each commit, and
  returns the commit message plus its patch (long patches are cut at 100
  lines).
- Every search returns at most 5 results. search_code and search_commits
  results are shown to you only on the step right after you issue them, so
  copy anything worth keeping to your scratchpad.
- done ends the investigation; it must be the only action in its block.

To keep notes across steps, add lines in a scratchpad fence:

```scratchpad
one discovery per line
```
"""

REASONING_GUIDE = """\
How to investigate:
- Start from the stack trace: open the definitions of the functions it
  names and trace how control reaches the crash line, including branches,
  gotos, and conditional compilation.
- Trace the data: where do the values involved in the crash come from,
  which functions pass them along, and where could they become invalid?
- Compare against the rest of the codebase: if a snippet looks suspicious,
  search for how similar situations are handled elsewhere (e.g. whether
  other call sites check a pointer for NULL after allocation) and treat
  deviations from the common pattern as candidate root causes.
- Mine the history: search commit messages and diffs for changes that
  touched the involved code, introduced the suspect behavior, or fixed
  something similar before.
- After each batch of results, weigh what you have learned, note important
  discoveries on the scratchpad, close definitions that turned out to be
  irrelevant, and decide which threads to pursue next. When you understand
  the root cause well enough to propose a fix, issue `done`.
"""


def analysis_system_prompt(config: "CodebaseConfig") -> str:
    parts = [config.prompt_preamble.rstrip(), ACTION_GRAMMAR.rstrip(), REASONING_GUIDE.rstrip()]
    if config.analysis_examples:
        rendered = []
        for i, example in enumerate(config.analysis_examples, start=1):
            rendered.append(
                f"Example {i}:\n[situation]\n{example['user'].rstrip()}\n"
                f"[response]\n{example['assistant'].rstrip()}"
            )
        parts.append("Worked examples:\n\n" + "\n\n".join(rendered))
    return "\n\n".join(parts) + "\n"


def crash_report_message(report: CrashReport) -> str:
    return "Crash report under investigation:\n\n" + report.raw_text


DEFINITIONS_HEADER = "Open definitions in memory:"

_TRUNCATION_MARKER = "/* [definition body truncated to fit the context budget] */"


def render_definition(
    definition: SymbolDefinition, report: CrashReport | None, truncated: bool = False
) -> str:
    header = (
        f"--- {definition.kind} {definition.name} "
        f"({definition.file}:{definition.start_line}-{definition.end_line}) ---"
    )
    if truncated:
        first_line = definition.body.split("\n", 1)[0]
        return f"{header}\n{first_line}\n{_TRUNCATION_MARKER}"
    marks = important_lines(report, definition.file) if report is not None else set()
    return f"{header}\n{render_annotated(definition, marks)}"


def query_results_section(entries: list["QueryEntry"]) -> str | None:
    if not entries:
        return None
    parts = ["Results of your searches from the previous step:"]
    for entry in entries:
        parts.append(
            f"--- {entry.action_kind}({entry.pattern}) -> {entry.result_count} result(s) ---\n"
            f"{entry.results}"
        )
    return "\n\n".join(parts)


def scratchpad_section(notes: list[str]) -> str | None:
    if not notes:
        return None
    return "Scratchpad:\n" + "\n".join(f"- {note}" for note in notes)


# --- synthesis: memory filtering ------------------------------------------------

FILTER_INSTRUCTIONS = """\
You are preparing to write a patch for the crash below. The investigation
collected the context items listed in the inventory; some of them are
irrelevant. Reply with the ids of the items worth keeping, inside a fenced
block, one id per line:

```keep
D1
Q3
```

Keep every definition you might edit or need to understand the fix, and any
search results that support the root-cause hypothesis. Ids not listed are
discarded.
"""


def filter_user_prompt(
    report: CrashReport, inventory_lines: list[str], reasoning_trace: str
) -> str:
    return (
        crash_report_message(report)
        + "\n\nInvestigation notes so far:\n"
        + reasoning_trace
        + "\n\nInventory of collected context:\n"
        + "\n".join(inventory_lines)
    )


# --- synthesis: patch generation -------------------------------------------------

MARKUP_INSTRUCTIONS = """\
Write your root-cause analysis and the fix in this exact format:

<hypothesis>
What is wrong and why your change prevents the crash.
</hypothesis>
<patch>
<symbol file="path/to/file.c" name="function_or_symbol_name" start_line="123">
the complete replacement definition of that symbol, after your edits
</symbol>
</patch>

- One <symbol> tag per definition you change; all three attributes (file,
  name, start_line) are required and must locate an existing definition.
- Rewrite each definition in full, not just the changed lines.
- The newline right after the opening <symbol ...> tag and the one right
  before </symbol> are markup; everything between is spliced verbatim.
"""


def patch_system_prompt(config: "CodebaseConfig") -> str:
    return (
        config.prompt_preamble.rstrip()
        + "\n\nYou have finished investigating a crash. Using the gathered context, "
        "propose a patch that prevents it.\n\n"
        + MARKUP_INSTRUCTIONS
    )


def patch_user_prompt(
    report: CrashReport,
    context_sections: list[str],
    reasoning_trace: str,
    retry_reason: str | None = None,
) -> str:
    parts = [crash_report_message(report)]
    parts.extend(context_sections)
    if reasoning_trace:
        parts.append("Investigation notes:\n" + reasoning_trace)
    if retry_reason:
        parts.append(
            "Your previous reply could not be parsed: "
            + retry_reason
            + "\nReply again, following the required format exactly."
        )
    return "\n\n".join(parts)
