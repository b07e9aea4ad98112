"""Index named language objects in C sources and serve definition lookups.

The indexer is a lightweight lexer, not a C parser: it masks comments and
string literals, drops preprocessor lines (after harvesting ``#define``
spans, including backslash continuations), and then scans top-level tokens
for definitions.  That is enough to find functions, structs, unions, enums,
macros, typedefs, and global variables with exact line spans, while staying
hermetic and fast.  Declarations without bodies are deliberately excluded.

Known non-goals: K&R parameter lists, C++ templates, and type checking.
Files the lexer cannot make sense of are skipped and tallied, never fatal.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .limits import MAX_RESULTS
from .workspace import C_HEADER, C_SOURCE, WorkspaceHandle, list_tracked_files, read_file

logger = logging.getLogger(__name__)

FUNCTION = "function"
STRUCT = "struct"
UNION = "union"
ENUM = "enum"
MACRO = "macro"
TYPEDEF = "typedef"
GLOBAL_VARIABLE = "global_variable"

KINDS = frozenset({FUNCTION, STRUCT, UNION, ENUM, MACRO, TYPEDEF, GLOBAL_VARIABLE})

# Tokens that can never be a definition name.
_C_KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    _Bool _Static_assert _Atomic _Noreturn _Thread_local
    __attribute__ __extension__ __inline __inline__ __restrict __restrict__
    __volatile__ __asm__ asm bool""".split()
)

_ATTRIBUTE_LIKE = frozenset({"__attribute__", "__declspec"})

_AGGREGATE_KEYWORDS = {"struct": STRUCT, "union": UNION, "enum": ENUM}

ANNOTATION = " /* <-- crash report references this line */"


class LexError(Exception):
    """The token stream was too malformed to scan (e.g. unbalanced braces)."""


@dataclass(frozen=True)
class SymbolLocator:
    """Position of one definition; bodies are loaded lazily from the snapshot."""

    name: str
    kind: str
    file: str
    start_line: int
    end_line: int


@dataclass(frozen=True)
class SymbolDefinition:
    name: str
    kind: str
    file: str
    start_line: int
    end_line: int
    body: str


@dataclass
class IndexDiagnostics:
    files_indexed: int = 0
    files_skipped: int = 0
    skipped_paths: list[str] = field(default_factory=list)


@dataclass
class SymbolIndex:
    entries: dict[str, list[SymbolLocator]]
    built_at: str
    diagnostics: IndexDiagnostics = field(default_factory=IndexDiagnostics)


def split_lines(text: str) -> list[str]:
    """1-based line model used everywhere: line i is ``split_lines(t)[i-1]``.

    Splitting on ``\\n`` only (CR stays attached) makes rejoining with
    ``\\n`` reproduce the text byte-exactly.
    """
    return text.split("\n")


# --- lexing ------------------------------------------------------------------


def _mask_comments_and_strings(text: str) -> str:
    """Blank out comment and string interiors, preserving length and newlines."""
    out = list(text)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                out[i] = " "
                i += 1
        elif c == "/" and i + 1 < n and text[i + 1] == "*":
            out[i] = out[i + 1] = " "
            i += 2
            while i < n and not (text[i] == "*" and i + 1 < n and text[i + 1] == "/"):
                if text[i] != "\n":
                    out[i] = " "
                i += 1
            if i < n:
                out[i] = out[i + 1] = " "
                i += 2
        elif c in "\"'":
            quote = c
            out[i] = " "
            i += 1
            while i < n and text[i] != quote:
                if text[i] == "\\" and i + 1 < n:
                    out[i] = " "
                    if text[i + 1] != "\n":
                        out[i + 1] = " "
                    i += 2
                    continue
                if text[i] != "\n":
                    out[i] = " "
                i += 1
            if i < n:
                out[i] = " "
                i += 1
        else:
            i += 1
    return "".join(out)


def _harvest_preprocessor(masked_lines: list[str]) -> tuple[list[SymbolLocator], set[int]]:
    """Collect macro definitions and the 0-based indices of all directive lines."""
    define_re = re.compile(r"\s*#\s*define\s+([A-Za-z_]\w*)")
    macros: list[SymbolLocator] = []
    directive_lines: set[int] = set()
    i = 0
    while i < len(masked_lines):
        if masked_lines[i].lstrip().startswith("#"):
            start = i
            while i < len(masked_lines) and masked_lines[i].rstrip().endswith("\\"):
                i += 1
            directive_lines.update(range(start, i + 1))
            match = define_re.match(masked_lines[start])
            if match:
                macros.append(
                    SymbolLocator(
                        name=match.group(1),
                        kind=MACRO,
                        file="",
                        start_line=start + 1,
                        end_line=i + 1,
                    )
                )
        i += 1
    return macros, directive_lines


@dataclass(frozen=True)
class _Token:
    text: str
    line: int
    is_ident: bool


_TOKEN_RE = re.compile(r"[A-Za-z_]\w*|0[xX][0-9a-fA-F]+|\d+(?:\.\d+)?|\S")


def _tokenize(scan_lines: list[str]) -> list[_Token]:
    tokens: list[_Token] = []
    for lineno, line in enumerate(scan_lines, start=1):
        for match in _TOKEN_RE.finditer(line):
            text = match.group(0)
            tokens.append(_Token(text, lineno, bool(re.match(r"[A-Za-z_]", text))))
    return tokens


_OPEN = {"(": ")", "[": "]", "{": "}"}
_CLOSE = {v: k for k, v in _OPEN.items()}


def _match_forward(tokens: list[_Token], i: int) -> int:
    """Index of the token closing the group opened at *i*."""
    opener = tokens[i].text
    closer = _OPEN[opener]
    depth = 0
    for j in range(i, len(tokens)):
        if tokens[j].text == opener:
            depth += 1
        elif tokens[j].text == closer:
            depth -= 1
            if depth == 0:
                return j
    raise LexError(f"unbalanced {opener!r} at line {tokens[i].line}")


def _match_backward(tokens: list[_Token], i: int) -> int:
    """Index of the token opening the group closed at *i*."""
    closer = tokens[i].text
    opener = _CLOSE[closer]
    depth = 0
    for j in range(i, -1, -1):
        if tokens[j].text == closer:
            depth += 1
        elif tokens[j].text == opener:
            depth -= 1
            if depth == 0:
                return j
    raise LexError(f"unbalanced {closer!r} at line {tokens[i].line}")


def _find_semicolon(tokens: list[_Token], i: int) -> int:
    """Index of the next ';' at group balance 0, starting at *i*."""
    j = i
    while j < len(tokens):
        text = tokens[j].text
        if text == ";":
            return j
        if text in _OPEN:
            j = _match_forward(tokens, j)
        j += 1
    raise LexError("statement missing ';'")


def _split_top_level(tokens: list[_Token], sep: str) -> list[list[_Token]]:
    chunks: list[list[_Token]] = [[]]
    j = 0
    while j < len(tokens):
        tok = tokens[j]
        if tok.text == sep:
            chunks.append([])
            j += 1
            continue
        if tok.text in _OPEN:
            end = _match_forward(tokens, j)
            chunks[-1].extend(tokens[j : end + 1])
            j = end + 1
            continue
        chunks[-1].append(tok)
        j += 1
    return chunks


def _is_name(tok: _Token) -> bool:
    return tok.is_ident and tok.text not in _C_KEYWORDS


def _function_name(head: list[_Token]) -> str | None:
    """Name of the function whose signature ends this statement head.

    Walks back over trailing qualifiers and attribute groups to the
    parameter list; the identifier before it is the name.
    """
    pos = len(head) - 1
    while pos >= 0:
        tok = head[pos]
        if tok.text == ")":
            open_i = _match_backward(head, pos)
            before = open_i - 1
            if before < 0 or not head[before].is_ident:
                return None
            if head[before].text in _ATTRIBUTE_LIKE:
                pos = before - 1
                continue
            if _is_name(head[before]):
                return head[before].text
            return None
        if tok.is_ident:
            pos -= 1
            continue
        return None
    return None


def _declarator_name(chunk: list[_Token]) -> str | None:
    """Variable name declared by one comma-separated declarator chunk."""
    # Truncate at the initializer.
    for j, tok in enumerate(chunk):
        if tok.text == "=":
            chunk = chunk[:j]
            break
    # Function-pointer declarator: (*name)(...)
    j = 0
    while j < len(chunk):
        if chunk[j].text == "(":
            end = _match_forward(chunk, j)
            inner = chunk[j + 1 : end]
            k = 0
            while k < len(inner) and inner[k].text == "*":
                k += 1
            if k > 0 and k < len(inner) and _is_name(inner[k]):
                return inner[k].text
            return None  # parameter list => declaration of a function, not a variable
        if chunk[j].text == "[":
            break
        j += 1
    names = [tok.text for tok in chunk[:j] if _is_name(tok)]
    return names[-1] if names else None


def _classify_statement(stmt: list[_Token], end_line: int) -> list[SymbolLocator]:
    """Typedefs and globals from one brace-free top-level statement."""
    if not stmt:
        return []
    start_line = stmt[0].line
    found: list[SymbolLocator] = []
    if stmt[0].text == "typedef":
        name = _declarator_name(stmt[1:])
        if name:
            found.append(SymbolLocator(name, TYPEDEF, "", start_line, end_line))
        return found
    if stmt[0].text == "extern" and not any(t.text == "=" for t in stmt):
        return []  # declaration only
    idents = [t for t in stmt if _is_name(t)]
    if stmt[0].text in _AGGREGATE_KEYWORDS and len(idents) <= 1:
        return []  # forward declaration: struct foo;
    for chunk in _split_top_level(stmt, ","):
        name = _declarator_name(chunk)
        if name:
            found.append(SymbolLocator(name, GLOBAL_VARIABLE, "", start_line, end_line))
    return found


def _scan_tokens(tokens: list[_Token]) -> list[SymbolLocator]:
    """Single pass over top-level tokens, emitting definition locators."""
    found: list[SymbolLocator] = []
    i = 0
    stmt_start = 0
    n = len(tokens)
    while i < n:
        text = tokens[i].text
        if text in ("(", "["):
            i = _match_forward(tokens, i) + 1
            continue
        if text == ";":
            found.extend(_classify_statement(tokens[stmt_start:i], tokens[i].line))
            i += 1
            stmt_start = i
            continue
        if text == "{":
            head = tokens[stmt_start:i]
            close = _match_forward(tokens, i)
            has_init = any(t.text == "=" for t in head)
            tag_kind = tag_name = None
            if head and not has_init:
                if head[-1].text in _AGGREGATE_KEYWORDS:
                    tag_kind = _AGGREGATE_KEYWORDS[head[-1].text]  # anonymous
                elif (
                    len(head) >= 2
                    and _is_name(head[-1])
                    and head[-2].text in _AGGREGATE_KEYWORDS
                ):
                    tag_kind = _AGGREGATE_KEYWORDS[head[-2].text]
                    tag_name = head[-1].text
            if tag_kind is not None:
                semi = _find_semicolon(tokens, close + 1)
                start_line = head[0].line
                end_line = tokens[semi].line
                if tag_name:
                    found.append(SymbolLocator(tag_name, tag_kind, "", start_line, end_line))
                tail = tokens[close + 1 : semi]
                if head[0].text == "typedef":
                    name = _declarator_name(tail)
                    if name:
                        found.append(SymbolLocator(name, TYPEDEF, "", start_line, end_line))
                else:
                    for chunk in _split_top_level(tail, ","):
                        name = _declarator_name(chunk)
                        if name:
                            found.append(
                                SymbolLocator(name, GLOBAL_VARIABLE, "", start_line, end_line)
                            )
                i = semi + 1
                stmt_start = i
                continue
            if has_init:
                semi = _find_semicolon(tokens, close + 1)
                found.extend(_classify_statement(tokens[stmt_start:semi], tokens[semi].line))
                i = semi + 1
                stmt_start = i
                continue
            name = _function_name(head)
            if name:
                found.append(SymbolLocator(name, FUNCTION, "", head[0].line, tokens[close].line))
            i = close + 1
            stmt_start = i
            continue
        if text == "}":
            raise LexError(f"unmatched '}}' at line {tokens[i].line}")
        i += 1
    return found


def lex_c_source(text: str) -> list[SymbolLocator]:
    """All definitions found in one file's text (file field left empty)."""
    masked = _mask_comments_and_strings(text)
    masked_lines = masked.split("\n")
    macros, directive_lines = _harvest_preprocessor(masked_lines)
    scan_lines = [
        "" if idx in directive_lines else line for idx, line in enumerate(masked_lines)
    ]
    found = _scan_tokens(_tokenize(scan_lines))
    found.extend(macros)
    return found


# --- index build & queries ----------------------------------------------------


def build_index(handle: WorkspaceHandle) -> SymbolIndex:
    """Index every tracked C source/header at the snapshot commit.

    Deterministic across runs: files are processed in sorted order and each
    name's entries are sorted by (path, start line).  Files that fail to lex
    are skipped and tallied in the diagnostics.
    """
    entries: dict[str, list[SymbolLocator]] = {}
    diagnostics = IndexDiagnostics()
    for ref in list_tracked_files(handle):
        if ref.language_class not in (C_SOURCE, C_HEADER):
            continue
        try:
            locators = lex_c_source(read_file(handle, ref.path))
        except LexError as exc:
            logger.warning("skipping unlexable file %s: %s", ref.path, exc)
            diagnostics.files_skipped += 1
            diagnostics.skipped_paths.append(ref.path)
            continue
        diagnostics.files_indexed += 1
        for loc in locators:
            placed = SymbolLocator(loc.name, loc.kind, ref.path, loc.start_line, loc.end_line)
            entries.setdefault(loc.name, []).append(placed)
    for name in entries:
        entries[name].sort(key=lambda loc: (loc.file, loc.start_line))
    return SymbolIndex(entries=entries, built_at=handle.snapshot_commit, diagnostics=diagnostics)


def lookup_definition(
    index: SymbolIndex,
    handle: WorkspaceHandle,
    name: str,
    file: str | None = None,
) -> list[SymbolDefinition]:
    """All definitions named *name*, capped at 5, ordered by (path, start line).

    An empty list means "not found" — the agent prompt documents that.
    """
    if index.built_at != handle.snapshot_commit:
        raise ValueError(
            f"index built at {index.built_at[:12]} but handle is at "
            f"{handle.snapshot_commit[:12]}"
        )
    locators = index.entries.get(name, [])
    if file is not None:
        locators = [loc for loc in locators if loc.file == file]
    results: list[SymbolDefinition] = []
    for loc in locators[:MAX_RESULTS]:
        lines = split_lines(read_file(handle, loc.file))
        body = "\n".join(lines[loc.start_line - 1 : loc.end_line])
        results.append(
            SymbolDefinition(loc.name, loc.kind, loc.file, loc.start_line, loc.end_line, body)
        )
    return results


def render_annotated(definition: SymbolDefinition, important: set[int]) -> str:
    """Body with crash-referenced lines marked by a trailing C-style comment.

    ``important`` holds absolute file line numbers; lines outside the
    definition's span are ignored and the line count never changes.
    """
    if not important:
        return definition.body
    rendered = []
    for offset, line in enumerate(split_lines(definition.body)):
        absolute = definition.start_line + offset
        rendered.append(line + ANNOTATION if absolute in important else line)
    return "\n".join(rendered)


# --- persistence ----------------------------------------------------------------

_INDEX_VERSION = "1"


def save_index(index: SymbolIndex, path: str | Path) -> None:
    """Write the index as a line-oriented text file (see docs/index-format.md)."""
    out = [f"!version\t{_INDEX_VERSION}", f"!built-at\t{index.built_at}"]
    for name in sorted(index.entries):
        for loc in index.entries[name]:
            out.append(f"{loc.name}\t{loc.kind}\t{loc.file}\t{loc.start_line}\t{loc.end_line}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_index(path: str | Path) -> SymbolIndex:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("!version\t"):
        raise ValueError(f"{path} is not a symbol index file")
    version = lines[0].split("\t", 1)[1]
    if version != _INDEX_VERSION:
        raise ValueError(f"unsupported index version {version!r}")
    built_at = lines[1].split("\t", 1)[1]
    entries: dict[str, list[SymbolLocator]] = {}
    for record in lines[2:]:
        if not record:
            continue
        name, kind, file, start, end = record.split("\t")
        entries.setdefault(name, []).append(
            SymbolLocator(name, kind, file, int(start), int(end))
        )
    for name in entries:
        entries[name].sort(key=lambda loc: (loc.file, loc.start_line))
    return SymbolIndex(entries=entries, built_at=built_at)
