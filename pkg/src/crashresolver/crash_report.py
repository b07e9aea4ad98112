"""Parse sanitizer / fuzzer crash reports into structured stack frames.

Three frame formats are recognized:

* kernel oops style    ``func+0x1a2/0x400 fs/jfs/jfs_dmap.c:193``
* sanitizer style      ``#4 0x7f3a12 in av_free libavutil/mem.c:248:5``
* bare references      ``net/qrtr/ns.c:556``

Anything else is skipped; parsing never fails on messy input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import EmptyReport

_KERNEL_FRAME = re.compile(
    r"(?P<func>[A-Za-z_$.][\w.$]*)\+0x[0-9a-fA-F]+/0x[0-9a-fA-F]+\s+(?P<file>\S+?):(?P<line>\d+)"
)
_SANITIZER_FRAME = re.compile(
    r"#\d+\s+0x[0-9a-fA-F]+\s+in\s+(?P<func>\S+)\s+(?P<file>\S+?):(?P<line>\d+)(?::\d+)?"
)
_BARE_REF = re.compile(r"(?P<file>[A-Za-z0-9_.+/-]*[\w+-]\.(?:c|h|cc|cpp|cxx|hpp|S)):(?P<line>\d+)")


@dataclass(frozen=True)
class StackFrame:
    """One stack entry; ``function`` is empty for bare file:line references."""

    function: str
    file: str
    line: int


@dataclass
class CrashReport:
    title: str
    raw_text: str
    frames: list[StackFrame] = field(default_factory=list)
    referenced_files: list[str] = field(default_factory=list)
    subsystem_hints: list[str] = field(default_factory=list)


def _strip_build_prefix(path: str, known_paths: set[str]) -> str:
    """Drop leading path components until the remainder is a tracked path.

    Crash reports often carry absolute build paths; the longest suffix that
    exists in the snapshot tree wins.  Unmatched paths pass through as-is.
    """
    if path in known_paths:
        return path
    parts = path.split("/")
    for i in range(1, len(parts)):
        candidate = "/".join(parts[i:])
        if candidate in known_paths:
            return candidate
    return path


def parse_crash_report(text: str, known_paths: set[str] | None = None) -> CrashReport:
    """Extract title, frames, referenced files, and subsystem hints.

    ``known_paths`` (the snapshot's tracked files) enables stripping of
    absolute build prefixes from frame paths.  Unparseable lines are
    skipped, never fatal; blank input raises :class:`EmptyReport`.
    """
    if not text.strip():
        raise EmptyReport("crash report text is blank")

    title = next(line.strip() for line in text.splitlines() if line.strip())

    frames: list[StackFrame] = []
    for line in text.splitlines():
        match = _KERNEL_FRAME.search(line) or _SANITIZER_FRAME.search(line)
        if match:
            frames.append(
                StackFrame(
                    function=match.group("func"),
                    file=match.group("file"),
                    line=int(match.group("line")),
                )
            )
            continue
        for bare in _BARE_REF.finditer(line):
            frames.append(StackFrame(function="", file=bare.group("file"), line=int(bare.group("line"))))

    if known_paths:
        frames = [
            StackFrame(f.function, _strip_build_prefix(f.file, known_paths), f.line) for f in frames
        ]

    referenced: list[str] = []
    for frame in frames:
        if frame.file not in referenced:
            referenced.append(frame.file)

    hints: list[str] = []
    for path in referenced:
        if "/" in path:
            top = path.split("/", 1)[0]
            if top not in hints:
                hints.append(top)

    return CrashReport(
        title=title,
        raw_text=text,
        frames=frames,
        referenced_files=referenced,
        subsystem_hints=hints,
    )


def important_lines(report: CrashReport, file: str) -> set[int]:
    """Line numbers of *file* mentioned by any frame; empty if unreferenced."""
    return {frame.line for frame in report.frames if frame.file == file}


def report_to_json(report: CrashReport) -> dict:
    """JSON-serializable form used in trajectory logs."""
    return {
        "title": report.title,
        "frames": [
            {"function": f.function, "file": f.file, "line": f.line} for f in report.frames
        ],
        "referenced_files": list(report.referenced_files),
        "subsystem_hints": list(report.subsystem_hints),
    }
