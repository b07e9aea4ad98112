"""Read-only access to a repository snapshot at a fixed commit.

All reads go through the git CLI against the commit's tree, so the working
directory state of the underlying repository never leaks into results.
Mutable copies for patch application and builds are materialized under a
private scratch directory.
"""

from __future__ import annotations

import logging
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FileNotTracked, IoFailure, NotARepository, UnknownCommit

logger = logging.getLogger(__name__)

C_SOURCE = "c_source"
C_HEADER = "c_header"
OTHER = "other"

_SOURCE_SUFFIXES = {".c"}
_HEADER_SUFFIXES = {".h"}


def classify_path(path: str) -> str:
    """Classify a repository path as c_source, c_header, or other."""
    suffix = Path(path).suffix.lower()
    if suffix in _SOURCE_SUFFIXES:
        return C_SOURCE
    if suffix in _HEADER_SUFFIXES:
        return C_HEADER
    return OTHER


@dataclass(frozen=True)
class FileRef:
    """One tracked file at the snapshot commit."""

    path: str
    language_class: str


@dataclass
class WorkspaceHandle:
    """Handle to a repository snapshot plus a scratch area for mutable copies."""

    repo_root: Path
    snapshot_commit: str
    scratch_root: Path
    _scratch_count: int = field(default=0, repr=False)

    def cleanup(self) -> None:
        """Remove the scratch area and everything materialized under it."""
        shutil.rmtree(self.scratch_root, ignore_errors=True)

    def __enter__(self) -> "WorkspaceHandle":
        return self

    def __exit__(self, *exc: object) -> None:
        self.cleanup()


def _git(repo_root: Path, *args: str, check: bool = True) -> subprocess.CompletedProcess[bytes]:
    cmd = ["git", "-C", str(repo_root), *args]
    logger.debug("git: %s", " ".join(args))
    proc = subprocess.run(cmd, capture_output=True, check=False)
    if check and proc.returncode != 0:
        raise subprocess.CalledProcessError(
            proc.returncode, cmd, output=proc.stdout, stderr=proc.stderr
        )
    return proc


def decode_blob(data: bytes) -> str:
    """Decode file bytes so that encode() round-trips them exactly."""
    return data.decode("utf-8", errors="surrogateescape")


def encode_blob(text: str) -> bytes:
    """Inverse of :func:`decode_blob`."""
    return text.encode("utf-8", errors="surrogateescape")


def open_snapshot(
    repo_root: str | Path,
    commit: str,
    scratch_root: str | Path | None = None,
) -> WorkspaceHandle:
    """Open a read-only view of *repo_root* at *commit*.

    ``commit`` may be a full or abbreviated hex id (or any revision
    expression git resolves to a commit).  Raises :class:`NotARepository`
    when the path has no version-control metadata and :class:`UnknownCommit`
    when the commit cannot be resolved.
    """
    root = Path(repo_root)
    probe = _git(root, "rev-parse", "--git-dir", check=False)
    if probe.returncode != 0:
        raise NotARepository(f"{root} is not a git repository")

    resolved = _git(root, "rev-parse", "--verify", "--quiet", f"{commit}^{{commit}}", check=False)
    if resolved.returncode != 0:
        raise UnknownCommit(f"commit {commit!r} not found in {root}")
    full_commit = resolved.stdout.decode().strip()

    if scratch_root is None:
        scratch = Path(tempfile.mkdtemp(prefix="crashresolver-scratch-"))
    else:
        scratch = Path(scratch_root)
        scratch.mkdir(parents=True, exist_ok=True)
    return WorkspaceHandle(repo_root=root, snapshot_commit=full_commit, scratch_root=scratch)


def list_tracked_files(handle: WorkspaceHandle, path_prefix: str | None = None) -> list[FileRef]:
    """List every file tracked at the snapshot commit, lexicographically.

    ``path_prefix`` filters by plain string prefix on the repository-relative
    path (pass ``"dir/"`` for directory semantics).  A prefix matching
    nothing yields an empty list.
    """
    proc = _git(handle.repo_root, "ls-tree", "-r", "--name-only", "-z", handle.snapshot_commit)
    paths = [p.decode("utf-8", "surrogateescape") for p in proc.stdout.split(b"\0") if p]
    if path_prefix is not None:
        paths = [p for p in paths if p.startswith(path_prefix)]
    paths.sort()
    return [FileRef(path=p, language_class=classify_path(p)) for p in paths]


def read_file(handle: WorkspaceHandle, path: str) -> str:
    """Return the file's exact committed text (no newline normalization).

    Bytes that are not valid UTF-8 survive via surrogate escapes, so
    ``encode_blob(read_file(...))`` reproduces the blob byte-for-byte.
    """
    proc = _git(
        handle.repo_root,
        "cat-file",
        "blob",
        f"{handle.snapshot_commit}:{path}",
        check=False,
    )
    if proc.returncode != 0:
        raise FileNotTracked(f"{path!r} is not tracked at {handle.snapshot_commit[:12]}")
    return decode_blob(proc.stdout)


def materialize_scratch_copy(handle: WorkspaceHandle) -> Path:
    """Write a fresh mutable checkout of the snapshot tree and return its path.

    Each call yields an independent copy; failures clean up the partial tree
    and raise :class:`IoFailure`.
    """
    handle._scratch_count += 1
    dest = Path(
        tempfile.mkdtemp(prefix=f"tree-{handle._scratch_count:03d}-", dir=handle.scratch_root)
    )
    try:
        archive = _git(handle.repo_root, "archive", "--format=tar", handle.snapshot_commit)
        tar = subprocess.run(
            ["tar", "-x", "-C", str(dest)],
            input=archive.stdout,
            capture_output=True,
            check=False,
        )
        if tar.returncode != 0:
            raise OSError(tar.stderr.decode(errors="replace"))
    except (OSError, subprocess.CalledProcessError) as exc:
        shutil.rmtree(dest, ignore_errors=True)
        raise IoFailure(f"could not materialize scratch copy: {exc}") from exc
    return dest
