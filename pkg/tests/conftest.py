"""Shared fixtures: deterministic git repo builders and the crashbox suite."""

from __future__ import annotations

import os
import subprocess
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_BASE_DATE = 1704067200  # 2024-01-01T00:00:00Z


def git_env(date_offset: int = 0) -> dict[str, str]:
    """Environment that pins author/committer identity and dates.

    Commit hashes stay identical across runs, which the replay-determinism
    and mock-script fixtures rely on.
    """
    stamp = f"{_BASE_DATE + date_offset * 60} +0000"
    env = dict(os.environ)
    env.update(
        GIT_AUTHOR_NAME="Fixture Author",
        GIT_AUTHOR_EMAIL="fixture@example.com",
        GIT_COMMITTER_NAME="Fixture Author",
        GIT_COMMITTER_EMAIL="fixture@example.com",
        GIT_AUTHOR_DATE=stamp,
        GIT_COMMITTER_DATE=stamp,
    )
    return env


def run_git(repo: Path, *args: str, date_offset: int = 0) -> str:
    proc = subprocess.run(
        ["git", "-C", str(repo), *args],
        capture_output=True,
        text=True,
        check=True,
        env=git_env(date_offset),
    )
    return proc.stdout.strip()


class RepoBuilder:
    """Small helper for staging deterministic fixture histories."""

    def __init__(self, root: Path) -> None:
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        run_git(root, "init", "-q")
        self._commits = 0

    def write(self, path: str, content: str) -> None:
        target = self.root / path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content, encoding="utf-8")

    def remove(self, path: str) -> None:
        (self.root / path).unlink()

    def commit(self, message: str) -> str:
        self._commits += 1
        run_git(self.root, "add", "-A", date_offset=self._commits)
        run_git(self.root, "commit", "-q", "-m", message, date_offset=self._commits)
        return run_git(self.root, "rev-parse", "HEAD")


@pytest.fixture
def repo_builder(tmp_path: Path) -> RepoBuilder:
    return RepoBuilder(tmp_path / "repo")


@pytest.fixture
def simple_repo(tmp_path: Path) -> tuple[Path, str]:
    """Two-commit repo with a few C files; returns (root, head_commit)."""
    builder = RepoBuilder(tmp_path / "simple")
    builder.write("main.c", 'int main(void)\n{\n    return boot();\n}\n')
    builder.write(
        "fs/vfs.c",
        "int vfs_open(const char *path)\n{\n    if (path == 0)\n        return -1;\n"
        "    return do_open(path);\n}\n",
    )
    builder.write("fs/vfs.h", "int vfs_open(const char *path);\n")
    builder.write("docs/notes.txt", "notes\n")
    builder.commit("initial import")
    builder.write("main.c", 'int main(void)\n{\n    init();\n    return boot();\n}\n')
    head = builder.commit("boot: run init before boot")
    return builder.root, head
