"""Build the patched tree and run the reproducer through pluggable hooks.

A patch is accepted iff the tree builds and no reproducer instance crashes
within the window.  Crash detection is configurable: any nonzero exit
(including signal kills) counts, plus an optional output-marker regex for
setups whose reproducers always exit zero.  A reproducer that simply runs
out the clock did NOT crash — timeouts are negative evidence, not errors.
"""

from __future__ import annotations

import logging
import re
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import HookMisconfigured
from .limits import PARALLEL_REPRODUCERS, REPRODUCE_TIMEOUT

logger = logging.getLogger(__name__)


@dataclass
class ValidationHooks:
    """Shell command templates over ``{tree}`` and ``{reproducer}``."""

    build_command: str
    reproduce_command: str
    reproduce_timeout: float = REPRODUCE_TIMEOUT
    parallel_reproducers: int = PARALLEL_REPRODUCERS
    crash_marker: str | None = None
    build_timeout: float = 600.0


@dataclass
class Verdict:
    built: bool
    crashed: bool
    accepted: bool
    logs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "built": self.built,
            "crashed": self.crashed,
            "accepted": self.accepted,
            "logs": self.logs,
        }


def _substitute(template: str, tree: Path, reproducer: Path) -> str:
    try:
        return template.format(tree=tree, reproducer=reproducer)
    except (KeyError, IndexError, ValueError) as exc:
        raise HookMisconfigured(f"bad command template {template!r}: {exc}") from exc


def _run_reproducer(command: str, tree: Path, timeout: float, marker: re.Pattern | None) -> dict:
    try:
        proc = subprocess.run(
            ["sh", "-c", command],
            cwd=tree,
            capture_output=True,
            text=True,
            errors="replace",
            timeout=timeout,
        )
    except subprocess.TimeoutExpired as exc:
        # Ran the whole window without crashing.
        return {
            "returncode": None,
            "timed_out": True,
            "crashed": False,
            "stdout": (exc.stdout or b"").decode(errors="replace") if isinstance(exc.stdout, bytes) else (exc.stdout or ""),
            "stderr": (exc.stderr or b"").decode(errors="replace") if isinstance(exc.stderr, bytes) else (exc.stderr or ""),
        }
    output = proc.stdout + proc.stderr
    crashed = proc.returncode != 0 or bool(marker and marker.search(output))
    return {
        "returncode": proc.returncode,
        "timed_out": False,
        "crashed": crashed,
        "stdout": proc.stdout,
        "stderr": proc.stderr,
    }


def validate(scratch_tree: str | Path, reproducer: str | Path, hooks: ValidationHooks) -> Verdict:
    """Build gate first, then concurrent reproducer instances.

    ``crashed`` is true iff any instance showed the crash signature within
    the window; ``accepted`` iff the build succeeded and nothing crashed.
    """
    tree = Path(scratch_tree)
    repro = Path(reproducer)
    if not tree.exists():
        raise HookMisconfigured(f"scratch tree {tree} does not exist")
    if not repro.exists():
        raise HookMisconfigured(f"reproducer {repro} does not exist")

    build_cmd = _substitute(hooks.build_command, tree, repro)
    logger.info("building: %s", build_cmd)
    build = subprocess.run(
        ["sh", "-c", build_cmd],
        cwd=tree,
        capture_output=True,
        text=True,
        errors="replace",
        timeout=hooks.build_timeout,
    )
    logs: dict = {
        "build": {
            "command": build_cmd,
            "returncode": build.returncode,
            "stdout": build.stdout,
            "stderr": build.stderr,
        }
    }
    if build.returncode != 0:
        logger.info("build failed (exit %d)", build.returncode)
        return Verdict(built=False, crashed=False, accepted=False, logs=logs)

    repro_cmd = _substitute(hooks.reproduce_command, tree, repro)
    marker = re.compile(hooks.crash_marker) if hooks.crash_marker else None
    logger.info(
        "running %d reproducer instance(s), %ds window: %s",
        hooks.parallel_reproducers,
        int(hooks.reproduce_timeout),
        repro_cmd,
    )
    with ThreadPoolExecutor(max_workers=hooks.parallel_reproducers) as pool:
        runs = list(
            pool.map(
                lambda _: _run_reproducer(repro_cmd, tree, hooks.reproduce_timeout, marker),
                range(hooks.parallel_reproducers),
            )
        )
    logs["reproduce"] = [{"command": repro_cmd, **run} for run in runs]
    crashed = any(run["crashed"] for run in runs)
    return Verdict(built=True, crashed=crashed, accepted=not crashed, logs=logs)
