"""YAML codebase configs and per-bug instance specs.

A codebase config carries everything that varies between codebases (prompt
preamble, few-shot examples, validation hooks, budgets) so that pointing
the pipeline at a new codebase is a config swap, not a code change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .analysis import AnalysisBudget
from .errors import ConfigError
from .validation import ValidationHooks


@dataclass
class CodebaseConfig:
    name: str
    prompt_preamble: str
    analysis_examples: list[dict] = field(default_factory=list)
    hooks: ValidationHooks | None = None
    budget: AnalysisBudget = field(default_factory=AnalysisBudget)
    k: int = 1


@dataclass
class InstanceSpec:
    bug_id: str
    repo: Path
    commit: str
    crash_report_path: Path
    reproducer_path: Path
    fix_commit: str | None = None  # eval only; never shown to the agent


def _require(payload: dict, key: str, where: str):
    if key not in payload or payload[key] in (None, ""):
        raise ConfigError(f"{where}: missing required field '{key}'")
    return payload[key]


def load_codebase_config(path: str | Path) -> CodebaseConfig:
    path = Path(path)
    try:
        payload = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config {path} must be a mapping")

    where = str(path)
    name = _require(payload, "name", where)
    preamble = _require(payload, "prompt_preamble", where)
    examples = payload.get("analysis_examples") or []
    if not examples:
        raise ConfigError(f"{where}: analysis_examples must contain at least one exchange")
    for i, example in enumerate(examples):
        if not isinstance(example, dict) or "user" not in example or "assistant" not in example:
            raise ConfigError(f"{where}: analysis_examples[{i}] needs 'user' and 'assistant'")

    hooks = None
    if "validation" in payload:
        v = payload["validation"]
        hooks = ValidationHooks(
            build_command=_require(v, "build_command", f"{where}:validation"),
            reproduce_command=_require(v, "reproduce_command", f"{where}:validation"),
            reproduce_timeout=float(v.get("reproduce_timeout", ValidationHooks.reproduce_timeout)),
            parallel_reproducers=int(
                v.get("parallel_reproducers", ValidationHooks.parallel_reproducers)
            ),
            crash_marker=v.get("crash_marker"),
            build_timeout=float(v.get("build_timeout", ValidationHooks.build_timeout)),
        )
        if hooks.reproduce_timeout <= 0:
            raise ConfigError(f"{where}: reproduce_timeout must be positive")
        if hooks.parallel_reproducers < 1:
            raise ConfigError(f"{where}: parallel_reproducers must be >= 1")

    budget = AnalysisBudget()
    if "budgets" in payload:
        b = payload["budgets"]
        budget = AnalysisBudget(
            max_calls=int(b.get("max_calls", AnalysisBudget.max_calls)),
            temperature=float(b.get("temperature", AnalysisBudget.temperature)),
            synthesis_reserve=(
                int(b["synthesis_reserve"]) if b.get("synthesis_reserve") is not None else None
            ),
        )
        if budget.max_calls < 1:
            raise ConfigError(f"{where}: budgets.max_calls must be >= 1")

    k = int(payload.get("k", 1))
    if k < 1:
        raise ConfigError(f"{where}: k must be >= 1")
    return CodebaseConfig(
        name=name,
        prompt_preamble=preamble,
        analysis_examples=examples,
        hooks=hooks,
        budget=budget,
        k=k,
    )


def load_instance_spec(path: str | Path) -> InstanceSpec:
    """Load an instance spec; relative paths resolve against the spec's directory."""
    path = Path(path)
    try:
        payload = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read instance {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"instance {path} is not valid YAML: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"instance {path} must be a mapping")

    where = str(path)
    base = path.parent

    def resolve(key: str) -> Path:
        return (base / str(_require(payload, key, where))).resolve()

    spec = InstanceSpec(
        bug_id=str(_require(payload, "bug_id", where)),
        repo=resolve("repo"),
        commit=str(_require(payload, "commit", where)),
        crash_report_path=resolve("crash_report"),
        reproducer_path=resolve("reproducer"),
        fix_commit=payload.get("fix_commit"),
    )
    if not spec.crash_report_path.exists():
        raise ConfigError(f"{where}: crash_report {spec.crash_report_path} does not exist")
    if not spec.reproducer_path.exists():
        raise ConfigError(f"{where}: reproducer {spec.reproducer_path} does not exist")
    return spec
