"""The investigation loop: prompt, model call, parse, execute, update memory.

One "step" is one model call.  Search actions rebuild the scope plan from
current memory so just-opened definitions immediately narrow later searches
within the same step.  The loop stops on a sole ``done`` action or when the
analysis share of the call budget runs out; synthesis then proceeds with
whatever was gathered.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import actions as actions_mod
from .actions import Action, ParseFailure, StepOutput, parse_step
from .crash_report import CrashReport
from .errors import GatewayError, InvalidPattern
from .gateway import CallScope, ChatRequest, ModelGateway, count_calls
from .limits import ANALYSIS_TEMPERATURE, DEFAULT_MAX_CALLS
from .memory import ContextMemory, assemble_analysis_prompt, memory_to_json
from .search import build_scope_plan, search_code, search_commits
from .symbols import SymbolIndex, lookup_definition
from .workspace import WorkspaceHandle

logger = logging.getLogger(__name__)

TRAJECTORY_SCHEMA_VERSION = 1

STOP_DONE = "done_action"
STOP_BUDGET = "budget_exhausted"
STOP_FATAL = "fatal_error"


@dataclass
class AnalysisBudget:
    """Model-call budget for one candidate patch.

    ``max_calls`` covers analysis and synthesis together; ``synthesis_reserve``
    calls are held back for the filtering and patch generation steps
    (default: ceil(max_calls / 5), i.e. 3 of the default 15).
    """

    max_calls: int = DEFAULT_MAX_CALLS
    temperature: float = ANALYSIS_TEMPERATURE
    synthesis_reserve: int | None = None

    def reserve(self) -> int:
        if self.synthesis_reserve is not None:
            return self.synthesis_reserve
        return math.ceil(self.max_calls / 5)

    def analysis_call_limit(self) -> int:
        return max(1, self.max_calls - self.reserve())


@dataclass
class TrajectoryStep:
    index: int
    prompt_digest: str
    prompt_token_estimate: int
    model_message: str
    parsed: dict
    observations: list[dict]
    reply_message: str


@dataclass
class Trajectory:
    instance_id: str
    steps: list[TrajectoryStep] = field(default_factory=list)
    stop_reason: str | None = None
    error: str | None = None
    memory_final: ContextMemory | None = None
    opened_symbols: set[str] = field(default_factory=set)
    retrieved_commits: set[str] = field(default_factory=set)

    def reasoning_trace(self) -> str:
        parts = []
        for step in self.steps:
            reasoning = step.parsed.get("reasoning", "")
            if reasoning:
                parts.append(f"[step {step.index}] {reasoning}")
        return "\n".join(parts)


def trajectory_to_json(trajectory: Trajectory) -> dict:
    return {
        "schema_version": TRAJECTORY_SCHEMA_VERSION,
        "instance_id": trajectory.instance_id,
        "stop_reason": trajectory.stop_reason,
        "error": trajectory.error,
        "opened_symbols": sorted(trajectory.opened_symbols),
        "retrieved_commits": sorted(trajectory.retrieved_commits),
        "steps": [
            {
                "index": s.index,
                "prompt_digest": s.prompt_digest,
                "prompt_token_estimate": s.prompt_token_estimate,
                "model_message": s.model_message,
                "parsed": s.parsed,
                "observations": s.observations,
                "reply_message": s.reply_message,
            }
            for s in trajectory.steps
        ],
        "memory_final": (
            memory_to_json(trajectory.memory_final) if trajectory.memory_final else None
        ),
    }


def dump_trajectory(trajectory: Trajectory) -> str:
    return json.dumps(trajectory_to_json(trajectory), indent=2, sort_keys=True)


def _persist(trajectory: Trajectory, path: Path | None) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dump_trajectory(trajectory), encoding="utf-8", errors="surrogateescape")
    tmp.replace(path)


def _parsed_to_json(parsed: StepOutput | ParseFailure) -> dict:
    if isinstance(parsed, ParseFailure):
        return {"parse_failure": parsed.reason}
    return {
        "reasoning": parsed.reasoning,
        "scratchpad_notes": list(parsed.scratchpad_notes),
        "actions": [actions_mod.format_action(a) for a in parsed.actions],
        "invalid_lines": [list(pair) for pair in parsed.invalid_lines],
    }


def _execute_action(
    action: Action,
    memory: ContextMemory,
    report: CrashReport,
    handle: WorkspaceHandle,
    index: SymbolIndex,
    trajectory: Trajectory,
) -> tuple[str, str]:
    """Run one action; returns (observation text, one-line summary)."""
    label = actions_mod.format_action(action)
    if action.kind == actions_mod.SEARCH_DEFINITION:
        found = lookup_definition(index, handle, action.argument, action.file_scope)
        for definition in found:
            memory.open_definition(definition)
            trajectory.opened_symbols.add(definition.name)
        observation = actions_mod.render_observation(action, found, report)
        summary = (
            f"{label}: opened {len(found)} definition(s); see the open-definitions section"
            if found
            else f"{label}: no definition found"
        )
        return observation, summary

    if action.kind in (actions_mod.SEARCH_CODE, actions_mod.SEARCH_COMMITS):
        plan = build_scope_plan(memory, report, handle)
        try:
            if action.kind == actions_mod.SEARCH_CODE:
                results = search_code(handle, action.argument, plan)
                result_count = len(results.matches)
            else:
                results = search_commits(handle, action.argument, plan)
                result_count = len(results.records)
                trajectory.retrieved_commits.update(r.commit_id for r in results.records)
        except InvalidPattern as exc:
            observation = f"Invalid pattern for {label}: {exc}"
            return observation, f"{label}: invalid pattern"
        observation = actions_mod.render_observation(action, results)
        memory.record_query(
            memory.step_counter, action.kind, action.argument, observation, result_count
        )
        return observation, f"{label}: {result_count} result(s); shown on the next step"

    if action.kind == actions_mod.CLOSE_DEFINITION:
        removed = memory.close_definition(action.argument)
        observation = actions_mod.render_observation(action, removed)
        return observation, f"{label}: {'removed' if removed else 'nothing to remove'}"

    if action.kind == actions_mod.DONE:
        return actions_mod.render_observation(action, None), f"{label}: analysis finished"

    raise ValueError(f"unknown action kind {action.kind!r}")


def run_analysis(
    report: CrashReport,
    handle: WorkspaceHandle,
    index: SymbolIndex,
    config,
    gateway: ModelGateway,
    scope: CallScope,
    budget: AnalysisBudget | None = None,
    persist_path: Path | None = None,
    seed_hint: int | None = None,
    instance_id: str = "",
    on_step: Callable[[TrajectoryStep], None] | None = None,
) -> tuple[ContextMemory, Trajectory]:
    """Run the analysis loop until ``done`` or the analysis call share is spent.

    The trajectory is persisted after every step when ``persist_path`` is
    given; backend failures mark the trajectory fatal but still return it.
    """
    budget = budget or AnalysisBudget()
    memory = ContextMemory()
    conversation: list[tuple[str, str]] = []
    trajectory = Trajectory(instance_id=instance_id)
    limit = budget.analysis_call_limit()

    while count_calls(scope) < limit:
        bundle = assemble_analysis_prompt(memory, conversation, config, report)
        request = ChatRequest(
            messages=bundle.messages, temperature=budget.temperature, seed_hint=seed_hint
        )
        try:
            reply = gateway.complete(request, scope)
        except GatewayError as exc:
            trajectory.stop_reason = STOP_FATAL
            trajectory.error = str(exc)
            trajectory.memory_final = memory
            _persist(trajectory, persist_path)
            logger.error("trajectory %s failed: %s", instance_id, exc)
            return memory, trajectory

        parsed = parse_step(reply)
        observations: list[dict] = []
        summaries: list[str] = []
        finished = False

        if isinstance(parsed, ParseFailure):
            text = (
                f"Could not parse your reply: {parsed.reason}. "
                "Please answer again using the documented format."
            )
            observations.append({"action": None, "text": text})
            summaries.append(text)
        else:
            for note in parsed.scratchpad_notes:
                memory.append_scratchpad(note)
            for action in parsed.actions:
                observation, summary = _execute_action(
                    action, memory, report, handle, index, trajectory
                )
                observations.append(
                    {"action": actions_mod.format_action(action), "text": observation}
                )
                summaries.append(f"- {summary}")
                if action.kind == actions_mod.DONE:
                    finished = True
            for line, reason in parsed.invalid_lines:
                text = f"- could not run {line!r}: {reason}"
                observations.append({"action": line, "text": text})
                summaries.append(text)

        reply_message = "Executed actions:\n" + "\n".join(summaries) if summaries else ""
        conversation.append(("assistant", reply))
        conversation.append(("user", reply_message))

        trajectory.steps.append(
            TrajectoryStep(
                index=memory.step_counter,
                prompt_digest=request.digest(),
                prompt_token_estimate=bundle.token_estimate,
                model_message=reply,
                parsed=_parsed_to_json(parsed),
                observations=observations,
                reply_message=reply_message,
            )
        )
        memory.step_counter += 1
        trajectory.memory_final = memory
        _persist(trajectory, persist_path)
        if on_step is not None:
            on_step(trajectory.steps[-1])

        if finished:
            trajectory.stop_reason = STOP_DONE
            _persist(trajectory, persist_path)
            return memory, trajectory

    trajectory.stop_reason = STOP_BUDGET
    trajectory.memory_final = memory
    _persist(trajectory, persist_path)
    return memory, trajectory


def sample_trajectories(
    report: CrashReport,
    handle: WorkspaceHandle,
    index: SymbolIndex,
    config,
    make_backend: Callable[[int], object],
    k: int,
    budget: AnalysisBudget | None = None,
    instance_id: str = "",
) -> list[tuple[ContextMemory, Trajectory]]:
    """k independent analysis runs with fresh memories, backends, and seeds.

    A fatal failure in one trajectory never aborts its siblings; the failed
    run is returned with ``stop_reason="fatal_error"``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    results: list[tuple[ContextMemory, Trajectory]] = []
    for i in range(k):
        scope = CallScope(name=f"{instance_id or 'instance'}/trajectory-{i + 1}")
        gateway = ModelGateway(make_backend(i))
        try:
            memory, trajectory = run_analysis(
                report,
                handle,
                index,
                config,
                gateway,
                scope,
                budget=budget,
                seed_hint=i,
                instance_id=f"{instance_id}#{i + 1}" if instance_id else f"#{i + 1}",
            )
        except Exception as exc:  # isolation: a crashed sibling must not abort the batch
            logger.exception("trajectory %d failed fatally", i + 1)
            trajectory = Trajectory(
                instance_id=f"{instance_id}#{i + 1}", stop_reason=STOP_FATAL, error=str(exc)
            )
            memory = ContextMemory()
        results.append((memory, trajectory))
    return results
