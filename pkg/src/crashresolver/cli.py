"""Operator entry point: index, search, run, validate, and eval subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from .config import load_codebase_config, load_instance_spec
from .crash_report import parse_crash_report
from .errors import CrashResolverError
from .gateway import (
    API_KEY_ENV,
    ENDPOINT_ENV,
    MODEL_ENV,
    HttpChatBackend,
    MockBackend,
    ScriptedBehavior,
    load_mock_script,
)
from .pipeline import evaluate_results, render_report, run_instance
from .search import build_scope_plan, search_code, search_commits, single_tier_plan
from .symbols import build_index, save_index
from .validation import validate
from .workspace import list_tracked_files, open_snapshot

logger = logging.getLogger(__name__)


def _add_repo_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--repo", required=True, help="path to the git repository")
    parser.add_argument("--commit", required=True, help="snapshot commit (full or abbreviated)")


def _make_plan(handle, args):
    if getattr(args, "report", None):
        text = Path(args.report).read_text(encoding="utf-8", errors="surrogateescape")
        tracked = {ref.path for ref in list_tracked_files(handle)}
        report = parse_crash_report(text, known_paths=tracked)
        return build_scope_plan(None, report, handle)
    return single_tier_plan(handle)


def _backend_factory(args):
    if args.backend == "mock":
        if not args.mock_script:
            raise SystemExit("--backend mock requires --mock-script")
        script = load_mock_script(args.mock_script)
        return lambda i: MockBackend(ScriptedBehavior(steps=list(script.steps)))
    endpoint = os.environ.get(ENDPOINT_ENV)
    api_key = os.environ.get(API_KEY_ENV)
    model = os.environ.get(MODEL_ENV)
    missing = [
        name
        for name, value in ((ENDPOINT_ENV, endpoint), (API_KEY_ENV, api_key), (MODEL_ENV, model))
        if not value
    ]
    if missing:
        raise SystemExit(f"--backend http needs environment variables: {', '.join(missing)}")
    return lambda i: HttpChatBackend(endpoint=endpoint, api_key=api_key, model=model)


def cmd_index(args) -> int:
    with open_snapshot(args.repo, args.commit) as handle:
        index = build_index(handle)
        save_index(index, args.out)
        total = sum(len(v) for v in index.entries.values())
        print(
            f"indexed {index.diagnostics.files_indexed} file(s), {total} symbol(s) "
            f"-> {args.out}"
        )
        if index.diagnostics.files_skipped:
            print(f"skipped {index.diagnostics.files_skipped} unlexable file(s)", file=sys.stderr)
    return 0


def cmd_search_code(args) -> int:
    with open_snapshot(args.repo, args.commit) as handle:
        results = search_code(handle, args.pattern, _make_plan(handle, args))
        payload = {
            "matches": [
                {
                    "file": m.file,
                    "line": m.line,
                    "context_before": m.context_before,
                    "matched_line": m.matched_line,
                    "context_after": m.context_after,
                }
                for m in results.matches
            ],
            "cap_hit": results.cap_hit,
            "timed_out": results.timed_out,
        }
        print(json.dumps(payload, indent=2))
    return 0


def cmd_search_commits(args) -> int:
    with open_snapshot(args.repo, args.commit) as handle:
        results = search_commits(handle, args.pattern, _make_plan(handle, args))
        payload = {
            "records": [
                {
                    "commit_id": r.commit_id,
                    "message": r.message,
                    "diff_excerpt": r.diff_excerpt,
                    "truncated": r.truncated,
                    "match_source": r.match_source,
                }
                for r in results.records
            ],
            "cap_hit": results.cap_hit,
            "timed_out": results.timed_out,
        }
        print(json.dumps(payload, indent=2))
    return 0


def cmd_run(args) -> int:
    config = load_codebase_config(args.config)
    instance = load_instance_spec(args.instance)
    if args.max_calls:
        config.budget.max_calls = args.max_calls
    make_backend = _backend_factory(args)

    def stream_step(step) -> None:
        actions = step.parsed.get("actions") or [step.parsed.get("parse_failure", "?")]
        print(f"[step {step.index}] {'; '.join(map(str, actions))}", file=sys.stderr)

    bug_dir = run_instance(
        config,
        instance,
        make_backend,
        args.out,
        k=args.k,
        on_step=stream_step,
    )
    run_summary = json.loads((bug_dir / "run.json").read_text(encoding="utf-8"))
    print(f"completed {run_summary['k']} candidate(s); resolved: {run_summary['resolved']}")
    print(f"artifacts: {bug_dir}")
    return 0


def cmd_validate(args) -> int:
    config = load_codebase_config(args.config)
    if config.hooks is None:
        raise SystemExit(f"config '{config.name}' has no validation hooks")
    verdict = validate(args.tree, args.reproducer, config.hooks)
    print(json.dumps(verdict.to_json(), indent=2, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    manifest_path = Path(args.instances)
    payload = yaml.safe_load(manifest_path.read_text(encoding="utf-8"))
    if not isinstance(payload, dict) or "instances" not in payload:
        raise SystemExit(f"{manifest_path} must be a mapping with an 'instances' list")
    instance_paths = [(manifest_path.parent / p).resolve() for p in payload["instances"]]
    report = evaluate_results(args.results, instance_paths)
    rendered = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
        print(f"report written to {args.out}")
    else:
        sys.stdout.write(rendered)
    print(render_report(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crashresolver",
        description="Crash investigation, patch synthesis, and validation over git snapshots",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and save the symbol index")
    _add_repo_args(p)
    p.add_argument("--out", required=True, help="output index file")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search-code", help="regex search over tracked files")
    _add_repo_args(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--report", help="crash report file; enables scoped search tiers")
    p.set_defaults(func=cmd_search_code)

    p = sub.add_parser("search-commits", help="regex search over commit messages and diffs")
    _add_repo_args(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--report", help="crash report file; enables scoped search tiers")
    p.set_defaults(func=cmd_search_commits)

    p = sub.add_parser("run", help="run the full pipeline for one instance")
    p.add_argument("--config", required=True, help="codebase config YAML")
    p.add_argument("--instance", required=True, help="instance spec YAML")
    p.add_argument("--k", type=int, default=None, help="candidate patches to sample")
    p.add_argument("--max-calls", type=int, default=None, help="override the call budget")
    p.add_argument("--backend", choices=("http", "mock"), default="http")
    p.add_argument("--mock-script", help="YAML script for the mock backend")
    p.add_argument("--out", required=True, help="results directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="build a tree and run the reproducer against it")
    p.add_argument("--tree", required=True, help="patched tree to validate")
    p.add_argument("--reproducer", required=True)
    p.add_argument("--config", required=True, help="codebase config YAML (for hooks)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="score a results directory against ground truth")
    p.add_argument("--results", required=True, help="results root produced by 'run'")
    p.add_argument("--instances", required=True, help="manifest YAML listing instance specs")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CrashResolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
