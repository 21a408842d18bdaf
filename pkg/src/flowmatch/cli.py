"""Command-line front end: validate, run, match, and score.

Exit codes are a stable contract: 0 ok, 1 validation findings, 2 I/O,
3 matcher backend, 4 configuration. All machine-readable outputs are JSON
with sorted keys so repeated runs under the same seed are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .decisions import load_decision_set, require_clean, validate_paths
from .errors import (
    ConfigError,
    EngineError,
    InsufficientRunsError,
    MatchingBackendError,
    ProgramError,
    ValidationError,
)
from .graph import build_flow_graph
from .matching import MatchConfig, match_submission, report_to_doc
from .metrics import build_groups, compute_scorecard
from .parser import parse_program
from .semantic import BackendConfig, LexicalMatcher, RemoteMatcher, TranscriptCache
from .table import ToleranceSpec, load_table, write_table
from .transforms import run_program

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_IO = 2
EXIT_BACKEND = 3
EXIT_CONFIG = 4


def _emit_json(doc, out: str | None) -> str:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    return text


def cmd_validate(args) -> int:
    findings = validate_paths(args.paths)
    doc = {"findings": [f.to_doc() for f in findings], "ok": not findings}
    sys.stdout.write(_emit_json(doc, args.out))
    return EXIT_OK if not findings else EXIT_FINDINGS


def cmd_run(args) -> int:
    try:
        with open(args.dataset, "rb") as handle:
            table = load_table(handle)
        source = Path(args.program).read_text(encoding="utf-8")
    except OSError as exc:
        sys.stderr.write(f"cannot read input: {exc}\n")
        return EXIT_IO
    program = parse_program(source)
    try:
        result, trace = run_program(table, program)
    except ProgramError as exc:
        sys.stderr.write(f"program failed at {exc}\n")
        return EXIT_FINDINGS
    Path(args.out).write_bytes(write_table(result))
    if args.trace:
        graph = build_flow_graph(table, trace)
        _emit_json(graph.to_doc(), args.trace)
    sys.stdout.write(f"wrote {result.row_count} rows x {len(result.columns)} columns to {args.out}\n")
    return EXIT_OK


def _build_matcher(args):
    if args.matcher == "lexical":
        return LexicalMatcher(args.threshold)
    if not args.backend_url or not args.backend_model:
        raise ConfigError("remote matcher needs --backend-url and --backend-model")
    cache = TranscriptCache(Path(args.cache_dir) / "transcript.jsonl") if args.cache_dir else None
    return RemoteMatcher(
        BackendConfig(args.backend_url, args.backend_model, api_key_env=args.api_key_env),
        cache,
    )


def cmd_match(args) -> int:
    try:
        gt_loaded = load_decision_set(args.ground_truth)
        sub_loaded = load_decision_set(args.submission, submission=True)
    except OSError as exc:
        sys.stderr.write(f"cannot read input: {exc}\n")
        return EXIT_IO
    findings = gt_loaded.findings + sub_loaded.findings
    if findings:
        sys.stdout.write(_emit_json({"findings": [f.to_doc() for f in findings], "ok": False}, None))
        return EXIT_FINDINGS
    gt = require_clean(gt_loaded)
    sub = require_clean(sub_loaded)
    cfg = MatchConfig(
        tolerance=ToleranceSpec(args.tolerance, args.tolerance),
        strict_model_vars=args.strict_model_vars == "true",
        fragment_cap=args.fragment_cap,
        jobs=args.jobs,
    )
    matcher = _build_matcher(args)
    try:
        report = match_submission(gt, sub, cfg, matcher)
    except EngineError as exc:
        backend_failure = isinstance(exc, MatchingBackendError) or isinstance(
            getattr(exc, "cause", None), MatchingBackendError
        )
        if backend_failure and args.fallback_lexical and args.matcher == "remote":
            report = match_submission(gt, sub, cfg, LexicalMatcher(args.threshold))
        elif backend_failure:
            sys.stderr.write(f"matcher backend failed: {exc}\n")
            return EXIT_BACKEND
        else:
            raise
    run_id = args.run_id or Path(args.submission).stem
    doc = report_to_doc(report, dataset=gt_loaded.dataset_id, run_id=run_id)
    text = _emit_json(doc, args.out)
    if not args.out:
        sys.stdout.write(text)
    else:
        sys.stdout.write(f"wrote match report to {args.out}\n")
    return EXIT_OK


def cmd_score(args) -> int:
    reports_dir = Path(args.reports)
    if not reports_dir.is_dir():
        sys.stderr.write(f"not a directory: {reports_dir}\n")
        return EXIT_IO
    docs = []
    for path in sorted(reports_dir.glob("*.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("kind") == "flowmatch-report":
            docs.append(doc)
    if not docs:
        sys.stderr.write(f"no match reports in {reports_dir}\n")
        return EXIT_IO
    groups = build_groups(docs, regime=args.regime, model_level=args.model_level)
    card = compute_scorecard(
        groups,
        label=args.label or reports_dir.name,
        k=args.k,
        m=args.bootstrap_iters,
        seed=args.seed,
        regime=args.regime,
        model_level=args.model_level,
        exhaustive=args.exhaustive,
        pooled=args.pooled,
        jobs=args.jobs,
    )
    _emit_json(card.to_doc(), args.out)
    sys.stdout.write(card.render_table() + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowmatch", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="invariant-check decision-set files")
    p_validate.add_argument("paths", nargs="+")
    p_validate.add_argument("--out", default=None)
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="execute a transform program over a dataset")
    p_run.add_argument("--dataset", required=True)
    p_run.add_argument("--program", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--trace", default=None, help="write the flow-graph sidecar here")
    p_run.set_defaults(func=cmd_run)

    p_match = sub.add_parser("match", help="match a submission against ground truth")
    p_match.add_argument("--ground-truth", required=True)
    p_match.add_argument("--submission", required=True)
    p_match.add_argument("--out", default=None)
    p_match.add_argument("--run-id", default=None)
    p_match.add_argument("--tolerance", type=float, default=1e-9)
    p_match.add_argument("--matcher", choices=("lexical", "remote"), default="lexical")
    p_match.add_argument("--threshold", type=float, default=0.5)
    p_match.add_argument("--strict-model-vars", choices=("true", "false"), default="true")
    p_match.add_argument("--fragment-cap", type=int, default=64)
    p_match.add_argument("--jobs", type=int, default=1)
    p_match.add_argument("--cache-dir", default=None)
    p_match.add_argument("--fallback-lexical", action="store_true")
    p_match.add_argument("--backend-url", default=None)
    p_match.add_argument("--backend-model", default=None)
    p_match.add_argument("--api-key-env", default=None)
    p_match.set_defaults(func=cmd_match)

    p_score = sub.add_parser("score", help="aggregate match reports into a scorecard")
    p_score.add_argument("--reports", required=True)
    p_score.add_argument("--out", default=None)
    p_score.add_argument("--label", default=None)
    p_score.add_argument("--k", type=int, default=10)
    p_score.add_argument("--bootstrap-iters", type=int, default=1000)
    p_score.add_argument("--seed", type=int, default=0)
    p_score.add_argument("--jobs", type=int, default=1)
    p_score.add_argument("--regime", choices=("value", "fuzzy", "either"), default="either")
    p_score.add_argument("--model-level", choices=("semantic", "variable"), default="variable")
    p_score.add_argument("--exhaustive", action="store_true")
    p_score.add_argument("--pooled", action="store_true")
    p_score.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MatchingBackendError as exc:
        sys.stderr.write(f"backend error: {exc}\n")
        return EXIT_BACKEND
    except (ConfigError, InsufficientRunsError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except ValidationError as exc:
        sys.stderr.write(f"validation error: {exc}\n")
        return EXIT_FINDINGS
    except EngineError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FINDINGS
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
