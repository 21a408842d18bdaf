"""Headline numbers over per-run match reports.

Per decision type: precision per run, average precision across runs,
coverage@k over a seeded sample of runs, their harmonic-mean F1, and a
weighted F1 across the three decision types (model weight capped at k).
Bootstrap confidence intervals resample runs with replacement, per dataset
by default, with per-iteration sub-seeds derived from the master seed so
results do not depend on scheduling.
"""

from __future__ import annotations

import hashlib
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import ConfigError, InsufficientRunsError

VARIABLES = "variables"
TRANSFORMS = "transforms"
MODELS = "models"
DECISION_TYPES = (VARIABLES, TRANSFORMS, MODELS)


@dataclass(frozen=True)
class TypeOutcome:
    submitted: tuple[str, ...]
    matched_sub: frozenset[str]
    matched_gt: frozenset[str]


@dataclass(frozen=True)
class RunOutcome:
    run_id: str
    dataset: str
    decisions: dict[str, TypeOutcome] = field(compare=False)

    def outcome(self, decision_type: str) -> TypeOutcome:
        if decision_type not in DECISION_TYPES:
            raise ConfigError(f"unknown decision type '{decision_type}'")
        return self.decisions[decision_type]


@dataclass(frozen=True)
class DatasetRuns:
    """All runs for one dataset plus that dataset's ground-truth sizes."""

    dataset: str
    runs: tuple[RunOutcome, ...]
    gt_sizes: dict[str, int] = field(compare=False)


def run_outcome_from_report(doc: dict, regime: str = "either", model_level: str = "variable") -> RunOutcome:
    """Project a match-report document onto scorable decision sets."""
    if regime not in ("value", "fuzzy", "either"):
        raise ConfigError(f"unknown regime '{regime}'")
    if model_level not in ("semantic", "variable"):
        raise ConfigError(f"unknown model level '{model_level}'")
    if regime == "either":
        matched_sub = set(doc["value"]["matched_sub"]) | set(doc["fuzzy"]["matched_sub"])
        matched_gt = set(doc["value"]["matched_gt"]) | set(doc["fuzzy"]["matched_gt"])
    else:
        matched_sub = set(doc[regime]["matched_sub"])
        matched_gt = set(doc[regime]["matched_gt"])
    transforms = TypeOutcome(
        tuple(doc["submission"]["transforms"]), frozenset(matched_sub), frozenset(matched_gt)
    )
    var_pairs = doc["variables"]["pairs"]
    variables = TypeOutcome(
        tuple(f"v{i}" for i in range(doc["submission"]["variables"])),
        frozenset(p["sub"] for p in var_pairs),
        frozenset(p["gt"] for p in var_pairs),
    )
    model_pairs = [
        p for p in doc["models"]["pairs"] if p["semantic"] and (model_level == "semantic" or p["variable_level"])
    ]
    models = TypeOutcome(
        tuple(f"n{i}" for i in range(doc["submission"]["models"])),
        frozenset(p["sub"] for p in model_pairs),
        frozenset(p["gt"] for p in model_pairs),
    )
    return RunOutcome(
        run_id=doc.get("run_id", ""),
        dataset=doc.get("dataset", ""),
        decisions={VARIABLES: variables, TRANSFORMS: transforms, MODELS: models},
    )


def gt_sizes_from_report(doc: dict) -> dict[str, int]:
    gt = doc["ground_truth"]
    return {VARIABLES: gt["variables"], TRANSFORMS: gt["transforms"], MODELS: gt["models"]}


def precision(run: RunOutcome, decision_type: str) -> float:
    """Matched submitted decisions over submitted decisions; 0 when empty."""
    outcome = run.outcome(decision_type)
    if not outcome.submitted:
        return 0.0
    return len(outcome.matched_sub) / len(outcome.submitted)


def average_precision(runs, decision_type: str) -> float:
    runs = list(runs)
    if not runs:
        raise InsufficientRunsError("average precision needs at least one run")
    return math.fsum(precision(r, decision_type) for r in runs) / len(runs)


def coverage_denominator(decision_type: str, gt_size: int, k: int) -> int:
    # one model submission per run, so model coverage saturates at k runs
    return min(gt_size, k) if decision_type == MODELS else gt_size


def coverage_at_k(
    runs,
    decision_type: str,
    gt_size: int,
    k: int,
    rng: random.Random | None = None,
    exhaustive: bool = False,
) -> float:
    """Ground-truth fraction covered by the union over k sampled runs."""
    runs = list(runs)
    if k <= 0:
        raise ConfigError(f"k must be positive, got {k}")
    if exhaustive or len(runs) == k:
        sampled = runs
    else:
        if k > len(runs):
            raise InsufficientRunsError(
                f"coverage@{k} needs at least {k} runs, have {len(runs)} "
                "(lower k or use exhaustive mode)"
            )
        if rng is None:
            raise ConfigError("sampled coverage needs a seeded rng")
        sampled = [runs[i] for i in sorted(rng.sample(range(len(runs)), k))]
    covered: set[str] = set()
    for run in sampled:
        covered |= run.outcome(decision_type).matched_gt
    denominator = coverage_denominator(decision_type, gt_size, k)
    if denominator == 0:
        return 0.0
    return len(covered) / denominator


def f1(p: float, c: float) -> float:
    """Harmonic mean of average precision and coverage; 0 at p + c = 0."""
    if p + c == 0:
        return 0.0
    return 2 * (p * c) / (p + c)


def _weighted_from_sizes(f1_by_type: dict[str, float], weights: dict[str, int]) -> float:
    total = sum(weights.values())
    if total == 0:
        raise ConfigError("zero total weight across decision types")
    return math.fsum(weights[t] * f1_by_type[t] for t in DECISION_TYPES) / total


def weighted_f1(f1_by_type: dict[str, float], gt_sizes: dict[str, int], k: int) -> float:
    """Decision-type weights: |G| for variables/transforms, min(|G|, k) for models."""
    for decision_type in DECISION_TYPES:
        if decision_type not in f1_by_type or decision_type not in gt_sizes:
            raise ConfigError(f"missing decision type '{decision_type}'")
    weights = {
        t: min(gt_sizes[t], k) if t == MODELS else gt_sizes[t] for t in DECISION_TYPES
    }
    return _weighted_from_sizes(f1_by_type, weights)


def subseed(seed: int, label: str) -> int:
    """Documented splitting rule: sha256 over 'seed/label', first 8 bytes."""
    digest = hashlib.sha256(f"{seed}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _group_point_scores(
    groups: list[DatasetRuns], decision_type: str, k: int, rng: random.Random, exhaustive: bool
) -> tuple[float, float]:
    """(p_avg, coverage) averaged across datasets, sampling in group order."""
    p_parts = []
    c_parts = []
    for group in groups:
        p_parts.append(average_precision(group.runs, decision_type))
        c_parts.append(
            coverage_at_k(group.runs, decision_type, group.gt_sizes[decision_type], k, rng, exhaustive)
        )
    return math.fsum(p_parts) / len(p_parts), math.fsum(c_parts) / len(c_parts)


def _resample(group: DatasetRuns, rng: random.Random) -> DatasetRuns:
    n = len(group.runs)
    picks = tuple(group.runs[rng.randrange(n)] for _ in range(n))
    return DatasetRuns(group.dataset, picks, group.gt_sizes)


def _combined_sizes(groups: list[DatasetRuns], k: int) -> dict[str, int]:
    """Cross-dataset weights; the model cap applies within each dataset."""
    out = {}
    for decision_type in DECISION_TYPES:
        if decision_type == MODELS:
            out[decision_type] = sum(min(g.gt_sizes[decision_type], k) for g in groups)
        else:
            out[decision_type] = sum(g.gt_sizes[decision_type] for g in groups)
    return out


@dataclass(frozen=True)
class BootstrapEstimate:
    mean: float
    ci_lo: float
    ci_hi: float


def _percentile(sorted_values: list[float], q: float) -> float:
    if not sorted_values:
        raise InsufficientRunsError("no bootstrap samples")
    h = q * (len(sorted_values) - 1)
    lo = int(h)
    hi = min(lo + 1, len(sorted_values) - 1)
    frac = h - lo
    return sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac


def _summarize(samples: list[float]) -> BootstrapEstimate:
    ordered = sorted(samples)
    # the exact mean lies in [min, max]; clamping removes float drift only
    mean = min(max(math.fsum(samples) / len(samples), ordered[0]), ordered[-1])
    lo = _percentile(ordered, 0.025)
    hi = _percentile(ordered, 0.975)
    # a heavily skewed sample can put the mean outside the percentile pair;
    # the reported interval always covers the reported mean
    return BootstrapEstimate(mean, min(lo, mean), max(hi, mean))


def bootstrap_f1(
    groups: list[DatasetRuns],
    k: int,
    m: int,
    seed: int,
    decision_type: str | None = None,
    exhaustive: bool = False,
    jobs: int = 1,
) -> BootstrapEstimate:
    """Resample runs with replacement per dataset; 95% percentile interval.

    ``decision_type`` None bootstraps the type-weighted F1. Deterministic in
    (seed, inputs) regardless of ``jobs``: iteration i draws from its own
    rng seeded by subseed(seed, i).
    """
    if m < 1:
        raise ConfigError(f"bootstrap iterations must be >= 1, got {m}")
    for group in groups:
        if not group.runs:
            raise InsufficientRunsError(f"dataset '{group.dataset}' has no runs")
    ordered = sorted(groups, key=lambda g: g.dataset)
    types = DECISION_TYPES if decision_type is None else (decision_type,)

    def one_iteration(i: int) -> float:
        rng = random.Random(subseed(seed, str(i)))
        resampled = [_resample(g, rng) for g in ordered]
        f1s = {}
        for t in types:
            p, c = _group_point_scores(resampled, t, k, rng, exhaustive)
            f1s[t] = f1(p, c)
        if decision_type is not None:
            return f1s[decision_type]
        return _weighted_from_sizes(f1s, _combined_sizes(resampled, k))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(one_iteration, range(m)))
    else:
        samples = [one_iteration(i) for i in range(m)]
    return _summarize(samples)


@dataclass(frozen=True)
class McqScore:
    accuracy: float
    empty: bool


def mcq_accuracy(answers: list[str], key: list[str]) -> McqScore:
    """Exact-match fraction for the multiple-choice task."""
    if len(answers) != len(key):
        raise ConfigError(f"answers ({len(answers)}) and key ({len(key)}) differ in length")
    if not key:
        return McqScore(0.0, True)
    hits = sum(1 for a, b in zip(answers, key) if a == b)
    return McqScore(hits / len(key), False)


@dataclass(frozen=True)
class TypeScore:
    p_avg: float
    coverage: float
    f1: float
    bootstrap: BootstrapEstimate
    gt_size: int
    weight: int


@dataclass(frozen=True)
class ScoreCard:
    label: str
    per_type: dict[str, TypeScore] = field(compare=False)
    weighted: float = 0.0
    weighted_bootstrap: BootstrapEstimate = BootstrapEstimate(0.0, 0.0, 0.0)
    run_count: int = 0
    dataset_count: int = 0
    k: int = 10
    m: int = 1000
    seed: int = 0
    regime: str = "either"
    model_level: str = "variable"
    coverage_mode: str = "strict"
    grouping: str = "per-dataset"

    def to_doc(self) -> dict:
        return {
            "kind": "flowmatch-scorecard",
            "label": self.label,
            "per_type": {
                t: {
                    "p_avg": s.p_avg,
                    "coverage_at_k": s.coverage,
                    "f1": s.f1,
                    "bootstrap_mean": s.bootstrap.mean,
                    "ci_lo": s.bootstrap.ci_lo,
                    "ci_hi": s.bootstrap.ci_hi,
                    "gt_size": s.gt_size,
                    "weight": s.weight,
                }
                for t, s in sorted(self.per_type.items())
            },
            "weighted_f1": self.weighted,
            "weighted_bootstrap_mean": self.weighted_bootstrap.mean,
            "weighted_ci_lo": self.weighted_bootstrap.ci_lo,
            "weighted_ci_hi": self.weighted_bootstrap.ci_hi,
            "runs": self.run_count,
            "datasets": self.dataset_count,
            "k": self.k,
            "m": self.m,
            "seed": self.seed,
            "regime": self.regime,
            "model_level": self.model_level,
            "coverage_mode": self.coverage_mode,
            "grouping": self.grouping,
        }

    def render_table(self) -> str:
        header = f"{'decision type':<14} {'F1':>8} {'95% CI':>20} {'p_avg':>8} {'cov@k':>8}"
        lines = [f"scorecard: {self.label}", header, "-" * len(header)]
        for t in DECISION_TYPES:
            s = self.per_type[t]
            ci = f"({s.bootstrap.ci_lo:.3f}, {s.bootstrap.ci_hi:.3f})"
            lines.append(f"{t:<14} {s.f1:>8.3f} {ci:>20} {s.p_avg:>8.3f} {s.coverage:>8.3f}")
        ci = f"({self.weighted_bootstrap.ci_lo:.3f}, {self.weighted_bootstrap.ci_hi:.3f})"
        lines.append("-" * len(header))
        lines.append(f"{'weighted':<14} {self.weighted:>8.3f} {ci:>20}")
        lines.append(f"runs={self.run_count} datasets={self.dataset_count} k={self.k} m={self.m} seed={self.seed}")
        return "\n".join(lines)


def scorecard_from_doc(doc: dict) -> ScoreCard:
    per_type = {
        t: TypeScore(
            s["p_avg"],
            s["coverage_at_k"],
            s["f1"],
            BootstrapEstimate(s["bootstrap_mean"], s["ci_lo"], s["ci_hi"]),
            s["gt_size"],
            s["weight"],
        )
        for t, s in doc["per_type"].items()
    }
    return ScoreCard(
        label=doc["label"],
        per_type=per_type,
        weighted=doc["weighted_f1"],
        weighted_bootstrap=BootstrapEstimate(
            doc["weighted_bootstrap_mean"], doc["weighted_ci_lo"], doc["weighted_ci_hi"]
        ),
        run_count=doc["runs"],
        dataset_count=doc["datasets"],
        k=doc["k"],
        m=doc["m"],
        seed=doc["seed"],
        regime=doc["regime"],
        model_level=doc["model_level"],
        coverage_mode=doc["coverage_mode"],
        grouping=doc["grouping"],
    )


def build_groups(report_docs, regime: str = "either", model_level: str = "variable") -> list[DatasetRuns]:
    """Group report documents by dataset, checking ground-truth consistency."""
    by_dataset: dict[str, list[RunOutcome]] = {}
    sizes: dict[str, dict[str, int]] = {}
    for doc in report_docs:
        run = run_outcome_from_report(doc, regime, model_level)
        doc_sizes = gt_sizes_from_report(doc)
        if run.dataset in sizes and sizes[run.dataset] != doc_sizes:
            raise ConfigError(
                f"reports for dataset '{run.dataset}' disagree on ground-truth sizes"
            )
        sizes[run.dataset] = doc_sizes
        by_dataset.setdefault(run.dataset, []).append(run)
    return [
        DatasetRuns(dataset, tuple(runs), sizes[dataset])
        for dataset, runs in sorted(by_dataset.items())
    ]


def compute_scorecard(
    groups: list[DatasetRuns],
    label: str,
    k: int = 10,
    m: int = 1000,
    seed: int = 0,
    regime: str = "either",
    model_level: str = "variable",
    exhaustive: bool = False,
    pooled: bool = False,
    jobs: int = 1,
) -> ScoreCard:
    """Point scores plus bootstrap estimates for one run collection."""
    if not groups:
        raise InsufficientRunsError("no reports to score")
    if pooled:
        # pooled mode treats the whole collection as one dataset
        all_runs = tuple(r for g in groups for r in g.runs)
        merged = {t: sum(g.gt_sizes[t] for g in groups) for t in DECISION_TYPES}
        groups = [DatasetRuns("(pooled)", all_runs, merged)]
    ordered = sorted(groups, key=lambda g: g.dataset)
    per_type: dict[str, TypeScore] = {}
    f1s: dict[str, float] = {}
    sizes = _combined_sizes(ordered, k)
    for decision_type in DECISION_TYPES:
        rng = random.Random(subseed(seed, f"point/{decision_type}"))
        p, c = _group_point_scores(ordered, decision_type, k, rng, exhaustive)
        score = f1(p, c)
        boot = bootstrap_f1(ordered, k, m, seed, decision_type, exhaustive, jobs)
        raw_size = sum(g.gt_sizes[decision_type] for g in ordered)
        per_type[decision_type] = TypeScore(p, c, score, boot, raw_size, sizes[decision_type])
        f1s[decision_type] = score
    weighted = _weighted_from_sizes(f1s, sizes)
    weighted_boot = bootstrap_f1(ordered, k, m, seed, None, exhaustive, jobs)
    return ScoreCard(
        label=label,
        per_type=per_type,
        weighted=weighted,
        weighted_bootstrap=weighted_boot,
        run_count=sum(len(g.runs) for g in ordered),
        dataset_count=len(ordered),
        k=k,
        m=m,
        seed=seed,
        regime=regime,
        model_level=model_level,
        coverage_mode="exhaustive" if exhaustive else "strict",
        grouping="pooled" if pooled else "per-dataset",
    )
