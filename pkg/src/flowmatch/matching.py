"""Matching a submitted analysis against multi-alternative ground truth.

Two transform regimes run side by side. Value matching grants credit to
the full ancestor chain of any two pointers whose column vectors agree
within tolerance, so a submission that reproduces an intermediate column
earns every upstream decision. Fuzzy matching grants credit when rooted
ancestor fragments are label-isomorphic, so scalar parameter tweaks (a
filter threshold, say) keep credit as long as verbs, parameter columns,
and dataflow agree. Conceptual variables and statistical models match
through a pluggable semantic backend.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import ComponentError, EngineError, InvalidModelError, SchemaError
from .graph import FlowGraph, Fragment, GroundTruthGraphSet
from .isomorphism import fragments_isomorphic
from .semantic import MatchQuery, SemanticMatcher
from .table import ToleranceSpec, DEFAULT_TOLERANCE, column_equal, fingerprint, kind_class

IV = "IV"
DV = "DV"
CONTROL = "Control"
VAR_TYPES = (IV, DV, CONTROL)


@dataclass(frozen=True)
class ConceptualVariable:
    desc: str
    var_type: str
    cols: frozenset  # {(alternative index, pointer id)}

    def __post_init__(self):
        if self.var_type not in VAR_TYPES:
            raise EngineError(f"variable type must be one of {VAR_TYPES}, got {self.var_type!r}")


@dataclass(frozen=True)
class StatModel:
    desc: str
    cols: frozenset  # {(alternative index, pointer id)}, one alternative only


@dataclass(frozen=True)
class DecisionSet:
    """One complete analysis: variables, transform graph(s), models."""

    research_question: str
    graphs: GroundTruthGraphSet
    variables: tuple[ConceptualVariable, ...]
    models: tuple[StatModel, ...]

    @property
    def primary_graph(self) -> FlowGraph:
        return self.graphs.graphs[0]


@dataclass(frozen=True)
class RegimeResult:
    matched_gt: tuple[int, ...]  # transform-class indexes into the union set
    matched_sub: tuple[int, ...]  # transform ids in the submission graph
    witnesses: tuple[tuple, ...]


@dataclass(frozen=True)
class VariablePair:
    gt_index: int
    sub_index: int
    confidence: float
    backend: str


@dataclass(frozen=True)
class ModelPair:
    gt_index: int
    sub_index: int
    confidence: float
    semantic: bool
    variable_level: bool


@dataclass(frozen=True)
class MatchConfig:
    tolerance: ToleranceSpec = DEFAULT_TOLERANCE
    strict_model_vars: bool = True
    fragment_cap: int = 64
    jobs: int = 1


@dataclass(frozen=True)
class MatchReport:
    value: RegimeResult
    fuzzy: RegimeResult
    variable_pairs: tuple[VariablePair, ...]
    model_pairs: tuple[ModelPair, ...]
    gt_transform_count: int
    gt_variable_count: int
    gt_model_count: int
    sub_transforms: tuple[int, ...]
    sub_variable_count: int
    sub_model_count: int
    strict_model_vars: bool
    matcher_id: str
    tolerance: ToleranceSpec


def _check_same_schema(gt: GroundTruthGraphSet, sub: FlowGraph):
    if not gt.graphs:
        return
    if gt.graphs[0].original_schema() != sub.original_schema():
        raise SchemaError("submission and ground truth disagree on the original table schema")


def _comparable(fp_a: str, col_a, fp_b: str, col_b) -> bool:
    """Sound pre-filter: may only skip pairs that provably cannot be equal."""
    if len(col_a) != len(col_b):
        return False
    a_num = kind_class(col_a.dtype) == "numeric"
    b_num = kind_class(col_b.dtype) == "numeric"
    if not a_num and not b_num and kind_class(col_a.dtype) == kind_class(col_b.dtype):
        # non-numeric equality is exact, so unequal digests settle it
        return fp_a == fp_b
    return True


def value_match(
    gt: GroundTruthGraphSet,
    sub: FlowGraph,
    tol: ToleranceSpec = DEFAULT_TOLERANCE,
    prefilter: bool = True,
    jobs: int = 1,
) -> RegimeResult:
    """Match column values pairwise and credit both ancestor chains."""
    _check_same_schema(gt, sub)
    sub_pointers = [(pid, sub.pointers[pid]) for pid in sorted(sub.pointers)]
    sub_fps = {pid: fingerprint(ptr.value, tol) for pid, ptr in sub_pointers}

    def match_one_graph(gi: int):
        graph = gt.graphs[gi]
        matched_gt: set[int] = set()
        matched_sub: set[int] = set()
        witnesses = []
        for pid in sorted(graph.pointers):
            ptr = graph.pointers[pid]
            fp = fingerprint(ptr.value, tol)
            gt_ancestors = graph.ancestors_of_pointer(pid)
            for sub_pid, sub_ptr in sub_pointers:
                if ptr.is_original and sub_ptr.is_original:
                    continue  # original-to-original equality confers nothing
                if prefilter and not _comparable(fp, ptr.value, sub_fps[sub_pid], sub_ptr.value):
                    continue
                if not column_equal(ptr.value, sub_ptr.value, tol):
                    continue
                matched_gt.update(gt.class_of[(gi, t)] for t in gt_ancestors)
                matched_sub.update(sub.ancestors_of_pointer(sub_pid))
                witnesses.append((gi, pid, sub_pid))
        return matched_gt, matched_sub, witnesses

    matched_gt: set[int] = set()
    matched_sub: set[int] = set()
    witnesses: list[tuple] = []
    indexes = range(len(gt.graphs))
    if jobs > 1 and len(gt.graphs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(match_one_graph, indexes))
    else:
        results = [match_one_graph(i) for i in indexes]
    for part_gt, part_sub, part_witnesses in results:
        matched_gt |= part_gt
        matched_sub |= part_sub
        witnesses.extend(part_witnesses)
    return RegimeResult(
        tuple(sorted(matched_gt)), tuple(sorted(matched_sub)), tuple(sorted(witnesses))
    )


def fuzzy_match(
    gt: GroundTruthGraphSet,
    sub: FlowGraph,
    cap: int | None = 64,
    jobs: int = 1,
) -> RegimeResult:
    """Match rooted ancestor fragments by label isomorphism."""
    _check_same_schema(gt, sub)
    sub_fragments: dict[int, Fragment] = {
        tid: sub.induced_ancestor_subgraph(tid) for tid in sub.transform_order()
    }

    def match_one_graph(gi: int):
        graph = gt.graphs[gi]
        matched_gt: set[int] = set()
        matched_sub: set[int] = set()
        witnesses = []
        for tid in graph.transform_order():
            fragment = graph.induced_ancestor_subgraph(tid)
            for sub_tid, sub_fragment in sub_fragments.items():
                if not fragments_isomorphic(fragment, sub_fragment, cap=cap):
                    continue
                matched_gt.update(
                    gt.class_of[(gi, t)] for t in fragment.graph.transforms
                )
                matched_sub.update(sub_fragment.graph.transforms)
                witnesses.append((gi, tid, sub_tid))
        return matched_gt, matched_sub, witnesses

    matched_gt: set[int] = set()
    matched_sub: set[int] = set()
    witnesses: list[tuple] = []
    indexes = range(len(gt.graphs))
    if jobs > 1 and len(gt.graphs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(match_one_graph, indexes))
    else:
        results = [match_one_graph(i) for i in indexes]
    for part_gt, part_sub, part_witnesses in results:
        matched_gt |= part_gt
        matched_sub |= part_sub
        witnesses.extend(part_witnesses)
    return RegimeResult(
        tuple(sorted(matched_gt)), tuple(sorted(matched_sub)), tuple(sorted(witnesses))
    )


def match_conceptual_variables(
    gt_vars: list[ConceptualVariable] | tuple[ConceptualVariable, ...],
    sub_vars: list[ConceptualVariable] | tuple[ConceptualVariable, ...],
    matcher: SemanticMatcher,
    context: str = "",
) -> tuple[VariablePair, ...]:
    """Pair variables of equal type whose descriptions the backend equates."""
    pairs: list[VariablePair] = []
    for var_type in VAR_TYPES:
        left = tuple((f"g{i}", v.desc) for i, v in enumerate(gt_vars) if v.var_type == var_type)
        right = tuple((f"s{j}", v.desc) for j, v in enumerate(sub_vars) if v.var_type == var_type)
        if not left or not right:
            continue
        answer = matcher.match(MatchQuery(left, right, context))
        for pair in answer.pairs:
            pairs.append(
                VariablePair(int(pair.left[1:]), int(pair.right[1:]), pair.confidence, matcher.backend_id)
            )
    return tuple(sorted(pairs, key=lambda p: (p.gt_index, p.sub_index)))


def _model_variable_indexes(model: StatModel, variables) -> dict[str, set[int]]:
    by_type: dict[str, set[int]] = {IV: set(), DV: set(), CONTROL: set()}
    for i, var in enumerate(variables):
        if var.cols & model.cols:
            by_type[var.var_type].add(i)
    if len(by_type[DV]) != 1 or not by_type[IV]:
        raise InvalidModelError(
            f"model '{model.desc}' derives {len(by_type[DV])} DV(s) and "
            f"{len(by_type[IV])} IV(s); needs exactly one DV and at least one IV"
        )
    return by_type


def match_models(
    gt_models,
    sub_models,
    matcher: SemanticMatcher,
    cv_pairs: tuple[VariablePair, ...],
    gt_vars=(),
    sub_vars=(),
    strict: bool = True,
    context: str = "",
) -> tuple[ModelPair, ...]:
    """Two-level model matching: description semantics, then variable sets."""
    if not gt_models or not sub_models:
        return ()
    left = tuple((f"g{i}", m.desc) for i, m in enumerate(gt_models))
    right = tuple((f"s{j}", m.desc) for j, m in enumerate(sub_models))
    answer = matcher.match(MatchQuery(left, right, context))
    forward = {p.gt_index: p.sub_index for p in cv_pairs}
    backward = {p.sub_index: p.gt_index for p in cv_pairs}
    out: list[ModelPair] = []
    for pair in answer.pairs:
        gi, sj = int(pair.left[1:]), int(pair.right[1:])
        gt_roles = _model_variable_indexes(gt_models[gi], gt_vars)
        sub_roles = _model_variable_indexes(sub_models[sj], sub_vars)
        checked = (IV, DV, CONTROL) if strict else (IV, DV)
        variable_level = True
        for var_type in checked:
            images = {forward.get(i) for i in gt_roles[var_type]}
            preimages = {backward.get(j) for j in sub_roles[var_type]}
            if images != sub_roles[var_type] or preimages != gt_roles[var_type]:
                variable_level = False
                break
        out.append(ModelPair(gi, sj, pair.confidence, True, variable_level))
    return tuple(sorted(out, key=lambda p: (p.gt_index, p.sub_index)))


def match_submission(gt: DecisionSet, sub: DecisionSet, cfg: MatchConfig, matcher: SemanticMatcher) -> MatchReport:
    """Compose every matching stage into one deterministic report."""
    if len(sub.graphs.graphs) != 1:
        raise EngineError("a submission carries exactly one transform graph")
    sub_graph = sub.primary_graph
    context = gt.research_question

    def stage(name: str, thunk):
        try:
            return thunk()
        except EngineError as exc:
            raise ComponentError(name, exc) from exc

    value = stage("value-matching", lambda: value_match(gt.graphs, sub_graph, cfg.tolerance, jobs=cfg.jobs))
    fuzzy = stage("fuzzy-matching", lambda: fuzzy_match(gt.graphs, sub_graph, cfg.fragment_cap, jobs=cfg.jobs))
    cv_pairs = stage(
        "variable-matching",
        lambda: match_conceptual_variables(gt.variables, sub.variables, matcher, context),
    )
    model_pairs = stage(
        "model-matching",
        lambda: match_models(
            gt.models, sub.models, matcher, cv_pairs, gt.variables, sub.variables,
            strict=cfg.strict_model_vars, context=context,
        ),
    )
    return MatchReport(
        value=value,
        fuzzy=fuzzy,
        variable_pairs=cv_pairs,
        model_pairs=model_pairs,
        gt_transform_count=gt.graphs.transform_count,
        gt_variable_count=len(gt.variables),
        gt_model_count=len(gt.models),
        sub_transforms=tuple(sub_graph.transform_order()),
        sub_variable_count=len(sub.variables),
        sub_model_count=len(sub.models),
        strict_model_vars=cfg.strict_model_vars,
        matcher_id=matcher.backend_id,
        tolerance=cfg.tolerance,
    )


def report_to_doc(report: MatchReport, dataset: str = "", run_id: str = "") -> dict:
    """Stable structured-object form consumed by scoring and audit."""

    def regime_doc(result: RegimeResult, witness_keys: tuple[str, str, str]) -> dict:
        return {
            "matched_gt": [f"T{i}" for i in result.matched_gt],
            "matched_sub": [f"t{i}" for i in result.matched_sub],
            "witnesses": [
                {witness_keys[0]: w[0], witness_keys[1]: w[1], witness_keys[2]: w[2]}
                for w in result.witnesses
            ],
        }

    return {
        "kind": "flowmatch-report",
        "dataset": dataset,
        "run_id": run_id,
        "config": {
            "tolerance": {"abs_tol": report.tolerance.abs_tol, "rel_tol": report.tolerance.rel_tol},
            "matcher": report.matcher_id,
            "model_variable_mode": "strict" if report.strict_model_vars else "iv_dv_only",
        },
        "ground_truth": {
            "transforms": report.gt_transform_count,
            "variables": report.gt_variable_count,
            "models": report.gt_model_count,
        },
        "submission": {
            "transforms": [f"t{i}" for i in report.sub_transforms],
            "variables": report.sub_variable_count,
            "models": report.sub_model_count,
        },
        "value": regime_doc(report.value, ("graph", "gt_pointer", "sub_pointer")),
        "fuzzy": regime_doc(report.fuzzy, ("graph", "gt_transform", "sub_transform")),
        "variables": {
            "pairs": [
                {
                    "gt": f"c{p.gt_index}",
                    "sub": f"v{p.sub_index}",
                    "confidence": p.confidence,
                    "backend": p.backend,
                }
                for p in report.variable_pairs
            ]
        },
        "models": {
            "pairs": [
                {
                    "gt": f"m{p.gt_index}",
                    "sub": f"n{p.sub_index}",
                    "confidence": p.confidence,
                    "semantic": p.semantic,
                    "variable_level": p.variable_level,
                }
                for p in report.model_pairs
            ]
        },
    }


def report_from_doc(doc: dict) -> MatchReport:
    def regime(doc_part: dict, witness_keys: tuple[str, str, str]) -> RegimeResult:
        return RegimeResult(
            tuple(int(t[1:]) for t in doc_part["matched_gt"]),
            tuple(int(t[1:]) for t in doc_part["matched_sub"]),
            tuple(
                (w[witness_keys[0]], w[witness_keys[1]], w[witness_keys[2]])
                for w in doc_part["witnesses"]
            ),
        )

    tol = doc["config"]["tolerance"]
    return MatchReport(
        value=regime(doc["value"], ("graph", "gt_pointer", "sub_pointer")),
        fuzzy=regime(doc["fuzzy"], ("graph", "gt_transform", "sub_transform")),
        variable_pairs=tuple(
            VariablePair(int(p["gt"][1:]), int(p["sub"][1:]), p["confidence"], p["backend"])
            for p in doc["variables"]["pairs"]
        ),
        model_pairs=tuple(
            ModelPair(
                int(p["gt"][1:]), int(p["sub"][1:]), p["confidence"], p["semantic"], p["variable_level"]
            )
            for p in doc["models"]["pairs"]
        ),
        gt_transform_count=doc["ground_truth"]["transforms"],
        gt_variable_count=doc["ground_truth"]["variables"],
        gt_model_count=doc["ground_truth"]["models"],
        sub_transforms=tuple(int(t[1:]) for t in doc["submission"]["transforms"]),
        sub_variable_count=doc["submission"]["variables"],
        sub_model_count=doc["submission"]["models"],
        strict_model_vars=doc["config"]["model_variable_mode"] == "strict",
        matcher_id=doc["config"]["matcher"],
        tolerance=ToleranceSpec(tol["abs_tol"], tol["rel_tol"]),
    )
