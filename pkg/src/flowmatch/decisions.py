"""Loading, resolving, and invariant-checking decision-set documents.

A decision-set file declares the research question, the dataset path, the
conceptual variables, the transform alternatives (programs in the DSL),
and the statistical models. Loading executes every program, builds the
flow graphs, resolves variable/model column names against final tables,
and reports every invariant violation as a finding rather than dying on
the first problem.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EngineError, InvalidModelError, ValidationError
from .graph import FlowGraph, GroundTruthGraphSet, build_flow_graph, merge_alternatives
from .matching import (
    VAR_TYPES,
    ConceptualVariable,
    DecisionSet,
    StatModel,
    _model_variable_indexes,
)
from .parser import parse_program
from .table import DataTable, load_table
from .transforms import final_environment, run_program


@dataclass(frozen=True)
class Finding:
    file: str
    kind: str
    message: str
    program_index: int | None = None
    unit_index: int | None = None
    column: str | None = None

    def to_doc(self) -> dict:
        doc = {"file": self.file, "kind": self.kind, "message": self.message}
        if self.program_index is not None:
            doc["program_index"] = self.program_index
        if self.unit_index is not None:
            doc["unit_index"] = self.unit_index
        if self.column is not None:
            doc["column"] = self.column
        return doc


@dataclass
class LoadedDecisionSet:
    path: Path
    dataset_path: Path
    dataset_id: str
    table: DataTable
    programs: list
    decision_set: DecisionSet | None
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings and self.decision_set is not None


def _require(doc: dict, key: str, kinds, file: str, findings: list[Finding]) -> bool:
    if key not in doc:
        findings.append(Finding(file, "missing-field", f"document lacks '{key}'"))
        return False
    if not isinstance(doc[key], kinds):
        findings.append(Finding(file, "bad-field", f"'{key}' has the wrong type"))
        return False
    return True


def load_decision_set(path: str | Path, submission: bool = False) -> LoadedDecisionSet:
    """Parse, execute, and resolve one decision-set file.

    Never raises for content problems; inspect ``findings``. I/O problems
    (missing files) do raise, since there is nothing to report on.
    """
    path = Path(path)
    findings: list[Finding] = []
    file_label = str(path)
    doc = json.loads(path.read_text(encoding="utf-8"))

    for key, kinds in (
        ("research_question", str),
        ("dataset", str),
        ("conceptual_variables", list),
        ("transforms", list),
        ("models", list),
    ):
        _require(doc, key, kinds, file_label, findings)
    if findings:
        return LoadedDecisionSet(path, path, "", DataTable(()), [], None, findings)

    dataset_path = (path.parent / doc["dataset"]).resolve()
    with open(dataset_path, "rb") as handle:
        table = load_table(handle)
    dataset_id = Path(doc["dataset"]).name

    if submission and len(doc["transforms"]) != 1:
        findings.append(
            Finding(file_label, "submission-shape", "a submission carries exactly one transform program")
        )

    programs = []
    graphs: list[FlowGraph] = []
    final_envs: list[dict[str, int]] = []
    for i, source in enumerate(doc["transforms"]):
        if not isinstance(source, str):
            findings.append(Finding(file_label, "bad-program", "program must be DSL text", program_index=i))
            continue
        try:
            program = parse_program(source)
        except EngineError as exc:
            findings.append(Finding(file_label, "parse-error", str(exc), program_index=i))
            continue
        programs.append(program)
        try:
            _, trace = run_program(table, program)
        except EngineError as exc:
            unit_index = getattr(exc, "unit_index", None)
            findings.append(
                Finding(
                    file_label, "run-error", str(exc), program_index=i, unit_index=unit_index,
                    column=getattr(getattr(exc, "cause", None), "name", None),
                )
            )
            continue
        graphs.append(build_flow_graph(table, trace))
        final_envs.append(final_environment(table, trace))

    if findings or not graphs:
        if not graphs:
            findings.append(Finding(file_label, "no-programs", "no executable transform program"))
        return LoadedDecisionSet(path, dataset_path, dataset_id, table, programs, None, findings)

    merged = merge_alternatives(graphs)

    variables: list[ConceptualVariable] = []
    for vi, raw in enumerate(doc["conceptual_variables"]):
        desc = raw.get("desc")
        var_type = raw.get("type")
        names = raw.get("columns", [])
        if not isinstance(desc, str) or var_type not in VAR_TYPES or not isinstance(names, list):
            findings.append(
                Finding(file_label, "bad-variable", f"variable {vi} needs desc, type in {VAR_TYPES}, columns")
            )
            continue
        cols = set()
        for name in names:
            hits = [
                (alt, env[name]) for alt, env in enumerate(final_envs) if name in env
            ]
            if not hits:
                findings.append(
                    Finding(
                        file_label, "unresolved-column",
                        f"variable {vi} references column '{name}' absent from every final table",
                        column=name,
                    )
                )
                continue
            cols.update(hits)
        variables.append(ConceptualVariable(desc, var_type, frozenset(cols)))

    models: list[StatModel] = []
    for mi, raw in enumerate(doc["models"]):
        desc = raw.get("desc")
        names = raw.get("columns", [])
        if not isinstance(desc, str) or not isinstance(names, list) or not names:
            findings.append(Finding(file_label, "bad-model", f"model {mi} needs desc and columns"))
            continue
        declared = raw.get("transform")
        if declared is not None:
            candidates = [declared] if 0 <= declared < len(final_envs) else []
        else:
            candidates = [
                alt for alt, env in enumerate(final_envs) if all(n in env for n in names)
            ]
        chosen = None
        for alt in candidates:
            if all(n in final_envs[alt] for n in names):
                chosen = alt
                break
        if chosen is None:
            findings.append(
                Finding(
                    file_label, "one-series-violation",
                    f"model {mi} columns {names} do not all resolve inside any single "
                    "transform alternative (a model binds to exactly one series)",
                )
            )
            continue
        models.append(StatModel(desc, frozenset((chosen, final_envs[chosen][n]) for n in names)))

    decision_set = DecisionSet(
        research_question=doc["research_question"],
        graphs=merged,
        variables=tuple(variables),
        models=tuple(models),
    )
    for mi, model in enumerate(models):
        try:
            _model_variable_indexes(model, decision_set.variables)
        except InvalidModelError as exc:
            findings.append(Finding(file_label, "invalid-model", f"model {mi}: {exc}"))

    if findings:
        return LoadedDecisionSet(path, dataset_path, dataset_id, table, programs, None, findings)
    return LoadedDecisionSet(path, dataset_path, dataset_id, table, programs, decision_set, findings)


def validate_paths(paths) -> list[Finding]:
    """Findings across a batch of decision-set files; empty means clean."""
    findings: list[Finding] = []
    for path in paths:
        try:
            loaded = load_decision_set(path)
        except (OSError, json.JSONDecodeError) as exc:
            findings.append(Finding(str(path), "io-error", str(exc)))
            continue
        findings.extend(loaded.findings)
    return findings


def require_clean(loaded: LoadedDecisionSet) -> DecisionSet:
    if not loaded.ok:
        messages = "; ".join(f.message for f in loaded.findings)
        raise ValidationError(f"{loaded.path}: {messages}")
    assert loaded.decision_set is not None
    return loaded.decision_set
