"""Bipartite transform/column-pointer data-flow graphs and alternative sets.

A graph alternates transform nodes and column-pointer nodes. Edges run from
a transform's parameter pointers into it and from it out to the pointers it
produced; every produced pointer has exactly one producer, originals none.
Pointer identities (not names) drive all matching; names are kept for
reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import GraphBuildError, SchemaError
from .table import Column, DataTable, exact_key, fingerprint
from .transforms import StepTrace, TransformUnit


@dataclass(frozen=True)
class ColumnPointer:
    id: int
    name: str
    value: Column | None
    producer: int | None  # transform id, None for original columns

    @property
    def is_original(self) -> bool:
        return self.producer is None


@dataclass(frozen=True)
class TransformNode:
    id: int
    verb: str
    param_pointers: tuple[int, ...]  # I(t), ordered for stable rendering
    output_pointers: tuple[int, ...]  # O(t)
    param_shape: dict = field(compare=False, default_factory=dict)


class FlowGraph:
    """Immutable after build; queries are read-only."""

    def __init__(self, pointers: dict[int, ColumnPointer], transforms: dict[int, TransformNode]):
        self.pointers = dict(pointers)
        self.transforms = dict(transforms)
        self._check_structure()

    def _check_structure(self):
        for node in self.transforms.values():
            if not node.param_pointers:
                raise GraphBuildError(f"transform {node.id} has no inputs")
            if not node.output_pointers:
                raise GraphBuildError(f"transform {node.id} has no outputs")
            for pid in node.param_pointers + node.output_pointers:
                if pid not in self.pointers:
                    raise GraphBuildError(f"transform {node.id} references unknown pointer {pid}")
        producers: dict[int, int] = {}
        for node in self.transforms.values():
            for pid in node.output_pointers:
                if pid in producers:
                    raise GraphBuildError(f"pointer {pid} has two producers")
                producers[pid] = node.id
        for ptr in self.pointers.values():
            if ptr.producer != producers.get(ptr.id):
                raise GraphBuildError(f"pointer {ptr.id} producer edge mismatch")

    @property
    def original_pointers(self) -> list[ColumnPointer]:
        return [p for p in sorted(self.pointers.values(), key=lambda p: p.id) if p.is_original]

    def original_schema(self) -> tuple[tuple[str, str], ...]:
        out = []
        for p in self.original_pointers:
            if p.value is None:
                raise GraphBuildError(f"original pointer {p.id} has no stored value")
            out.append((p.name, p.value.dtype))
        return tuple(out)

    def transform_order(self) -> list[int]:
        """Transform ids in a topological order (ids ascend along dataflow)."""
        return sorted(self.transforms)

    def producer_of(self, pointer_id: int) -> int | None:
        return self._pointer(pointer_id).producer

    def _pointer(self, pointer_id: int) -> ColumnPointer:
        try:
            return self.pointers[pointer_id]
        except KeyError:
            raise GraphBuildError(f"unknown pointer id {pointer_id}") from None

    def _transform(self, transform_id: int) -> TransformNode:
        try:
            return self.transforms[transform_id]
        except KeyError:
            raise GraphBuildError(f"unknown transform id {transform_id}") from None

    def ancestors_of_pointer(self, pointer_id: int) -> set[int]:
        """All transforms on any directed path ending at the pointer."""
        ptr = self._pointer(pointer_id)
        if ptr.producer is None:
            return set()
        return self.ancestor_closure(ptr.producer)

    def ancestor_closure(self, transform_id: int) -> set[int]:
        """The transform itself plus every transform upstream of it."""
        root = self._transform(transform_id)
        seen: set[int] = set()
        stack = [root.id]
        while stack:
            tid = stack.pop()
            if tid in seen:
                continue
            seen.add(tid)
            for pid in self.transforms[tid].param_pointers:
                producer = self.pointers[pid].producer
                if producer is not None and producer not in seen:
                    stack.append(producer)
        return seen

    def induced_ancestor_subgraph(self, transform_id: int) -> "Fragment":
        closure = self.ancestor_closure(transform_id)
        pointer_ids: set[int] = set()
        for tid in closure:
            node = self.transforms[tid]
            pointer_ids.update(node.param_pointers)
            pointer_ids.update(node.output_pointers)
        pointers = {pid: self.pointers[pid] for pid in pointer_ids}
        transforms = {tid: self.transforms[tid] for tid in closure}
        return Fragment(FlowGraph(pointers, transforms), transform_id)

    def check_invariants(self):
        """Bipartite/acyclic/degree checks; raises GraphBuildError on failure."""
        self._check_structure()
        # acyclicity: inputs must already be produced (or original) when
        # visiting transforms in id order
        available = {p.id for p in self.pointers.values() if p.is_original}
        for tid in self.transform_order():
            node = self.transforms[tid]
            for pid in node.param_pointers:
                if pid not in available:
                    raise GraphBuildError(f"transform {tid} consumes pointer {pid} before production")
            available.update(node.output_pointers)
        if len(available) != len(self.pointers):
            raise GraphBuildError("unreachable pointers present")

    def node_count(self) -> int:
        return len(self.pointers) + len(self.transforms)

    def to_doc(self, inline_value_cap: int = 10_000) -> dict:
        """Structured-object form; values inline when the graph is small."""
        total_cells = sum(len(p.value) for p in self.pointers.values() if p.value is not None)
        inline = total_cells <= inline_value_cap
        nodes = []
        for pid in sorted(self.pointers):
            p = self.pointers[pid]
            node: dict = {"id": pid, "kind": "pointer", "name": p.name}
            if p.producer is not None:
                node["producer"] = p.producer
            if p.value is not None:
                node["fingerprint"] = fingerprint(p.value)
                if inline:
                    node["dtype"] = p.value.dtype
                    node["values"] = [_cell_to_doc(v) for v in p.value.values]
            nodes.append(node)
        for tid in sorted(self.transforms):
            t = self.transforms[tid]
            nodes.append(
                {
                    "id": tid,
                    "kind": "transform",
                    "verb": t.verb,
                    "params": list(t.param_pointers),
                    "param_shape": t.param_shape,
                }
            )
        edges = []
        for tid in sorted(self.transforms):
            t = self.transforms[tid]
            for pid in t.param_pointers:
                edges.append({"from": f"p{pid}", "to": f"t{tid}"})
            for pid in t.output_pointers:
                edges.append({"from": f"t{tid}", "to": f"p{pid}"})
        return {"nodes": nodes, "edges": edges}


def _cell_to_doc(value):
    if isinstance(value, float) and value in (float("inf"), float("-inf")):
        return {"inf": value > 0}
    return value


def _cell_from_doc(value):
    if isinstance(value, dict) and "inf" in value:
        return float("inf") if value["inf"] else float("-inf")
    return value


def flow_graph_from_doc(doc: dict) -> FlowGraph:
    """Rebuild a graph document; pointers lacking inline values carry None."""
    outputs: dict[int, list[int]] = {}
    params: dict[int, list[int]] = {}
    for edge in doc.get("edges", []):
        src, dst = edge["from"], edge["to"]
        if src.startswith("t"):
            outputs.setdefault(int(src[1:]), []).append(int(dst[1:]))
        else:
            params.setdefault(int(dst[1:]), []).append(int(src[1:]))
    pointers: dict[int, ColumnPointer] = {}
    transforms: dict[int, TransformNode] = {}
    for node in doc["nodes"]:
        if node["kind"] == "pointer":
            value = None
            if "values" in node:
                value = Column(
                    node["name"], tuple(_cell_from_doc(v) for v in node["values"]), node["dtype"]
                )
            pointers[node["id"]] = ColumnPointer(
                node["id"], node["name"], value, node.get("producer")
            )
        else:
            tid = node["id"]
            transforms[tid] = TransformNode(
                tid,
                node["verb"],
                tuple(node["params"]),
                tuple(outputs.get(tid, [])),
                node.get("param_shape", {}),
            )
    return FlowGraph(pointers, transforms)


@dataclass(frozen=True)
class Fragment:
    """An ancestor-closed subgraph rooted at one transform."""

    graph: FlowGraph
    root: int

    def node_count(self) -> int:
        return self.graph.node_count()


def build_flow_graph(original: DataTable, trace: list[StepTrace]) -> FlowGraph:
    """Assemble the graph for one executed program over ``original``."""
    pointers: dict[int, ColumnPointer] = {}
    transforms: dict[int, TransformNode] = {}
    for i, column in enumerate(original.columns):
        pointers[i] = ColumnPointer(i, column.name, column, None)
    next_expected = len(original.columns)  # the executor allocates consecutively
    for index, step in enumerate(trace):
        for pid in step.inputs:
            if pid not in pointers:
                raise GraphBuildError(
                    f"trace step {index} consumes unknown column identity {pid}"
                )
        for pid, _ in step.outputs:
            if pid != next_expected:
                raise GraphBuildError(
                    f"trace step {index} produced identity {pid}, expected {next_expected}; "
                    "trace does not belong to this table"
                )
            next_expected += 1
        unit: TransformUnit = step.unit
        out_ids = []
        for (pid, name), column in zip(step.outputs, step.result.columns):
            if pid in pointers:
                raise GraphBuildError(f"trace step {index} reuses column identity {pid}")
            pointers[pid] = ColumnPointer(pid, name, column, index)
            out_ids.append(pid)
        transforms[index] = TransformNode(
            index, unit.verb, tuple(step.inputs), tuple(out_ids), unit.to_doc()["params"]
        )
    graph = FlowGraph(pointers, transforms)
    graph.check_invariants()
    return graph


class GroundTruthGraphSet:
    """All alternative graphs plus the cross-graph transform/value unions.

    A transform appearing verbatim in several alternatives (its ancestor
    fragment is label-isomorphic across them) owns a single union identity.
    """

    def __init__(
        self,
        graphs: list[FlowGraph],
        classes: list[list[tuple[int, int]]],
        values: list[Column],
    ):
        self.graphs = list(graphs)
        self.classes = [list(members) for members in classes]
        self.values = list(values)
        self.class_of: dict[tuple[int, int], int] = {}
        for idx, members in enumerate(self.classes):
            for member in members:
                self.class_of[member] = idx

    @property
    def transform_count(self) -> int:
        return len(self.classes)

    @property
    def value_count(self) -> int:
        return len(self.values)

    def class_ids(self) -> list[str]:
        return [f"T{i}" for i in range(len(self.classes))]


def merge_alternatives(graphs: list[FlowGraph], cap: int | None = None) -> GroundTruthGraphSet:
    """Union the alternatives, deduplicating shared transforms and values."""
    from .isomorphism import fragments_isomorphic

    if not graphs:
        return GroundTruthGraphSet([], [], [])
    schema = graphs[0].original_schema()
    for g in graphs[1:]:
        if g.original_schema() != schema:
            raise SchemaError("alternative graphs disagree on the original table schema")
    classes: list[list[tuple[int, int]]] = []
    rep_fragments: list[Fragment] = []
    for gi, graph in enumerate(graphs):
        for tid in graph.transform_order():
            fragment = graph.induced_ancestor_subgraph(tid)
            for idx, rep in enumerate(rep_fragments):
                # dedup is across alternatives: two label-isomorphic
                # transforms inside one graph stay distinct decisions
                if any(member[0] == gi for member in classes[idx]):
                    continue
                if fragments_isomorphic(rep, fragment, cap=cap):
                    classes[idx].append((gi, tid))
                    break
            else:
                classes.append([(gi, tid)])
                rep_fragments.append(fragment)
    values: list[Column] = []
    seen_keys = set()
    for graph in graphs:
        for pid in sorted(graph.pointers):
            column = graph.pointers[pid].value
            if column is None:
                raise GraphBuildError(f"pointer {pid} lacks a value; cannot merge")
            key = exact_key(column)
            if key not in seen_keys:
                seen_keys.add(key)
                values.append(column)
    return GroundTruthGraphSet(graphs, classes, values)
