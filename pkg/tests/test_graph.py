import json
import random

import pytest

from flowmatch.errors import GraphBuildError, SchemaError
from flowmatch.graph import build_flow_graph, flow_graph_from_doc, merge_alternatives
from flowmatch.parser import parse_program
from flowmatch.table import ZERO_TOLERANCE, DataTable, column_equal, make_column
from flowmatch.transforms import run_program
from generators import random_program, random_table
from oracles import reachability_ancestors


def table_of(**cols):
    return DataTable(tuple(make_column(k, tuple(v)) for k, v in cols.items()))


def graph_of(source, table):
    _, trace = run_program(table, parse_program(source))
    return build_flow_graph(table, trace)


class TestBuild:
    def test_empty_trace_only_originals(self, soccer_table):
        graph = build_flow_graph(soccer_table, [])
        assert graph.transforms == {}
        assert len(graph.pointers) == len(soccer_table.columns)
        assert all(p.is_original for p in graph.pointers.values())

    def test_pipeline_has_six_transform_nodes(self, pipeline_graph):
        assert len(pipeline_graph.transforms) == 6

    def test_filter_label_carries_predicate_pointers(self, pipeline_graph):
        filter_node = next(t for t in pipeline_graph.transforms.values() if t.verb == "filter")
        param_names = {pipeline_graph.pointers[p].name for p in filter_node.param_pointers}
        assert param_names == {"rpg", "r_avg"}

    def test_derive_chain_ancestry(self):
        table = table_of(x=[1, 2])
        graph = graph_of("derive y = x + 1\nderive z = y * 2", table)
        z_pid = next(pid for pid, p in graph.pointers.items() if p.name == "z")
        assert graph.pointers[z_pid].producer == 1
        assert graph.ancestors_of_pointer(z_pid) == {0, 1}

    def test_original_pointer_has_no_ancestors(self, pipeline_graph):
        assert pipeline_graph.ancestors_of_pointer(0) == set()

    def test_rdcards_ancestry_covers_all_upstream_steps(self, pipeline_graph):
        rdcards = next(pid for pid, p in pipeline_graph.pointers.items() if p.name == "rdcards")
        assert pipeline_graph.ancestors_of_pointer(rdcards) == {0, 1, 2, 3, 4}

    def test_trace_table_mismatch(self, soccer_table):
        _, trace = run_program(soccer_table, parse_program("derive z = rater1 + 1"))
        smaller = DataTable(soccer_table.columns[:2])
        with pytest.raises(GraphBuildError):
            build_flow_graph(smaller, trace)

    def test_unknown_ids_raise(self, pipeline_graph):
        with pytest.raises(GraphBuildError):
            pipeline_graph.ancestors_of_pointer(10_000)
        with pytest.raises(GraphBuildError):
            pipeline_graph.induced_ancestor_subgraph(10_000)


class TestInducedSubgraph:
    def test_root_transform_fragment(self):
        graph = graph_of("derive z = x + y", table_of(x=[1], y=[2]))
        fragment = graph.induced_ancestor_subgraph(0)
        assert set(fragment.graph.transforms) == {0}
        assert len(fragment.graph.pointers) == 3  # x, y, z

    def test_filter_fragment_contains_upstream_derives(self, pipeline_graph):
        fragment = pipeline_graph.induced_ancestor_subgraph(2)
        verbs = sorted(t.verb for t in fragment.graph.transforms.values())
        assert verbs == ["derive", "derive", "filter"]

    def test_diamond_fragment_contains_both_branches(self):
        table = table_of(x=[1, 2])
        graph = graph_of(
            "derive a = x + 1\nderive b = x * 2\nderive c = a + b", table
        )
        fragment = graph.induced_ancestor_subgraph(2)
        assert set(fragment.graph.transforms) == {0, 1, 2}
        # oracle: reachability over brute-force edge enumeration
        c_pid = next(pid for pid, p in graph.pointers.items() if p.name == "c")
        assert reachability_ancestors(graph, c_pid) == {0, 1, 2}

    def test_fragment_satisfies_invariants(self, pipeline_graph):
        for tid in pipeline_graph.transform_order():
            pipeline_graph.induced_ancestor_subgraph(tid).graph.check_invariants()


class TestAncestorOracle:
    def test_matches_transitive_closure_on_random_graphs(self):
        rng = random.Random(31)
        for _ in range(40):
            table = random_table(rng)
            source, _ = random_program(rng, table, max_units=5)
            graph = graph_of(source, table)
            for pid in graph.pointers:
                assert graph.ancestors_of_pointer(pid) == reachability_ancestors(graph, pid)


class TestMerge:
    def test_identical_single_transform_graphs_dedupe(self):
        table = table_of(x=[1, 2])
        g1 = graph_of("derive y = x + 1", table)
        g2 = graph_of("derive y = x + 1", table)
        merged = merge_alternatives([g1, g2])
        assert merged.transform_count == 1

    def test_skipped_filter_alternative_counts_three(self):
        table = table_of(x=[1, 2, 3], w=[5, 6, 7])
        g1 = graph_of("derive y = x + 1\nderive z = w * 2\nfilter y > 2", table)
        g2 = graph_of("derive y = x + 1\nderive z = w * 2", table)
        merged = merge_alternatives([g1, g2])
        # the two derives are shared; the filter is unique to the first
        assert merged.transform_count == 3

    def test_label_twins_within_one_graph_stay_distinct(self):
        # derive y=x+1 and derive z=x*2 carry the same label (derive, {x});
        # they are still two decisions inside a single alternative
        table = table_of(x=[1, 2, 3])
        g1 = graph_of("derive y = x + 1\nderive z = x * 2", table)
        merged = merge_alternatives([g1])
        assert merged.transform_count == 2
        g2 = graph_of("derive y = x + 1", table)
        assert merge_alternatives([g1, g2]).transform_count == 2

    def test_disjoint_graphs_union(self):
        table = table_of(x=[1, 2], y=[3, 4])
        g1 = graph_of("derive a = x + 1\nderive b = a * 2", table)
        g2 = graph_of("derive c = y + 1\nderive d = c * 2\nderive e = d - 1", table)
        merged = merge_alternatives([g1, g2])
        assert merged.transform_count == 5

    def test_merge_idempotent(self, soccer_table, soccer_gt):
        doubled = merge_alternatives(soccer_gt.graphs + soccer_gt.graphs)
        assert doubled.transform_count == soccer_gt.transform_count
        assert doubled.value_count == soccer_gt.value_count

    def test_schema_mismatch_rejected(self):
        g1 = graph_of("derive a = x + 1", table_of(x=[1]))
        g2 = graph_of("derive a = y + 1", table_of(y=[1]))
        with pytest.raises(SchemaError):
            merge_alternatives([g1, g2])

    def test_threshold_only_variants_share_identity(self):
        # scalar parameters are outside the label, so 0.5 vs 0.45 merge
        table = table_of(x=[0.4, 0.46, 0.6])
        g1 = graph_of("derive y = x * 1\nfilter y > 0.5", table)
        g2 = graph_of("derive y = x * 1\nfilter y > 0.45", table)
        merged = merge_alternatives([g1, g2])
        assert merged.transform_count == 2


class TestValueConsistencyAndInvariants:
    def test_pointer_values_match_replay(self, soccer_table, fixtures_dir):
        source = (fixtures_dir / "pipeline.fm").read_text()
        program = parse_program(source)
        _, trace_a = run_program(soccer_table, program)
        graph = build_flow_graph(soccer_table, trace_a)
        _, trace_b = run_program(soccer_table, program)
        replay = build_flow_graph(soccer_table, trace_b)
        assert set(graph.pointers) == set(replay.pointers)
        for pid in graph.pointers:
            assert column_equal(graph.pointers[pid].value, replay.pointers[pid].value, ZERO_TOLERANCE)

    def test_fuzz_corpus_invariants(self):
        rng = random.Random(77)
        for _ in range(60):
            table = random_table(rng)
            source, _ = random_program(rng, table)
            graph = graph_of(source, table)
            graph.check_invariants()
            for node in graph.transforms.values():
                assert len(node.param_pointers) > 0
                assert len(node.output_pointers) >= 1
            for ptr in graph.pointers.values():
                producers = [
                    t.id for t in graph.transforms.values() if ptr.id in t.output_pointers
                ]
                assert len(producers) == (0 if ptr.is_original else 1)


class TestGraphDocument:
    def test_round_trip_structure(self, pipeline_graph):
        doc = pipeline_graph.to_doc()
        back = flow_graph_from_doc(doc)
        assert back.to_doc() == doc
        assert set(back.transforms) == set(pipeline_graph.transforms)
        for pid, ptr in pipeline_graph.pointers.items():
            assert column_equal(back.pointers[pid].value, ptr.value, ZERO_TOLERANCE)

    def test_json_serializable(self, pipeline_graph):
        json.dumps(pipeline_graph.to_doc())

    def test_large_graph_stores_fingerprints_only(self):
        table = table_of(x=list(range(6000)), y=list(range(6000)))
        graph = graph_of("derive z = x + y", table)
        doc = graph.to_doc()
        pointer_nodes = [n for n in doc["nodes"] if n["kind"] == "pointer"]
        assert all("values" not in n for n in pointer_nodes)
        assert all("fingerprint" in n for n in pointer_nodes)
