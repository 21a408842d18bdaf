"""Label-respecting isomorphism between rooted ancestor fragments.

Two fragments are isomorphic when there is a bijection of their transforms
and column pointers that maps root to root, preserves every edge, keeps
transform verbs equal, sends original pointers to originals with the same
column name, and sends produced pointers to produced pointers consistently
with their producers. Scalar parameters (thresholds, constants, sort
directions) are not part of the label and are ignored here.

The search assigns transforms in topological order, pruned by verb,
in/out-degree, and anchored-original signatures before branching; pointer
correspondences are extended lazily, only for pointers some transform in
the fragment consumes. Unconsumed output pointers need no explicit images:
once all consumed pointers map injectively and output counts agree, any
completion is a bijection.
"""

from __future__ import annotations

from .errors import CapExceededError
from .graph import Fragment, FlowGraph


def _signature(graph: FlowGraph, tid: int) -> tuple:
    node = graph.transforms[tid]
    anchored = sorted(
        graph.pointers[pid].name for pid in node.param_pointers if graph.pointers[pid].is_original
    )
    return (node.verb, len(node.param_pointers), len(node.output_pointers), tuple(anchored))


def _check_cap(fragment: Fragment, cap: int | None):
    if cap is not None and fragment.node_count() > cap:
        raise CapExceededError(fragment.node_count(), cap)


class _Matcher:
    def __init__(self, a: FlowGraph, b: FlowGraph):
        self.a = a
        self.b = b
        self.t_map: dict[int, int] = {}
        self.t_used: set[int] = set()
        self.p_map: dict[int, int] = {}
        self.p_rev: dict[int, int] = {}

    def run(self, root_a: int, root_b: int) -> bool:
        # topological per side: within a graph, ids ascend along dataflow,
        # so producers are always assigned before their consumers
        order = sorted(self.a.transforms)
        by_sig: dict[tuple, list[int]] = {}
        for tid in sorted(self.b.transforms):
            by_sig.setdefault(_signature(self.b, tid), []).append(tid)
        candidates = []
        for tid in order:
            sig = _signature(self.a, tid)
            pool = by_sig.get(sig, [])
            if tid == root_a:
                pool = [root_b] if root_b in pool else []
            if not pool:
                return False
            candidates.append((tid, pool))
        return self._assign(0, candidates)

    def _assign(self, depth: int, candidates: list[tuple[int, list[int]]]) -> bool:
        if depth == len(candidates):
            return True
        tid, pool = candidates[depth]
        node = self.a.transforms[tid]
        for other in pool:
            if other in self.t_used:
                continue
            self.t_map[tid] = other
            self.t_used.add(other)
            added = []
            if self._map_inputs(list(node.param_pointers), set(self.b.transforms[other].param_pointers), added):
                if self._assign(depth + 1, candidates):
                    return True
            for pid in added:
                del self.p_rev[self.p_map.pop(pid)]
            del self.t_map[tid]
            self.t_used.discard(other)
        return False

    def _map_inputs(self, inputs: list[int], targets: set[int], added: list[int]) -> bool:
        """Extend the pointer bijection over one transform's inputs."""
        if not inputs:
            return True
        pid = inputs[0]
        rest = inputs[1:]
        if pid in self.p_map:
            image = self.p_map[pid]
            if image not in targets:
                return False
            return self._map_inputs(rest, targets - {image}, added)
        ptr = self.a.pointers[pid]
        for cand in sorted(targets):
            if cand in self.p_rev:
                continue
            other = self.b.pointers[cand]
            if ptr.is_original:
                if not other.is_original or other.name != ptr.name:
                    continue
            else:
                if other.is_original:
                    continue
                if self.t_map.get(ptr.producer) != other.producer:
                    continue
            self.p_map[pid] = cand
            self.p_rev[cand] = pid
            added.append(pid)
            if self._map_inputs(rest, targets - {cand}, added):
                return True
            added.remove(pid)
            del self.p_rev[cand]
            del self.p_map[pid]
        return False


def fragments_isomorphic(a: Fragment, b: Fragment, cap: int | None = None) -> bool:
    """Decide label-isomorphism of two rooted fragments."""
    _check_cap(a, cap)
    _check_cap(b, cap)
    ga, gb = a.graph, b.graph
    if len(ga.transforms) != len(gb.transforms) or len(ga.pointers) != len(gb.pointers):
        return False
    sig_a = sorted(_signature(ga, t) for t in ga.transforms)
    sig_b = sorted(_signature(gb, t) for t in gb.transforms)
    if sig_a != sig_b:
        return False
    originals_a = sorted(p.name for p in ga.pointers.values() if p.is_original)
    originals_b = sorted(p.name for p in gb.pointers.values() if p.is_original)
    if originals_a != originals_b:
        return False
    return _Matcher(ga, gb).run(a.root, b.root)
