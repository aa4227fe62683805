import logging
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from kabar.models import ConflictKind
from kabar.services.directed_search import PackedSearches
from kabar.services.graph_core import Graph, NodeMove, Partition, apply_node_moves, size_deltas
from kabar.services.model_solver import (
    CycleResult, ModelEdge, ModelGraph, detect_negative_cycle, find_zero_weight_cycle,
    payload_moves, shortest_path_tree,
)

logger = logging.getLogger(__name__)


@dataclass
class AdvancedModel:
    """tau layers, each a copy of the quotient graph, plus s (and t when balancing).

    Model node of (block, layer) is (layer - 1) * k + block.
    """

    mg: ModelGraph
    k: int
    tau: int
    s: int
    t: Optional[int] = None

    def node(self, block: int, layer: int) -> int:
        return (layer - 1) * self.k + block

    def block_layer(self, node: int) -> Tuple[int, int]:
        return node % self.k, node // self.k + 1


@dataclass
class Conflict:
    kind: ConflictKind
    offending_edges: List[ModelEdge]


@dataclass
class CycleSolution:
    moves: List[NodeMove]
    delta: int
    cycle: CycleResult


def _layered_model(p: Partition, packed: PackedSearches, tau: int, conflict_free: bool) -> AdvancedModel:
    k = p.k
    mg = ModelGraph()
    for layer in range(1, tau + 1):
        for block in range(k):
            mg.add_node((block, layer))
    model = AdvancedModel(mg=mg, k=k, tau=tau, s=-1)

    for (source, target), prefixes in sorted(packed.best.items()):
        slack = p.slack(target)
        for d in range(1, min(len(prefixes), tau) + 1):
            prefix = prefixes[d - 1]
            mg.add_edge(model.node(source, d), model.node(target, d), -prefix.gain, prefix)
            if conflict_free:
                continue
            for shift in range(1, min(d - 1, slack) + 1):
                mg.add_edge(model.node(source, d), model.node(target, d - shift), -prefix.gain, prefix)

    for layer in range(1, tau):
        for block in range(k):
            mg.add_edge(model.node(block, layer), model.node(block, layer + 1), 0)
    return model


def build_advanced_model(
    g: Graph, p: Partition, packed: PackedSearches, tau: int, conflict_free: bool = False
) -> AdvancedModel:
    model = _layered_model(p, packed, tau, conflict_free)
    mg = model.mg
    model.s = mg.add_node("s")
    for layer in range(1, tau + 1):
        for block in range(p.k):
            mg.add_edge(model.s, model.node(block, layer), 0)
    for layer in range(1, tau + 1):
        for block in range(p.k):
            if p.slack(block) >= layer:
                mg.add_edge(model.node(block, layer), model.s, 0)
    logger.debug(f"Advanced model: {mg.num_nodes} nodes, {mg.edge_count()} edges, tau={tau}")
    return model


def build_balancing_model(
    g: Graph, p: Partition, packed: PackedSearches, tau: int, conflict_free: bool = False
) -> AdvancedModel:
    """Layered model where s reaches only overloaded blocks and capacious blocks reach t."""
    model = _layered_model(p, packed, tau, conflict_free)
    mg = model.mg
    model.s = mg.add_node("s")
    model.t = mg.add_node("t")
    for block in p.overloaded_blocks():
        for layer in range(1, tau + 1):
            mg.add_edge(model.s, model.node(block, layer), 0)
    for layer in range(1, tau + 1):
        for block in range(p.k):
            if p.slack(block) >= layer:
                mg.add_edge(model.node(block, layer), model.t, 0)
    return model


def check_moves(p: Partition, edges: Sequence[ModelEdge], require_progress: bool = False) -> Optional[Conflict]:
    """Conflict check shared by cycles and balancing paths."""
    payload = [e for e in edges if not e.structural]
    pair_counts = Counter(e.payload.pair for e in payload)
    repeated = [e for e in payload if pair_counts[e.payload.pair] > 1]
    if repeated:
        return Conflict(ConflictKind.NOT_SIMPLE_IN_QUOTIENT, repeated)

    moves = payload_moves(payload)
    delta = size_deltas(p.k, moves)
    limit = p.max_block_size
    grown = {b for b in range(p.k) if delta[b] > 0 and p.block_sizes[b] + delta[b] > limit}
    if grown:
        offending = [e for e in payload if e.payload.target in grown]
        return Conflict(ConflictKind.OVERLOAD, offending)

    if require_progress:
        after = sum(max(0, size + change - limit) for size, change in zip(p.block_sizes, delta))
        if after >= p.overload():
            return Conflict(ConflictKind.NO_PROGRESS, payload)
    return None


def check_cycle(p: Partition, am: AdvancedModel, c: CycleResult) -> Optional[Conflict]:
    return check_moves(p, c.edges)


def drop_random_payload_edge(mg: ModelGraph, edges: Sequence[ModelEdge], rng, reason: str) -> None:
    candidates = [e for e in edges if not e.structural]
    victim = rng.choice(candidates)
    mg.remove_edge(victim)
    logger.debug(f"{reason}: removed model edge {victim.id}")


def solve_advanced(g: Graph, p: Partition, am: AdvancedModel, rng) -> Optional[CycleSolution]:
    """Negative cycle search, removing a random edge of every conflicted cycle."""
    for _ in range(am.mg.edge_count() + 1):
        cycle = detect_negative_cycle(am.mg, am.s)
        if cycle is None:
            return None
        conflict = check_cycle(p, am, cycle)
        if conflict is None:
            return CycleSolution(payload_moves(cycle.edges), cycle.weight, cycle)
        drop_random_payload_edge(am.mg, cycle.edges, rng, f"Conflict {conflict.kind.value}")
    return None


def solve_advanced_zero(g: Graph, p: Partition, am: AdvancedModel, rng) -> Optional[CycleSolution]:
    """Conflict-free zero-weight cycle; the model must be free of negative cycles.

    Potentials stay feasible when edges are removed, so they are computed once.
    Cycles made only of structural edges (s -> X -> s) carry no moves; one of
    their edges is dropped and the walk repeated.
    """
    potentials = shortest_path_tree(am.mg, am.s)
    for _ in range(am.mg.edge_count() + 1):
        cycle = find_zero_weight_cycle(am.mg, potentials, rng)
        if cycle is None:
            return None
        if not cycle.payload_edges():
            am.mg.remove_edge(cycle.edges[-1])
            continue
        conflict = check_cycle(p, am, cycle)
        if conflict is None:
            return CycleSolution(payload_moves(cycle.edges), cycle.weight, cycle)
        drop_random_payload_edge(am.mg, cycle.edges, rng, f"Conflict {conflict.kind.value}")
    return None


def apply_advanced_cycle(g: Graph, p: Partition, moves: List[NodeMove], predicted_delta: int) -> Partition:
    apply_node_moves(p, moves, predicted_delta)
    logger.debug(f"Applied {len(moves)} node moves, cut delta {predicted_delta}")
    return p
