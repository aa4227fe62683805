import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from kabar.errors import InvariantViolation
from kabar.services.graph_core import (
    EligibilityState, Graph, NodeMove, Partition,
    apply_node_moves, capacity_violations, check_stale, quotient_graph,
)
from kabar.services.model_solver import CycleResult, ModelGraph, payload_moves

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BasicMove:
    """Payload of a basic model edge: one selected node moving A -> B."""

    node: int
    source: int
    target: int
    gain: int

    @property
    def pair(self) -> Tuple[int, int]:
        return (self.source, self.target)

    @property
    def count(self) -> int:
        return 1

    def node_moves(self) -> List[NodeMove]:
        return [NodeMove(self.node, self.source, self.target)]


@dataclass
class BasicModel:
    mg: ModelGraph
    s: int
    k: int
    edge_move: Dict[int, BasicMove]

    def selected_nodes(self) -> List[int]:
        return [move.node for move in self.edge_move.values()]


def build_basic_model(g: Graph, p: Partition, rng) -> BasicModel:
    """One node per block plus s; each quotient edge carries its best eligible move."""
    mg = ModelGraph()
    for block in range(p.k):
        mg.add_node(("block", block))
    s = mg.add_node("s")

    pairs = quotient_graph(g, p)
    rng.shuffle(pairs)
    boundary = p.pair_boundaries()
    elig = EligibilityState(g)
    edge_move: Dict[int, BasicMove] = {}

    for source, target in pairs:
        best_gain: Optional[int] = None
        best_nodes: List[int] = []
        for v in boundary.get((source, target), ()):
            if not elig.is_eligible(v):
                continue
            value = p.gain(v, target)
            if best_gain is None or value > best_gain:
                best_gain, best_nodes = value, [v]
            elif value == best_gain:
                best_nodes.append(v)
        if not best_nodes:
            continue
        v = rng.choice(best_nodes)
        elig.mark(v)
        move = BasicMove(v, source, target, best_gain)
        edge = mg.add_edge(source, target, -best_gain, move)
        edge_move[edge.id] = move

    for block in range(p.k):
        mg.add_edge(s, block, 0)
    # no return edges when every block is full
    for block in range(p.k):
        if p.slack(block) >= 1:
            mg.add_edge(block, s, 0)

    logger.debug(f"Basic model: {len(edge_move)} move edges over {len(pairs)} quotient edges")
    return BasicModel(mg=mg, s=s, k=p.k, edge_move=edge_move)


def cycle_conflicts(p: Partition, c: CycleResult) -> List[int]:
    """Blocks a basic cycle through s would push above the limit."""
    return capacity_violations(p, payload_moves(c.edges))


def apply_cycle(g: Graph, p: Partition, bm: BasicModel, c: CycleResult) -> Partition:
    moves = payload_moves(c.edges)
    check_stale(p, moves)
    if capacity_violations(p, moves):
        raise InvariantViolation("cycle would overload a block; it should have been rejected as a conflict")
    before_sizes = list(p.block_sizes)
    apply_node_moves(p, moves, c.weight)
    if bm.s not in c.nodes and p.block_sizes != before_sizes:
        raise InvariantViolation("cycle avoiding s changed block sizes")
    logger.debug(f"Applied basic cycle: {len(moves)} moves, cut delta {c.weight}")
    return p
