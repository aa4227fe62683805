import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from kabar.errors import ContractViolation, InvariantViolation, NegativeCycleError
from kabar.models import RefineConfig
from kabar.services.advanced_refine import build_balancing_model, check_moves, drop_random_payload_edge
from kabar.services.directed_search import MoveSequence, PackedSearches, directed_local_search, pack_searches
from kabar.services.graph_core import (
    EligibilityState, Graph, NodeMove, Partition, apply_node_moves, quotient_graph,
)
from kabar.services.model_solver import payload_moves, shortest_s_t_path

logger = logging.getLogger(__name__)


@dataclass
class BfsForest:
    """BFS forest over the quotient graph rooted at the overloaded blocks."""

    parent: Dict[int, Optional[int]] = field(default_factory=dict)

    def path_to(self, block: int) -> List[int]:
        path = [block]
        while self.parent[path[-1]] is not None:
            path.append(self.parent[path[-1]])
        path.reverse()
        return path


@dataclass
class IntegratedPath:
    blocks: List[int]
    searches: List[MoveSequence]


@dataclass
class BalanceOutcome:
    route: str
    cut_delta: int
    moved_nodes: int


def quotient_adjacency(g: Graph, p: Partition) -> Dict[int, List[int]]:
    adjacency: Dict[int, List[int]] = {block: [] for block in range(p.k)}
    for source, target in quotient_graph(g, p):
        adjacency[source].append(target)
    return adjacency


def bfs_forest(g: Graph, p: Partition, rng) -> BfsForest:
    roots = p.overloaded_blocks()
    rng.shuffle(roots)
    adjacency = quotient_adjacency(g, p)
    forest = BfsForest()
    queue = deque()
    for root in roots:
        forest.parent[root] = None
        queue.append(root)
    while queue:
        block = queue.popleft()
        for neighbor in adjacency[block]:
            if neighbor not in forest.parent:
                forest.parent[neighbor] = block
                queue.append(neighbor)
    return forest


def capacious_targets(p: Partition, forest: BfsForest) -> List[int]:
    return sorted(b for b in forest.parent if p.slack(b) >= 1)


def integrate_path(
    g: Graph, p: Partition, elig: EligibilityState, rng, forest: Optional[BfsForest] = None
) -> Optional[IntegratedPath]:
    """Reserve a one-node search on every hop of some overloaded-to-capacious path.

    Targets are tried in random order; a failed attempt clears every mark.
    """
    if forest is None:
        forest = bfs_forest(g, p, rng)
    targets = capacious_targets(p, forest)
    rng.shuffle(targets)
    boundary = p.pair_boundaries()
    for target in targets:
        blocks = forest.path_to(target)
        searches: List[MoveSequence] = []
        for source, destination in zip(blocks, blocks[1:]):
            sequence = directed_local_search(g, p, source, destination, 1, elig, rng, boundary=boundary)
            if not len(sequence):
                break
            searches.append(sequence)
        if len(searches) == len(blocks) - 1:
            logger.debug(f"Integrated balancing path {blocks}")
            return IntegratedPath(blocks, searches)
        elig.reset()
    return None


def _move_best(p: Partition, source: int, target: int, rng) -> Optional[int]:
    best_gain = None
    best_nodes: List[int] = []
    for v in p.boundary_nodes(source, target):
        value = p.gain(v, target)
        if best_gain is None or value > best_gain:
            best_gain, best_nodes = value, [v]
        elif value == best_gain:
            best_nodes.append(v)
    if not best_nodes:
        return None
    v = rng.choice(best_nodes)
    p.move(v, target)
    return v


def _fallback_moves(p: Partition, rng, forest: BfsForest) -> List[Tuple[int, int]]:
    """Cheapest forest path, found by applying and undoing each candidate.

    Moved nodes are not blocked, so a node may travel several hops.
    """
    best: Optional[Tuple[int, List[Tuple[int, int]]]] = None
    for target in capacious_targets(p, forest):
        blocks = forest.path_to(target)
        undo: List[Tuple[int, int]] = []
        applied: List[Tuple[int, int]] = []
        for source, destination in zip(blocks, blocks[1:]):
            v = _move_best(p, source, destination, rng)
            if v is None:
                break
            undo.append((v, source))
            applied.append((v, destination))
        complete = len(applied) == len(blocks) - 1
        if complete and (best is None or p.cut < best[0]):
            best = (p.cut, applied)
        for v, source in reversed(undo):
            p.move(v, source)
    if best is None:
        raise InvariantViolation("fallback balancing found no overloaded-to-capacious path")
    return best[1]


def _moved_count(before: List[int], p: Partition) -> int:
    return sum(1 for a, b in zip(before, p.assign) if a != b)


def fallback_balance(g: Graph, p: Partition, rng, forest: Optional[BfsForest] = None) -> Partition:
    """Try every forest path with one max-gain move per hop and keep the cheapest."""
    if forest is None:
        forest = bfs_forest(g, p, rng)
    before_overload = p.overload()
    moves = _fallback_moves(p, rng, forest)
    for v, destination in moves:
        p.move(v, destination)
    p.debug_verify()
    if p.overload() != before_overload - 1:
        raise InvariantViolation(f"fallback balancing moved overload from {before_overload} to {p.overload()}")
    logger.info(f"Fallback balancing moved {len(moves)} nodes, cut now {p.cut}")
    return p


def move_random_for_component(g: Graph, p: Partition, rng, block: Optional[int] = None) -> Partition:
    """Relocate one random node between an overloaded and an underloaded block.

    An overloaded `block` emits a node to a random underloaded block; any other
    `block` receives a node from a random overloaded block. Without `block`, a
    random overloaded block emits.
    """
    limit = p.max_block_size
    overloaded = p.overloaded_blocks()
    underloaded = [b for b in range(p.k) if p.block_sizes[b] < limit]
    if not overloaded or not underloaded:
        raise InvariantViolation("random balancing move needs an overloaded and an underloaded block")
    before_overload = p.overload()

    if block is None:
        block = rng.choice(overloaded)
    if block in overloaded:
        source, target = block, rng.choice(underloaded)
    elif block not in underloaded:
        raise ContractViolation(f"block {block} is full and cannot receive a node")
    else:
        source, target = rng.choice(overloaded), block
    v = rng.choice(p.block_nodes(source))
    p.move(v, target)
    p.debug_verify()
    if p.overload() != before_overload - 1:
        raise InvariantViolation(f"random balancing moved overload from {before_overload} to {p.overload()}")
    logger.info(f"Moved node {v} from block {source} to block {target} across components")
    return p


def _solve_balancing_model(g: Graph, p: Partition, packed: PackedSearches, tau: int, cfg: RefineConfig, rng) -> Optional[Tuple[List[NodeMove], int]]:
    model = build_balancing_model(g, p, packed, tau, conflict_free=cfg.conflict_free_mode)
    for _ in range(model.mg.edge_count() + 1):
        try:
            path = shortest_s_t_path(model.mg, model.s, model.t)
        except NegativeCycleError as exc:
            drop_random_payload_edge(model.mg, exc.cycle.edges, rng, "Negative cycle in balancing model")
            continue
        if path is None:
            return None
        conflict = check_moves(p, path.edges, require_progress=True)
        if conflict is None:
            return payload_moves(path.edges), path.weight
        drop_random_payload_edge(model.mg, path.edges, rng, f"Balancing path conflict {conflict.kind.value}")
    return None


def balance_step(
    g: Graph, p: Partition, cfg: RefineConfig, rng, connected: Optional[bool] = None
) -> Partition:
    """Reduce total overload by at least one with the cheapest path found."""
    return balance(g, p, cfg, rng, connected=connected)[0]


def balance(
    g: Graph, p: Partition, cfg: RefineConfig, rng, connected: Optional[bool] = None
) -> Tuple[Partition, Optional[BalanceOutcome]]:
    """One balancing step, reporting the route taken.

    `connected` is the caller's cached connectivity of `g`; it is computed
    here only when no capacious block is reachable.
    """
    before_overload = p.overload()
    if before_overload == 0:
        return p, None
    before_cut = p.cut
    before_assign = list(p.assign)

    forest = bfs_forest(g, p, rng)
    if not capacious_targets(p, forest):
        receivers = [b for b in range(p.k) if p.slack(b) >= 1]
        if connected is None:
            connected = g.is_connected()
        # on a connected graph only empty blocks can be cut off in the quotient graph
        if connected and all(p.block_sizes[b] for b in receivers):
            raise InvariantViolation("no capacious block reachable in the quotient graph of a connected graph")
        receiver = rng.choice(receivers)
        logger.info(f"No capacious block reachable in the quotient graph; block {receiver} takes a random node")
        move_random_for_component(g, p, rng, block=receiver)
        return p, BalanceOutcome("random", p.cut - before_cut, 1)

    tau = cfg.balancing_tau(p.k)
    elig = EligibilityState(g)
    integrated = integrate_path(g, p, elig, rng, forest)
    solution = None
    if integrated is not None:
        packed = PackedSearches()
        for sequence in integrated.searches:
            packed.record(-1, sequence)
        pack_searches(
            g, p, quotient_graph(g, p), tau, cfg.mu, elig, rng,
            packed=packed, mark_queued=cfg.mark_queued_nodes,
        )
        solution = _solve_balancing_model(g, p, packed, tau, cfg, rng)

    if solution is None:
        logger.warning("Balancing path could not be integrated; using fallback routine")
        fallback_balance(g, p, rng, forest)
        return p, BalanceOutcome("fallback", p.cut - before_cut, _moved_count(before_assign, p))

    moves, weight = solution
    apply_node_moves(p, moves, weight)
    if p.overload() >= before_overload:
        raise InvariantViolation(f"balancing step left overload at {p.overload()}")
    logger.debug(f"Balancing path applied: {len(moves)} moves, cut delta {weight}")
    return p, BalanceOutcome("model", weight, len(moves))
