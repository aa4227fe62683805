import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from kabar.errors import InvariantViolation
from kabar.services.graph_core import BlockPair, EligibilityState, Graph, NodeMove, Partition

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MoveSequence:
    """Nodes moved A -> B by one directed search, with prefix gains.

    `prefix_gains[d - 1]` is the cut reduction after the first d moves.
    """

    pair: BlockPair
    nodes: Tuple[int, ...] = ()
    prefix_gains: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.nodes)

    def gain_for(self, d: int) -> int:
        return self.prefix_gains[d - 1]

    def prefix(self, d: int) -> "PrefixMove":
        return PrefixMove(self.pair, d, self.prefix_gains[d - 1], self.nodes[:d])


@dataclass(frozen=True)
class PrefixMove:
    """Payload of an advanced model edge: the first `count` nodes of a search."""

    pair: BlockPair
    count: int
    gain: int
    nodes: Tuple[int, ...]

    @property
    def source(self) -> int:
        return self.pair[0]

    @property
    def target(self) -> int:
        return self.pair[1]

    def node_moves(self) -> List[NodeMove]:
        return [NodeMove(v, self.pair[0], self.pair[1]) for v in self.nodes]


@dataclass
class PackedSearches:
    # best[pair][d - 1]: best prefix of length d over all packing rounds
    best: Dict[BlockPair, List[PrefixMove]] = field(default_factory=dict)
    searches: List[Tuple[int, MoveSequence]] = field(default_factory=list)

    def record(self, round_index: int, sequence: MoveSequence) -> None:
        self.searches.append((round_index, sequence))
        prefixes = self.best.setdefault(sequence.pair, [])
        for d in range(1, len(sequence) + 1):
            candidate = sequence.prefix(d)
            if d > len(prefixes):
                prefixes.append(candidate)
            elif candidate.gain > prefixes[d - 1].gain:
                prefixes[d - 1] = candidate

    def moved_nodes(self) -> List[int]:
        return [v for _, sequence in self.searches for v in sequence.nodes]


def _start_node(p: Partition, candidates: Sequence[int], target: int, elig: EligibilityState, rng) -> Optional[int]:
    best_gain = None
    best_nodes: List[int] = []
    for v in candidates:
        if not elig.is_eligible(v):
            continue
        value = p.gain(v, target)
        if best_gain is None or value > best_gain:
            best_gain, best_nodes = value, [v]
        elif value == best_gain:
            best_nodes.append(v)
    return rng.choice(best_nodes) if best_nodes else None


def directed_local_search(
    g: Graph,
    p: Partition,
    source: int,
    target: int,
    tau: int,
    elig: EligibilityState,
    rng,
    boundary: Optional[Dict[BlockPair, List[int]]] = None,
    mark_queued: bool = False,
) -> MoveSequence:
    """FM-style search that only moves nodes from `source` to `target`.

    The moves are undone before returning and the moved nodes are marked in
    `elig`, which blocks them and their neighbours for later searches.
    """
    if source == target:
        raise ValueError("directed search needs two distinct blocks")
    pair = (source, target)
    if boundary is None:
        boundary = p.pair_boundaries()
    start = _start_node(p, boundary.get(pair, ()), target, elig, rng)
    if start is None:
        return MoveSequence(pair)

    before_cut = p.cut
    assign = p.assign
    counter = itertools.count()
    queued_gain: Dict[int, int] = {start: p.gain(start, target)}
    heap = [(-queued_gain[start], next(counter), start)]
    moved: List[int] = []
    gains: List[int] = []
    total = 0

    while heap and len(moved) < tau:
        key, _, v = heapq.heappop(heap)
        if assign[v] != source or queued_gain.get(v) != -key or not elig.is_eligible(v):
            continue
        del queued_gain[v]
        total += p.move(v, target)
        moved.append(v)
        gains.append(total)
        for u, _ in g.neighbors(v):
            if assign[u] != source or not elig.is_eligible(u):
                continue
            value = p.gain(u, target)
            if queued_gain.get(u) != value:
                queued_gain[u] = value
                heapq.heappush(heap, (-value, next(counter), u))

    for v in reversed(moved):
        p.move(v, source)
    if p.cut != before_cut:
        raise InvariantViolation(f"undo left cut at {p.cut}, expected {before_cut}")

    touched = list(moved)
    if mark_queued:
        touched.extend(queued_gain)
    for v in touched:
        elig.mark(v)

    return MoveSequence(pair, tuple(moved), tuple(gains))


def pack_searches(
    g: Graph,
    p: Partition,
    pairs: Sequence[BlockPair],
    tau: int,
    mu: int,
    elig: EligibilityState,
    rng,
    packed: Optional[PackedSearches] = None,
    mark_queued: bool = False,
) -> PackedSearches:
    """Run `mu` rounds of one directed search per pair, keeping per-length bests."""
    if packed is None:
        packed = PackedSearches()
    boundary = p.pair_boundaries()
    for round_index in range(mu):
        order = list(pairs)
        rng.shuffle(order)
        found = 0
        for source, target in order:
            sequence = directed_local_search(
                g, p, source, target, tau, elig, rng, boundary=boundary, mark_queued=mark_queued
            )
            if len(sequence):
                packed.record(round_index, sequence)
                found += 1
        if not found:
            # nothing eligible remains; later rounds cannot find anything either
            break
    logger.debug(f"Packed {len(packed.searches)} directed searches over {len(pairs)} pairs")
    return packed
