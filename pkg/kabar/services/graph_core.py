import math
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, NamedTuple, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from kabar.config import settings
from kabar.errors import ContractViolation, InvariantViolation, StaleModelError


Move = Tuple[int, int]
BlockPair = Tuple[int, int]


class Graph:
    """Immutable undirected graph in compressed adjacency (CSR) form.

    Self-loops are dropped and parallel edges merged by weight summation at
    construction. Edge weights are positive integers.
    """

    __slots__ = ("n", "m", "xadj", "adjncy", "adjwgt", "_degree")

    def __init__(self, csr: sp.csr_matrix):
        csr = sp.csr_matrix(csr, dtype=np.int64)
        csr.setdiag(0)
        csr.eliminate_zeros()
        csr.sum_duplicates()
        csr.sort_indices()
        if csr.shape[0] != csr.shape[1]:
            raise ContractViolation("adjacency matrix must be square")
        if csr.nnz and csr.data.min() <= 0:
            raise ContractViolation("edge weights must be positive")
        if (csr != csr.T).nnz:
            raise ContractViolation("adjacency must be symmetric")

        self.n: int = csr.shape[0]
        self.m: int = csr.nnz // 2
        # plain lists: the refinement loops index these one entry at a time
        self.xadj: List[int] = csr.indptr.tolist()
        self.adjncy: List[int] = csr.indices.tolist()
        self.adjwgt: List[int] = csr.data.tolist()
        self._degree: List[int] = np.asarray(csr.sum(axis=1)).ravel().astype(np.int64).tolist()

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int, int]]) -> "Graph":
        """Build from undirected (u, v, weight) triples, each edge given once."""
        triples = list(edges)
        for u, v, w in triples:
            if not (0 <= u < n and 0 <= v < n):
                raise ContractViolation(f"edge ({u}, {v}) out of range for n={n}")
            if int(w) != w:
                raise ContractViolation(f"edge ({u}, {v}) has non-integer weight {w}")
            if w <= 0:
                raise ContractViolation(f"edge ({u}, {v}) has non-positive weight {w}")
        if triples:
            u, v, w = (np.asarray(col, dtype=np.int64) for col in zip(*triples))
        else:
            u = v = w = np.zeros(0, dtype=np.int64)
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        data = np.concatenate([w, w])
        return cls(sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr())

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.asarray(self.adjwgt, dtype=np.int64), self.adjncy, self.xadj),
            shape=(self.n, self.n),
        )

    def neighbors(self, v: int) -> Iterator[Tuple[int, int]]:
        lo, hi = self.xadj[v], self.xadj[v + 1]
        return zip(self.adjncy[lo:hi], self.adjwgt[lo:hi])

    def weighted_degree(self, v: int) -> int:
        return self._degree[v]

    def edges(self) -> Iterator[Tuple[int, int, int]]:
        """Each undirected edge once, as (u, v, w) with u < v."""
        for u in range(self.n):
            for v, w in self.neighbors(u):
                if u < v:
                    yield u, v, w

    def total_weight(self) -> int:
        return sum(self.adjwgt) // 2

    def component_labels(self) -> Tuple[int, List[int]]:
        count, labels = connected_components(self.to_csr(), directed=False)
        return int(count), labels.tolist()

    def is_connected(self) -> bool:
        return self.n <= 1 or self.component_labels()[0] == 1


def perfect_block_limit(n: int, k: int) -> int:
    return -(-n // k)


def block_limit(n: int, k: int, epsilon: float) -> int:
    """L_max = ceil((1 + eps) * ceil(n / k)), computed exactly."""
    return math.ceil((1 + Fraction(str(epsilon))) * perfect_block_limit(n, k))


class Partition:
    """Block assignment with cached block sizes and cut.

    Blocks are numbered 0..k-1. The cached cut is kept in step with every
    move; `verify` recomputes it from scratch. `max_block_size` is the
    target limit ceil((1 + imbalance) * ceil(n / k)); with the default
    imbalance of 0 it is the perfect-balance limit.
    """

    def __init__(self, graph: Graph, k: int, assign: Sequence[int], imbalance: float = 0.0):
        if k < 1:
            raise ContractViolation(f"k must be positive, got {k}")
        if len(assign) != graph.n:
            raise ContractViolation(f"assignment has {len(assign)} entries, graph has {graph.n} nodes")
        self.graph = graph
        self.k = k
        self.imbalance = imbalance
        self.assign: List[int] = list(assign)
        self.block_sizes: List[int] = [0] * k
        for v, b in enumerate(self.assign):
            if not 0 <= b < k:
                raise ContractViolation(f"node {v} assigned to block {b}, outside [0, {k})")
            self.block_sizes[b] += 1
        self.cut: int = compute_cut(graph, self)
        self.max_block_size = block_limit(graph.n, k, imbalance)

    def copy(self) -> "Partition":
        clone = Partition.__new__(Partition)
        clone.graph = self.graph
        clone.k = self.k
        clone.imbalance = self.imbalance
        clone.assign = list(self.assign)
        clone.block_sizes = list(self.block_sizes)
        clone.cut = self.cut
        clone.max_block_size = self.max_block_size
        return clone

    def retarget(self, imbalance: float) -> "Partition":
        if imbalance < 0:
            raise ContractViolation(f"imbalance must be non-negative, got {imbalance}")
        self.imbalance = imbalance
        self.max_block_size = block_limit(self.graph.n, self.k, imbalance)
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.k == other.k and self.assign == other.assign and self.cut == other.cut

    def connectivity(self, v: int, block: int) -> int:
        """Total weight of edges from v into `block`."""
        assign = self.assign
        return sum(w for u, w in self.graph.neighbors(v) if assign[u] == block)

    def gain(self, v: int, block: int) -> int:
        source = self.assign[v]
        if block == source:
            raise ContractViolation(f"node {v} is already in block {block}")
        to_target = 0
        to_source = 0
        assign = self.assign
        for u, w in self.graph.neighbors(v):
            b = assign[u]
            if b == block:
                to_target += w
            elif b == source:
                to_source += w
        return to_target - to_source

    def move(self, v: int, block: int) -> int:
        """Move v to `block`, returning the realised gain."""
        g = self.gain(v, block)
        self.block_sizes[self.assign[v]] -= 1
        self.block_sizes[block] += 1
        self.assign[v] = block
        self.cut -= g
        return g

    def apply_moves(self, moves: Sequence[Move]) -> int:
        nodes = [v for v, _ in moves]
        if len(set(nodes)) != len(nodes):
            raise ContractViolation("a node appears more than once in the move list")
        return sum(self.move(v, b) for v, b in moves)

    def slack(self, block: int) -> int:
        return max(0, self.max_block_size - self.block_sizes[block])

    def overload(self) -> int:
        limit = self.max_block_size
        return sum(max(0, size - limit) for size in self.block_sizes)

    def overloaded_blocks(self) -> List[int]:
        return [b for b, size in enumerate(self.block_sizes) if size > self.max_block_size]

    def is_balanced(self) -> bool:
        return max(self.block_sizes) <= self.max_block_size

    def is_perfectly_balanced(self) -> bool:
        return max(self.block_sizes) <= perfect_block_limit(self.graph.n, self.k)

    def block_nodes(self, block: int) -> List[int]:
        return [v for v, b in enumerate(self.assign) if b == block]

    def pair_boundaries(self) -> Dict[BlockPair, List[int]]:
        """For each directed pair (A, B): nodes of A with a neighbour in B."""
        boundary: Dict[BlockPair, List[int]] = {}
        assign = self.assign
        for v in range(self.graph.n):
            a = assign[v]
            seen = set()
            for u, _ in self.graph.neighbors(v):
                b = assign[u]
                if b != a and b not in seen:
                    seen.add(b)
                    boundary.setdefault((a, b), []).append(v)
        return boundary

    def boundary_nodes(self, source: int, target: int) -> List[int]:
        """Nodes of `source` with at least one neighbour in `target`."""
        assign = self.assign
        return [
            v for v in range(self.graph.n)
            if assign[v] == source and any(assign[u] == target for u, _ in self.graph.neighbors(v))
        ]

    def verify(self) -> None:
        sizes = [0] * self.k
        for b in self.assign:
            sizes[b] += 1
        if sizes != self.block_sizes:
            raise InvariantViolation(f"block sizes {self.block_sizes} differ from recount {sizes}")
        actual = compute_cut(self.graph, self)
        if actual != self.cut:
            raise InvariantViolation(f"cached cut {self.cut} differs from recount {actual}")

    def debug_verify(self) -> None:
        if settings.debug_checks:
            self.verify()


class EligibilityState:
    """Marks of one model-construction phase.

    A node is eligible iff neither it nor any neighbour is marked.
    """

    def __init__(self, graph: Graph):
        self.graph = graph
        self.marked = [False] * graph.n
        self._blocked = [False] * graph.n

    def mark(self, v: int) -> None:
        self.marked[v] = True
        self._blocked[v] = True
        for u, _ in self.graph.neighbors(v):
            self._blocked[u] = True

    def is_eligible(self, v: int) -> bool:
        return not self._blocked[v]

    def marked_nodes(self) -> List[int]:
        return [v for v, flag in enumerate(self.marked) if flag]

    def reset(self) -> None:
        self.marked = [False] * self.graph.n
        self._blocked = [False] * self.graph.n


def compute_cut(g: Graph, p: Partition) -> int:
    assign = p.assign
    return sum(w for u, v, w in g.edges() if assign[u] != assign[v])


def gain(g: Graph, p: Partition, v: int, block: int) -> int:
    return p.gain(v, block)


def quotient_graph(g: Graph, p: Partition) -> List[BlockPair]:
    """Directed quotient edges, both orientations, sorted."""
    pairs = set()
    assign = p.assign
    for u, v, _ in g.edges():
        a, b = assign[u], assign[v]
        if a != b:
            pairs.add((a, b))
            pairs.add((b, a))
    return sorted(pairs)


def apply_moves(p: Partition, moves: Sequence[Move]) -> Partition:
    p.apply_moves(moves)
    return p


def invert_moves(p: Partition, moves: Sequence[Move]) -> List[Move]:
    """Undo list for `moves`; call before applying them."""
    origin: Dict[int, int] = {v: p.assign[v] for v, _ in moves}
    return [(v, origin[v]) for v, _ in reversed(moves)]


class NodeMove(NamedTuple):
    node: int
    source: int
    target: int


def check_stale(p: Partition, moves: Sequence[NodeMove]) -> None:
    for move in moves:
        if p.assign[move.node] != move.source:
            raise StaleModelError(
                f"node {move.node} recorded in block {move.source} but is in block {p.assign[move.node]}"
            )


def size_deltas(k: int, moves: Sequence[NodeMove]) -> List[int]:
    delta = [0] * k
    for move in moves:
        delta[move.source] -= 1
        delta[move.target] += 1
    return delta


def capacity_violations(p: Partition, moves: Sequence[NodeMove]) -> List[int]:
    """Blocks that would grow and end above the target limit."""
    delta = size_deltas(p.k, moves)
    limit = p.max_block_size
    return [b for b in range(p.k) if delta[b] > 0 and p.block_sizes[b] + delta[b] > limit]


def apply_node_moves(p: Partition, moves: Sequence[NodeMove], predicted_delta: int) -> Partition:
    """Apply moves, checking the cut changes by exactly `predicted_delta`.

    No block may end above max(its previous size, target limit) and
    the total overload may not rise.
    """
    check_stale(p, moves)
    before_cut = p.cut
    before_sizes = list(p.block_sizes)
    before_overload = p.overload()
    p.apply_moves([(m.node, m.target) for m in moves])
    p.debug_verify()

    if p.cut - before_cut != predicted_delta:
        raise InvariantViolation(f"cut changed by {p.cut - before_cut}, model predicted {predicted_delta}")
    for block, size in enumerate(p.block_sizes):
        if size > max(before_sizes[block], p.max_block_size):
            raise InvariantViolation(f"block {block} grew to {size} beyond its limit")
    if p.overload() > before_overload:
        raise InvariantViolation(f"overload rose from {before_overload} to {p.overload()}")
    return p
