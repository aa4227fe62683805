import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import networkx as nx

from kabar.errors import InvariantViolation, NegativeCycleError

logger = logging.getLogger(__name__)

INFINITE = math.inf


@dataclass(frozen=True)
class ModelEdge:
    id: int
    tail: int
    head: int
    weight: int
    payload: Any = None

    @property
    def structural(self) -> bool:
        return self.payload is None


class ModelGraph:
    """Directed multigraph with integer weights and per-edge payloads.

    Node ids are dense. Edges can be removed (conflict resolution) but ids are
    never reused.
    """

    def __init__(self):
        self.labels: List[Any] = []
        self.edges: List[ModelEdge] = []
        self.out_edges: List[List[int]] = []
        self.removed: set = set()

    @property
    def num_nodes(self) -> int:
        return len(self.labels)

    def add_node(self, label: Any = None) -> int:
        self.labels.append(label)
        self.out_edges.append([])
        return len(self.labels) - 1

    def add_edge(self, tail: int, head: int, weight: int, payload: Any = None) -> ModelEdge:
        edge = ModelEdge(len(self.edges), tail, head, weight, payload)
        self.edges.append(edge)
        self.out_edges[tail].append(edge.id)
        return edge

    def remove_edge(self, edge: ModelEdge) -> None:
        self.removed.add(edge.id)

    def active_edges(self):
        removed = self.removed
        return (e for e in self.edges if e.id not in removed)

    def outgoing(self, node: int):
        removed = self.removed
        edges = self.edges
        return (edges[i] for i in self.out_edges[node] if i not in removed)

    def edge_count(self) -> int:
        return len(self.edges) - len(self.removed)


@dataclass
class CycleResult:
    edges: List[ModelEdge]
    weight: int

    @property
    def nodes(self) -> List[int]:
        return [e.tail for e in self.edges]

    def payload_edges(self) -> List[ModelEdge]:
        return [e for e in self.edges if not e.structural]

    def validate(self) -> None:
        for current, following in zip(self.edges, self.edges[1:] + self.edges[:1]):
            if current.head != following.tail:
                raise InvariantViolation(f"edges {current.id} and {following.id} are not consecutive")
        total = sum(e.weight for e in self.edges)
        if total != self.weight:
            raise InvariantViolation(f"cycle weight {self.weight} differs from edge sum {total}")


@dataclass
class ModelPath:
    edges: List[ModelEdge]
    weight: int

    def payload_edges(self) -> List[ModelEdge]:
        return [e for e in self.edges if not e.structural]


@dataclass
class Potentials:
    distance: List[float]
    parent: List[Optional[ModelEdge]] = field(default_factory=list)

    def reachable(self, node: int) -> bool:
        return self.distance[node] != INFINITE

    def reduced_cost(self, edge: ModelEdge) -> float:
        return edge.weight + self.distance[edge.tail] - self.distance[edge.head]


def _label(mg: ModelGraph, source: int) -> Tuple[List[float], List[Optional[ModelEdge]], Optional[CycleResult]]:
    """FIFO Bellman-Ford with subtree disassembly.

    Whenever the label of a node drops, its whole shortest-path subtree is
    detached and its nodes leave the queue. If the tail of the improving edge
    lies inside that subtree, the parent chain closes a negative cycle.

    The distance-update variant (lowering the labels of the detached subtree
    by the improvement instead of leaving them stale) is not implemented;
    detached nodes keep their stale labels until an edge relaxes them again,
    which costs extra relaxations but not correctness.
    """
    n = mg.num_nodes
    dist: List[float] = [INFINITE] * n
    parent: List[Optional[ModelEdge]] = [None] * n
    children: List[set] = [set() for _ in range(n)]
    in_tree = [False] * n
    in_queue = [False] * n

    dist[source] = 0
    in_tree[source] = True
    in_queue[source] = True
    queue = deque([source])

    while queue:
        u = queue.popleft()
        if not in_queue[u]:
            continue
        in_queue[u] = False
        if not in_tree[u]:
            continue
        du = dist[u]
        for edge in mg.outgoing(u):
            v = edge.head
            candidate = du + edge.weight
            if candidate >= dist[v]:
                continue

            # subtree disassembly
            subtree = []
            stack = [v]
            closes_cycle = False
            while stack:
                x = stack.pop()
                if x == u:
                    closes_cycle = True
                    break
                subtree.append(x)
                stack.extend(children[x])
            if closes_cycle:
                return dist, parent, _extract_cycle(parent, u, v, edge)

            for x in subtree:
                children[x].clear()
                if x != v:
                    in_tree[x] = False
                    in_queue[x] = False
                    parent[x] = None
            old = parent[v]
            if old is not None:
                children[old.tail].discard(v)

            dist[v] = candidate
            parent[v] = edge
            children[u].add(v)
            in_tree[v] = True
            if not in_queue[v]:
                in_queue[v] = True
                queue.append(v)

    return dist, parent, None


def _extract_cycle(parent: List[Optional[ModelEdge]], u: int, v: int, closing: ModelEdge) -> CycleResult:
    chain: List[ModelEdge] = []
    x = u
    while x != v:
        edge = parent[x]
        chain.append(edge)
        x = edge.tail
    edges = list(reversed(chain)) + [closing]
    cycle = CycleResult(edges=edges, weight=sum(e.weight for e in edges))
    cycle.validate()
    return cycle


def detect_negative_cycle(mg: ModelGraph, s: int) -> Optional[CycleResult]:
    _, _, cycle = _label(mg, s)
    if cycle is not None:
        if cycle.weight >= 0:
            raise InvariantViolation(f"extracted cycle has non-negative weight {cycle.weight}")
        logger.debug(f"Negative cycle of weight {cycle.weight} over {len(cycle.edges)} model edges")
    return cycle


def shortest_path_tree(mg: ModelGraph, s: int) -> Potentials:
    dist, parent, cycle = _label(mg, s)
    if cycle is not None:
        raise NegativeCycleError(cycle)
    return Potentials(distance=dist, parent=parent)


def find_zero_weight_cycle(mg: ModelGraph, potentials: Potentials, rng) -> Optional[CycleResult]:
    """Random-walk a zero-weight cycle out of the tight subgraph.

    Edges with positive reduced cost cannot lie on a zero-weight cycle, so only
    tight edges between reachable nodes are kept; any strongly connected
    component with more than one node contains such a cycle.
    """
    tight: Dict[int, List[ModelEdge]] = {}
    digraph = nx.DiGraph()
    for edge in mg.active_edges():
        if edge.tail == edge.head:
            continue
        if not (potentials.reachable(edge.tail) and potentials.reachable(edge.head)):
            continue
        if potentials.reduced_cost(edge) == 0:
            tight.setdefault(edge.tail, []).append(edge)
            digraph.add_edge(edge.tail, edge.head)

    components = [sorted(c) for c in nx.strongly_connected_components(digraph) if len(c) > 1]
    if not components:
        return None
    components.sort()
    component = rng.choice(components)
    members = set(component)

    node = rng.choice(component)
    walk: List[ModelEdge] = []
    position = {node: 0}
    for _ in range(len(component)):
        options = [e for e in tight[node] if e.head in members]
        edge = rng.choice(options)
        walk.append(edge)
        node = edge.head
        if node in position:
            edges = walk[position[node]:]
            cycle = CycleResult(edges=edges, weight=sum(e.weight for e in edges))
            cycle.validate()
            if cycle.weight != 0:
                raise InvariantViolation(f"tight cycle has weight {cycle.weight}")
            return cycle
        position[node] = len(walk)

    raise InvariantViolation(f"random walk left a component of size {len(component)} without closing a cycle")


def shortest_s_t_path(mg: ModelGraph, s: int, t: int) -> Optional[ModelPath]:
    potentials = shortest_path_tree(mg, s)
    if not potentials.reachable(t):
        return None
    chain: List[ModelEdge] = []
    node = t
    while node != s:
        edge = potentials.parent[node]
        chain.append(edge)
        node = edge.tail
    edges = list(reversed(chain))
    return ModelPath(edges=edges, weight=sum(e.weight for e in edges))


def payload_moves(edges: List[ModelEdge]) -> list:
    """Concatenated node moves carried by the non-structural edges."""
    moves = []
    for edge in edges:
        if not edge.structural:
            moves.extend(edge.payload.node_moves())
    return moves
