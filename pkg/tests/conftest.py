import random

import networkx as nx
import numpy as np
import pytest
from scipy.spatial import Delaunay

from kabar.services.graph_core import Graph, Partition


def nx_to_graph(nxg: nx.Graph) -> Graph:
    nodes = sorted(nxg.nodes)
    return Graph.from_edges(len(nodes), ((u, v, d.get("weight", 1)) for u, v, d in nxg.edges(data=True)))


def random_graph(n: int, m: int, seed: int, max_weight: int = 1) -> Graph:
    rng = random.Random(seed)
    nxg = nx.gnm_random_graph(n, m, seed=seed)
    for u, v in nxg.edges:
        nxg[u][v]["weight"] = rng.randint(1, max_weight)
    return nx_to_graph(nxg)


def random_connected_graph(n: int, extra: int, seed: int) -> Graph:
    """Random spanning tree plus up to `extra` random edges (capped at the complete graph)."""
    rng = random.Random(seed)
    extra = min(extra, n * (n - 1) // 2 - (n - 1))
    edges = set()
    for v in range(1, n):
        edges.add((rng.randrange(v), v))
    while len(edges) < n - 1 + extra:
        u, v = sorted(rng.sample(range(n), 2))
        edges.add((u, v))
    return Graph.from_edges(n, ((u, v, 1) for u, v in edges))


def random_disconnected_graph(sizes, seed: int) -> Graph:
    """Disjoint random connected components with shuffled node ids."""
    rng = random.Random(seed)
    order = list(range(sum(sizes)))
    rng.shuffle(order)
    edges = []
    offset = 0
    for i, size in enumerate(sizes):
        part = random_connected_graph(size, size // 2, seed=seed * 31 + i)
        edges += [(order[offset + u], order[offset + v], w) for u, v, w in part.edges()]
        offset += size
    return Graph.from_edges(sum(sizes), edges)


def delaunay_graph(n: int, seed: int) -> Graph:
    """Delaunay triangulation of n random points in the unit square."""
    points = np.random.default_rng(seed).random((n, 2))
    edges = set()
    for a, b, c in Delaunay(points).simplices:
        for u, v in ((a, b), (b, c), (a, c)):
            edges.add((int(min(u, v)), int(max(u, v))))
    return Graph.from_edges(n, ((u, v, 1) for u, v in sorted(edges)))


def random_assignment(n: int, k: int, seed: int, sizes=None):
    """Assignment with the given block sizes (default: as even as possible)."""
    if sizes is None:
        sizes = [n // k + (1 if b < n % k else 0) for b in range(k)]
    assign = [b for b, size in enumerate(sizes) for _ in range(size)]
    random.Random(seed).shuffle(assign)
    return assign


@pytest.fixture
def rng():
    return random.Random(7)


@pytest.fixture
def rotation_instance():
    """Three blocks of four; nodes 3, 7 and 11 each sit next to the following block only.

    Rotating them A -> B -> C -> A removes all six cut edges.
    """
    edges = [
        (0, 1), (1, 2), (0, 2),
        (4, 5), (5, 6), (4, 6),
        (8, 9), (9, 10), (8, 10),
        (3, 4), (3, 5),
        (7, 8), (7, 9),
        (11, 0), (11, 1),
    ]
    g = Graph.from_edges(12, ((u, v, 1) for u, v in edges))
    assign = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]
    return g, Partition(g, 3, assign)


@pytest.fixture
def three_blocks_of_four():
    """Three 4-cycles, one per block, with one edge between every pair of blocks."""
    edges = []
    for base in (0, 4, 8):
        edges += [(base, base + 1), (base + 1, base + 2), (base + 2, base + 3), (base + 3, base)]
    edges += [(1, 5), (6, 10), (11, 2)]
    g = Graph.from_edges(12, ((u, v, 1) for u, v in edges))
    return g, Partition(g, 3, [0] * 4 + [1] * 4 + [2] * 4)


@pytest.fixture
def two_cliques():
    """Two disjoint 5-cliques."""
    edges = [(u, v, 1) for base in (0, 5) for u in range(base, base + 5) for v in range(u + 1, base + 5)]
    return Graph.from_edges(10, edges)
