import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from kabar.errors import GraphFormatError, PartitionFormatError
from kabar.services.graph_core import Graph, Partition

logger = logging.getLogger(__name__)

Source = Union[bytes, str]

# keeps every weight sum, cut included, inside int64
MAX_TOTAL_WEIGHT = 2**62


def _text(data: Source) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise GraphFormatError(f"not valid UTF-8 text: {exc}") from exc
    return data


def _int(token: str, line: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        pass
    try:
        value = float(token)
    except ValueError:
        raise GraphFormatError(f"{what} '{token}' is not a number", line) from None
    raise GraphFormatError(f"{what} '{token}' is not an integer (value {value})", line)


def _parse_header(tokens: List[str], line: int) -> Tuple[int, int, bool, int]:
    """n, m, has_edge_weights, node weights per line."""
    if len(tokens) < 2 or len(tokens) > 4:
        raise GraphFormatError("header must read 'n m [fmt [ncon]]'", line)
    n = _int(tokens[0], line, "node count")
    m = _int(tokens[1], line, "edge count")
    if n < 0 or m < 0:
        raise GraphFormatError("node and edge counts must be non-negative", line)

    fmt = tokens[2] if len(tokens) >= 3 else "0"
    if len(fmt) > 3 or any(c not in "01" for c in fmt):
        raise GraphFormatError(f"unsupported fmt '{fmt}'", line)
    node_sizes, node_weights, edge_weights = (c == "1" for c in fmt.zfill(3))
    if node_sizes:
        raise GraphFormatError("node sizes are not supported", line)
    ncon = 0
    if node_weights:
        ncon = _int(tokens[3], line, "ncon") if len(tokens) == 4 else 1
        if ncon < 1:
            raise GraphFormatError("ncon must be positive", line)
    elif len(tokens) == 4:
        raise GraphFormatError("ncon given without node weights", line)
    return n, m, edge_weights, ncon


def parse_graph(data: Source) -> Graph:
    """Parse a METIS graph file (1-based neighbour ids, '%' comments).

    Parallel edges are merged by summing their weights and self-loops are
    dropped. Node weights are accepted only when they are all 1.
    """
    header: Optional[Tuple[int, int, bool, int]] = None
    rows: List[int] = []
    cols: List[int] = []
    weights: List[int] = []
    node_line: List[int] = []
    total = 0

    for number, raw in enumerate(_text(data).splitlines(), start=1):
        if raw.lstrip().startswith("%"):
            continue
        tokens = raw.split()
        if header is None:
            if not tokens:
                continue
            header = _parse_header(tokens, number)
            continue

        n, _, edge_weights, ncon = header
        if len(node_line) == n:
            if tokens:
                raise GraphFormatError(f"more than {n} node lines", number)
            continue
        u = len(node_line)
        node_line.append(number)

        if len(tokens) < ncon:
            raise GraphFormatError(f"expected {ncon} node weights", number)
        for token in tokens[:ncon]:
            if _int(token, number, "node weight") != 1:
                raise GraphFormatError("only unit node weights are supported", number)
        tokens = tokens[ncon:]
        step = 2 if edge_weights else 1
        if len(tokens) % step:
            raise GraphFormatError("neighbour without a weight", number)
        for i in range(0, len(tokens), step):
            v = _int(tokens[i], number, "neighbour id")
            if not 1 <= v <= n:
                raise GraphFormatError(f"neighbour id {v} outside [1, {n}]", number)
            w = _int(tokens[i + 1], number, "edge weight") if edge_weights else 1
            if w <= 0:
                raise GraphFormatError(f"edge weight {w} must be positive", number)
            total += w
            if total > MAX_TOTAL_WEIGHT:
                raise GraphFormatError(f"edge weights sum beyond {MAX_TOTAL_WEIGHT}", number)
            rows.append(u)
            cols.append(v - 1)
            weights.append(w)

    if header is None:
        raise GraphFormatError("missing header")
    n, m, _, _ = header
    if len(node_line) != n:
        raise GraphFormatError(f"header announces {n} nodes, found {len(node_line)} node lines")

    adjacency = sp.coo_matrix(
        (np.asarray(weights, dtype=np.int64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(n, n),
    ).tocsr()
    adjacency.sum_duplicates()
    adjacency.setdiag(0)
    adjacency.eliminate_zeros()

    asymmetric = (adjacency != adjacency.T).tocoo()
    if asymmetric.nnz:
        u = int(asymmetric.row.min())
        v = int(asymmetric.col[asymmetric.row == u].min())
        raise GraphFormatError(
            f"edge {u + 1} -> {v + 1} has weight {adjacency[u, v]} but {v + 1} -> {u + 1} has weight {adjacency[v, u]}",
            node_line[u],
        )
    if adjacency.nnz // 2 != m:
        raise GraphFormatError(f"header announces {m} edges, adjacency lists hold {adjacency.nnz // 2}")

    graph = Graph(adjacency)
    logger.debug(f"Parsed graph with {graph.n} nodes and {graph.m} edges")
    return graph


def emit_graph(g: Graph) -> str:
    """METIS text; edge weights are written only when some weight is not 1."""
    weighted = any(w != 1 for w in g.adjwgt)
    lines = [f"{g.n} {g.m} 1" if weighted else f"{g.n} {g.m}"]
    for v in range(g.n):
        if weighted:
            lines.append(" ".join(f"{u + 1} {w}" for u, w in g.neighbors(v)))
        else:
            lines.append(" ".join(str(u + 1) for u, _ in g.neighbors(v)))
    return "\n".join(lines) + "\n"


def read_graph(path: Union[str, Path]) -> Graph:
    return parse_graph(Path(path).read_bytes())


def write_graph(g: Graph, path: Union[str, Path]) -> None:
    Path(path).write_text(emit_graph(g))


def parse_partition(data: Source, n: int, k: int) -> List[int]:
    """One 0-based block id per line; blank lines are ignored."""
    try:
        text = _text(data)
    except GraphFormatError as exc:
        raise PartitionFormatError(str(exc)) from exc
    assign: List[int] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        token = raw.strip()
        if not token:
            continue
        try:
            block = int(token)
        except ValueError:
            raise PartitionFormatError(f"block id '{token}' is not an integer", number) from None
        if not 0 <= block < k:
            raise PartitionFormatError(f"block id {block} outside [0, {k})", number)
        assign.append(block)
    if len(assign) != n:
        raise PartitionFormatError(f"expected {n} block ids, found {len(assign)}")
    return assign


def read_partition(path: Union[str, Path], g: Graph, k: int) -> Partition:
    return Partition(g, k, parse_partition(Path(path).read_bytes(), g.n, k))


def emit_partition(p: Partition) -> str:
    return "".join(f"{block}\n" for block in p.assign)


def write_partition(p: Partition, path: Union[str, Path]) -> None:
    Path(path).write_text(emit_partition(p))
