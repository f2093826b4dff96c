"""Graph containers, benchmark-format loading, and descriptor functions.

Descriptor functions assign a real value to every node or every edge of a
graph; extended to all simplices they induce the sublevel filtrations used
by :mod:`wkpi.persistence`.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

logger = logging.getLogger(__name__)


class DatasetFormatError(ValueError):
    """Raised when a benchmark dataset directory cannot be parsed."""


class Graph:
    """Undirected simple graph on nodes ``0 .. node_count-1``.

    Edges are canonicalized to ``(min, max)`` pairs and kept sorted.
    Self-loops and duplicate edges are rejected; instances are immutable
    after construction and safe to share across workers.
    """

    __slots__ = ("node_count", "edges", "_adjacency")

    def __init__(self, node_count: int, edges) -> None:
        if node_count < 0:
            raise ValueError("node_count must be non-negative")
        canon = []
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ValueError(f"edge ({u}, {v}) outside node range 0..{node_count - 1}")
            canon.append((u, v) if u < v else (v, u))
        canon.sort()
        for a, b in zip(canon, canon[1:]):
            if a == b:
                raise ValueError(f"duplicate edge {a}")
        self.node_count = node_count
        self.edges = tuple(canon)
        adj = [[] for _ in range(node_count)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        self._adjacency = tuple(tuple(sorted(a)) for a in adj)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int):
        """Sorted tuple of nodes adjacent to ``v``."""
        return self._adjacency[v]

    def degree(self, v: int) -> int:
        return len(self._adjacency[v])

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self._adjacency], dtype=np.intp)

    def edge_index(self) -> dict:
        """Mapping from canonical edge pair to its position in ``edges``."""
        return {e: i for i, e in enumerate(self.edges)}

    def hop_distances(self, source: int) -> np.ndarray:
        """BFS hop distances from ``source``; unreachable nodes get -1."""
        dist = np.full(self.node_count, -1, dtype=np.intp)
        dist[source] = 0
        frontier = [source]
        while frontier:
            nxt = []
            for u in frontier:
                for w in self._adjacency[u]:
                    if dist[w] < 0:
                        dist[w] = dist[u] + 1
                        nxt.append(w)
            frontier = nxt
        return dist

    def connected_component_count(self) -> int:
        seen = np.zeros(self.node_count, dtype=bool)
        count = 0
        for start in range(self.node_count):
            if seen[start]:
                continue
            count += 1
            stack = [start]
            seen[start] = True
            while stack:
                u = stack.pop()
                for w in self._adjacency[u]:
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
        return count

    def __repr__(self) -> str:
        return f"Graph(node_count={self.node_count}, edge_count={self.edge_count})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Graph)
            and self.node_count == other.node_count
            and self.edges == other.edges
        )

    def __hash__(self) -> int:
        return hash((self.node_count, self.edges))


@dataclass(frozen=True, eq=False)
class DescriptorValues:
    """Real values attached to every node (``kind="node"``) or edge (``kind="edge"``)."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("node", "edge"):
            raise ValueError(f"kind must be 'node' or 'edge', got {self.kind!r}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise ValueError("descriptor values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class SimplexValues:
    """Per-simplex filtration values: one value per node and per edge.

    ``edge_values[i]`` corresponds to ``graph.edges[i]``.
    """

    node_values: np.ndarray
    edge_values: np.ndarray

    def __post_init__(self):
        for name in ("node_values", "edge_values"):
            vals = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"{name} must be finite")
            vals.setflags(write=False)
            object.__setattr__(self, name, vals)

    def negated(self) -> "SimplexValues":
        return SimplexValues(-self.node_values, -self.edge_values)

    def global_max(self) -> float:
        pool = [v for v in (self.node_values, self.edge_values) if v.size]
        return float(max(v.max() for v in pool))

    def global_min(self) -> float:
        pool = [v for v in (self.node_values, self.edge_values) if v.size]
        return float(min(v.min() for v in pool))


@dataclass
class Dataset:
    """A labelled collection of graphs.

    Labels are class ids in ``{0 .. k-1}``. ``node_labels`` holds the raw
    per-graph integer node labels when the source provides them; they are
    stored but not used by the pipeline.
    """

    graphs: list
    labels: np.ndarray
    name: str = ""
    node_labels: list | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if len(self.graphs) == 0:
            raise ValueError("dataset must contain at least one graph")
        if self.labels.shape != (len(self.graphs),):
            raise ValueError("labels length must equal number of graphs")
        k = self.class_count
        present = np.unique(self.labels)
        if present[0] < 0 or present[-1] >= k:
            raise ValueError("labels must lie in 0..k-1")

    @property
    def class_count(self) -> int:
        return int(self.labels.max()) + 1

    def __len__(self) -> int:
        return len(self.graphs)


@dataclass(frozen=True)
class RicciConfig:
    """Settings for the lazy-random-walk curvature; ``laziness`` is the mass kept at the node."""

    laziness: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.laziness <= 1.0:
            raise ValueError("laziness must lie in [0, 1]")


def _read_int_lines(path: str, what: str) -> list:
    """Parse a benchmark text file of integer tuples (comma or space separated)."""
    if not os.path.isfile(path):
        raise DatasetFormatError(f"missing file: {path}")
    rows = []
    with open(path, "r", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.replace(",", " ").split()
            if not tokens:
                continue
            try:
                rows.append(tuple(int(t) for t in tokens))
            except ValueError:
                raise DatasetFormatError(
                    f"non-integer token in {what} at line {lineno}: {line.strip()!r}"
                ) from None
    return rows


def load_tu_dataset(dir_path: str, name: str) -> Dataset:
    """Load a benchmark dataset in the standard three-file text layout.

    Expects ``NAME_A.txt`` (1-indexed edge list), ``NAME_graph_indicator.txt``
    (node -> graph id), and ``NAME_graph_labels.txt`` in ``dir_path``.
    An optional ``NAME_node_labels.txt`` is parsed and stored.  Node indices
    are rebased to 0 per graph, raw class labels are remapped to ``0..k-1``
    in sorted order, and each undirected edge is kept once even when the
    file lists both directions.
    """
    prefix = os.path.join(dir_path, name)
    indicator_rows = _read_int_lines(f"{prefix}_graph_indicator.txt", "graph indicator")
    label_rows = _read_int_lines(f"{prefix}_graph_labels.txt", "graph labels")
    edge_rows = _read_int_lines(f"{prefix}_A.txt", "edge list")

    if not indicator_rows or not label_rows:
        raise DatasetFormatError("empty graph set")

    indicator = []
    for row in indicator_rows:
        if len(row) != 1:
            raise DatasetFormatError(f"graph indicator rows must hold one integer, got {row}")
        indicator.append(row[0])

    n_graphs = len(label_rows)
    graph_ids = sorted(set(indicator))
    if graph_ids != list(range(1, n_graphs + 1)):
        raise DatasetFormatError(
            f"graph indicator ids must be 1..{n_graphs}, found {graph_ids[:5]}..."
        )

    # global 1-indexed node id -> (graph index, local 0-based id)
    node_map = {}
    node_counts = [0] * n_graphs
    for global_id, gid in enumerate(indicator, start=1):
        g = gid - 1
        node_map[global_id] = (g, node_counts[g])
        node_counts[g] += 1

    edge_sets = [set() for _ in range(n_graphs)]
    dropped_self_loops = 0
    dropped_duplicates = 0
    for row in edge_rows:
        if len(row) != 2:
            raise DatasetFormatError(f"edge rows must hold two integers, got {row}")
        a, b = row
        if a not in node_map or b not in node_map:
            raise DatasetFormatError(f"edge ({a}, {b}) references an unknown node")
        ga, ua = node_map[a]
        gb, vb = node_map[b]
        if ga != gb:
            raise DatasetFormatError(
                f"edge ({a}, {b}) connects nodes of different graphs {ga + 1} and {gb + 1}"
            )
        if ua == vb:
            dropped_self_loops += 1
            continue
        e = (ua, vb) if ua < vb else (vb, ua)
        if e in edge_sets[ga]:
            dropped_duplicates += 1
        else:
            edge_sets[ga].add(e)
    if dropped_self_loops or dropped_duplicates:
        logger.info(
            "%s: dropped %d self-loop and %d duplicate edge entries",
            name,
            dropped_self_loops,
            dropped_duplicates,
        )

    graphs = [Graph(node_counts[g], sorted(edge_sets[g])) for g in range(n_graphs)]

    raw_labels = []
    for row in label_rows:
        if len(row) != 1:
            raise DatasetFormatError(f"graph label rows must hold one integer, got {row}")
        raw_labels.append(row[0])
    remap = {raw: i for i, raw in enumerate(sorted(set(raw_labels)))}
    labels = np.array([remap[r] for r in raw_labels], dtype=np.intp)

    node_labels = None
    node_label_path = f"{prefix}_node_labels.txt"
    if os.path.isfile(node_label_path):
        rows = _read_int_lines(node_label_path, "node labels")
        if len(rows) != len(indicator):
            raise DatasetFormatError("node label count does not match node count")
        node_labels = [[] for _ in range(n_graphs)]
        for (g, _), row in zip((node_map[i] for i in range(1, len(indicator) + 1)), rows):
            node_labels[g].append(row[0])

    return Dataset(graphs=graphs, labels=labels, name=name, node_labels=node_labels)


def write_tu_dataset(dataset: Dataset, dir_path: str, name: str) -> None:
    """Write a dataset back to the three-file benchmark text layout.

    Each undirected edge is written in both directions, matching the
    convention of the public benchmark files.
    """
    os.makedirs(dir_path, exist_ok=True)
    prefix = os.path.join(dir_path, name)
    with open(f"{prefix}_graph_indicator.txt", "w") as fh:
        for g, graph in enumerate(dataset.graphs, start=1):
            for _ in range(graph.node_count):
                fh.write(f"{g}\n")
    offsets = np.cumsum([0] + [g.node_count for g in dataset.graphs])
    with open(f"{prefix}_A.txt", "w") as fh:
        for g, graph in enumerate(dataset.graphs):
            base = offsets[g] + 1
            for u, v in graph.edges:
                fh.write(f"{base + u}, {base + v}\n")
                fh.write(f"{base + v}, {base + u}\n")
    with open(f"{prefix}_graph_labels.txt", "w") as fh:
        for label in dataset.labels:
            fh.write(f"{int(label)}\n")


def degree_function(g: Graph) -> DescriptorValues:
    """Node degree as a real-valued descriptor."""
    return DescriptorValues("node", g.degrees().astype(float))


def jaccard_index(g: Graph) -> DescriptorValues:
    """Neighborhood overlap ``|NN(u) & NN(v)| / |NN(u) | NN(v)|`` per edge.

    Open neighborhoods are used; the union always contains both endpoints,
    so the denominator is positive for every existing edge.
    """
    neighbor_sets = [set(g.neighbors(v)) for v in range(g.node_count)]
    values = np.empty(g.edge_count, dtype=float)
    for i, (u, v) in enumerate(g.edges):
        nu, nv = neighbor_sets[u], neighbor_sets[v]
        values[i] = len(nu & nv) / len(nu | nv)
    return DescriptorValues("edge", values)


def _wasserstein_hop(g: Graph, supports_u, masses_u, supports_v, masses_v, edge) -> float:
    """Exact 1-Wasserstein distance between two finitely supported measures.

    Transport costs are hop distances; solved as a transportation LP on the
    supports (sizes are at most degree + 1, so the LP is tiny).
    """
    dist_rows = []
    for s in supports_u:
        d = g.hop_distances(s)
        row = d[supports_v]
        if np.any(row < 0):
            raise ValueError(
                f"curvature undefined on edge {edge}: support nodes are disconnected"
            )
        dist_rows.append(row)
    cost = np.array(dist_rows, dtype=float)
    nu, nv = len(supports_u), len(supports_v)
    # flow variables f[i, j] >= 0 with row sums masses_u and column sums masses_v
    a_eq = np.zeros((nu + nv, nu * nv))
    for i in range(nu):
        a_eq[i, i * nv : (i + 1) * nv] = 1.0
    for j in range(nv):
        a_eq[nu + j, j::nv] = 1.0
    b_eq = np.concatenate([masses_u, masses_v])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transportation LP failed on edge {edge}: {res.message}")
    return float(res.fun)


def _walk_measure(g: Graph, u: int, laziness: float):
    """Support and masses of the lazy-walk measure around ``u``."""
    nbrs = g.neighbors(u)
    support = [u] + list(nbrs)
    masses = np.empty(len(support))
    masses[0] = laziness
    if nbrs:
        masses[1:] = (1.0 - laziness) / len(nbrs)
    return np.array(support, dtype=np.intp), masses


def ricci_curvature(g: Graph, cfg: RicciConfig = RicciConfig()) -> DescriptorValues:
    """Coarse Ricci curvature ``1 - W1(m_u, m_v) / d(u, v)`` per edge.

    ``m_u`` keeps mass ``laziness`` at ``u`` and spreads the rest uniformly
    over the neighbors; ``d`` and the transport costs are hop distances.
    """
    values = np.empty(g.edge_count, dtype=float)
    for i, (u, v) in enumerate(g.edges):
        su, mu = _walk_measure(g, u, cfg.laziness)
        sv, mv = _walk_measure(g, v, cfg.laziness)
        w1 = _wasserstein_hop(g, su, mu, sv, mv, (u, v))
        values[i] = 1.0 - w1  # d(u, v) == 1 for an existing edge
    return DescriptorValues("edge", values)


def extend_node_to_edge(g: Graph, f: DescriptorValues) -> SimplexValues:
    """Extend node values to edges by the maximum over the endpoints."""
    if f.kind != "node":
        raise ValueError(f"expected node-valued descriptor, got kind={f.kind!r}")
    if f.values.shape != (g.node_count,):
        raise ValueError("descriptor length does not match node count")
    if g.edge_count:
        pairs = np.array(g.edges, dtype=np.intp)
        edge_vals = np.maximum(f.values[pairs[:, 0]], f.values[pairs[:, 1]])
    else:
        edge_vals = np.empty(0)
    return SimplexValues(f.values.copy(), edge_vals)


def extend_edge_to_node(g: Graph, f: DescriptorValues) -> SimplexValues:
    """Extend edge values to nodes by the minimum over incident edges.

    Isolated nodes receive the global minimum edge value so they enter the
    filtration at the start instead of aborting the pipeline.
    """
    if f.kind != "edge":
        raise ValueError(f"expected edge-valued descriptor, got kind={f.kind!r}")
    if f.values.shape != (g.edge_count,):
        raise ValueError("descriptor length does not match edge count")
    if g.edge_count == 0:
        raise ValueError("cannot extend edge values on a graph with no edges")
    node_vals = np.full(g.node_count, np.inf)
    for i, (u, v) in enumerate(g.edges):
        val = f.values[i]
        node_vals[u] = min(node_vals[u], val)
        node_vals[v] = min(node_vals[v], val)
    node_vals[~np.isfinite(node_vals)] = f.values.min()
    return SimplexValues(node_vals, f.values.copy())


def superlevel_simplex_values(g: Graph, f: DescriptorValues) -> SimplexValues:
    """Per-simplex entry values for the top-down (superlevel) sweep.

    For node values, an edge joins the sweep once both endpoints are present
    (at the endpoint minimum).  For edge values, a node joins once any
    incident edge is present (at the incident maximum); isolated nodes get
    the global maximum edge value.
    """
    if f.kind == "node":
        if f.values.shape != (g.node_count,):
            raise ValueError("descriptor length does not match node count")
        if g.edge_count:
            pairs = np.array(g.edges, dtype=np.intp)
            edge_vals = np.minimum(f.values[pairs[:, 0]], f.values[pairs[:, 1]])
        else:
            edge_vals = np.empty(0)
        return SimplexValues(f.values.copy(), edge_vals)
    if f.values.shape != (g.edge_count,):
        raise ValueError("descriptor length does not match edge count")
    if g.edge_count == 0:
        raise ValueError("cannot extend edge values on a graph with no edges")
    node_vals = np.full(g.node_count, -np.inf)
    for i, (u, v) in enumerate(g.edges):
        val = f.values[i]
        node_vals[u] = max(node_vals[u], val)
        node_vals[v] = max(node_vals[v], val)
    node_vals[~np.isfinite(node_vals)] = f.values.max()
    return SimplexValues(node_vals, f.values.copy())
