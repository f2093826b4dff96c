"""Filtrations of graphs and 0/1-dimensional persistence diagrams.

Two computation routes are provided: a union-find sweep for ordinary
0-dimensional persistence, and an exhaustive column reduction of the
boundary matrix over the two-element field for the extended diagram
(which also records cycles).  The union-find route is the fast path and
is validated against the reduction in the test suite.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .graphs import Graph, SimplexValues


class MonotonicityError(ValueError):
    """Raised when an edge value is below one of its endpoint values."""


@dataclass(frozen=True, order=True)
class FiltrationEntry:
    value: float
    dim: int
    index: int  # node id (dim 0) or edge position (dim 1); also the tie-breaker
    key: tuple  # (v,) or (u, v)


@dataclass(frozen=True)
class Filtration:
    """Totally ordered simplices of a sublevel sweep.

    Values are non-decreasing along the order, every face precedes its
    cofaces, and ties are broken by dimension then ascending simplex index.
    """

    entries: tuple

    def __post_init__(self):
        prev = None
        for e in self.entries:
            if prev is not None and (e.value, e.dim, e.index) < (prev.value, prev.dim, prev.index):
                raise ValueError("filtration entries are out of order")
            prev = e

    def __len__(self) -> int:
        return len(self.entries)

    def max_value(self) -> float:
        return self.entries[-1].value if self.entries else float("nan")


@dataclass(frozen=True, order=True)
class PersistencePoint:
    birth: float
    death: float
    dim: int
    essential: bool

    @property
    def persistence(self) -> float:
        return abs(self.death - self.birth)


@dataclass(frozen=True)
class PersistenceDiagram:
    """Multiset of (birth, death, dim, essential) points for one graph."""

    points: tuple

    def __len__(self) -> int:
        return len(self.points)

    def of_dim(self, dim: int) -> "PersistenceDiagram":
        return PersistenceDiagram(tuple(p for p in self.points if p.dim == dim))

    def without_essential_dim0(self) -> "PersistenceDiagram":
        return PersistenceDiagram(
            tuple(p for p in self.points if not (p.essential and p.dim == 0))
        )

    def finite_pairs(self, dim: int = 0):
        """Sorted (birth, death) pairs of the non-essential points of a dimension."""
        return sorted((p.birth, p.death) for p in self.points if p.dim == dim and not p.essential)

    def birth_death_array(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 2))
        return np.array([(p.birth, p.death) for p in self.points], dtype=float)

    def as_multiset(self):
        return sorted((p.birth, p.death, p.dim, p.essential) for p in self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PersistenceDiagram):
            return NotImplemented
        return self.as_multiset() == other.as_multiset()

    def __hash__(self):
        return hash(tuple(self.as_multiset()))


def build_sublevel_filtration(g: Graph, values: SimplexValues) -> Filtration:
    """Order all simplices of ``g`` by (value, dimension, index).

    Raises :class:`MonotonicityError` naming the first edge whose value is
    below one of its endpoint values, since such values do not define a
    sublevel sweep.
    """
    nv, ev = values.node_values, values.edge_values
    if nv.shape != (g.node_count,) or ev.shape != (g.edge_count,):
        raise ValueError("simplex value arrays do not match the graph")
    for i, (u, v) in enumerate(g.edges):
        if ev[i] < nv[u] or ev[i] < nv[v]:
            raise MonotonicityError(
                f"edge ({u}, {v}) has value {ev[i]} below an endpoint value"
            )
    entries = [FiltrationEntry(float(nv[v]), 0, v, (v,)) for v in range(g.node_count)]
    entries.extend(
        FiltrationEntry(float(ev[i]), 1, i, e) for i, e in enumerate(g.edges)
    )
    entries.sort()
    return Filtration(tuple(entries))


class _UnionFind:
    """Union-find tracking the oldest member of each component (elder rule)."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.birth_order = [0] * n  # filtration position at which the root was created
        self.birth_value = [0.0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root


def compute_0dim_sublevel(filt: Filtration) -> PersistenceDiagram:
    """Ordinary 0-dimensional pairs of a sublevel sweep via union-find.

    On a merge the older component survives (ties broken by earlier
    filtration order).  Each connected component additionally yields one
    essential point born at the component minimum; its death is capped at
    the sweep's global maximum so every point is finite.
    """
    n = max((e.index for e in filt.entries if e.dim == 0), default=-1) + 1
    uf = _UnionFind(n)
    points = []
    seen_nodes = set()
    for pos, e in enumerate(filt.entries):
        if e.dim == 0:
            v = e.index
            uf.birth_order[v] = pos
            uf.birth_value[v] = e.value
            seen_nodes.add(v)
        else:
            u, v = e.key
            ru, rv = uf.find(u), uf.find(v)
            if ru == rv:
                continue  # cycle edge: no 0-dim event
            if uf.birth_order[ru] > uf.birth_order[rv]:
                ru, rv = rv, ru  # ru is now the elder
            points.append(
                PersistencePoint(uf.birth_value[rv], e.value, dim=0, essential=False)
            )
            uf.parent[rv] = ru
    cap = filt.max_value()
    for v in sorted(seen_nodes):
        if uf.find(v) == v:
            points.append(PersistencePoint(uf.birth_value[v], cap, dim=0, essential=True))
    return PersistenceDiagram(tuple(points))


def compute_0dim_superlevel(g: Graph, values: SimplexValues) -> PersistenceDiagram:
    """Ordinary 0-dimensional pairs of the top-down sweep.

    Equals the sublevel diagram of the negated values with births and
    deaths negated back, so points record true function values (finite
    pairs have birth >= death, essentials are capped at the global
    minimum).  The input must satisfy edge value <= endpoint values.
    """
    filt = build_sublevel_filtration(g, values.negated())
    down = compute_0dim_sublevel(filt)
    return PersistenceDiagram(
        tuple(
            PersistencePoint(-p.birth, -p.death, p.dim, p.essential) for p in down.points
        )
    )


def _reduce_columns(columns):
    """Left-to-right reduction over Z/2; returns {column: paired low row}."""
    low_owner = {}
    pairs = {}
    for j, col in enumerate(columns):
        while col:
            low = max(col)
            owner = low_owner.get(low)
            if owner is None:
                low_owner[low] = j
                pairs[j] = low
                break
            col ^= columns[owner]
    return pairs


def compute_extended_persistence(
    g: Graph,
    values: SimplexValues,
    superlevel_values: SimplexValues | None = None,
) -> PersistenceDiagram:
    """Extended persistence diagram of a graph via boundary-matrix reduction.

    The extended filtration runs the ascending (sublevel) pass over the
    simplices of ``g`` and then a descending pass of coned-off simplices
    ordered by decreasing superlevel entry value.  Pairs are reported as:

    * ordinary dim-0 points (ascending/ascending), matching the union-find
      sweep's finite pairs;
    * extended dim-0 points, one per connected component, from the
      component minimum to the component maximum, flagged essential;
    * extended dim-1 points, one per independent cycle, flagged essential
      (these may lie below the diagonal);
    * relative dim-1 points (descending/descending), mirroring the finite
      pairs of the top-down sweep.

    ``superlevel_values`` gives each simplex's entry value for the
    descending pass and must satisfy edge value <= endpoint values; by
    default nodes keep their ascending value and each edge gets the
    endpoint minimum, which is the top-down sweep of a node-valued
    descriptor.  For edge-valued descriptors pass the values from
    :func:`wkpi.graphs.superlevel_simplex_values`.
    """
    nv, ev = values.node_values, values.edge_values
    if nv.shape != (g.node_count,) or ev.shape != (g.edge_count,):
        raise ValueError("simplex value arrays do not match the graph")
    if superlevel_values is None:
        if g.edge_count:
            pairs_arr = np.array(g.edges, dtype=np.intp)
            sup_edges = np.minimum(nv[pairs_arr[:, 0]], nv[pairs_arr[:, 1]])
        else:
            sup_edges = np.empty(0)
        superlevel_values = SimplexValues(nv.copy(), sup_edges)
    snv, sev = superlevel_values.node_values, superlevel_values.edge_values
    if snv.shape != (g.node_count,) or sev.shape != (g.edge_count,):
        raise ValueError("superlevel value arrays do not match the graph")
    for i, (u, v) in enumerate(g.edges):
        if sev[i] > snv[u] or sev[i] > snv[v]:
            raise MonotonicityError(
                f"superlevel edge ({u}, {v}) value {sev[i]} above an endpoint value"
            )

    ascending = build_sublevel_filtration(g, values).entries
    descending = sorted(
        [(-float(snv[v]), 0, v, (v,)) for v in range(g.node_count)]
        + [(-float(sev[i]), 1, i, e) for i, e in enumerate(g.edges)]
    )

    # total order: cone apex, ascending simplices, descending coned simplices
    apex = 0
    asc_pos = {}
    columns = [set()]  # apex column
    info = [("apex", 0, 0.0)]  # (pass, dim, value) per position
    for e in ascending:
        asc_pos[(e.dim, e.index)] = len(columns)
        col = set() if e.dim == 0 else {asc_pos[(0, e.key[0])], asc_pos[(0, e.key[1])]}
        columns.append(col)
        info.append(("asc", e.dim, e.value))
    desc_pos = {}
    for negval, dim, index, key in descending:
        desc_pos[(dim, index)] = len(columns)
        if dim == 0:
            col = {asc_pos[(0, index)], apex}
        else:
            u, v = key
            col = {asc_pos[(1, index)], desc_pos[(0, u)], desc_pos[(0, v)]}
        columns.append(col)
        info.append(("desc", dim, -negval))

    pairs = _reduce_columns(columns)

    points = []
    for j, low in sorted(pairs.items()):
        i = low
        pass_i, dim_i, val_i = info[i]
        pass_j, dim_j, val_j = info[j]
        if pass_i == "apex":
            continue
        if pass_i == "asc" and pass_j == "asc":
            points.append(PersistencePoint(val_i, val_j, dim=dim_i, essential=False))
        elif pass_i == "asc":
            points.append(PersistencePoint(val_i, val_j, dim=dim_i, essential=True))
        else:
            points.append(PersistencePoint(val_i, val_j, dim=1, essential=False))
    return PersistenceDiagram(tuple(points))


def merge_diagrams(a: PersistenceDiagram, b: PersistenceDiagram) -> PersistenceDiagram:
    """Multiset union preserving dimensions and flags."""
    return PersistenceDiagram(a.points + b.points)


def diagram_to_csv(diagram: PersistenceDiagram, path: str) -> None:
    """Write one point per row under the header ``birth,death,dim,essential``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["birth", "death", "dim", "essential"])
        for p in diagram.points:
            writer.writerow([repr(float(p.birth)), repr(float(p.death)), int(p.dim), int(p.essential)])


def diagram_from_csv(path: str) -> PersistenceDiagram:
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["birth", "death", "dim", "essential"]:
            raise ValueError(f"unexpected diagram CSV header in {path}: {header}")
        points = []
        for row in reader:
            if not row:
                continue
            birth, death, dim, essential = row
            points.append(
                PersistencePoint(float(birth), float(death), int(dim), bool(int(essential)))
            )
    return PersistenceDiagram(tuple(points))
