"""Undirected weighted graphs on integer point ids.

Edges are stored as three aligned arrays ``(u, v, w)`` with ``u < v``, one
row per unordered pair, sorted by ``(u, v)``. Graph values are treated as
immutable: every operation returns a new graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree


class DisjointSet:
    """Union-find over ``0..size-1`` with union by size and path halving."""

    def __init__(self, size: int):
        self.parent = list(range(size))
        self.size = [1] * size

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> int:
        """Merge the sets of ``a`` and ``b``; return the surviving root."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra

    def same(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)


_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_F = np.zeros(0, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    vertices: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @classmethod
    def from_edges(cls, vertices, u=None, v=None, w=None, *, check: bool = True) -> "WeightedGraph":
        """Build a canonical graph.

        Pairs are oriented ``u < v``; repeated pairs keep their minimum
        weight. With ``check`` the invariants (no self-loops, finite
        non-negative weights, endpoints among the vertices) are enforced.
        """
        vertices = np.unique(np.asarray(vertices, dtype=np.int64))
        if u is None:
            return cls(vertices, _EMPTY_I, _EMPTY_I, _EMPTY_F)
        u = np.asarray(u, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=np.int64).ravel()
        w = np.asarray(w, dtype=np.float64).ravel()
        if check:
            if np.any(u == v):
                raise ValueError("self-loops are not allowed")
            if len(w) and (not np.all(np.isfinite(w)) or np.min(w) < 0):
                raise ValueError("edge weights must be finite and non-negative")
            ends = np.concatenate([u, v])
            if len(ends) and not np.all(np.isin(ends, vertices)):
                raise ValueError("edge endpoint outside the vertex set")
        lo = np.minimum(u, v)
        hi = np.maximum(u, v)
        order = np.lexsort((w, hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        if len(lo) > 1:
            keep = np.ones(len(lo), dtype=bool)
            keep[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
            lo, hi, w = lo[keep], hi[keep], w[keep]
        return cls(vertices, lo, hi, w)

    @property
    def n_edges(self) -> int:
        return len(self.u)

    def edge_dict(self) -> dict[tuple[int, int], float]:
        return {(int(a), int(b)): float(c) for a, b, c in zip(self.u, self.v, self.w)}

    def degrees(self) -> np.ndarray:
        """Degree of each vertex, aligned with ``vertices``."""
        idx = np.searchsorted(self.vertices, np.concatenate([self.u, self.v]))
        return np.bincount(idx, minlength=len(self.vertices))

    def weight_set(self) -> np.ndarray:
        return np.unique(self.w)


def slice_graph(G: WeightedGraph, eps: float) -> WeightedGraph:
    """Same vertices, edges of weight ``<= eps``."""
    if eps < 0:
        raise ValueError("slice scale must be non-negative")
    keep = G.w <= eps
    return WeightedGraph(G.vertices, G.u[keep], G.v[keep], G.w[keep])


def degree_filter(G: WeightedGraph, k: int) -> WeightedGraph:
    """Subgraph induced by vertices whose degree in ``G`` is at least ``k``.

    Applied once; degrees are not recomputed after removal.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    keep_v = G.vertices[G.degrees() >= k]
    keep_e = np.isin(G.u, keep_v) & np.isin(G.v, keep_v)
    return WeightedGraph(keep_v, G.u[keep_e], G.v[keep_e], G.w[keep_e])


def graph_union(G: WeightedGraph, H: WeightedGraph) -> WeightedGraph:
    """Vertex and edge union; an edge present in both keeps the smaller weight."""
    return WeightedGraph.from_edges(
        np.concatenate([G.vertices, H.vertices]),
        np.concatenate([G.u, H.u]),
        np.concatenate([G.v, H.v]),
        np.concatenate([G.w, H.w]),
        check=False,
    )


@dataclass(frozen=True, eq=False)
class ComponentPartition:
    """``labels[i]`` is the smallest vertex id in the component of ``ids[i]``."""

    ids: np.ndarray
    labels: np.ndarray

    def __getitem__(self, vid: int) -> int:
        return int(self.labels[np.searchsorted(self.ids, vid)])

    @property
    def n_components(self) -> int:
        return len(np.unique(self.labels))

    def groups(self) -> list[np.ndarray]:
        order = np.lexsort((self.ids, self.labels))
        lab = self.labels[order]
        cuts = np.flatnonzero(np.diff(lab)) + 1
        return np.split(self.ids[order], cuts) if len(order) else []

    def same_partition(self, other: "ComponentPartition") -> bool:
        return np.array_equal(self.ids, other.ids) and np.array_equal(self.labels, other.labels)


def _local_edges(G: WeightedGraph):
    return np.searchsorted(G.vertices, G.u), np.searchsorted(G.vertices, G.v)


def canonical_labels(raw: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Map arbitrary component labels to the smallest id of each component."""
    if len(raw) == 0:
        return np.zeros(0, dtype=np.int64)
    _, inv = np.unique(raw, return_inverse=True)
    inv = inv.ravel()
    mins = np.full(inv.max() + 1, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(mins, inv, ids)
    return mins[inv]


def components(G: WeightedGraph) -> ComponentPartition:
    nv = len(G.vertices)
    if nv == 0:
        return ComponentPartition(G.vertices, np.zeros(0, dtype=np.int64))
    a, b = _local_edges(G)
    mat = coo_matrix((np.ones(len(a), dtype=np.int8), (a, b)), shape=(nv, nv))
    _, raw = connected_components(mat, directed=False)
    return ComponentPartition(G.vertices, canonical_labels(raw, G.vertices))


def edge_order(G: WeightedGraph) -> np.ndarray:
    """Edge indices sorted by ``(weight, u, v)``; the global tie-break rule."""
    return np.lexsort((G.v, G.u, G.w))


def min_spanning_forest(G: WeightedGraph) -> WeightedGraph:
    """Minimum spanning forest, ties broken towards the smaller ``(u, v)`` pair.

    The edges are replaced by their distinct ranks under ``(w, u, v)`` before
    handing them to scipy's Kruskal, which makes the forest unique and keeps
    zero-weight edges (scipy drops explicit zeros).
    """
    nv = len(G.vertices)
    if G.n_edges == 0 or nv == 0:
        return WeightedGraph(G.vertices, _EMPTY_I, _EMPTY_I, _EMPTY_F)
    order = edge_order(G)
    rank = np.empty(G.n_edges, dtype=np.float64)
    rank[order] = np.arange(1, G.n_edges + 1, dtype=np.float64)
    a, b = _local_edges(G)
    mat = coo_matrix((rank, (a, b)), shape=(nv, nv)).tocsr()
    tree = minimum_spanning_tree(mat).tocoo()
    picked = order[tree.data.astype(np.int64) - 1]
    picked.sort()
    return WeightedGraph(G.vertices, G.u[picked], G.v[picked], G.w[picked])
