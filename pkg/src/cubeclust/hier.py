"""HDBSCAN*: core distances, reachability graphs, the cluster hierarchy and selection.

The hierarchy is read off a single-linkage dendrogram of the mutual
reachability graph. Clusters of at least ``m`` points are grouped into
classes: a class persists while exactly one of its clusters has size
``>= m`` and it ends when it merges with another such cluster. Each class
is scored by the exact integral of ``|C_gamma| / gamma^2`` over its
lifetime, and the final clusters are the best-scoring set of classes with
pairwise disjoint supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import distance
from .dbscan import DEFAULT_ORACLE_CAP, _cap
from .errors import InfiniteScoreError, InsufficientPointsError, ParameterError
from .graph import ComponentPartition, DisjointSet, WeightedGraph, canonical_labels, edge_order, min_spanning_forest
from .labels import Labeling

# Core distances


@dataclass(frozen=True, eq=False)
class CoreDistances:
    """``values[i]`` is the core distance of ``ids[i]`` against ``n_reference`` points."""

    ids: np.ndarray
    values: np.ndarray
    n_reference: int

    def __getitem__(self, pid: int) -> float:
        return float(self.lookup([pid])[0])

    def lookup(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(self.ids, ids)
        if len(ids) and (np.any(pos >= len(self.ids)) or np.any(self.ids[np.minimum(pos, len(self.ids) - 1)] != ids)):
            raise KeyError("core distance requested for an id outside the computed set")
        return self.values[pos]


def _check_core_args(Q, R, k):
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be an integer >= 1, got {k!r}")
    Q = np.unique(np.asarray(Q, dtype=np.int64))
    R = np.unique(np.asarray(R, dtype=np.int64))
    if len(R) <= k:
        raise InsufficientPointsError(f"reference set of {len(R)} points cannot give a {k}-th neighbour")
    return Q, R


def core_distances_brute(Q, R, points, k: int) -> CoreDistances:
    """Quadratic reference implementation of :func:`core_distances`."""
    Q, R = _check_core_args(Q, R, k)
    points = np.asarray(points, dtype=np.float64)
    out = np.empty(len(Q))
    for lo, hi in distance.row_blocks(len(Q), len(R)):
        d = distance.cross(points[Q[lo:hi]], points[R])
        rows, cols = np.nonzero(Q[lo:hi, None] == R[None, :])
        d[rows, cols] = np.inf
        out[lo:hi] = np.partition(d, k - 1, axis=1)[:, k - 1]
    return CoreDistances(Q, out, len(R))


def core_distances(Q, R, points, k: int, extra: int = 8) -> CoreDistances:
    """Distance from each ``p`` in ``Q`` to its ``k``-th nearest other point of ``R``.

    A k-d tree proposes candidates; the value is then recomputed with the
    package's own distance recipe so it matches every other code path bit
    for bit. When the tree's candidate list could hide an equally close
    point, the query widens to a radius search.
    """
    Q, R = _check_core_args(Q, R, k)
    points = np.asarray(points, dtype=np.float64)
    if len(Q) == 0:
        return CoreDistances(Q, np.zeros(0), len(R))
    tree = cKDTree(points[R])
    kk = min(len(R), k + 1 + extra)
    _, idx = tree.query(points[Q], k=kk)
    idx = np.asarray(idx).reshape(len(Q), kk)
    cand = R[idx]
    d = distance.gathered(points[Q], points[cand])
    d[cand == Q[:, None]] = np.inf
    d.sort(axis=1)
    values = d[:, k - 1].copy()
    if kk < len(R):
        # anything the tree left out is at least as far as its farthest candidate
        fence = np.max(np.where(np.isfinite(d), d, -np.inf), axis=1)
        unsure = ~(values < fence * (1 - 1e-9))
        for i in np.flatnonzero(unsure):
            near = R[tree.query_ball_point(points[Q[i]], fence[i] * (1 + 1e-9) + 1e-300)]
            near = near[near != Q[i]]
            dd = np.sort(distance.to_many(points[Q[i]], points[near]))
            values[i] = dd[k - 1]
    return CoreDistances(Q, values, len(R))


def reach_weight(p: int, q: int, cores: CoreDistances, points) -> float:
    """``max(core(p), core(q), d(p, q))``; zero for ``p == q``."""
    if p == q:
        return 0.0
    points = np.asarray(points, dtype=np.float64)
    d = float(distance.cross(points[[p]], points[[q]])[0, 0])
    return max(cores[p], cores[q], d)


def mutual_reach_graph(ids, points, cores: CoreDistances, cap: int | None = DEFAULT_ORACLE_CAP, upto: float | None = None) -> WeightedGraph:
    """Complete reachability graph on ``ids`` (optionally only edges ``<= upto``)."""
    ids = np.unique(np.asarray(ids, dtype=np.int64))
    _cap(len(ids), cap)
    points = np.asarray(points, dtype=np.float64)
    core = cores.lookup(ids)
    sub = points[ids]
    us, vs, ws = [], [], []
    for lo, hi in distance.row_blocks(len(ids), len(ids)):
        d = distance.cross(sub[lo:hi], sub)
        np.maximum(d, core[lo:hi, None], out=d)
        np.maximum(d, core[None, :], out=d)
        r, c = np.nonzero(np.arange(len(ids))[None, :] > np.arange(lo, hi)[:, None])
        w = d[r, c]
        if upto is not None:
            keep = w <= upto
            r, c, w = r[keep], c[keep], w[keep]
        us.append(ids[r + lo])
        vs.append(ids[c])
        ws.append(w)
    if not us:
        return WeightedGraph.from_edges(ids)
    return WeightedGraph.from_edges(ids, np.concatenate(us), np.concatenate(vs), np.concatenate(ws), check=False)


def reach_spanning_tree(ids, points, cores: CoreDistances, upto: float | None = None) -> WeightedGraph:
    """Minimum spanning tree of the complete reachability graph by dense Prim.

    Memory stays linear in ``len(ids)``; with ``upto`` the tree is sliced.
    """
    ids = np.unique(np.asarray(ids, dtype=np.int64))
    n = len(ids)
    if n <= 1:
        return WeightedGraph.from_edges(ids)
    points = np.asarray(points, dtype=np.float64)
    sub = points[ids]
    core = cores.lookup(ids)
    best = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    eu = np.empty(n - 1, dtype=np.int64)
    ev = np.empty(n - 1, dtype=np.int64)
    ew = np.empty(n - 1)
    cur = 0
    done[0] = True
    best[0] = -np.inf
    for step in range(n - 1):
        w = distance.to_many(sub[cur], sub)
        np.maximum(w, core, out=w)
        np.maximum(w, core[cur], out=w)
        better = w < best
        better &= ~done
        best[better] = w[better]
        parent[better] = cur
        cand = np.where(done, np.inf, best)
        nxt = int(np.argmin(cand))
        eu[step], ev[step], ew[step] = parent[nxt], nxt, best[nxt]
        done[nxt] = True
        cur = nxt
    if upto is not None:
        keep = ew <= upto
        eu, ev, ew = eu[keep], ev[keep], ew[keep]
    return WeightedGraph.from_edges(ids, ids[eu], ids[ev], ew, check=False)


# Dendrogram


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """Single-linkage merges of a weighted graph.

    Leaves ``0..n-1`` stand for ``vertices``; merge ``j`` creates node
    ``n + j`` from ``left[j]`` and ``right[j]`` at scale ``gamma[j]``.
    Node ``c`` covers ``vertices[leaf_order[start[c]:stop[c]]]``.
    """

    vertices: np.ndarray
    gamma: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    leaf_order: np.ndarray
    start: np.ndarray
    stop: np.ndarray

    @property
    def n_leaves(self) -> int:
        return len(self.vertices)

    @property
    def n_merges(self) -> int:
        return len(self.gamma)

    def members(self, node: int) -> np.ndarray:
        return np.sort(self.vertices[self.leaf_order[self.start[node] : self.stop[node]]])

    def partition_at(self, gamma: float) -> ComponentPartition:
        """Components after replaying every merge at scale ``<= gamma``."""
        n = self.n_leaves
        ds = DisjointSet(n)
        node_leaf = np.concatenate([np.arange(n), np.zeros(self.n_merges, dtype=np.int64)])
        for j in range(self.n_merges):
            if self.gamma[j] > gamma:
                break
            a, b = node_leaf[self.left[j]], node_leaf[self.right[j]]
            ds.union(int(a), int(b))
            node_leaf[n + j] = a
        raw = np.array([ds.find(i) for i in range(n)], dtype=np.int64)
        return ComponentPartition(self.vertices, canonical_labels(raw, self.vertices))


def build_dendrogram(G: WeightedGraph) -> Dendrogram:
    """Dendrogram of ``G`` from its minimum spanning forest in ``(w, u, v)`` order."""
    F = min_spanning_forest(G)
    verts = F.vertices
    n = len(verts)
    order = edge_order(F)
    u = np.searchsorted(verts, F.u[order])
    v = np.searchsorted(verts, F.v[order])
    w = F.w[order]
    ds = DisjointSet(n)
    top = list(range(n))
    left = np.empty(len(w), dtype=np.int64)
    right = np.empty(len(w), dtype=np.int64)
    size = np.ones(n + len(w), dtype=np.int64)
    for j, (a, b) in enumerate(zip(u.tolist(), v.tolist())):
        ra, rb = ds.find(a), ds.find(b)
        na, nb = top[ra], top[rb]
        left[j], right[j] = min(na, nb), max(na, nb)
        size[n + j] = size[na] + size[nb]
        r = ds.union(ra, rb)
        top[r] = n + j
    # contiguous leaf ranges by an iterative walk from every root
    total = n + len(w)
    start = np.zeros(total, dtype=np.int64)
    stop = np.zeros(total, dtype=np.int64)
    has_parent = np.zeros(total, dtype=bool)
    has_parent[left] = True
    has_parent[right] = True
    leaf_order = np.empty(n, dtype=np.int64)
    pos = 0
    for root in range(total):
        if has_parent[root]:
            continue
        stack = [root]
        while stack:
            node = stack.pop()
            if node < n:
                start[node] = pos
                leaf_order[pos] = node
                pos += 1
                stop[node] = pos
                continue
            start[node] = pos
            stop[node] = pos + size[node]
            j = node - n
            # right pushed first so the left subtree is laid out first
            stack.append(int(right[j]))
            stack.append(int(left[j]))
    return Dendrogram(verts, w, left, right, size, leaf_order, start, stop)


# Condensed classes


@dataclass
class EquivalenceClass:
    """A chain of clusters of size ``>= m`` with unique preimages.

    ``steps`` lists ``(gamma, size)`` at every scale where the cluster grows;
    the first entry is the birth. ``end`` is ``inf`` for a root class.
    """

    cid: int
    birth: float
    end: float
    steps: list[tuple[float, int]]
    node: int
    support: np.ndarray
    parent: int | None = None
    children: list[int] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.support)

    @property
    def score(self) -> float:
        return persistence_score(self)

    def key(self) -> tuple:
        """Pipeline-independent identity: the support and birth scale."""
        return (self.birth, tuple(self.support.tolist()))


def condense(dendro: Dendrogram, m: int, leaf_births=None) -> list[EquivalenceClass]:
    """Group the clusters of size ``>= m`` into classes.

    Merges at one scale are applied together. At each scale the new
    component either starts a class (no preimage of size ``>= m``), extends
    the single such preimage, or ends two or more classes and starts their
    parent. ``leaf_births`` (aligned with ``dendro.vertices``) gives the scale
    at which a lone point becomes a cluster and is required for ``m == 1``.
    """
    if int(m) != m or m < 1:
        raise ParameterError(f"min cluster size must be an integer >= 1, got {m!r}")
    n = dendro.n_leaves
    if m == 1:
        if leaf_births is None:
            raise ParameterError("m = 1 needs the scale at which each point becomes core")
        births = np.asarray(leaf_births, dtype=np.float64)
    else:
        births = None
    classes: list[EquivalenceClass] = []
    ds = DisjointSet(n)
    top = list(range(n))
    cls_of: dict[int, int] = {}  # union-find root -> class id

    def new_class(gamma, node, root):
        cid = len(classes)
        classes.append(EquivalenceClass(cid, float(gamma), math.inf, [(float(gamma), int(dendro.size[node]))], node, np.zeros(0, dtype=np.int64)))
        cls_of[root] = cid
        return cid

    events = []
    if dendro.n_merges:
        cuts = np.flatnonzero(np.diff(dendro.gamma)) + 1
        for grp in np.split(np.arange(dendro.n_merges), cuts):
            events.append((float(dendro.gamma[grp[0]]), grp))
    birth_groups = {}
    if births is not None:
        for leaf in np.argsort(births, kind="stable").tolist():
            birth_groups.setdefault(float(births[leaf]), []).append(leaf)
    scales = sorted({g for g, _ in events} | set(birth_groups))
    merge_at = {g: grp for g, grp in events}

    for gamma in scales:
        grp = merge_at.get(gamma, ())
        touched_pre: dict[int, None] = {}
        for j in grp:
            for node in (int(dendro.left[j]), int(dendro.right[j])):
                leaf = node if node < n else int(dendro.leaf_order[dendro.start[node]])
                touched_pre[ds.find(leaf)] = None
        pre_info = {r: cls_of.get(r) for r in touched_pre}
        for j in grp:
            a = int(dendro.leaf_order[dendro.start[int(dendro.left[j])]])
            b = int(dendro.leaf_order[dendro.start[int(dendro.right[j])]])
            r = ds.union(ds.find(a), ds.find(b))
            top[r] = n + int(j)
        post: dict[int, list[int]] = {}
        for r in touched_pre:
            post.setdefault(ds.find(r), []).append(r)
        for root, pres in post.items():
            node = top[root]
            big = [pre_info[r] for r in pres if pre_info[r] is not None]
            for r in pres:
                cls_of.pop(r, None)
            if dendro.size[node] < m:
                continue
            if len(big) == 1:
                c = classes[big[0]]
                c.steps.append((float(gamma), int(dendro.size[node])))
                c.node = node
                cls_of[root] = c.cid
            else:
                cid = new_class(gamma, node, root)
                for child in sorted(big):
                    classes[child].end = float(gamma)
                    classes[child].parent = cid
                    classes[cid].children.append(child)
        for leaf in birth_groups.get(gamma, ()):
            root = ds.find(leaf)
            if root == leaf and top[root] == leaf and root not in cls_of:
                new_class(gamma, leaf, root)
    for c in classes:
        c.support = dendro.members(c.node)
    return classes


def persistence_score(cls: EquivalenceClass) -> float:
    """``sum_j size_j * (1/gamma_j - 1/gamma_{j+1})`` over the class lifetime."""
    if cls.birth <= 0:
        raise InfiniteScoreError(f"class {cls.cid} is born at scale 0; its score diverges")
    total = 0.0
    bounds = [g for g, _ in cls.steps[1:]] + [cls.end]
    for (g, size), nxt in zip(cls.steps, bounds):
        tail = 0.0 if math.isinf(nxt) else 1.0 / nxt
        total += size * (1.0 / g - tail)
    return total


# Selection


@dataclass
class SelectionResult:
    chosen: list[int]
    total_score: float
    labeling: Labeling
    classes: list[EquivalenceClass]

    def chosen_supports(self) -> list[tuple[int, ...]]:
        return sorted(tuple(self.classes[c].support.tolist()) for c in self.chosen)


def select_clusters(classes: list[EquivalenceClass], ids=None, exclude_root: bool = False) -> SelectionResult:
    """Maximum total score over classes with pairwise disjoint supports.

    Supports are nested or disjoint, so the optimum is a bottom-up dynamic
    program. On a tie a class is preferred over its descendants. With
    ``exclude_root`` classes without a parent may not be chosen.
    """
    scores = [persistence_score(c) for c in classes]
    value = [0.0] * len(classes)
    take: list[bool] = [False] * len(classes)
    # children end no later than parents are born, so ids increase up the forest
    for c in classes:
        kids = sum(value[ch] for ch in c.children)
        if exclude_root and c.parent is None:
            value[c.cid] = kids
        elif scores[c.cid] >= kids:
            value[c.cid], take[c.cid] = scores[c.cid], True
        else:
            value[c.cid] = kids
    chosen = []
    stack = [c.cid for c in classes if c.parent is None]
    while stack:
        cid = stack.pop()
        if take[cid] and not (exclude_root and classes[cid].parent is None):
            chosen.append(cid)
        else:
            stack.extend(classes[cid].children)
    chosen.sort()
    total = sum(scores[c] for c in chosen)
    if ids is None:
        ids = np.unique(np.concatenate([c.support for c in classes])) if classes else np.zeros(0, dtype=np.int64)
    ids = np.asarray(ids, dtype=np.int64)
    raw = np.full(len(ids), -1, dtype=np.int64)
    for cid in chosen:
        raw[np.searchsorted(ids, classes[cid].support)] = cid
    return SelectionResult(chosen, total, Labeling.from_raw(ids, raw), classes)


# Oracle


@dataclass
class HierarchyResult:
    selection: SelectionResult
    classes: list[EquivalenceClass]
    dendrogram: Dendrogram | None
    cores: CoreDistances | None
    graph: WeightedGraph | None

    @property
    def labeling(self) -> Labeling:
        return self.selection.labeling


def empty_hierarchy(ids) -> HierarchyResult:
    ids = np.unique(np.asarray(ids, dtype=np.int64))
    sel = SelectionResult([], 0.0, Labeling.all_noise(ids), [])
    return HierarchyResult(sel, [], None, None, None)


def hierarchy_from_graph(G: WeightedGraph, m: int, leaf_births=None, exclude_root: bool = False, keep_graph: bool = True) -> HierarchyResult:
    dendro = build_dendrogram(G)
    classes = condense(dendro, m, leaf_births)
    sel = select_clusters(classes, G.vertices, exclude_root)
    return HierarchyResult(sel, classes, dendro, None, G if keep_graph else None)


def hdbscan_star_oracle(points, k: int, m: int | None = None, ids=None, cap: int | None = DEFAULT_ORACLE_CAP, exclude_root: bool = False) -> HierarchyResult:
    """HDBSCAN* from the complete reachability graph.

    With ``k`` or fewer points no point has a core distance, so every
    point is noise.
    """
    m = k if m is None else m
    points = np.asarray(points, dtype=np.float64)
    ids = np.arange(len(points), dtype=np.int64) if ids is None else np.unique(np.asarray(ids, dtype=np.int64))
    _cap(len(ids), cap)
    if len(ids) <= k:
        if int(m) != m or m < 1:
            raise ParameterError(f"min cluster size must be an integer >= 1, got {m!r}")
        return empty_hierarchy(ids)
    cores = core_distances_brute(ids, ids, points, k)
    G = mutual_reach_graph(ids, points, cores, cap)
    res = hierarchy_from_graph(G, m, cores.values, exclude_root)
    res.cores = cores
    return res
