"""DBSCAN* and DBSCAN: brute-force oracles and the cube-lattice reconstruction.

The cube pipeline avoids distance evaluations wherever the lattice already
decides the answer:

* a cube whose 1-extension holds more than ``k`` points is dense and all its
  points are core without any distance test;
* a cube whose ``m``-extension holds at most ``k`` points is sparse and all
  its points are noise;
* only the remaining locally dense cubes scan their ring of outer cubes.

Clusters then come out of a graph on cubes, built from adjacency and the
neighbour lists of the scans, pruned, and completed by testing pairs of
dense cubes at ring distance that are still in different components.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import distance
from ._parallel import batches, pmap
from .errors import OracleCapError, ParameterError
from .graph import DisjointSet, WeightedGraph, components, degree_filter
from .grid import CubeMap, GridParams, box_gap_exceeds, build_cube_map, offsets
from .labels import NOISE, Labeling
from .settopo import boundary_extension_members, region_pairs

SPARSE, DENSE, LOCALLY_DENSE = 0, 1, 2
CATEGORY_NAMES = {SPARSE: "sparse", DENSE: "dense", LOCALLY_DENSE: "locally_dense"}

DEFAULT_ORACLE_CAP = 20_000


def _check_params(eps: float, k: int, allow_zero_eps: bool = False) -> None:
    if not np.isfinite(eps) or eps < 0 or (eps == 0 and not allow_zero_eps):
        raise ParameterError(f"eps must be positive and finite, got {eps!r}")
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be an integer >= 1, got {k!r}")


def _subset(points, ids):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ParameterError("points must be a 2-D array")
    if ids is None:
        return points, np.arange(len(points), dtype=np.int64)
    return points, np.unique(np.asarray(ids, dtype=np.int64))


def _cap(size: int, cap: int | None) -> None:
    if cap is not None and size > cap:
        raise OracleCapError(f"oracle refuses {size} points (cap {cap})")


# Oracles


def ball_counts(points, eps: float, ids=None) -> np.ndarray:
    """``|B_eps(p)|`` (closed ball, self included) for every id, by brute force."""
    points, ids = _subset(points, ids)
    sub = points[ids]
    out = np.zeros(len(ids), dtype=np.int64)
    for lo, hi in distance.row_blocks(len(ids), len(ids)):
        out[lo:hi] = (distance.cross(sub[lo:hi], sub) <= eps).sum(axis=1)
    return out


def core_points_oracle(points, eps: float, k: int, ids=None) -> np.ndarray:
    """Sorted ids whose closed ``eps``-ball holds more than ``k`` points."""
    _check_params(eps, k, allow_zero_eps=True)
    points, ids = _subset(points, ids)
    return ids[ball_counts(points, eps, ids) > k]


def epsilon_graph(points, eps: float, ids=None, cap: int | None = DEFAULT_ORACLE_CAP) -> WeightedGraph:
    """The distance graph on ``ids`` sliced at ``eps``, built blockwise."""
    points, ids = _subset(points, ids)
    _cap(len(ids), cap)
    sub = points[ids]
    us, vs, ws = [], [], []
    for lo, hi in distance.row_blocks(len(ids), len(ids)):
        d = distance.cross(sub[lo:hi], sub)
        r, c = np.nonzero(d <= eps)
        r += lo
        keep = c > r
        us.append(ids[r[keep]])
        vs.append(ids[c[keep]])
        ws.append(d[r[keep] - lo, c[keep]])
    if not us:
        return WeightedGraph.from_edges(ids)
    return WeightedGraph.from_edges(ids, np.concatenate(us), np.concatenate(vs), np.concatenate(ws), check=False)


def dbscan_star_oracle(points, eps: float, k: int, ids=None, cap: int | None = DEFAULT_ORACLE_CAP) -> Labeling:
    """Components of the degree-filtered ``eps``-graph; everything else is noise.

    Degree ``>= k`` in the slice is the same as ``> k`` points in the closed
    ball, since the ball also holds the point itself.
    """
    _check_params(eps, k, allow_zero_eps=True)
    points, ids = _subset(points, ids)
    G = degree_filter(epsilon_graph(points, eps, ids, cap), k)
    part = components(G)
    raw = np.full(len(ids), -1, dtype=np.int64)
    raw[np.searchsorted(ids, part.ids)] = part.labels
    return Labeling.from_raw(ids, raw)


def _borders_by_brute_force(points, eps, star: Labeling) -> Labeling:
    core = star.labels != NOISE
    raw = star.labels.copy()
    noise = np.flatnonzero(~core)
    core_idx = np.flatnonzero(core)
    if len(noise) and len(core_idx):
        cpts = points[star.ids[core_idx]]
        clab = star.labels[core_idx]
        big = np.iinfo(np.int64).max
        for lo, hi in distance.row_blocks(len(noise), len(core_idx)):
            d = distance.cross(points[star.ids[noise[lo:hi]]], cpts)
            lab = np.where(d <= eps, clab[None, :], big).min(axis=1)
            hit = lab != big
            raw[noise[lo:hi][hit]] = lab[hit]
    return Labeling.from_raw(star.ids, raw)


def dbscan_oracle(points, eps: float, k: int, ids=None, cap: int | None = DEFAULT_ORACLE_CAP) -> Labeling:
    """DBSCAN by brute force: each border point joins the reachable cluster with the smallest id."""
    points, ids = _subset(points, ids)
    star = dbscan_star_oracle(points, eps, k, ids, cap)
    return _borders_by_brute_force(points, eps, star)


# Cube categories


@dataclass(frozen=True, eq=False)
class CubeCategories:
    """Per-cell category with the counts it was decided from (aligned with ``CubeMap.keys``)."""

    category: np.ndarray
    count0: np.ndarray
    count1: np.ndarray
    count_m: np.ndarray

    def of(self, which: int) -> np.ndarray:
        return np.flatnonzero(self.category == which)


def extension_counts(cmap: CubeMap, radius: int, offs: np.ndarray | None = None) -> np.ndarray:
    """``|S^radius_X|`` for every occupied cell."""
    if offs is None:
        offs = offsets(cmap.params.n, radius)
    counts = cmap.counts
    out = np.zeros(cmap.n_cells, dtype=np.int64)
    for off in offs:
        nb = cmap.lookup(cmap.keys + off)
        hit = nb >= 0
        out[hit] += counts[nb[hit]]
    return out


def categorize_cubes(cmap: CubeMap, k: int) -> CubeCategories:
    """Dense if ``|S^1_X| > k``, sparse if ``|S^m_X| <= k``, locally dense otherwise.

    ``|S^1_X| == k`` falls through to locally dense, where the exact scan
    decides.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    params = cmap.params
    count0 = cmap.counts
    count1 = extension_counts(cmap, 1)
    category = np.full(cmap.n_cells, SPARSE, dtype=np.int8)
    dense = count1 > k
    category[dense] = DENSE
    count_m = count1.copy()
    rest = ~dense
    if rest.any():
        ring = offsets(params.n, params.m_const, min_radius=2)
        sub_cells = np.flatnonzero(rest)
        extra = np.zeros(len(sub_cells), dtype=np.int64)
        for off in ring:
            nb = cmap.lookup(cmap.keys[sub_cells] + off)
            hit = nb >= 0
            extra[hit] += count0[nb[hit]]
        count_m[sub_cells] += extra
    category[rest & (count_m > k)] = LOCALLY_DENSE
    return CubeCategories(category, count0, count1, count_m)


_RING_CACHE: dict = {}


def _ring_offsets(params: GridParams) -> np.ndarray:
    """Offsets at Chebyshev radius 2..m that can hold a point within eps of the centre cube."""
    key = (params.n, params.m_const, params.side, params.eps)
    got = _RING_CACHE.get(key)
    if got is None:
        offs = offsets(params.n, params.m_const, min_radius=2)
        got = offs[~box_gap_exceeds(offs, params)]
        if len(_RING_CACHE) > 64:
            _RING_CACHE.clear()
        _RING_CACHE[key] = got
    return got


# Locally dense scans


@dataclass
class LocalScan:
    """Core points of one locally dense cube and their eps-neighbours outside ``S^1``."""

    cell: int
    core: np.ndarray
    outer: list[np.ndarray]
    n_distances: int


def local_core_scan(cell: int, cmap: CubeMap, points, count1: np.ndarray, k: int) -> LocalScan:
    """Exact core test for the points of a locally dense cube.

    ``p`` is core iff it has more than ``k - |S^1_X|`` eps-neighbours among
    the points of ``S^m_X`` outside ``S^1_X``.
    """
    params = cmap.params
    threshold = k - int(count1[cell])
    if threshold < 0:
        raise AssertionError("locally dense scan on a cube with |S^1_X| > k")
    own = cmap.cell_ids(cell)
    nb = cmap.neighbours(np.array([cell]), _ring_offsets(params))[0]
    nb = nb[nb >= 0]
    outer_ids = cmap.gather(nb)
    if len(outer_ids) == 0:
        return LocalScan(cell, np.zeros(0, dtype=np.int64), [], 0)
    d = distance.cross(points[own], points[outer_ids])
    within = d <= params.eps
    is_core = within.sum(axis=1) > threshold
    rows = np.flatnonzero(is_core)
    outer = [np.sort(outer_ids[within[r]]) for r in rows]
    return LocalScan(cell, own[rows], outer, d.size)


@dataclass
class NeighborLists:
    """Outer eps-neighbour lists of locally dense core points and per-cube cube lists."""

    cmap: CubeMap
    outer: dict[int, np.ndarray] = field(default_factory=dict)
    cube_lists: dict[int, np.ndarray] = field(default_factory=dict)

    def ball(self, p: int) -> np.ndarray:
        """All eps-neighbours of a locally dense core point, excluding ``p``."""
        cm = self.cmap
        cell = int(cm.cells_of_ids([p])[0])
        inner = cm.gather(cm.neighbours(np.array([cell]), offsets(cm.params.n, 1))[0])
        inner = inner[inner != p]
        return np.union1d(inner, self.outer[p])


def _scan_all(cmap, points, cats, k, workers):
    cells = cats.of(LOCALLY_DENSE)

    def run(batch):
        return [local_core_scan(int(c), cmap, points, cats.count1, k) for c in batch]

    scans = [s for part in pmap(run, batches(cells, workers), workers) for s in part]
    return scans


def _cube_lists(cmap: CubeMap, scans: list[LocalScan]) -> dict[int, np.ndarray]:
    """``B_S``: cells holding an eps-neighbour of a core point of ``S``, plus occupied ``S^1`` cells."""
    one = offsets(cmap.params.n, 1)
    out = {}
    for s in scans:
        if len(s.core) == 0:
            continue
        inner = cmap.neighbours(np.array([s.cell]), one)[0]
        inner = inner[inner >= 0]
        far = cmap.cells_of_ids(np.concatenate(s.outer)) if s.outer else np.zeros(0, dtype=np.int64)
        out[s.cell] = np.union1d(inner, far)
    return out


# Cube graphs


def _cube_graph(cmap: CubeMap, vertices, a, b) -> WeightedGraph:
    """Cube graph over cell indices; the edge weight is the Chebyshev index distance."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    w = np.abs(cmap.keys[a] - cmap.keys[b]).max(axis=1) if len(a) else np.zeros(0)
    return WeightedGraph.from_edges(vertices, a, b, w.astype(np.float64), check=False)


def build_g1(cmap: CubeMap, cats: CubeCategories, lists: NeighborLists) -> WeightedGraph:
    """Cube graph on dense cubes and locally dense cubes with a core point.

    Edges: adjacent vertex cubes; locally dense pairs listing each other;
    a locally dense cube and a dense cube on its list.
    """
    is_vertex = cats.category == DENSE
    ld_core = np.array(sorted(lists.cube_lists), dtype=np.int64)
    is_vertex[ld_core] = True
    vertices = np.flatnonzero(is_vertex)
    offs = offsets(cmap.params.n, 1, min_radius=1)
    au, bu = [], []
    if len(vertices):
        nb = cmap.neighbours(vertices, offs)
        src = np.broadcast_to(vertices[:, None], nb.shape)
        ok = (nb > src) & is_vertex[np.maximum(nb, 0)]
        au.append(src[ok])
        bu.append(nb[ok])
    ld_set = set(lists.cube_lists)
    for S, listed in lists.cube_lists.items():
        far = listed[np.abs(cmap.keys[listed] - cmap.keys[S]).max(axis=1) >= 2]
        for T in far.tolist():
            cat = cats.category[T]
            if cat == DENSE:
                au.append(np.array([S]))
                bu.append(np.array([T]))
            elif T in ld_set and T > S:
                other = lists.cube_lists[T]
                pos = np.searchsorted(other, S)
                if pos < len(other) and other[pos] == S:
                    au.append(np.array([S]))
                    bu.append(np.array([T]))
    if not au:
        return _cube_graph(cmap, vertices, [], [])
    return _cube_graph(cmap, vertices, np.concatenate(au), np.concatenate(bu))


def prune_to_g2(g1: WeightedGraph, lists: NeighborLists, cats: CubeCategories, core_mask: np.ndarray) -> WeightedGraph:
    """Drop non-adjacent edges whose cubes hold no core pair within eps.

    For a locally dense endpoint ``S`` the stored outer lists already name
    every eps-neighbour of its core points in the ring, so an edge
    ``(S, T)`` survives iff some listed neighbour in ``T`` is core.
    """
    cmap = lists.cmap
    far = g1.w >= 2
    if not far.any():
        return g1
    n_cells = max(1, cmap.n_cells)
    reach_codes = []
    for S, scan_outer in _core_outer_by_cell(lists).items():
        if len(scan_outer) == 0:
            continue
        nbrs = scan_outer[core_mask[np.searchsorted(cmap.ids, scan_outer)]]
        if len(nbrs):
            reach_codes.append(S * n_cells + np.unique(cmap.cells_of_ids(nbrs)))
    codes = np.unique(np.concatenate(reach_codes)) if reach_codes else np.zeros(0, dtype=np.int64)
    u, v = g1.u[far], g1.v[far]
    ld_first = cats.category[u] == LOCALLY_DENSE
    S = np.where(ld_first, u, v)
    T = np.where(ld_first, v, u)
    keep_far = np.isin(S * n_cells + T, codes)
    keep = ~far
    keep[np.flatnonzero(far)[keep_far]] = True
    return WeightedGraph(g1.vertices, g1.u[keep], g1.v[keep], g1.w[keep])


def _core_outer_by_cell(lists: NeighborLists) -> dict[int, np.ndarray]:
    cm = lists.cmap
    grouped: dict[int, list] = {}
    for p, nbrs in lists.outer.items():
        grouped.setdefault(int(cm.cells_of_ids([p])[0]), []).append(nbrs)
    return {c: np.unique(np.concatenate(v)) for c, v in sorted(grouped.items())}


def _any_within(pa: np.ndarray, pb: np.ndarray, eps: float, chunk: int = 256) -> tuple[bool, int]:
    """Whether some pair is within eps, with early exit; returns the number of evaluations."""
    done = 0
    for lo in range(0, len(pa), chunk):
        d = distance.cross(pa[lo : lo + chunk], pb)
        done += d.size
        if (d <= eps).any():
            return True, done
    return False, done


def merge_dense(g2: WeightedGraph, cmap: CubeMap, cats: CubeCategories, points) -> tuple[WeightedGraph, int]:
    """Join dense cubes at ring distance that hold a pair within eps.

    Pairs are scanned in lexicographic ``(S, T)`` key order and skipped once
    their cubes share a component, so the added edge set is deterministic.
    Returns the completed cube graph and the number of distance evaluations.
    """
    params = cmap.params
    index = {int(c): i for i, c in enumerate(g2.vertices)}
    ds = DisjointSet(len(g2.vertices))
    for a, b in zip(g2.u.tolist(), g2.v.tolist()):
        ds.union(index[a], index[b])
    dense = cats.of(DENSE)
    if len(dense) == 0:
        return g2, 0
    nb = cmap.neighbours(dense, _ring_offsets(params))
    src = np.broadcast_to(dense[:, None], nb.shape)
    ok = (nb > src) & (cats.category[np.maximum(nb, 0)] == DENSE)
    S_all, T_all = src[ok], nb[ok]
    order = np.lexsort((T_all, S_all))
    added_u, added_v = [], []
    evaluated = 0
    for S, T in zip(S_all[order].tolist(), T_all[order].tolist()):
        iS, iT = index[S], index[T]
        if ds.same(iS, iT):
            continue
        hit, n = _any_within(points[cmap.cell_ids(S)], points[cmap.cell_ids(T)], params.eps)
        evaluated += n
        if hit:
            ds.union(iS, iT)
            added_u.append(S)
            added_v.append(T)
    if not added_u:
        return g2, evaluated
    extra = _cube_graph(cmap, g2.vertices, added_u, added_v)
    merged = WeightedGraph.from_edges(
        g2.vertices,
        np.concatenate([g2.u, extra.u]),
        np.concatenate([g2.v, extra.v]),
        np.concatenate([g2.w, extra.w]),
        check=False,
    )
    return merged, evaluated


# Pipeline


@dataclass
class StarResult:
    """Everything the cube pipeline computed at one scale.

    ``core`` is aligned with ``cmap.ids``. ``distance_evaluations`` splits
    the point-pair distance count by phase.
    """

    points: np.ndarray
    eps: float
    k: int
    cmap: CubeMap
    categories: CubeCategories
    core: np.ndarray
    lists: NeighborLists
    g1: WeightedGraph
    g2: WeightedGraph
    graph: WeightedGraph
    labeling: Labeling
    distance_evaluations: dict[str, int]

    @property
    def n_distances(self) -> int:
        return sum(self.distance_evaluations.values())

    @property
    def core_ids(self) -> np.ndarray:
        return self.cmap.ids[self.core]


def s_dbscan_star(points, eps: float, k: int, ids=None, workers: int = 1) -> StarResult:
    """DBSCAN* clusters of ``points[ids]`` at scale ``eps`` via the cube lattice."""
    _check_params(eps, k)
    points, ids = _subset(points, ids)
    params = GridParams.build(points.shape[1], eps)
    cmap = build_cube_map(points, params, ids)
    cats = categorize_cubes(cmap, k)
    scans = _scan_all(cmap, points, cats, k, workers)

    core = cats.category[cmap.cell_of] == DENSE
    lists = NeighborLists(cmap)
    for s in scans:
        if len(s.core):
            core[np.searchsorted(cmap.ids, s.core)] = True
            for p, nbrs in zip(s.core.tolist(), s.outer):
                lists.outer[p] = nbrs
    lists.cube_lists = _cube_lists(cmap, scans)
    scan_count = sum(s.n_distances for s in scans)

    g1 = build_g1(cmap, cats, lists)
    g2 = prune_to_g2(g1, lists, cats, core)
    graph, merge_count = merge_dense(g2, cmap, cats, points)

    part = components(graph)
    raw = np.full(len(cmap.ids), -1, dtype=np.int64)
    if len(part.ids):
        cell_label = np.full(max(cmap.n_cells, 1), -1, dtype=np.int64)
        cell_label[part.ids] = part.labels
        raw[core] = cell_label[cmap.cell_of[core]]
    labeling = Labeling.from_raw(cmap.ids, raw)
    return StarResult(
        points, float(eps), int(k), cmap, cats, core, lists, g1, g2, graph, labeling,
        {"local_scan": int(scan_count), "dense_merge": int(merge_count)},
    )


def assign_borders(result: StarResult) -> tuple[Labeling, int]:
    """DBSCAN labels from a DBSCAN* result; returns the labeling and the distance count.

    Candidate clusters for a noise point come from three places: the
    stored outer lists of locally dense core points, the 1-extension of any
    clustered cube (always within eps), and explicit tests from dense cubes
    near their cluster boundary against noise in their ring. A point
    reachable from several clusters joins the one with the smallest id.
    """
    cm = result.cmap
    star = result.labeling
    if len(cm.ids) == 0:
        return star, 0
    params = cm.params
    points = result.points
    labels = star.labels
    noise = labels == NOISE
    if not noise.any() or noise.all():
        return star, 0
    big = np.iinfo(np.int64).max
    best = np.full(len(cm.ids), big, dtype=np.int64)

    cell_label = np.full(cm.n_cells, -1, dtype=np.int64)
    cell_label[cm.cell_of[~noise]] = labels[~noise]
    clustered = np.flatnonzero(cell_label >= 0)

    # within S^1 of a clustered cube every point is within eps of its core points
    one = offsets(params.n, 1)
    nb = cm.neighbours(clustered, one)
    src_lab = np.broadcast_to(cell_label[clustered][:, None], nb.shape)
    ok = nb >= 0
    cell_best = np.full(cm.n_cells, big, dtype=np.int64)
    np.minimum.at(cell_best, nb[ok], src_lab[ok])
    best = np.minimum(best, cell_best[cm.cell_of])

    for p, nbrs in result.lists.outer.items():
        lab = labels[np.searchsorted(cm.ids, p)]
        pos = np.searchsorted(cm.ids, nbrs)
        np.minimum.at(best, pos, lab)

    # dense cubes inside the n-extended boundary of their cluster
    pairs = region_pairs(cm, np.where(noise, -1, labels))
    near_boundary = boundary_extension_members(pairs, np.where(noise, -1, labels), params.n_const)
    dense_cells = np.unique(cm.cell_of[near_boundary & (result.categories.category[cm.cell_of] == DENSE)])
    noise_cell = np.zeros(cm.n_cells, dtype=bool)
    noise_cell[cm.cell_of[noise]] = True
    evaluated = 0
    ring = _ring_offsets(params)
    for S in dense_cells.tolist():
        nbc = cm.neighbours(np.array([S]), ring)[0]
        nbc = nbc[(nbc >= 0)]
        nbc = nbc[noise_cell[nbc]]
        if len(nbc) == 0:
            continue
        cand = cm.gather(nbc)
        pos = np.searchsorted(cm.ids, cand)
        cand_pos = pos[noise[pos]]
        lab = cell_label[S]
        cand_pos = cand_pos[best[cand_pos] > lab]
        if len(cand_pos) == 0:
            continue
        d = distance.cross(points[cm.cell_ids(S)], points[cm.ids[cand_pos]])
        evaluated += d.size
        hit = (d <= params.eps).any(axis=0)
        best[cand_pos[hit]] = np.minimum(best[cand_pos[hit]], lab)

    raw = labels.copy()
    take = noise & (best != big)
    raw[take] = best[take]
    return Labeling.from_raw(cm.ids, raw), evaluated


def s_dbscan(points, eps: float, k: int, ids=None, workers: int = 1) -> Labeling:
    return assign_borders(s_dbscan_star(points, eps, k, ids, workers))[0]
