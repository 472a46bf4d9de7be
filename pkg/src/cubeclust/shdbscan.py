"""HDBSCAN* from a schedule of DBSCAN* runs on shrinking point sets.

Each iteration clusters the current set ``X_i`` at the next scale, records
the reachability structure inside every cluster, and keeps for the next
round only the noise plus the points near each cluster's boundary (the
``N``-extended boundary). Points deep inside a cluster are settled: their
merges below the current scale are already in the accumulated graph
``H``. A final reachability graph over the leftover points completes ``H``
into a graph whose every slice has the same components as the complete
reachability graph of ``X``.

Complete graphs are replaced by minimum spanning trees throughout, which
keeps the components of every slice.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import distance
from ._parallel import pmap
from .dbscan import StarResult, s_dbscan_star
from .errors import ParameterError
from .graph import DisjointSet, WeightedGraph, graph_union
from .hier import (
    CoreDistances,
    HierarchyResult,
    core_distances,
    empty_hierarchy,
    hierarchy_from_graph,
    mutual_reach_graph,
    reach_spanning_tree,
)
from .settopo import boundary_extension_members, extend_region, region_pairs


@dataclass
class ClusterGraph:
    """Reachability forest of one cluster and the sizes that went into it."""

    graph: WeightedGraph
    n_cluster: int
    n_reference: int
    cores: CoreDistances | None


@dataclass
class IterationState:
    """Progress after iteration ``index`` at scale ``eps``.

    ``X`` is the set clustered at this scale, ``J`` and ``F`` are its
    ``n``- and ``N``-extended boundary members plus noise; ``F`` is the next
    ``X``. ``H`` is the accumulated graph on all ids and ``joined`` its
    component structure, indexed by position in ``all_ids``.
    """

    index: int
    eps: float
    X: np.ndarray
    J: np.ndarray
    F: np.ndarray
    H: WeightedGraph
    all_ids: np.ndarray
    joined: DisjointSet
    star: StarResult | None = None
    report: list[tuple[str, str, object]] = field(default_factory=list)

    def same_component(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        pu = np.searchsorted(self.all_ids, u)
        pv = np.searchsorted(self.all_ids, v)
        find = self.joined.find
        return np.array([find(a) == find(b) for a, b in zip(pu.tolist(), pv.tolist())], dtype=bool)


def initial_state(points, ids=None) -> IterationState:
    """Iteration 0: scale 0, every point pending, ``H`` edgeless."""
    points = np.asarray(points, dtype=np.float64)
    ids = np.arange(len(points), dtype=np.int64) if ids is None else np.unique(np.asarray(ids, dtype=np.int64))
    return IterationState(0, 0.0, ids, ids, ids, WeightedGraph.from_edges(ids), ids, DisjointSet(len(ids)))


def j_f_sets(star: StarResult, strict: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """``J`` and ``F`` of a DBSCAN* result, on the grid of the scale that produced it.

    ``strict=False`` switches to the permissive interior test (empty
    neighbouring cubes ignored); it can lose boundary points and exists
    only to demonstrate that.
    """
    cm = star.cmap
    labels = star.labeling.labels
    noise = labels < 0
    pairs = region_pairs(cm, labels, strict=strict)
    near_n = boundary_extension_members(pairs, labels, cm.params.n_const)
    near_N = boundary_extension_members(pairs, labels, cm.params.N_const)
    J = cm.ids[noise | near_n]
    F = cm.ids[noise | near_N]
    return J, F


def reference_set(C: np.ndarray, star: StarResult) -> np.ndarray:
    """Ids of the clustered set in the ``m``-extension of the cubes of ``C``."""
    cm = star.cmap
    cells = np.unique(cm.cells_of_ids(C))
    _, ids = extend_region(cells, cm.params.m_const, cm)
    return ids


def per_cluster_graph(C, star: StarResult, k: int) -> ClusterGraph:
    """Reachability spanning tree of ``C`` sliced at the clustering scale.

    Core distances are taken against the ``m``-extension of ``C``, which
    holds every point within eps of ``C``; a core point's ``k`` nearest
    neighbours are all within eps.
    """
    C = np.asarray(C, dtype=np.int64)
    R = reference_set(C, star)
    cores = core_distances(C, R, star.points, k)
    tree = reach_spanning_tree(C, star.points, cores, upto=star.eps)
    return ClusterGraph(tree, len(C), len(R), cores)


def per_cluster_graph_literal(C, star: StarResult, k: int) -> ClusterGraph:
    """Complete reachability graph on the eps-neighbourhood of ``C``, cores taken within it."""
    C = np.asarray(C, dtype=np.int64)
    R = reference_set(C, star)
    pts = star.points
    near = np.zeros(len(R), dtype=bool)
    for lo, hi in distance.row_blocks(len(R), len(C)):
        near[lo:hi] = (distance.cross(pts[R[lo:hi]], pts[C]) <= star.eps).any(axis=1)
    B = R[near]
    if len(B) <= k:
        return ClusterGraph(WeightedGraph.from_edges(B), len(C), len(B), None)
    cores = core_distances(B, B, pts, k)
    G = mutual_reach_graph(B, pts, cores, cap=None, upto=star.eps)
    return ClusterGraph(G, len(C), len(B), cores)


def _filter_edges(state: IterationState, G: WeightedGraph, floor: float | None):
    """Split new edges into kept ones and drop counts.

    An edge is dropped when its weight is at most ``floor`` or its ends
    already share a component of ``H``.
    """
    if G.n_edges == 0:
        return G, 0, 0, 0
    low = G.w <= floor if floor is not None else np.zeros(G.n_edges, dtype=bool)
    joined = state.same_component(G.u, G.v)
    keep = ~(low | joined)
    kept = WeightedGraph(G.vertices, G.u[keep], G.v[keep], G.w[keep])
    return kept, int(low.sum()), int(joined.sum()), int((low & ~joined).sum())


def _absorb(state: IterationState, G: WeightedGraph) -> WeightedGraph:
    pos_u = np.searchsorted(state.all_ids, G.u)
    pos_v = np.searchsorted(state.all_ids, G.v)
    for a, b in zip(pos_u.tolist(), pos_v.tolist()):
        state.joined.union(a, b)
    return graph_union(state.H, WeightedGraph(state.H.vertices, G.u, G.v, G.w))


def advance_iteration(
    state: IterationState, eps_next: float, points, k: int, workers: int = 1, literal: bool = False, strict_interior: bool = True
) -> IterationState:
    """Cluster ``F`` at ``eps_next``, add each cluster's reachability tree to ``H``."""
    eps_next = float(eps_next)
    if not math.isfinite(eps_next) or eps_next <= state.eps:
        raise ParameterError(f"next scale {eps_next!r} must exceed the current scale {state.eps!r}")
    t0 = time.perf_counter()
    star = s_dbscan_star(points, eps_next, k, ids=state.F, workers=workers)
    clusters = star.labeling.clusters()
    build = per_cluster_graph_literal if literal else per_cluster_graph
    graphs = pmap(lambda C: build(C, star, k), clusters, workers)

    if graphs:
        combined = WeightedGraph.from_edges(
            state.all_ids,
            np.concatenate([g.graph.u for g in graphs]),
            np.concatenate([g.graph.v for g in graphs]),
            np.concatenate([g.graph.w for g in graphs]),
            check=False,
        )
    else:
        combined = WeightedGraph.from_edges(state.all_ids)
    if literal:
        kept, n_low, n_joined, n_low_only = combined, 0, 0, 0
    else:
        kept, n_low, n_joined, n_low_only = _filter_edges(state, combined, state.eps if state.index else None)
    joined = DisjointSet(0)
    joined.parent, joined.size = list(state.joined.parent), list(state.joined.size)
    new = IterationState(state.index + 1, eps_next, state.F, state.F, state.F, state.H, state.all_ids, joined, star)
    new.H = _absorb(new, kept)
    new.J, new.F = j_f_sets(star, strict_interior)
    elapsed = time.perf_counter() - t0

    i = new.index
    sizes = np.array([g.n_cluster for g in graphs], dtype=np.int64)
    refs = np.array([g.n_reference for g in graphs], dtype=np.int64)
    rows = [
        ("eps", eps_next),
        ("n_points", len(new.X)),
        ("n_core", int(star.core.sum())),
        ("n_clusters", len(clusters)),
        ("max_cluster", int(sizes.max()) if len(sizes) else 0),
        ("mean_cluster", float(sizes.mean()) if len(sizes) else 0.0),
        ("max_reference", int(refs.max()) if len(refs) else 0),
        ("mean_reference", float(refs.mean()) if len(refs) else 0.0),
        ("tree_edges", combined.n_edges),
        ("kept_edges", kept.n_edges),
        ("dropped_low_weight", n_low),
        ("dropped_joined", n_joined),
        ("dropped_low_weight_only", n_low_only),
        ("n_J", len(new.J)),
        ("n_F", len(new.F)),
        ("kept_fraction", len(new.F) / len(new.X) if len(new.X) else 0.0),
        ("distance_evaluations", star.n_distances),
        ("seconds", elapsed),
    ]
    new.report = state.report + [(f"iteration_{i}", name, value) for name, value in rows]
    new.report += [(f"iteration_{i}", f"cluster_{c}_size_reference", f"{g.n_cluster}/{g.n_reference}") for c, g in enumerate(graphs)]
    return new


def final_graph(state: IterationState, points, k: int, literal: bool = False) -> tuple[WeightedGraph, dict]:
    """``H`` completed by the reachability graph of the leftover set ``F``."""
    Y = state.F
    points = np.asarray(points, dtype=np.float64)
    info = {"n_points": len(Y)}
    if len(Y) <= 1:
        return state.H, info | {"edges": 0, "kept_edges": 0}
    reference = Y if len(Y) > k else state.all_ids
    info["reference"] = len(reference)
    cores = core_distances(Y, reference, points, k)
    if literal:
        G = mutual_reach_graph(Y, points, cores, cap=None)
        kept = G
        n_low = n_joined = n_low_only = 0
    else:
        G = reach_spanning_tree(Y, points, cores)
        kept, n_low, n_joined, n_low_only = _filter_edges(state, G, state.eps if state.index else None)
    F = graph_union(state.H, WeightedGraph(state.H.vertices, kept.u, kept.v, kept.w))
    info |= {
        "edges": G.n_edges,
        "kept_edges": kept.n_edges,
        "dropped_low_weight": n_low,
        "dropped_joined": n_joined,
        "dropped_low_weight_only": n_low_only,
    }
    return F, info


def validate_schedule(schedule) -> list[float]:
    try:
        sched = [float(e) for e in schedule]
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"bad eps schedule {schedule!r}") from exc
    if not sched:
        raise ParameterError("eps schedule is empty")
    if any(not math.isfinite(e) or e <= 0 for e in sched):
        raise ParameterError("eps schedule entries must be positive and finite")
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise ParameterError("eps schedule must be strictly increasing")
    return sched


@dataclass
class SHdbscanResult:
    hierarchy: HierarchyResult
    states: list[IterationState]
    graph: WeightedGraph
    report: list[tuple[str, str, object]]
    approximate: bool = False

    @property
    def selection(self):
        return self.hierarchy.selection

    @property
    def classes(self):
        return self.hierarchy.classes

    @property
    def labeling(self):
        return self.hierarchy.selection.labeling


def s_hdbscan_star(
    points,
    k: int,
    m: int | None = None,
    schedule=(),
    workers: int = 1,
    exclude_root: bool = False,
    early_stop: bool = False,
    literal: bool = False,
    ids=None,
    strict_interior: bool = True,
) -> SHdbscanResult:
    """HDBSCAN* through the iterated boundary construction.

    ``early_stop`` skips the final graph and discards the leftover noise,
    giving an approximate result. ``literal`` uses complete graphs on the
    eps-neighbourhood of each cluster instead of trees (for cross-checks).
    """
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be an integer >= 1, got {k!r}")
    m = k if m is None else m
    if int(m) != m or m < 1:
        raise ParameterError(f"min cluster size must be an integer >= 1, got {m!r}")
    sched = validate_schedule(schedule)
    points = np.asarray(points, dtype=np.float64)
    t0 = time.perf_counter()
    state = initial_state(points, ids)
    if len(state.all_ids) <= k:
        return SHdbscanResult(empty_hierarchy(state.all_ids), [state], state.H, [("total", "seconds", 0.0)])
    states = [state]
    for eps in sched:
        state = advance_iteration(state, eps, points, k, workers, literal, strict_interior)
        states.append(state)
    report = list(state.report)
    if early_stop:
        graph = state.H
        report.append(("final", "skipped", 1))
    else:
        t1 = time.perf_counter()
        graph, info = final_graph(state, points, k, literal)
        report += [("final", name, value) for name, value in info.items()]
        report.append(("final", "seconds", time.perf_counter() - t1))
    births = None
    if m == 1:
        births = core_distances(state.all_ids, state.all_ids, points, k).values
    t2 = time.perf_counter()
    hier = hierarchy_from_graph(graph, m, births, exclude_root)
    report.append(("hierarchy", "n_classes", len(hier.classes)))
    report.append(("hierarchy", "n_selected", len(hier.selection.chosen)))
    report.append(("hierarchy", "seconds", time.perf_counter() - t2))
    report.append(("total", "seconds", time.perf_counter() - t0))
    return SHdbscanResult(hier, states, graph, report, approximate=early_stop)


def suggest_schedule(points, k: int, steps: int = 3, sample: int = 2000, seed: int = 0) -> list[float]:
    """Quantiles ``j / (steps + 1)`` of sampled core distances.

    A heuristic starting point only; any increasing schedule gives the
    same clusters.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) <= k:
        raise ParameterError("need more than k points to suggest a schedule")
    rng = np.random.default_rng(seed)
    ids = np.arange(len(points))
    Q = rng.choice(ids, size=min(sample, len(ids)), replace=False)
    cores = core_distances(Q, ids, points, k).values
    qs = np.quantile(cores, [j / (steps + 1) for j in range(1, steps + 1)])
    out = []
    for q in qs.tolist():
        if q > 0 and (not out or q > out[-1]):
            out.append(float(q))
    if not out:
        raise ParameterError("sampled core distances are all zero; supply a schedule")
    return out
