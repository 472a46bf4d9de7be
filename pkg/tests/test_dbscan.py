import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubeclust.dbscan import (
    DENSE,
    LOCALLY_DENSE,
    SPARSE,
    NeighborLists,
    assign_borders,
    build_g1,
    categorize_cubes,
    core_points_oracle,
    dbscan_oracle,
    dbscan_star_oracle,
    local_core_scan,
    s_dbscan,
    s_dbscan_star,
)
from cubeclust.errors import OracleCapError, ParameterError
from cubeclust.grid import GridParams, build_cube_map
from cubeclust.labels import NOISE

from _oracles import dbscan_star_bfs, partition_of

SIDE_ONE = 2 * math.sqrt(2)  # eps giving unit cells in the plane


def cell_points(cell, count, x=0.5, y=0.5, spread=0.3, seed=0):
    rng = np.random.default_rng(seed)
    base = np.array([cell[0] + x, cell[1] + y])
    return base + rng.uniform(-spread / 2, spread / 2, size=(count, 2))


def test_core_examples():
    assert core_points_oracle(np.array([[0.0, 0], [1, 0], [2, 0]]), 1.0, 1).tolist() == [0, 1, 2]
    assert core_points_oracle(np.array([[0.0, 0], [0.5, 0], [9, 9]]), 1.0, 1).tolist() == [0, 1]


def test_core_oracle_vs_double_loop():
    pts = np.random.default_rng(0).uniform(0, 1, size=(100, 2))
    core, _ = dbscan_star_bfs(pts, 0.12, 5)
    assert core_points_oracle(pts, 0.12, 5).tolist() == np.flatnonzero(core).tolist()
    assert s_dbscan_star(pts, 0.12, 5).core_ids.tolist() == np.flatnonzero(core).tolist()


def test_two_blobs_and_one_blob():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(50, 2)) * 0.2
    b = rng.normal(size=(50, 2)) * 0.2 + 10
    lab = dbscan_star_oracle(np.vstack([a, b]), 1.0, 3)
    assert lab.n_clusters == 2
    assert s_dbscan_star(np.vstack([a, b]), 1.0, 3).labeling.same_partition(lab)
    tight = rng.uniform(0, 0.1, size=(20, 2))
    assert dbscan_star_oracle(tight, 1.0, 5).n_clusters == 1
    assert s_dbscan_star(tight, 1.0, 5).labeling.labels.tolist() == [0] * 20


def test_oracle_cap():
    with pytest.raises(OracleCapError):
        dbscan_star_oracle(np.zeros((30, 2)), 1.0, 2, cap=10)


@pytest.mark.parametrize("eps", [0.0, -1.0, math.nan, math.inf])
def test_bad_eps(eps):
    with pytest.raises(ParameterError):
        s_dbscan_star(np.zeros((3, 2)), eps, 2)


def test_bad_k():
    with pytest.raises(ParameterError):
        s_dbscan_star(np.zeros((3, 2)), 1.0, 0)


def test_empty_input():
    res = s_dbscan_star(np.zeros((0, 2)), 1.0, 3)
    assert len(res.labeling.ids) == 0 and res.n_distances == 0
    assert len(s_dbscan(np.zeros((0, 3)), 1.0, 3).ids) == 0


def test_categories():
    k = 4
    # (0,0): 5 points, dense.  (5,0): 4 points alone, |S^1| = k and 10 more two cells away
    pts = np.vstack([
        cell_points((0, 0), 5),
        cell_points((5, 0), 4, seed=1),
        cell_points((7, 0), 10, seed=2),
        cell_points((20, 20), 2, seed=3),
    ])
    cm = build_cube_map(pts, GridParams.build(2, SIDE_ONE))
    cats = categorize_cubes(cm, k)
    cat = {tuple(cm.keys[c].tolist()): int(cats.category[c]) for c in range(cm.n_cells)}
    assert cat[(0, 0)] == DENSE
    assert cat[(5, 0)] == LOCALLY_DENSE
    c5 = int(cm.lookup(np.array([[5, 0]]))[0])
    assert cats.count1[c5] == k and cats.count_m[c5] == k + 10
    assert cat[(20, 20)] == SPARSE
    assert cat[(7, 0)] == DENSE
    # empty cubes are not stored at all
    assert cm.lookup(np.array([[3, 3]]))[0] == -1


def test_category_counts_against_brute_force():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 8, size=(300, 2))
    params = GridParams.build(2, SIDE_ONE)
    cm = build_cube_map(pts, params)
    cats = categorize_cubes(cm, 6)
    keys = np.floor(pts).astype(int)
    for c in range(cm.n_cells):
        cheb = np.abs(keys - cm.keys[c]).max(axis=1)
        assert cats.count0[c] == (cheb == 0).sum()
        assert cats.count1[c] == (cheb <= 1).sum()
        if cats.category[c] != DENSE:
            assert cats.count_m[c] == (cheb <= params.m_const).sum()
    core = set(core_points_oracle(pts, SIDE_ONE, 6).tolist())
    for c in cats.of(DENSE):
        assert set(cm.cell_ids(c).tolist()) <= core
    for c in cats.of(SPARSE):
        assert not set(cm.cell_ids(c).tolist()) & core


def test_local_scan_threshold_zero():
    k = 3
    pts = np.vstack([cell_points((0, 0), 3), cell_points((2, 0), 1, x=0.1, seed=1)])
    # the outer point sits two cells right of (0,0), within eps of every point there
    cm = build_cube_map(pts, GridParams.build(2, SIDE_ONE))
    cats = categorize_cubes(cm, k)
    c0 = int(cm.lookup(np.array([[0, 0]]))[0])
    assert cats.count1[c0] == k and cats.category[c0] == LOCALLY_DENSE
    scan = local_core_scan(c0, cm, pts, cats.count1, k)
    assert scan.core.tolist() == [0, 1, 2]
    assert all(o.tolist() == [3] for o in scan.outer)


def test_local_scan_without_outer_neighbours():
    k = 3
    pts = np.vstack([cell_points((0, 0), 2), cell_points((3, 0), 2, x=0.95, seed=1)])
    cm = build_cube_map(pts, GridParams.build(2, SIDE_ONE))
    cats = categorize_cubes(cm, k)
    c0 = int(cm.lookup(np.array([[0, 0]]))[0])
    assert cats.category[c0] == LOCALLY_DENSE
    scan = local_core_scan(c0, cm, pts, cats.count1, k)
    assert scan.core.size == 0 and scan.n_distances == 4


def test_rule_three_edge():
    k = 3
    # dense T at (0,0); a lone point of S at (2,0) sees all of T within eps
    pts = np.vstack([cell_points((0, 0), 4, x=0.9, spread=0.1), [[2.05, 0.5]]])
    res = s_dbscan_star(pts, SIDE_ONE, k)
    cm = res.cmap
    T = int(cm.lookup(np.array([[0, 0]]))[0])
    S = int(cm.lookup(np.array([[2, 0]]))[0])
    assert res.categories.category[T] == DENSE
    assert res.categories.category[S] == LOCALLY_DENSE
    assert (min(S, T), max(S, T)) in res.g1.edge_dict()
    assert (min(S, T), max(S, T)) in res.g2.edge_dict()
    assert res.labeling.n_clusters == 1


def test_one_sided_lists_give_no_edge():
    k = 3
    # S=(0,0) holds core p=0 reaching the noise point q=3 of T=(3,0); the
    # core point t=4 of T only reaches further right, so T never lists S
    pts = np.array([[0.95, 0.5], [0.05, 0.5], [0.1, 0.5], [3.05, 0.5], [3.95, 0.5], [6.6, 0.5], [6.7, 0.5]])
    res = s_dbscan_star(pts, SIDE_ONE, k)
    cm, lists = res.cmap, res.lists
    S = int(cm.lookup(np.array([[0, 0]]))[0])
    T = int(cm.lookup(np.array([[3, 0]]))[0])
    assert res.core_ids.tolist() == [0, 4]
    assert T in lists.cube_lists[S].tolist()
    assert S not in lists.cube_lists[T].tolist()
    assert set(res.g1.vertices.tolist()) == {S, T}
    assert res.g1.n_edges == 0
    assert res.labeling.n_clusters == 2
    assert res.labeling.same_partition(dbscan_star_oracle(pts, SIDE_ONE, k))


def brute_cube_pairs(res):
    """Non-adjacent cube pairs of the graph holding two core points within eps."""
    cm = res.cmap
    pts = res.points
    core = res.core_ids
    cells = cm.cells_of_ids(core)
    d = np.sqrt(((pts[core][:, None] - pts[core][None]) ** 2).sum(-1))
    out = set()
    for i, j in zip(*np.nonzero(d <= res.eps)):
        a, b = int(cells[i]), int(cells[j])
        if a < b and np.abs(cm.keys[a] - cm.keys[b]).max() >= 2:
            out.add((a, b))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([1, 3, 10]), st.floats(0.05, 0.4))
def test_cube_graph_rules(seed, k, eps):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, size=(int(rng.integers(20, 300)), 2))
    res = s_dbscan_star(pts, eps, k)
    cm, cats, lists = res.cmap, res.categories, res.lists
    # vertices: dense cubes plus locally dense cubes holding a core point
    core_cells = set(cm.cells_of_ids(res.core_ids).tolist())
    assert set(res.g1.vertices.tolist()) == core_cells
    expected = set()
    verts = sorted(core_cells)
    for i, S in enumerate(verts):
        for T in verts[i + 1:]:
            cheb = np.abs(cm.keys[S] - cm.keys[T]).max()
            if cheb <= 1:
                expected.add((S, T))
                continue
            inS = S in lists.cube_lists and T in lists.cube_lists[S].tolist()
            inT = T in lists.cube_lists and S in lists.cube_lists[T].tolist()
            cS, cT = cats.category[S], cats.category[T]
            if cS == LOCALLY_DENSE and cT == LOCALLY_DENSE and inS and inT:
                expected.add((S, T))
            elif (cS == LOCALLY_DENSE and cT == DENSE and inS) or (cT == LOCALLY_DENSE and cS == DENSE and inT):
                expected.add((S, T))
    assert set(res.g1.edge_dict()) == expected
    # pruning keeps exactly the far edges with a core pair within eps
    pairs = brute_cube_pairs(res)
    far_g1 = {e for e, w in res.g1.edge_dict().items() if w >= 2}
    far_g2 = {e for e, w in res.g2.edge_dict().items() if w >= 2}
    assert far_g2 == far_g1 & pairs
    near = {e for e, w in res.g1.edge_dict().items() if w < 2}
    assert near <= set(res.g2.edge_dict())
    # every added dense-dense edge joins cubes with a pair within eps
    added = set(res.graph.edge_dict()) - set(res.g2.edge_dict())
    assert added <= pairs


def test_merge_dense_examples():
    k = 3
    close = np.vstack([cell_points((0, 0), 4, x=0.95, spread=0.05), cell_points((2, 0), 4, x=0.05, spread=0.05, seed=1)])
    res = s_dbscan_star(close, SIDE_ONE, k)
    assert res.labeling.n_clusters == 1
    assert res.distance_evaluations["dense_merge"] > 0
    far = np.vstack([cell_points((0, 0), 4, x=0.05, spread=0.05), cell_points((3, 0), 4, x=0.95, spread=0.05, seed=1)])
    res = s_dbscan_star(far, SIDE_ONE, k)
    assert res.labeling.n_clusters == 2
    assert res.graph.n_edges == res.g2.n_edges
    assert res.distance_evaluations["dense_merge"] == 16


def test_merge_skips_joined_components():
    k = 3
    # a row of dense cubes: every ring pair is already joined through adjacency
    pts = np.vstack([cell_points((i, 0), 4, seed=i) for i in range(6)])
    res = s_dbscan_star(pts, SIDE_ONE, k)
    assert res.labeling.n_clusters == 1
    assert res.n_distances == 0


def test_dense_skip():
    pts = np.random.default_rng(0).uniform(0, 0.1, size=(500, 3))
    res = s_dbscan_star(pts, 10.0, 25)
    assert res.labeling.n_clusters == 1
    assert res.n_distances == 0
    assert res.distance_evaluations == {"local_scan": 0, "dense_merge": 0}


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.choice([2, 3]))
    size = int(rng.integers(5, 400))
    kind = rng.integers(0, 3)
    if kind == 0:
        pts = rng.uniform(0, 10, size=(size, n))
    elif kind == 1:
        centres = rng.uniform(0, 10, size=(4, n))
        pts = centres[rng.integers(0, 4, size)] + rng.normal(scale=0.7, size=(size, n))
    else:
        pts = rng.uniform(0, 5, size=(size, n)).round(0)  # many duplicates
    k = int(rng.choice([1, 3, 10, 25]))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    upper = d[np.triu_indices(size, 1)]
    eps = float(np.quantile(upper, rng.choice([0.002, 0.01, 0.03, 0.1, 0.3]))) if len(upper) else 1.0
    return pts, max(eps, 1e-3), k


@pytest.mark.parametrize("seed", range(60))
def test_matches_oracles(seed):
    pts, eps, k = random_instance(seed)
    res = s_dbscan_star(pts, eps, k)
    ref = dbscan_star_oracle(pts, eps, k)
    assert res.labeling.same_partition(ref)
    core, labels = dbscan_star_bfs(pts, eps, k)
    assert partition_of(res.labeling.labels) == partition_of(labels)
    assert res.core_ids.tolist() == np.flatnonzero(core).tolist()
    border, _ = assign_borders(res)
    assert border.same_partition(dbscan_oracle(pts, eps, k))


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 12), st.integers(0, 12)), min_size=1, max_size=80),
    st.integers(1, 6),
    st.floats(0.5, 4.0),
)
def test_matches_oracle_on_lattice_points(raw, k, eps):
    # integer coordinates put many points exactly on cell faces and at distance exactly eps
    pts = np.array(raw, dtype=np.float64) * 0.5
    res = s_dbscan_star(pts, eps, k)
    assert res.labeling.same_partition(dbscan_star_oracle(pts, eps, k))
    assert assign_borders(res)[0].same_partition(dbscan_oracle(pts, eps, k))


def test_border_soundness_and_completeness():
    for seed in range(20):
        pts, eps, k = random_instance(1000 + seed)
        res = s_dbscan_star(pts, eps, k)
        lab, _ = assign_borders(res)
        core = res.core_ids
        star = res.labeling.labels
        d = np.sqrt(((pts[:, None] - pts[core][None]) ** 2).sum(-1))
        for i in np.flatnonzero(star == NOISE):
            reach = d[i] <= eps
            if lab.labels[i] == NOISE:
                assert not reach.any()
            else:
                assert (lab.labels[core[reach]] == lab.labels[i]).any()


def test_border_examples():
    k = 2
    a = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]])
    b = a + [2.0, 0.0]
    one = np.array([[0.9, 0.0]])
    far = np.array([[1.1, 5.0]])
    pts = np.vstack([a, b, one, far])
    lab = s_dbscan(pts, 0.75, k)
    assert lab.labels.tolist() == [0, 0, 0, 1, 1, 1, 0, NOISE]
    # a point within eps of both clusters joins the one with the smaller id
    pts = np.vstack([a, b, [[1.1, 0.0]]])
    lab = s_dbscan(pts, 0.95, k)
    assert lab.labels[-1] == 0
    assert dbscan_oracle(pts, 0.95, k).labels[-1] == 0


def test_singleton_cluster_exists():
    # a core point whose neighbours are all non-core forms a cluster on its own
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    lab = s_dbscan_star(pts, 1.0, 3).labeling
    assert lab.labels.tolist() == [0, NOISE, NOISE, NOISE]
    assert dbscan_star_oracle(pts, 1.0, 3).same_partition(lab)


def test_workers_give_identical_results():
    pts, eps, k = random_instance(7)
    pts = np.vstack([pts, np.random.default_rng(0).uniform(0, 10, size=(2000, pts.shape[1]))])
    a = s_dbscan_star(pts, eps, k, workers=1)
    b = s_dbscan_star(pts, eps, k, workers=4)
    assert np.array_equal(a.labeling.labels, b.labeling.labels)
    assert a.graph.edge_dict() == b.graph.edge_dict()
    assert a.distance_evaluations == b.distance_evaluations


def test_subset_ids():
    pts, eps, k = random_instance(3)
    ids = np.arange(0, len(pts), 2)
    res = s_dbscan_star(pts, eps, k, ids=ids)
    assert res.labeling.ids.tolist() == ids.tolist()
    assert partition_of(res.labeling.labels) == partition_of(dbscan_star_oracle(pts, eps, k, ids=ids).labels)


def test_neighbour_lists_are_balls():
    pts, eps, k = random_instance(11)
    res = s_dbscan_star(pts, eps, k)
    lists: NeighborLists = res.lists
    for p in list(lists.outer)[:50]:
        d = np.sqrt(((pts - pts[p]) ** 2).sum(-1))
        expected = np.flatnonzero(d <= eps)
        assert lists.ball(p).tolist() == expected[expected != p].tolist()
    cm = res.cmap
    cats = res.categories
    for S in lists.cube_lists:
        assert cats.category[S] == LOCALLY_DENSE


def test_g1_is_built_from_lists():
    pts, eps, k = random_instance(12)
    res = s_dbscan_star(pts, eps, k)
    again = build_g1(res.cmap, res.categories, res.lists)
    assert again.edge_dict() == res.g1.edge_dict()
