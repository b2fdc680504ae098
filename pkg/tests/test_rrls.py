import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from crocs.core import CrocsError, Partition, RepresentativeLoadSet
from crocs.distance import dtw
from crocs.pipeline import CrocsConfig, stage_one
from crocs.cluster import Algorithm, ClusterConfig
from crocs.rrls import (CommunityConfig, build_prototype_graph, detect_communities, extract_rrls, leiden_rber,
                        rber_quality, rrls_for_partition, weighted_medoid)
from crocs.setdist import wsmd_pairings
from crocs.synth import ideal_cluster, shape_template


def set_partitions(n):
    """Every partition of range(n) as a restricted growth string."""
    def grow(prefix, top):
        if len(prefix) == n:
            yield list(prefix)
            return
        for c in range(top + 2):
            yield from grow(prefix + [c], max(top, c))
    yield from grow([0], 0)


def loop_quality(W, s, labels, gr):
    n = len(s)
    return sum(W[u, v] - gr * s[u] * s[v] for u in range(n) for v in range(n) if u != v and labels[u] == labels[v])


def two_cliques():
    W = np.zeros((8, 8))
    for block in (range(0, 4), range(4, 8)):
        for u in block:
            for v in block:
                if u != v:
                    W[u, v] = 1.0 + 0.1 * ((u + v) % 3)
    W[3, 4] = W[4, 3] = 0.3
    s = np.array([1.0, 2.0, 1.0, 3.0, 2.0, 1.0, 1.0, 2.0])
    return W, s


def test_set_partition_count():
    assert sum(1 for _ in set_partitions(8)) == 4140


def test_quality_matches_loop_formula(rng):
    W, s = two_cliques()
    Ws = sparse.csr_matrix(W)
    for _ in range(30):
        lab = rng.integers(0, 3, 8)
        assert rber_quality(Ws, s, lab, 0.07) == pytest.approx(loop_quality(W, s, lab, 0.07), abs=1e-12)


@pytest.mark.parametrize("gr", [0.001, 0.02, 0.05, 0.08, 0.2, 1.0])
def test_two_cliques_reach_exhaustive_optimum(gr):
    W, s = two_cliques()
    best = max(loop_quality(W, s, p, gr) for p in set_partitions(8))
    labels, trace = leiden_rber(sparse.csr_matrix(W), s, gr, seed=3)
    assert loop_quality(W, s, labels, gr) == pytest.approx(best, abs=1e-12)
    assert trace[-1] == pytest.approx(best, abs=1e-12)


def test_two_cliques_split_at_moderate_resolution():
    W, s = two_cliques()
    labels, _ = leiden_rber(sparse.csr_matrix(W), s, 0.05)
    assert list(labels) == [0, 0, 0, 0, 1, 1, 1, 1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.001, 0.5))
def test_leiden_invariants_on_random_graphs(seed, gr):
    rng = np.random.default_rng(seed)
    n = 12
    A = rng.random((n, n)) * (rng.random((n, n)) < 0.3)
    np.fill_diagonal(A, 0)
    W = sparse.csr_matrix(A + A.T)
    s = rng.integers(1, 5, n).astype(float)
    labels, trace = leiden_rber(W, s, gr, seed=seed)
    assert np.all(np.diff(trace) >= -1e-9)
    assert rber_quality(W, s, labels, gr) >= -1e-12     # never worse than singletons
    # every community induces a connected subgraph
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size > 1:
            assert connected_components(W[idx][:, idx], directed=False)[0] == 1


@pytest.mark.parametrize("shapes", [(0, 8), (2, 6, 13), (1, 4, 9, 17)])
def test_ideal_cluster_recovery(shapes):
    n_c = len(shapes)
    recs = ideal_cluster(20, shapes, p=90, seed=n_c)
    cfg = CrocsConfig(k_stage1=n_c, K_consumers=1, stage1_algorithm=ClusterConfig(Algorithm.HAC_WARD))
    rls = stage_one(recs, cfg).rls
    pairs = [(i, j) for i in range(20) for j in range(i + 1, 20)]
    g = build_prototype_graph(range(20), rls, wsmd_pairings(rls, pairs))
    assert g.n_vertices == 20 * n_c
    assert g.n_edges == 2 * n_c * len(pairs)
    assert g.weak_components()[0] == n_c
    res = detect_communities(g, CommunityConfig(target_communities=n_c))
    rr = extract_rrls(g, res)
    assert rr.n_communities == n_c
    templates = [shape_template(s) for s in shapes]
    for com in rr.communities:
        assert min(dtw(com.hyperprototype_medoid, t) for t in templates) <= 1e-9
        assert com.consumer_coverage == 1.0
    assert sum(c.day_coverage for c in rr.communities) == pytest.approx(1.0, abs=1e-9)


def test_graph_accepts_either_pairing_orientation():
    rng = np.random.default_rng(0)
    rls = [RepresentativeLoadSet(i, rng.random((3, 6)), [1, 2, 3]) for i in range(3)]
    fwd = wsmd_pairings(rls, [(0, 1), (0, 2), (1, 2)])
    rev = {(j, i): p for (i, j), p in fwd.items()}
    g1 = build_prototype_graph([0, 1, 2], rls, fwd)
    g2 = build_prototype_graph([0, 1, 2], rls, rev)
    A1 = g1.symmetric_adjacency().toarray()
    A2 = g2.symmetric_adjacency().toarray()
    # swapping orientation only relabels which direction is stored first
    np.testing.assert_allclose(A1, A2)
    assert g1.density == pytest.approx(g2.density)


def test_density_options():
    rng = np.random.default_rng(1)
    rls = [RepresentativeLoadSet(i, rng.random((2, 6)), [1, 3]) for i in range(2)]
    pr = wsmd_pairings(rls, [(0, 1)])
    gw = build_prototype_graph([0, 1], rls, pr)
    gp = build_prototype_graph([0, 1], rls, pr, density="pairs")
    total = gw.similarity.sum()
    # [DERIVED] cross pairs: weighted (4*4)*2 = 32, plain 2*2*2 = 8
    assert gw.density == pytest.approx(total / 32)
    assert gp.density == pytest.approx(total / 8)
    with pytest.raises(ValueError):
        build_prototype_graph([0, 1], rls, pr, density="edges")


def test_unreachable_target_reports_last_count():
    W, s = two_cliques()
    rls = [RepresentativeLoadSet(i, [[0.0, 1.0]], [1]) for i in range(2)]
    g = build_prototype_graph([0, 1], rls, wsmd_pairings(rls, [(0, 1)]))
    with pytest.raises(CrocsError, match="last count"):
        detect_communities(g, CommunityConfig(gamma=0.1, gamma_max=0.3, target_communities=5))


def test_weighted_medoid():
    P = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]])
    assert weighted_medoid(P, [1, 1, 1]) == 1
    assert weighted_medoid(P, [1, 1, 100]) == 2
    assert weighted_medoid(P[:1], [3]) == 0


def test_rrls_for_partition_and_major_minor():
    recs = ideal_cluster(6, (0, 8), p=40, seed=0) + ideal_cluster(6, (3, 13), p=40, seed=1)
    recs = [r.__class__(f"x{i}", r.values, r.day_index) for i, r in enumerate(recs)]
    cfg = CrocsConfig(k_stage1=2, K_consumers=2, stage1_algorithm=ClusterConfig(Algorithm.HAC_WARD))
    rls = stage_one(recs, cfg).rls
    part = Partition(np.repeat([0, 1], 6))
    pairs = [(i, j) for c in range(2) for i in part.members(c) for j in part.members(c) if i < j]
    out = rrls_for_partition(rls, part, wsmd_pairings(rls, pairs), CommunityConfig(target_communities=2),
                             major_threshold=0.6)
    assert set(out) == {0, 1}
    for rr in out.values():
        assert rr.n_communities == 2
        assert len(rr.major) + len(rr.minor) == 2
        assert all(c.day_coverage >= 0.6 for c in rr.major)
