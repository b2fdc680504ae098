from dataclasses import replace

import numpy as np
import pytest

from crocs.baselines import cluster_consumers_by_vector, dcp, gpf, gpf_consumer_prototypes, rlp
from crocs.cluster import Algorithm, ClusterConfig
from crocs.core import ConfigError, ConsumerRecord, CrocsError, DataError, RepresentativeLoadSet
from crocs.metrics import ari
from crocs.pipeline import CrocsConfig, consumer_key, run_crocs, stage_one, stage_two
from crocs.setdist import set_distance
from crocs.synth import SyntheticSpec, generate_dataset

HAC = ClusterConfig(Algorithm.HAC_WARD)


@pytest.fixture(scope="module")
def data():
    return generate_dataset(SyntheticSpec(m=24, p=40, K=3, k_shapes=3, seed=4))


def same_rls(a: RepresentativeLoadSet, b: RepresentativeLoadSet):
    assert a.consumer_id == b.consumer_id
    np.testing.assert_array_equal(a.profiles, b.profiles)
    np.testing.assert_array_equal(a.counts, b.counts)
    for x, y in zip(a.member_days, b.member_days):
        np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize("algo", [Algorithm.HAC_WARD, Algorithm.KMEDOIDS])
def test_recovers_planted_clusters(data, algo):
    cfg = CrocsConfig(k_stage1=6, K_consumers=3, stage1_algorithm=ClusterConfig(algo, restarts=5), seed=1)
    res = run_crocs(data.records, cfg)
    assert ari(res.consumer_partition, data.truth) == 1.0


def test_rls_structure(data):
    res = stage_one(data.records, CrocsConfig(k_stage1=5, stage1_algorithm=HAC))
    for rec, r in zip(data.records, res.rls):
        assert r.k == 5 and r.total_days == rec.p
        days = np.sort(np.concatenate(r.member_days))
        np.testing.assert_array_equal(days, rec.day_index)
        # canonical order: counts non-increasing
        assert np.all(np.diff(r.counts) <= 0)
        # medoid prototypes are actual (normalised) days of the consumer
        for prof, mem in zip(r.profiles, r.member_days):
            rows = [np.searchsorted(rec.day_index, d) for d in mem]
            assert any(np.array_equal(prof, rec.values[i]) for i in rows)


def test_deterministic_and_permutation_invariant(data):
    cfg = CrocsConfig(k_stage1=4, K_consumers=3, seed=11, stage1_algorithm=ClusterConfig(restarts=4))
    a = run_crocs(data.records, cfg)
    b = run_crocs(data.records, cfg)
    np.testing.assert_array_equal(a.set_matrix, b.set_matrix)
    np.testing.assert_array_equal(a.consumer_partition.labels, b.consumer_partition.labels)
    perm = np.random.default_rng(0).permutation(len(data.records))
    c = run_crocs([data.records[i] for i in perm], cfg)
    for i, j in enumerate(perm):
        same_rls(c.rls_per_consumer[i], a.rls_per_consumer[j])
    np.testing.assert_allclose(c.set_matrix, a.set_matrix[np.ix_(perm, perm)], atol=1e-12)


def test_removing_a_consumer_leaves_the_others_alone(data):
    cfg = CrocsConfig(k_stage1=4, seed=2, stage1_algorithm=ClusterConfig(restarts=4))
    full = stage_one(data.records, cfg).rls
    part = stage_one(data.records[1:], cfg).rls
    for a, b in zip(full[1:], part):
        same_rls(a, b)


def test_thread_count_does_not_change_output(data):
    cfg = CrocsConfig(k_stage1=5, K_consumers=3, stage1_algorithm=ClusterConfig(restarts=3))
    one = run_crocs(data.records, replace(cfg, threads=1))
    many = run_crocs(data.records, replace(cfg, threads=4))
    np.testing.assert_array_equal(one.set_matrix, many.set_matrix)
    np.testing.assert_array_equal(one.consumer_partition.labels, many.consumer_partition.labels)
    for a, b in zip(one.rls_per_consumer, many.rls_per_consumer):
        same_rls(a, b)


def test_set_matrix_entries(data):
    cfg = CrocsConfig(k_stage1=3, K_consumers=2, stage1_algorithm=HAC)
    s1 = stage_one(data.records[:6], cfg)
    s2 = stage_two(s1.rls, cfg)
    assert s2.set_matrix[1, 4] == pytest.approx(set_distance(s1.rls[1], s1.rls[4]), abs=1e-12)
    # pairings only within clusters by default
    for (i, j) in s2.pairings:
        assert s2.partition.labels[i] == s2.partition.labels[j]
    allp = stage_two(s1.rls, replace(cfg, pairings="all")).pairings
    assert len(allp) == 15
    assert stage_two(s1.rls, replace(cfg, pairings="none")).pairings is None
    assert stage_two(s1.rls, replace(cfg, set_distance="hd")).pairings is None


def test_short_and_empty_records():
    rng = np.random.default_rng(0)
    good = [ConsumerRecord(f"g{i}", rng.random((8, 6))) for i in range(4)]
    short = ConsumerRecord("short", rng.random((2, 6)))
    empty = ConsumerRecord("empty", np.full((3, 6), np.nan))
    cfg = CrocsConfig(k_stage1=3, K_consumers=2, stage1_algorithm=HAC)
    with pytest.raises(DataError, match="short"):
        run_crocs(good + [short], cfg)
    res = run_crocs(good + [short, empty], replace(cfg, on_short_record="skip"))
    assert set(res.excluded) == {"short", "empty"}
    assert list(res.labels_for_input(6)[4:]) == [-1, -1]
    with pytest.raises(CrocsError):
        run_crocs(good[:1] + [short], replace(cfg, on_short_record="skip"))
    with pytest.raises(DataError):
        run_crocs([], cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        CrocsConfig(k_stage1=0)
    with pytest.raises(ConfigError):
        CrocsConfig(stage1_algorithm=ClusterConfig(Algorithm.KMEANS))
    with pytest.raises(ConfigError):
        CrocsConfig(pairings="some")
    with pytest.raises(ValueError):
        CrocsConfig(distance="cosine")
    cfg = CrocsConfig(distance="dtw-3", stage1_algorithm=HAC)
    assert cfg.stage2_algorithm.algorithm is Algorithm.HAC_WARD
    d = cfg.to_dict()
    assert d["distance"] == "dtw-3" and d["stage1_algorithm"]["algorithm"] == "hac_ward"


def test_consumer_key_stable():
    # [DERIVED] frozen so seeds stay reproducible across versions
    assert consumer_key("c00000") == consumer_key("c00000")
    assert consumer_key("a") != consumer_key("b")
    assert consumer_key(1) != consumer_key("1")
    assert 0 <= consumer_key("x") < 2**63


# baselines


def test_rlp_dcp():
    rec = ConsumerRecord("a", [[0.0, 2.0], [2.0, 4.0]])
    np.testing.assert_array_equal(rlp(rec), [1.0, 3.0])
    rls = RepresentativeLoadSet("a", [[1.0], [2.0], [3.0]], [2, 5, 5])
    np.testing.assert_array_equal(dcp(rls), [2.0])


def test_gpf(data):
    rep = gpf(data.records[:5], 4, ClusterConfig(Algorithm.KMEANS, restarts=3))
    assert rep.proportions.shape == (5, 4)
    np.testing.assert_allclose(rep.proportions.sum(1), 1)
    assert gpf_consumer_prototypes(rep, 0).shape[1] == rep.global_prototypes.shape[1]
    med = gpf(data.records[:3], 3, ClusterConfig(Algorithm.HAC_WARD))
    assert med.k == 3
    with pytest.raises(ConfigError):
        gpf(data.records[:1], 1000)


def test_cluster_consumers_by_vector():
    X = np.vstack([np.zeros((5, 2)), np.ones((5, 2)) * 10])
    truth = [0] * 5 + [1] * 5
    assert ari(cluster_consumers_by_vector(X, 2), truth) == 1.0
    assert ari(cluster_consumers_by_vector(X, 2, HAC), truth) == 1.0
