import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crocs.core import AlignmentError, ConfigError, ConsumerRecord, DataError, EmptyRecordError, Partition
from crocs.distance import dtw
from crocs.preprocess import (drop_incomplete_days, is_workday, normalize_days, normalize_profile, read_holidays,
                              segment_days)
from crocs.synth import (N_SHAPES, PHI, ZERO_NOISE, SyntheticSpec, TransitionProbabilityMatrix, fit_tpm,
                         generate_dataset, generate_outlier_profile, ideal_cluster, instantiate_shape, random_tpm,
                         sample_sequence, shape_template, validate_catalog)

# preprocessing


def test_segment_days():
    days = segment_days(np.arange(96.0), 48, "a", first_day=10)
    assert [d.day_index for d in days] == [10, 11]
    np.testing.assert_array_equal(days[1].values, np.arange(48.0, 96.0))
    with pytest.raises(AlignmentError):
        segment_days(np.arange(50.0), 48)


def test_normalisations():
    x = np.array([2.0, 4.0, 6.0])
    np.testing.assert_allclose(normalize_profile(x), [0, 0.5, 1])
    z = normalize_profile(x, "znorm")
    assert z.mean() == pytest.approx(0) and z.std() == pytest.approx(1)
    np.testing.assert_array_equal(normalize_profile(np.full(4, 3.0)), np.zeros(4))
    np.testing.assert_array_equal(normalize_profile(np.full(4, 3.0), "znorm"), np.zeros(4))
    np.testing.assert_array_equal(normalize_profile(x, "none"), x)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 100), st.floats(-50, 50))
def test_minmax_is_affine_invariant(seed, scale, shift):
    x = np.random.default_rng(seed).random((3, 12))
    np.testing.assert_allclose(normalize_days(x * scale + shift), normalize_days(x), atol=1e-9)
    y = normalize_days(x)
    assert y.min() >= 0 and y.max() <= 1


def test_drop_incomplete_days():
    v = np.ones((3, 10))
    v[0, :2] = np.nan        # 20% missing: dropped at 10%
    v[1, 4] = np.nan         # 10% missing: kept and interpolated
    v[1, 3], v[1, 5] = 0.0, 2.0
    rec = ConsumerRecord("a", v, [4, 5, 6])
    out = drop_incomplete_days(rec, 0.1)
    assert list(out.day_index) == [5, 6]
    assert out.values[0, 4] == pytest.approx(1.0)
    assert not np.isnan(out.values).any()
    with pytest.raises(EmptyRecordError):
        drop_incomplete_days(ConsumerRecord("b", np.full((2, 4), np.nan)), 1.0)


def test_workdays_and_holidays(tmp_path):
    f = tmp_path / "h.txt"
    f.write_text("# public holidays\n2024-01-01\n\n2024-12-25  # christmas\n")
    hol = read_holidays(f)
    assert hol == {dt.date(2024, 1, 1), dt.date(2024, 12, 25)}
    assert not is_workday(dt.date(2024, 1, 1), hol)
    assert is_workday(dt.date(2024, 1, 2), hol)
    assert not is_workday(dt.date(2024, 1, 6))


def test_record_validation():
    with pytest.raises(DataError):
        ConsumerRecord("a", np.zeros(5))
    with pytest.raises(DataError):
        ConsumerRecord("a", np.zeros((2, 3)), [1, 1])


# shapes and generator


def test_templates_are_normalised_and_distinct():
    T = np.array([shape_template(s) for s in range(N_SHAPES)])
    assert T.shape == (N_SHAPES, PHI)
    np.testing.assert_allclose(T.min(1), 0)
    np.testing.assert_allclose(T.max(1), 1)
    for a in range(N_SHAPES):
        for b in range(a + 1, N_SHAPES):
            assert dtw(T[a], T[b]) > 0.5


def test_zero_noise_instance_is_template():
    rng = np.random.default_rng(0)
    for s in range(N_SHAPES):
        np.testing.assert_allclose(instantiate_shape(s, rng, ZERO_NOISE), shape_template(s), atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_catalog_is_separable(seed):
    within, across = validate_catalog(20, seed)
    assert within < across


def test_outlier_profiles_far_from_catalog():
    rng = np.random.default_rng(3)
    T = [shape_template(s) for s in range(N_SHAPES)]
    for _ in range(20):
        o = generate_outlier_profile(rng)
        assert min(dtw(o, t) for t in T) > 0.5


def test_dataset_structure_and_determinism():
    spec = SyntheticSpec(m=40, p=30, K=3, k_shapes=4, n_outliers=5, n_outlier_consumers=2, seed=9)
    a, b = generate_dataset(spec), generate_dataset(spec)
    for ra, rb in zip(a.records, b.records):
        np.testing.assert_array_equal(ra.values, rb.values)
    assert len(a.records) == 40 and a.records[0].values.shape == (30, PHI)
    assert isinstance(a.truth, Partition)
    assert a.outlier_consumers.sum() == 2
    assert len(set(a.cluster_shapes)) == 3
    for c, rec in enumerate(a.records):
        ds = a.day_shapes[c]
        assert (ds == -1).sum() == 5
        if a.inlier_mask[c]:
            g = a.truth.labels[c]
            assert set(ds[ds >= 0]) <= set(a.cluster_shapes[g])
    other = generate_dataset(SyntheticSpec(m=40, p=30, K=3, k_shapes=4, seed=10))
    assert not np.array_equal(other.records[0].values, a.records[0].values)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec(k_shapes=0)
    with pytest.raises(ConfigError):
        SyntheticSpec(p=10, n_outliers=11)
    with pytest.raises(ConfigError):
        SyntheticSpec(sequencing="weekly")
    with pytest.raises(ConfigError):
        generate_dataset(SyntheticSpec(K=30, k_shapes=1))


def test_ideal_cluster_uses_every_shape():
    recs = ideal_cluster(5, (0, 3, 8), p=20, seed=1)
    T = np.array([shape_template(s) for s in (0, 3, 8)])
    for r in recs:
        hits = [(np.abs(r.values - t).max(axis=1) == 0).sum() for t in T]
        assert min(hits) >= 1 and sum(hits) == 20


# Markov sequencing


def test_tpm_round_trip():
    rng = np.random.default_rng(5)
    tpm = random_tpm(4, rng)
    seq = sample_sequence(tpm, 200_000, rng)
    fit = fit_tpm(seq, 4)
    np.testing.assert_allclose(fit.matrix, tpm.matrix, atol=0.01)
    np.testing.assert_allclose(fit.initial, tpm.initial, atol=0.01)


def test_fit_tpm_counts():
    fit = fit_tpm([0, 1, 1, 0, 1], 3)
    # [DERIVED] transitions 0->1 twice, 1->1 once, 1->0 once; state 2 unseen
    np.testing.assert_allclose(fit.matrix, [[0, 1, 0], [0.5, 0.5, 0], [1 / 3, 1 / 3, 1 / 3]])
    np.testing.assert_allclose(fit.initial, [0.4, 0.6, 0])
    with pytest.raises(DataError):
        fit_tpm([0, 3], 3)


def test_tpm_validation_and_absorbing_chain():
    with pytest.raises(DataError):
        TransitionProbabilityMatrix([[0.5, 0.4], [0, 1]], [1, 0])
    stay = TransitionProbabilityMatrix(np.eye(3), [0, 1, 0])
    assert set(sample_sequence(stay, 50, np.random.default_rng(0))) == {1}


def test_markov_dataset_follows_cluster_chain():
    spec = SyntheticSpec(m=6, p=3000, K=1, k_shapes=3, sequencing="markov", seed=2)
    ds = generate_dataset(spec)
    tpm = ds.tpms[0]
    shapes = ds.cluster_shapes[0]
    seq = np.concatenate([np.searchsorted(shapes, d) for d in ds.day_shapes])
    np.testing.assert_allclose(fit_tpm(seq, 3).matrix, tpm.matrix, atol=0.03)
