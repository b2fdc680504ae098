import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_mutual_info_score, adjusted_rand_score

from crocs.core import DataError
from crocs.metrics import (ami, ari, cohen_kappa, contingency, evi_report, expected_mutual_information,
                           jsd_normalized, kappa_normalized, label_counts, mutual_information, psi,
                           reconstruction_error)

labelings = st.lists(st.integers(0, 3), min_size=2, max_size=12)


def pair_ari(a, b):
    """ARI from explicit pair enumeration."""
    n = len(a)
    same_a = same_b = both = 0
    for i, j in itertools.combinations(range(n), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        same_a += sa
        same_b += sb
        both += sa and sb
    total = n * (n - 1) / 2
    expected = same_a * same_b / total
    top = 0.5 * (same_a + same_b)
    if top == expected:
        return 1.0
    return (both - expected) / (top - expected)


def mi_from_labels(a, b):
    n = len(a)
    out = 0.0
    for x in set(a):
        for y in set(b):
            nij = sum(1 for s, t in zip(a, b) if s == x and t == y)
            if nij:
                ni, nj = a.count(x), b.count(y)
                out += nij / n * math.log(n * nij / (ni * nj))
    return out


def brute_emi(a, b):
    """Average MI over every permutation of the second labeling."""
    perms = list(itertools.permutations(b))
    return sum(mi_from_labels(a, list(p)) for p in perms) / len(perms)


def brute_psi(a, b):
    t = contingency(a, b).astype(float)
    ka, kb = t.shape
    if ka == 1 and kb == 1:
        return 1.0
    n = t.sum()
    na, nb = t.sum(1), t.sum(0)
    sim = t / np.maximum(na[:, None], nb[None, :])
    if ka <= kb:
        s = max(sum(sim[i, p[i]] for i in range(ka)) for p in itertools.permutations(range(kb), ka))
    else:
        s = max(sum(sim[p[j], j] for j in range(kb)) for p in itertools.permutations(range(ka), kb))
    sa, sb = sorted(na, reverse=True), sorted(nb, reverse=True)
    e = sum(x * y / n / max(x, y) for x, y in zip(sa, sb))
    return 0.0 if s < e else (s - e) / (max(ka, kb) - e)


def test_ari_known_values():
    # [DERIVED] every co-clustered pair is split and vice versa
    assert ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)
    assert ari([0, 0, 1, 1], [5, 5, 9, 9]) == 1.0


@settings(max_examples=200, deadline=None)
@given(labelings, st.data())
def test_ari_matches_pair_counting(a, data):
    b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    assert ari(a, b) == pytest.approx(pair_ari(a, b), abs=1e-12)
    assert ari(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=2, max_size=7), st.data())
def test_emi_matches_permutation_average(a, data):
    b = data.draw(st.lists(st.integers(0, 2), min_size=len(a), max_size=len(a)))
    t = contingency(a, b)
    assert expected_mutual_information(t) == pytest.approx(brute_emi(a, b), abs=1e-12)
    assert mutual_information(t) == pytest.approx(mi_from_labels(a, b), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(labelings, st.data())
def test_ami_matches_sklearn(a, data):
    b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    ref = adjusted_mutual_info_score(a, b, average_method="arithmetic")
    assert ami(a, b) == pytest.approx(ref, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(labelings, st.data())
def test_psi_matches_brute_assignment(a, data):
    b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    assert psi(a, b) == pytest.approx(brute_psi(a, b), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(labelings, st.data())
def test_indices_symmetric_and_bounded(a, data):
    b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    for f in (ari, ami, psi):
        assert f(a, b) == pytest.approx(f(b, a), abs=1e-10)
        assert f(a, b) <= 1.0 + 1e-12
        assert f(a, a) == pytest.approx(1.0)
    assert 0.0 <= psi(a, b)


def test_evi_report_mask():
    truth = [0, 0, 1, 1, 2]
    pred = [1, 1, 0, 0, 0]
    rep = evi_report(truth, pred, [True, True, True, True, False])
    assert rep.ari == rep.ami == rep.psi == 1.0
    assert rep.contingency.sum() == 4


def test_contingency_length_mismatch():
    with pytest.raises(DataError):
        contingency([0, 1], [0])


# asynchrony


def test_jsd_extremes():
    assert jsd_normalized([5, 5, 0], [5, 5, 0]) == 0.0
    assert jsd_normalized([3, 0], [0, 7]) == 1.0
    assert jsd_normalized({"a": 2}, {"b": 2}) == 1.0
    # [DERIVED] p=(1,0), q=(1/2,1/2): 0.5*log2(4/3) + 0.25*log2(2/3) + 0.25*log2(2)
    expect = 0.5 * math.log2(4 / 3) + 0.25 * math.log2(2 / 3) + 0.25
    assert jsd_normalized([1, 0], [1, 1]) == pytest.approx(expect, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=3, max_size=3), st.lists(st.integers(0, 9), min_size=3, max_size=3))
def test_jsd_properties(a, b):
    if sum(a) == 0 or sum(b) == 0:
        with pytest.raises(DataError):
            jsd_normalized(a, b)
        return
    v = jsd_normalized(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(jsd_normalized(b, a), abs=1e-12)


def test_kappa_known_values():
    a = [0, 0, 1, 1]
    assert kappa_normalized(a, a) == 1.0
    assert cohen_kappa(a, [1, 1, 0, 0]) == pytest.approx(-1.0)
    assert kappa_normalized(a, [1, 1, 0, 0]) == pytest.approx(0.0)
    # [DERIVED] po = 0.5, pe = 0.5 -> kappa 0
    assert cohen_kappa([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0)
    assert kappa_normalized([2, 2, 2], [2, 2, 2]) == 1.0
    assert kappa_normalized([2, 2, 2], [3, 3, 3]) == 0.5


def test_kappa_matches_sklearn(rng):
    from sklearn.metrics import cohen_kappa_score
    for _ in range(20):
        a, b = rng.integers(0, 4, 50), rng.integers(0, 4, 50)
        assert cohen_kappa(a, b) == pytest.approx(cohen_kappa_score(a, b), abs=1e-12)


def test_label_counts():
    assert label_counts([1, 1, 3]) == {1: 2, 3: 1}
    assert label_counts([1, 1, 3], labels=[1, 2, 3]) == {1: 2, 2: 0, 3: 1}


def test_reconstruction_error(rng):
    X = rng.random((7, 5))
    assert reconstruction_error(X, X) == 0.0
    R = rng.random((3, 5))
    ref = np.mean([min(np.linalg.norm(x - r) for r in R) for x in X])
    assert reconstruction_error(X, R) == pytest.approx(ref, abs=1e-12)
    # adding a representative never hurts
    assert reconstruction_error(X, np.vstack([R, X[0]])) <= reconstruction_error(X, R)
    with pytest.raises(DataError):
        reconstruction_error(X, np.zeros((0, 5)))
