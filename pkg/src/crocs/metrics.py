"""External validity indices, asynchrony metrics and reconstruction error."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln

from .core import DataError, Partition


def _labels(p) -> np.ndarray:
    return np.asarray(p.labels if isinstance(p, Partition) else p).ravel()


def contingency(a, b) -> np.ndarray:
    """Cluster co-occurrence counts, rows for ``a`` and columns for ``b``."""
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise DataError(f"partitions differ in length: {a.size} vs {b.size}")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def ari(a, b) -> float:
    """Adjusted Rand index."""
    t = contingency(a, b)
    n = t.sum()
    sum_ij = _comb2(t).sum()
    sum_a = _comb2(t.sum(1)).sum()
    sum_b = _comb2(t.sum(0)).sum()
    total = _comb2(n)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial in the same way (all singletons or one cluster)
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def _entropy(counts) -> float:
    c = np.asarray(counts, dtype=float)
    c = c[c > 0]
    q = c / c.sum()
    return float(-(q * np.log(q)).sum())


def mutual_information(table: np.ndarray) -> float:
    t = np.asarray(table, dtype=float)
    n = t.sum()
    a = t.sum(1, keepdims=True)
    b = t.sum(0, keepdims=True)
    nz = t > 0
    return float((t[nz] / n * np.log(n * t[nz] / (a @ b)[nz])).sum())


def expected_mutual_information(table: np.ndarray) -> float:
    """Expected MI of two partitions with the given marginals under the hypergeometric model."""
    t = np.asarray(table)
    n = int(t.sum())
    a = t.sum(1).astype(np.int64)
    b = t.sum(0).astype(np.int64)
    lg_n = gammaln(n + 1)
    emi = 0.0
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=float)
            term = nij / n * np.log(n * nij / (ai * bj))
            logp = (gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                    - lg_n - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                    - gammaln(n - ai - bj + nij + 1))
            emi += float((term * np.exp(logp)).sum())
    return emi


def ami(a, b) -> float:
    """Adjusted mutual information, arithmetic-mean normalisation.

    When both partitions consist of a single cluster the index is 1.0.
    """
    t = contingency(a, b)
    if t.shape[0] == 1 and t.shape[1] == 1:
        return 1.0
    ha = _entropy(t.sum(1))
    hb = _entropy(t.sum(0))
    mi = mutual_information(t)
    emi = expected_mutual_information(t)
    denom = 0.5 * (ha + hb) - emi
    if abs(denom) < 1e-15:
        return 1.0 if abs(mi - emi) < 1e-15 else 0.0
    return float((mi - emi) / denom)


def psi(a, b) -> float:
    """Pair sets index with optimal one-to-one cluster matching.

    Similarity of matched clusters is ``n_ij / max(n_i, m_j)``; the chance
    level pairs the sorted cluster sizes of the two partitions.
    """
    t = contingency(a, b)
    ka, kb = t.shape
    if ka == 1 and kb == 1:
        return 1.0
    n = t.sum()
    na = t.sum(1)
    nb = t.sum(0)
    sim = t / np.maximum(na[:, None], nb[None, :])
    rows, cols = linear_sum_assignment(sim, maximize=True)
    s = float(sim[rows, cols].sum())
    sa = np.sort(na)[::-1]
    sb = np.sort(nb)[::-1]
    m = min(ka, kb)
    e = float((sa[:m] * sb[:m] / n / np.maximum(sa[:m], sb[:m])).sum())
    if s < e:
        return 0.0
    return float((s - e) / (max(ka, kb) - e))


@dataclass(frozen=True)
class EviReport:
    ari: float
    ami: float
    psi: float
    contingency: np.ndarray


def evi_report(truth, predicted, mask=None) -> EviReport:
    """All three indices, optionally restricted to objects where ``mask`` is true."""
    a, b = _labels(truth), _labels(predicted)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        a, b = a[mask], b[mask]
    return EviReport(ari(a, b), ami(a, b), psi(a, b), contingency(a, b))


# --------------------------------------------------------------------------
# asynchrony


def _aligned_counts(counts_a, counts_b) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(counts_a, Mapping) or isinstance(counts_b, Mapping):
        keys = sorted(set(dict(counts_a)) | set(dict(counts_b)), key=repr)
        ca = np.array([dict(counts_a).get(k, 0) for k in keys], dtype=float)
        cb = np.array([dict(counts_b).get(k, 0) for k in keys], dtype=float)
    else:
        ca = np.asarray(counts_a, dtype=float)
        cb = np.asarray(counts_b, dtype=float)
        if ca.shape != cb.shape:
            raise DataError("count vectors must share a label space")
    if ca.sum() <= 0 or cb.sum() <= 0:
        raise DataError("counts must have a positive total")
    return ca, cb


def jsd_normalized(counts_a, counts_b) -> float:
    """Jensen-Shannon divergence, base 2, between two label-count distributions."""
    ca, cb = _aligned_counts(counts_a, counts_b)
    p = ca / ca.sum()
    q = cb / cb.sum()
    mix = 0.5 * (p + q)

    def kl(x):
        nz = x > 0
        return float((x[nz] * np.log2(x[nz] / mix[nz])).sum())

    return min(1.0, max(0.0, 0.5 * kl(p) + 0.5 * kl(q)))


def label_counts(seq, labels: Sequence | None = None) -> dict:
    seq = np.asarray(seq)
    keys = np.unique(seq) if labels is None else labels
    return {k.item() if hasattr(k, "item") else k: int((seq == k).sum()) for k in keys}


def cohen_kappa(seq_a, seq_b) -> float:
    a = np.asarray(seq_a).ravel()
    b = np.asarray(seq_b).ravel()
    if a.shape != b.shape:
        raise DataError("sequences differ in length")
    if a.size == 0:
        raise DataError("empty sequences")
    labels = np.unique(np.concatenate([a, b]))
    ia = np.searchsorted(labels, a)
    ib = np.searchsorted(labels, b)
    t = np.zeros((labels.size, labels.size))
    np.add.at(t, (ia, ib), 1.0)
    n = a.size
    po = np.trace(t) / n
    pe = float((t.sum(1) * t.sum(0)).sum()) / n ** 2
    if pe >= 1.0:
        return np.nan
    return float((po - pe) / (1.0 - pe))


def kappa_normalized(seq_a, seq_b) -> float:
    """Cohen's kappa mapped to [0, 1] by (kappa + 1) / 2.

    If chance agreement is certain (both sequences constant) the result is
    1.0 for identical sequences and 0.5 otherwise.
    """
    k = cohen_kappa(seq_a, seq_b)
    if np.isnan(k):
        return 1.0 if np.array_equal(np.asarray(seq_a), np.asarray(seq_b)) else 0.5
    return 0.5 * (k + 1.0)


# --------------------------------------------------------------------------


def reconstruction_error(record, representation) -> float:
    """Mean over days of the Euclidean distance to the closest representative profile."""
    X = np.asarray(getattr(record, "values", record), dtype=float)
    R = np.atleast_2d(np.asarray(representation, dtype=float))
    if R.shape[0] == 0:
        raise DataError("empty representation")
    d = np.sqrt(((X[:, None, :] - R[None, :, :]) ** 2).sum(-1))
    return float(d.min(axis=1).mean())
