"""Partitioning algorithms and prototype extraction.

``hac_ward`` and ``k_medoids`` work on a precomputed dissimilarity matrix,
``k_means`` on raw vectors. Ties are always resolved towards the lowest index
so that results are reproducible for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from numba import njit
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from .core import ConfigError, Partition, Prototype, relabel_canonical
from .distance import DTW2, DistanceKind, pairwise_distances


class Algorithm(str, Enum):
    HAC_WARD = "hac_ward"
    KMEDOIDS = "kmedoids"
    KMEANS = "kmeans"


class PrototypeKind(str, Enum):
    MEDOID = "medoid"
    MEAN = "mean"


@dataclass(frozen=True)
class ClusterConfig:
    algorithm: Algorithm = Algorithm.KMEDOIDS
    k: int = 2
    restarts: int = 30
    max_iterations: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be at least 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")

    def with_k(self, k: int, seed: int | None = None) -> "ClusterConfig":
        return replace(self, k=k, seed=self.seed if seed is None else seed)


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for a (seed, keys...) stream."""
    state = np.random.SeedSequence([int(seed) & (2**63 - 1), *map(int, keys)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def _check_k(k: int, n: int):
    if not 1 <= k <= n:
        raise ConfigError(f"k={k} out of range for {n} objects")


# --------------------------------------------------------------------------
# Ward


def ward_merges(D) -> np.ndarray:
    """Scipy linkage matrix for Ward's method on a precomputed dissimilarity.

    Scipy applies the Lance-Williams update to squared dissimilarities, which
    is the convention used here for DTW matrices as well.
    """
    D = np.asarray(D, dtype=float)
    return linkage(squareform(D, checks=False), method="ward")


def cut_merges(Z: np.ndarray, n: int, k: int) -> Partition:
    """Apply the first ``n - k`` merges of a linkage matrix."""
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t in range(n - k):
        a, b = int(Z[t, 0]), int(Z[t, 1])
        parent[find(a)] = n + t
        parent[find(b)] = n + t
    roots = np.array([find(i) for i in range(n)])
    return relabel_canonical(roots)


def hac_ward(D, k: int) -> Partition:
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    _check_k(k, n)
    if n == 1:
        return Partition(np.zeros(1, dtype=np.int64), 1)
    return cut_merges(ward_merges(D), n, k)


# --------------------------------------------------------------------------
# k-medoids (PAM swap phase)


@njit(cache=True, nogil=True)
def _nearest_two(D, medoids, nearest, dn, ds):
    n = D.shape[0]
    k = medoids.shape[0]
    for o in range(n):
        b1 = np.inf
        b2 = np.inf
        i1 = 0
        for i in range(k):
            v = D[o, medoids[i]]
            if v < b1:
                b2 = b1
                b1 = v
                i1 = i
            elif v < b2:
                b2 = v
        nearest[o] = i1
        dn[o] = b1
        ds[o] = b2


@njit(cache=True, nogil=True)
def _pam_swap(D, medoids, max_iter, trace):
    """Best-improvement swap descent. Returns (objective, iterations).

    Swap gains are evaluated with nearest/second-nearest caching, O(n^2) per
    sweep over all (medoid, candidate) pairs.
    """
    n = D.shape[0]
    k = medoids.shape[0]
    is_med = np.zeros(n, dtype=np.bool_)
    for i in range(k):
        is_med[medoids[i]] = True
    nearest = np.empty(n, dtype=np.int64)
    dn = np.empty(n)
    ds = np.empty(n)
    removal = np.empty(k)
    delta = np.empty(k)
    it = 0
    _nearest_two(D, medoids, nearest, dn, ds)
    cost = 0.0
    for o in range(n):
        cost += dn[o]
    trace[0] = cost
    while it < max_iter:
        for i in range(k):
            removal[i] = 0.0
        for o in range(n):
            removal[nearest[o]] += ds[o] - dn[o]
        best = 0.0
        bx = -1
        bi = -1
        for x in range(n):
            if is_med[x]:
                continue
            for i in range(k):
                delta[i] = removal[i]
            acc = 0.0
            for o in range(n):
                doj = D[o, x]
                if doj < dn[o]:
                    acc += doj - dn[o]
                    delta[nearest[o]] += dn[o] - ds[o]
                elif doj < ds[o]:
                    delta[nearest[o]] += doj - ds[o]
            for i in range(k):
                v = delta[i] + acc
                if v < best:
                    best = v
                    bx = x
                    bi = i
        if bx < 0 or not best < -1e-12 * cost:
            break
        is_med[medoids[bi]] = False
        is_med[bx] = True
        medoids[bi] = bx
        _nearest_two(D, medoids, nearest, dn, ds)
        new_cost = 0.0
        for o in range(n):
            new_cost += dn[o]
        it += 1
        trace[it] = new_cost
        cost = new_cost
    return cost, it


def kmedoids_pp_init(D: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-medoids++ seeding: sample proportional to squared distance to the chosen set."""
    n = D.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = D[chosen[0]] ** 2
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            c = int(rng.choice(n, p=d2 / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            c = int(rng.choice(free))
        chosen.append(c)
        d2 = np.minimum(d2, D[c] ** 2)
    return np.array(chosen, dtype=np.int64)


def assign_to_medoids(D: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    """Nearest medoid per object; ties go to the lowest medoid position."""
    labels = np.argmin(D[:, medoids], axis=1)
    labels[medoids] = np.arange(medoids.size)
    return labels


def _kmedoids_run(D, k, rng, max_iter, trace=False):
    init = kmedoids_pp_init(D, k, rng)
    buf = np.empty(max_iter + 1)
    cost, it = _pam_swap(D, init, max_iter, buf)
    return init, cost, (buf[: it + 1].copy() if trace else None)


def k_medoids(D, cfg: ClusterConfig | int, *, return_objective: bool = False):
    """PAM k-medoids, best of ``cfg.restarts`` k-medoids++ seeded descents.

    Returns ``(partition, medoid_indices)`` with medoids sorted ascending and
    cluster ``c`` belonging to ``medoid_indices[c]``.
    """
    if isinstance(cfg, int):
        cfg = ClusterConfig(Algorithm.KMEDOIDS, cfg)
    D = np.ascontiguousarray(D, dtype=float)
    n = D.shape[0]
    k = cfg.k
    _check_k(k, n)
    if k == 1:
        # single medoid: the exact 1-median, which swap descent also reaches
        medoids = np.array([int(np.argmin(D.sum(axis=1)))])
        cost = float(D[:, medoids[0]].sum())
    elif k == n:
        medoids = np.arange(n)
        cost = 0.0
    else:
        rng = np.random.default_rng(cfg.seed)
        best = None
        for _ in range(cfg.restarts):
            meds, cost, _ = _kmedoids_run(D, k, rng, cfg.max_iterations)
            if best is None or cost < best[1]:
                best = (meds, cost)
        medoids = np.sort(best[0])
        cost = float(D[np.arange(n), medoids[np.argmin(D[:, medoids], axis=1)]].sum())
    labels = assign_to_medoids(D, medoids)
    part = Partition(labels, k)
    if return_objective:
        return part, medoids, cost
    return part, medoids


def kmedoids_objective_trace(D, k: int, seed: int = 0, max_iter: int = 200) -> np.ndarray:
    """Objective after each accepted swap of a single seeded descent."""
    D = np.ascontiguousarray(D, dtype=float)
    _check_k(k, D.shape[0])
    _, _, trace = _kmedoids_run(D, k, np.random.default_rng(seed), max_iter, trace=True)
    return trace


# --------------------------------------------------------------------------
# k-means


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[idx])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        c = int(rng.choice(n, p=d2 / total)) if total > 0 else int(rng.integers(n))
        idx.append(c)
        d2 = np.minimum(d2, _sq_dists(X, X[[c]])[:, 0])
    return X[idx].copy()


def _repair_empty(X, labels, d2, C, k):
    """Give each empty cluster the point farthest from its current centroid."""
    counts = np.bincount(labels, minlength=k)
    taken = set()
    for c in np.flatnonzero(counts == 0):
        own = d2[np.arange(X.shape[0]), labels]
        order = np.argsort(-own, kind="stable")
        for i in order:
            if i not in taken and counts[labels[i]] > 1:
                counts[labels[i]] -= 1
                labels[i] = c
                counts[c] += 1
                C[c] = X[i]
                taken.add(int(i))
                break
    return labels


def extend_centroids(X: np.ndarray, C: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Add one k-means++ draw to an existing set of centroids."""
    d2 = _sq_dists(X, C).min(axis=1)
    total = d2.sum()
    c = int(rng.choice(X.shape[0], p=d2 / total)) if total > 0 else int(rng.integers(X.shape[0]))
    return np.vstack([C, X[c]])


def _lloyd(X, k, rng, max_iter, C=None):
    C = kmeans_pp_init(X, k, rng) if C is None else np.array(C, dtype=float)
    labels = None
    for _ in range(max_iter):
        d2 = _sq_dists(X, C)
        new = np.argmin(d2, axis=1)
        new = _repair_empty(X, new, d2, C, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            C[c] = X[labels == c].mean(axis=0)
    d2 = _sq_dists(X, C)
    labels = _repair_empty(X, np.argmin(d2, axis=1), d2, C, k)
    for c in range(k):
        C[c] = X[labels == c].mean(axis=0)
    wcss = float(((X - C[labels]) ** 2).sum())
    return labels, C, wcss


def k_means(X, cfg: ClusterConfig | int, *, return_objective: bool = False, init=()):
    """Lloyd's algorithm from k-means++ seeds; best within-cluster sum of squares wins.

    ``init`` may hold extra (k, d) starting centroid sets, tried before the
    seeded restarts (ties keep the earlier run).
    """
    if isinstance(cfg, int):
        cfg = ClusterConfig(Algorithm.KMEANS, cfg)
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    _check_k(cfg.k, n)
    rng = np.random.default_rng(cfg.seed)
    best = None
    for C0 in init:
        C0 = np.asarray(C0, dtype=float)
        if C0.shape != (cfg.k, X.shape[1]):
            raise ConfigError(f"initial centroids must have shape {(cfg.k, X.shape[1])}")
        labels, C, wcss = _lloyd(X, cfg.k, rng, cfg.max_iterations, C0)
        if best is None or wcss < best[2]:
            best = (labels, C, wcss)
    for _ in range(cfg.restarts):
        labels, C, wcss = _lloyd(X, cfg.k, rng, cfg.max_iterations)
        if best is None or wcss < best[2]:
            best = (labels, C, wcss)
    part = Partition(best[0], cfg.k)
    if return_objective:
        return part, best[1], best[2]
    return part, best[1]


# --------------------------------------------------------------------------


def cluster_matrix(D, cfg: ClusterConfig) -> Partition:
    """Cluster a dissimilarity matrix with HAC-Ward or k-medoids."""
    if cfg.algorithm is Algorithm.HAC_WARD:
        return hac_ward(D, cfg.k)
    if cfg.algorithm is Algorithm.KMEDOIDS:
        return k_medoids(D, cfg)[0]
    raise ConfigError("k-means needs vector input, not a dissimilarity matrix")


def extract_prototypes(objects, partition: Partition, kind: PrototypeKind | str = PrototypeKind.MEDOID,
                       D=None, distance: DistanceKind = DTW2) -> list[Prototype]:
    """One prototype per cluster, with its size and member indices.

    A medoid is the member with the smallest summed dissimilarity to its
    co-members (ties to the lowest index); a mean is the pointwise average.
    """
    kind = PrototypeKind(kind)
    objects = np.asarray(objects, dtype=float)
    if kind is PrototypeKind.MEDOID and D is None:
        D = pairwise_distances(objects, distance)
    out = []
    for c in range(partition.k):
        idx = partition.members(c)
        if kind is PrototypeKind.MEDOID:
            sums = D[np.ix_(idx, idx)].sum(axis=1)
            profile = objects[idx[int(np.argmin(sums))]].copy()
        else:
            profile = objects[idx].mean(axis=0)
        out.append(Prototype(profile, int(idx.size), idx))
    return out
