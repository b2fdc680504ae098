"""Refined representative load sets.

Within one consumer cluster, every stage-one prototype becomes a vertex
weighted by its day count, and every WSMD nearest-prototype link becomes a
directed edge weighted by inverse distance. Communities of this graph,
found by optimising a vertex-weighted Erdos-Renyi (RBER) quality with a
Leiden-style local-move / refine / aggregate loop, are summarised by a
hyperprototype and by how many consumers and days they cover.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .core import CrocsError, DataError, Partition, RepresentativeLoadSet, relabel_canonical
from .distance import DTW2, DistanceKind, pairwise_distances
from .setdist import WsmdPairing

EPSILON = 1e-9   # distance floor: identical prototypes get similarity 1/EPSILON


@dataclass(frozen=True)
class PrototypeGraph:
    consumer_ids: tuple            # one per member consumer, in member order
    vertex_consumer: np.ndarray    # position in consumer_ids per vertex
    vertex_prototype: np.ndarray   # prototype index within that consumer's RLS
    weights: np.ndarray            # day count per vertex
    profiles: np.ndarray           # (V, phi)
    src: np.ndarray
    dst: np.ndarray
    similarity: np.ndarray
    density: float

    @property
    def n_vertices(self) -> int:
        return self.weights.size

    @property
    def n_edges(self) -> int:
        return self.src.size

    def symmetric_adjacency(self) -> sparse.csr_matrix:
        """Both directions summed; duplicates add up."""
        n = self.n_vertices
        A = sparse.coo_matrix((self.similarity, (self.src, self.dst)), shape=(n, n)).tocsr()
        W = (A + A.T).tocsr()
        W.sum_duplicates()
        W.sort_indices()
        return W

    def weak_components(self) -> tuple[int, np.ndarray]:
        n = self.n_vertices
        A = sparse.coo_matrix((np.ones(self.n_edges), (self.src, self.dst)), shape=(n, n))
        return connected_components(A, directed=True, connection="weak")


def _get_pairing(pairings, i, j) -> tuple[WsmdPairing, bool]:
    rec = pairings.get((i, j)) or pairings.get((j, i))
    if rec is not None:
        # orientation comes from the record itself, not from the key it is stored under
        return rec, rec.i != i
    raise DataError(f"no WSMD pairing stored for consumers {i} and {j}")


def build_prototype_graph(members: Sequence[int], all_rls: Sequence[RepresentativeLoadSet],
                          pairings: dict, density: str = "weighted") -> PrototypeGraph:
    """Prototype graph of the consumers at positions ``members`` of ``all_rls``.

    Each prototype is a source exactly once per partner consumer, so a pair
    of consumers with k_i and k_j prototypes contributes k_i + k_j edges.

    ``density`` is the total edge weight divided by either the summed
    products of vertex weights over vertex pairs from different consumers
    (``"weighted"``, the default) or the plain number of such ordered pairs
    (``"pairs"``). Only the first keeps the penalty term of the quality on
    the same scale as the edge weights when vertices carry day counts.
    """
    if density not in ("weighted", "pairs"):
        raise ValueError("density must be 'weighted' or 'pairs'")
    members = [int(i) for i in members]
    sizes = [all_rls[i].k for i in members]
    offset = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    vc = np.repeat(np.arange(len(members)), sizes)
    vp = np.concatenate([np.arange(k) for k in sizes]) if sizes else np.zeros(0, np.int64)
    weights = np.concatenate([all_rls[i].counts for i in members]).astype(float) if members else np.zeros(0)
    profiles = np.vstack([all_rls[i].profiles for i in members]) if members else np.zeros((0, 0))
    src, dst, dist = [], [], []
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            rec, swapped = _get_pairing(pairings, members[a], members[b])
            near_ab, d_ab, near_ba, d_ba = rec.nearest_ij, rec.dist_ij, rec.nearest_ji, rec.dist_ji
            if swapped:
                near_ab, d_ab, near_ba, d_ba = near_ba, d_ba, near_ab, d_ab
            src.append(offset[a] + np.arange(sizes[a]))
            dst.append(offset[b] + np.asarray(near_ab))
            dist.append(np.asarray(d_ab, dtype=float))
            src.append(offset[b] + np.arange(sizes[b]))
            dst.append(offset[a] + np.asarray(near_ba))
            dist.append(np.asarray(d_ba, dtype=float))
    if src:
        src = np.concatenate(src).astype(np.int64)
        dst = np.concatenate(dst).astype(np.int64)
        sim = 1.0 / np.maximum(np.concatenate(dist), EPSILON)
    else:
        src = dst = np.zeros(0, np.int64)
        sim = np.zeros(0)
    # expected edge weight per unit of vertex weight, over pairs of vertices
    # belonging to different consumers
    if density == "weighted":
        per_consumer = np.bincount(vc, weights=weights, minlength=len(members))
        cross = weights.sum() ** 2 - (per_consumer ** 2).sum()
    else:
        per_consumer = np.bincount(vc, minlength=len(members)).astype(float)
        cross = weights.size ** 2 - (per_consumer ** 2).sum()
    rho = float(sim.sum() / cross) if cross > 0 else 0.0
    ids = tuple(all_rls[i].consumer_id for i in members)
    return PrototypeGraph(ids, vc, vp, weights, profiles, src, dst, sim, rho)


# --------------------------------------------------------------------------
# community detection


@dataclass(frozen=True)
class CommunityConfig:
    gamma: float = 0.02
    gamma_step: float = 0.01
    gamma_max: float = 5.0
    target_communities: int | None = None
    seed: int = 0
    max_passes: int = 100

    def __post_init__(self):
        if self.gamma <= 0 or self.gamma_step <= 0:
            raise ValueError("gamma and gamma_step must be positive")
        if self.target_communities is not None and self.target_communities < 1:
            raise ValueError("target_communities must be positive")


@dataclass
class CommunityResult:
    partition: Partition
    gamma: float
    quality: float
    trace: list = field(default_factory=list)   # quality after each local-move phase


def rber_quality(W: sparse.csr_matrix, s: np.ndarray, labels, gamma_rho: float) -> float:
    """Sum over ordered intra-community vertex pairs u != v of W_uv - gamma*rho*s_u*s_v."""
    labels = np.asarray(labels)
    coo = W.tocoo()
    keep = (labels[coo.row] == labels[coo.col]) & (coo.row != coo.col)
    intra = float(coo.data[keep].sum())
    S = np.bincount(labels, weights=s)
    return intra - gamma_rho * float((S ** 2).sum() - (s ** 2).sum())


def _neighbour_weights(W, v, labels):
    lo, hi = W.indptr[v], W.indptr[v + 1]
    out = {}
    for u, w in zip(W.indices[lo:hi], W.data[lo:hi]):
        if u != v:
            c = labels[u]
            out[c] = out.get(c, 0.0) + w
    return out


def _local_moves(W, s, labels, gr, rng):
    """Queue-based local moving. Modifies ``labels`` in place; returns True if anything moved."""
    n = s.size
    csize = np.bincount(labels, weights=s, minlength=n)
    members = np.bincount(labels, minlength=n)
    empty = [c for c in range(n - 1, -1, -1) if members[c] == 0]
    queue = deque(rng.permutation(n).tolist())
    queued = np.ones(n, dtype=bool)
    moved = False
    while queue:
        v = queue.popleft()
        queued[v] = False
        cur = labels[v]
        nw = _neighbour_weights(W, v, labels)
        w_cur = nw.get(cur, 0.0)
        csize[cur] -= s[v]
        members[cur] -= 1
        best, best_gain = cur, 0.0
        scale = w_cur + gr * s[v] * csize[cur]
        for c in sorted(nw):
            if c == cur:
                continue
            gain = 2.0 * (nw[c] - w_cur) - 2.0 * gr * s[v] * (csize[c] - csize[cur])
            if gain > best_gain + 1e-12 * (scale + nw[c] + gr * s[v] * csize[c]):
                best, best_gain = c, gain
        if members[cur] > 0:
            # moving to a fresh community
            gain = -2.0 * w_cur + 2.0 * gr * s[v] * csize[cur]
            if gain > best_gain + 1e-12 * scale and empty:
                best, best_gain = empty[-1], gain
        if best != cur:
            if members[best] == 0:
                empty.pop()
            labels[v] = best
            moved = True
            if members[cur] == 0:
                empty.append(cur)
            lo, hi = W.indptr[v], W.indptr[v + 1]
            for u in W.indices[lo:hi]:
                if not queued[u] and labels[u] != best:
                    queue.append(u)
                    queued[u] = True
        csize[best] += s[v]
        members[best] += 1
    return moved


def _refine(W, s, labels, gr, rng):
    """Split each community into well-connected sub-communities by greedy merging of singletons."""
    n = s.size
    refined = np.arange(n)
    rsize = s.astype(float).copy()
    rcount = np.ones(n, dtype=np.int64)
    for c in np.unique(labels):
        verts = np.flatnonzero(labels == c)
        S_c = s[verts].sum()
        in_c = np.zeros(n, dtype=bool)
        in_c[verts] = True
        # weight from each refined community to the rest of c
        ext = np.zeros(n)
        for v in verts:
            lo, hi = W.indptr[v], W.indptr[v + 1]
            nb, wt = W.indices[lo:hi], W.data[lo:hi]
            ok = in_c[nb] & (nb != v)
            ext[v] = wt[ok].sum()
        for v in rng.permutation(verts):
            if rcount[refined[v]] != 1:
                continue
            if ext[v] < gr * s[v] * (S_c - s[v]):
                continue
            lo, hi = W.indptr[v], W.indptr[v + 1]
            to = {}
            for u, w in zip(W.indices[lo:hi], W.data[lo:hi]):
                if in_c[u] and u != v:
                    t = refined[u]
                    to[t] = to.get(t, 0.0) + w
            best, best_gain = -1, 0.0
            for t in sorted(to):
                if t == refined[v]:
                    continue
                if ext[t] < gr * rsize[t] * (S_c - rsize[t]):
                    continue
                gain = 2.0 * to[t] - 2.0 * gr * s[v] * rsize[t]
                if gain > best_gain:
                    best, best_gain = t, gain
            if best >= 0:
                old = refined[v]
                ext[best] = ext[best] + ext[old] - 2.0 * to[best]
                rsize[best] += rsize[old]
                rcount[best] += 1
                rcount[old] = 0
                rsize[old] = 0.0
                refined[v] = best
    return refined


def _aggregate(W, s, groups):
    _, g = np.unique(groups, return_inverse=True)
    n_new = g.max() + 1
    P = sparse.csr_matrix((np.ones(g.size), (np.arange(g.size), g)), shape=(g.size, n_new))
    A = (P.T @ W @ P).tocsr()
    A.setdiag(0.0)
    A.eliminate_zeros()
    A.sort_indices()
    return A, np.bincount(g, weights=s), g


def leiden_rber(W: sparse.csr_matrix, s: np.ndarray, gamma_rho: float, seed: int = 0,
                max_passes: int = 100) -> tuple[np.ndarray, list]:
    """Community labels maximising the RBER quality, plus the quality trace."""
    rng = np.random.default_rng(seed)
    n = s.size
    W0, s0 = W, np.asarray(s, dtype=float)
    node_of = np.arange(n)              # original vertex -> current aggregate node
    labels = np.arange(n)               # aggregate node -> community
    trace = []
    for _ in range(max_passes):
        moved = _local_moves(W, s, labels, gamma_rho, rng)
        trace.append(rber_quality(W0, s0, labels[node_of], gamma_rho))
        n_comm = np.unique(labels).size
        if n_comm == labels.size or (not moved and len(trace) > 1):
            break
        refined = _refine(W, s, labels, gamma_rho, rng)
        W, s, g = _aggregate(W, s, refined)
        new_labels = np.zeros(s.size, dtype=np.int64)
        new_labels[g] = labels
        _, labels = np.unique(new_labels, return_inverse=True)
        node_of = g[node_of]
    return relabel_canonical(labels[node_of]).labels.copy(), trace


def detect_communities(g: PrototypeGraph, cfg: CommunityConfig = CommunityConfig()) -> CommunityResult:
    """Communities of the prototype graph.

    With ``target_communities`` set, the resolution starts at ``cfg.gamma``
    and grows by ``cfg.gamma_step`` until the number of communities first
    reaches the target; the resolution used is reported.
    """
    if g.n_vertices == 0:
        raise DataError("empty prototype graph")
    W = g.symmetric_adjacency()
    s = g.weights
    gamma = cfg.gamma
    n_steps = int(np.floor((cfg.gamma_max - cfg.gamma) / cfg.gamma_step + 1e-9))
    count = 0
    for step in range(n_steps + 1):
        gamma = round(cfg.gamma + step * cfg.gamma_step, 10)
        labels, trace = leiden_rber(W, s, gamma * g.density, cfg.seed, cfg.max_passes)
        count = int(labels.max()) + 1
        if cfg.target_communities is None or count >= cfg.target_communities:
            return CommunityResult(Partition(labels), gamma, trace[-1], trace)
    raise CrocsError(f"target of {cfg.target_communities} communities not reached by gamma={gamma}; "
                     f"last count {count}")


# --------------------------------------------------------------------------
# hyperprototypes


@dataclass(frozen=True)
class Community:
    vertices: np.ndarray
    hyperprototype_medoid: np.ndarray
    hyperprototype_mean: np.ndarray
    consumer_coverage: float
    day_coverage: float
    major: bool


@dataclass(frozen=True)
class RefinedRLS:
    consumer_ids: tuple
    communities: tuple
    gamma: float | None = None
    cluster: Hashable = None

    @property
    def n_communities(self) -> int:
        return len(self.communities)

    @property
    def major(self) -> tuple:
        return tuple(c for c in self.communities if c.major)

    @property
    def minor(self) -> tuple:
        return tuple(c for c in self.communities if not c.major)


def weighted_medoid(profiles, weights, distance: DistanceKind = DTW2) -> int:
    """Index minimising the weight-weighted summed distance to the others; ties to the lowest."""
    profiles = np.asarray(profiles, dtype=float)
    if profiles.shape[0] == 1:
        return 0
    D = pairwise_distances(profiles, distance)
    return int(np.argmin(D @ np.asarray(weights, dtype=float)))


def extract_rrls(g: PrototypeGraph, communities: Partition | CommunityResult,
                 distance: DistanceKind = DTW2, major_threshold: float = 0.03,
                 cluster: Hashable = None) -> RefinedRLS:
    """Hyperprototypes and coverage of each community, largest day coverage first."""
    gamma = None
    if isinstance(communities, CommunityResult):
        gamma = communities.gamma
        communities = communities.partition
    distance = DistanceKind.parse(distance)
    total = g.weights.sum()
    n_cons = len(g.consumer_ids)
    out = []
    for c in range(communities.k):
        idx = communities.members(c)
        w = g.weights[idx]
        P = g.profiles[idx]
        med = P[weighted_medoid(P, w, distance)].copy()
        mean = (w[:, None] * P).sum(0) / w.sum()
        cc = np.unique(g.vertex_consumer[idx]).size / n_cons
        dc = float(w.sum() / total)
        out.append(Community(idx, med, mean, cc, dc, dc >= major_threshold))
    out.sort(key=lambda c: (-c.day_coverage, int(c.vertices[0])))
    return RefinedRLS(g.consumer_ids, tuple(out), gamma, cluster)


def rrls_for_partition(all_rls: Sequence[RepresentativeLoadSet], partition: Partition, pairings: dict,
                       cfg: CommunityConfig = CommunityConfig(), distance: DistanceKind = DTW2,
                       major_threshold: float = 0.03, density: str = "weighted") -> dict:
    """Refined set of every consumer cluster, keyed by cluster label."""
    out = {}
    for c in range(partition.k):
        g = build_prototype_graph(partition.members(c), all_rls, pairings, density)
        res = detect_communities(g, cfg)
        out[c] = extract_rrls(g, res, distance, major_threshold, cluster=c)
    return out
