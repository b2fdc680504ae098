"""Set-to-set dissimilarities between representative load sets.

Eight measures are available; WSMD is the default and the only one that also
yields nearest-prototype pairings, which the refined-RLS graph is built from.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from numba import njit, prange

from .core import EmptyRecordError, RepresentativeLoadSet
from .distance import DTW2, DistanceKind, _cross_matrix, _dist


class SetDistanceKind(str, Enum):
    WSMD = "wsmd"
    SMD = "smd"
    HD = "hd"
    MHD = "mhd"
    SL = "sl"
    CL = "cl"
    AL = "al"
    WAL = "wal"


_CODES = {kind: code for code, kind in enumerate(SetDistanceKind)}


@njit(cache=True, nogil=True)
def _set_value(block, ca, cb, kind):
    ka, kb = block.shape
    rmin = np.empty(ka)
    cmin = np.empty(kb)
    for a in range(ka):
        v = np.inf
        for b in range(kb):
            if block[a, b] < v:
                v = block[a, b]
        rmin[a] = v
    for b in range(kb):
        v = np.inf
        for a in range(ka):
            if block[a, b] < v:
                v = block[a, b]
        cmin[b] = v
    if kind == 0 or kind == 1 or kind == 3:
        s1 = 0.0
        s2 = 0.0
        if kind == 0:
            pa = 0.0
            pb = 0.0
            for a in range(ka):
                s1 += ca[a] * rmin[a]
                pa += ca[a]
            for b in range(kb):
                s2 += cb[b] * cmin[b]
                pb += cb[b]
            return 0.5 * (s1 / pa + s2 / pb)
        for a in range(ka):
            s1 += rmin[a]
        for b in range(kb):
            s2 += cmin[b]
        if kind == 1:
            return 0.5 * (s1 + s2)
        return max(s1 / ka, s2 / kb)
    if kind == 2:
        return max(rmin.max(), cmin.max())
    if kind == 4:
        return rmin.min()
    if kind == 5:
        return block.max()
    # average linkages: summing in both orders keeps the value exactly symmetric
    s_row = 0.0
    s_col = 0.0
    if kind == 6:
        for a in range(ka):
            for b in range(kb):
                s_row += block[a, b]
        for b in range(kb):
            for a in range(ka):
                s_col += block[a, b]
        return 0.5 * (s_row + s_col) / (ka * kb)
    pa = 0.0
    pb = 0.0
    for a in range(ka):
        pa += ca[a]
    for b in range(kb):
        pb += cb[b]
    for a in range(ka):
        for b in range(kb):
            s_row += ca[a] * cb[b] * block[a, b]
    for b in range(kb):
        for a in range(ka):
            s_col += ca[a] * cb[b] * block[a, b]
    return 0.5 * (s_row + s_col) / (pa * pb)


@njit(cache=True, parallel=True)
def _set_matrix_pairs(P, poff, counts, ii, jj, r, kind, out):
    phi = P.shape[1]
    for t in prange(ii.shape[0]):
        i = ii[t]
        j = jj[t]
        A = P[poff[i]:poff[i + 1]]
        B = P[poff[j]:poff[j + 1]]
        block = np.empty((A.shape[0], B.shape[0]))
        prev = np.empty(phi + 1)
        curr = np.empty(phi + 1)
        for a in range(A.shape[0]):
            for b in range(B.shape[0]):
                block[a, b] = _dist(A[a], B[b], r, prev, curr)
        out[t] = _set_value(block, counts[poff[i]:poff[i + 1]], counts[poff[j]:poff[j + 1]], kind)


@njit(cache=True, parallel=True)
def _pairings(P, poff, ii, jj, r, src_off, near_ij, dist_ij, near_ji, dist_ji):
    phi = P.shape[1]
    for t in prange(ii.shape[0]):
        i = ii[t]
        j = jj[t]
        A = P[poff[i]:poff[i + 1]]
        B = P[poff[j]:poff[j + 1]]
        ka = A.shape[0]
        kb = B.shape[0]
        block = np.empty((ka, kb))
        prev = np.empty(phi + 1)
        curr = np.empty(phi + 1)
        for a in range(ka):
            for b in range(kb):
                block[a, b] = _dist(A[a], B[b], r, prev, curr)
        o1 = src_off[t]
        for a in range(ka):
            v = np.inf
            w = 0
            for b in range(kb):
                if block[a, b] < v:
                    v = block[a, b]
                    w = b
            near_ij[o1 + a] = w
            dist_ij[o1 + a] = v
        o2 = src_off[t] + ka
        for b in range(kb):
            v = np.inf
            w = 0
            for a in range(ka):
                if block[a, b] < v:
                    v = block[a, b]
                    w = a
            near_ji[o2 - ka + b] = w
            dist_ji[o2 - ka + b] = v


@dataclass(frozen=True)
class WsmdPairing:
    """Nearest-prototype links found by WSMD for consumers ``i`` and ``j``.

    ``nearest_ij[a]`` is the prototype of ``j`` closest to prototype ``a`` of
    ``i`` (lowest index on ties), at distance ``dist_ij[a]``; likewise for the
    reverse direction.
    """

    i: int
    j: int
    nearest_ij: np.ndarray
    dist_ij: np.ndarray
    nearest_ji: np.ndarray
    dist_ji: np.ndarray
    delta: float

    def recompute(self, counts_i, counts_j) -> float:
        ci = np.asarray(counts_i, dtype=float)
        cj = np.asarray(counts_j, dtype=float)
        return 0.5 * ((ci * self.dist_ij).sum() / ci.sum() + (cj * self.dist_ji).sum() / cj.sum())


def _check_sets(*sets: RepresentativeLoadSet):
    for s in sets:
        if s.k == 0:
            raise EmptyRecordError(f"consumer {s.consumer_id!r}: empty representative set")
    if len({s.phi for s in sets}) > 1:
        raise ValueError("prototypes must share a common length")


def _block(Si, Sj, d):
    out = np.empty((Si.k, Sj.k))
    _cross_matrix(np.ascontiguousarray(Si.profiles), np.ascontiguousarray(Sj.profiles), d.radius, out)
    return out


def set_distance(S_i: RepresentativeLoadSet, S_j: RepresentativeLoadSet,
                 kind: SetDistanceKind | str = SetDistanceKind.WSMD, d: DistanceKind = DTW2) -> float:
    _check_sets(S_i, S_j)
    d = DistanceKind.parse(d)
    block = _block(S_i, S_j, d)
    return float(_set_value(block, S_i.counts.astype(float), S_j.counts.astype(float),
                            _CODES[SetDistanceKind(kind)]))


def wsmd(S_i: RepresentativeLoadSet, S_j: RepresentativeLoadSet, d: DistanceKind = DTW2,
         i: int = 0, j: int = 1) -> tuple[float, WsmdPairing]:
    """WSMD value together with the nearest-prototype pairing record."""
    _check_sets(S_i, S_j)
    d = DistanceKind.parse(d)
    block = _block(S_i, S_j, d)
    value = float(_set_value(block, S_i.counts.astype(float), S_j.counts.astype(float), 0))
    near_ij = np.argmin(block, axis=1)
    near_ji = np.argmin(block, axis=0)
    pairing = WsmdPairing(i, j, near_ij, block[np.arange(S_i.k), near_ij],
                          near_ji, block[near_ji, np.arange(S_j.k)], value)
    return value, pairing


def _stack(all_rls: Sequence[RepresentativeLoadSet]):
    _check_sets(*all_rls)
    P = np.ascontiguousarray(np.vstack([s.profiles for s in all_rls]), dtype=float)
    sizes = np.array([s.k for s in all_rls], dtype=np.int64)
    poff = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    counts = np.concatenate([s.counts for s in all_rls]).astype(float)
    return P, poff, counts


def wsmd_pairings(all_rls: Sequence[RepresentativeLoadSet], pairs, d: DistanceKind = DTW2) -> dict:
    """Pairing records for the given (i, j) index pairs, keyed by ``(i, j)``."""
    d = DistanceKind.parse(d)
    pairs = [(int(i), int(j)) for i, j in pairs]
    if not pairs:
        return {}
    P, poff, counts = _stack(all_rls)
    ii = np.array([p[0] for p in pairs], dtype=np.int64)
    jj = np.array([p[1] for p in pairs], dtype=np.int64)
    k = np.diff(poff)
    per = k[ii] + k[jj]
    src_off = np.concatenate([[0], np.cumsum(per)[:-1]]).astype(np.int64)
    total = int(per.sum())
    near_ij = np.empty(total, dtype=np.int64)
    dist_ij = np.empty(total)
    near_ji = np.empty(total, dtype=np.int64)
    dist_ji = np.empty(total)
    _pairings(P, poff, ii, jj, d.radius, src_off, near_ij, dist_ij, near_ji, dist_ji)
    out = {}
    for t, (i, j) in enumerate(pairs):
        o, ka, kb = src_off[t], k[i], k[j]
        rec = WsmdPairing(i, j, near_ij[o:o + ka].copy(), dist_ij[o:o + ka].copy(),
                          near_ji[o:o + kb].copy(), dist_ji[o:o + kb].copy(), 0.0)
        delta = float(_set_value_from_pairing(rec, all_rls[i].counts, all_rls[j].counts))
        out[(i, j)] = WsmdPairing(rec.i, rec.j, rec.nearest_ij, rec.dist_ij, rec.nearest_ji, rec.dist_ji, delta)
    return out


def _set_value_from_pairing(rec: WsmdPairing, ci, cj) -> float:
    ci = np.asarray(ci, dtype=float)
    cj = np.asarray(cj, dtype=float)
    s1 = 0.0
    for c, v in zip(ci, rec.dist_ij):
        s1 += c * v
    s2 = 0.0
    for c, v in zip(cj, rec.dist_ji):
        s2 += c * v
    return 0.5 * (s1 / ci.sum() + s2 / cj.sum())


def set_distance_values(all_rls: Sequence[RepresentativeLoadSet], pairs,
                        kind: SetDistanceKind | str = SetDistanceKind.WSMD, d: DistanceKind = DTW2) -> np.ndarray:
    d = DistanceKind.parse(d)
    P, poff, counts = _stack(all_rls)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    out = np.empty(pairs.shape[0])
    if pairs.shape[0]:
        _set_matrix_pairs(P, poff, counts, np.ascontiguousarray(pairs[:, 0]), np.ascontiguousarray(pairs[:, 1]),
                          d.radius, _CODES[SetDistanceKind(kind)], out)
    return out


def pairwise_set_matrix(all_rls: Sequence[RepresentativeLoadSet],
                        kind: SetDistanceKind | str = SetDistanceKind.WSMD, d: DistanceKind = DTW2,
                        return_pairings: bool = False):
    """Symmetric consumer-by-consumer matrix of set distances.

    With ``return_pairings`` (WSMD only) the pairing record of every unordered
    pair is returned too; otherwise the second element is ``None``.
    """
    m = len(all_rls)
    iu, ju = np.triu_indices(m, 1)
    vals = set_distance_values(all_rls, np.column_stack([iu, ju]), kind, d)
    D = np.zeros((m, m))
    D[iu, ju] = vals
    D[ju, iu] = vals
    pairings = None
    if return_pairings and SetDistanceKind(kind) is SetDistanceKind.WSMD:
        pairings = wsmd_pairings(all_rls, zip(iu, ju), d)
    return D, pairings
