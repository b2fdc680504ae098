"""Profile-to-profile dissimilarities: Euclidean and band-constrained DTW.

Both are served by one kernel: DTW accumulates squared pointwise differences
along the cheapest warping path inside a Sakoe-Chiba band and returns the
square root, so a band radius of 0 is exactly the Euclidean distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .core import DataError


@dataclass(frozen=True)
class DistanceKind:
    """``name`` is ``"euclidean"`` or ``"dtw"``; ``window`` is the band radius in intervals."""

    name: str = "dtw"
    window: int = 2

    def __post_init__(self):
        if self.name not in ("euclidean", "dtw"):
            raise ValueError(f"unknown distance {self.name!r}")
        if self.window < 0:
            raise ValueError("window radius must be non-negative")

    @property
    def radius(self) -> int:
        return 0 if self.name == "euclidean" else self.window

    @classmethod
    def parse(cls, text: str | "DistanceKind") -> "DistanceKind":
        """Accepts ``"euclidean"``, ``"ed"``, ``"dtw"`` or ``"dtw-<radius>"``."""
        if isinstance(text, DistanceKind):
            return text
        t = str(text).strip().lower()
        if t in ("euclidean", "ed"):
            return cls("euclidean", 0)
        if t == "dtw":
            return cls("dtw", 2)
        if t.startswith("dtw-"):
            return cls("dtw", int(t[4:]))
        raise ValueError(f"unknown distance {text!r}")

    def __str__(self) -> str:
        return "euclidean" if self.name == "euclidean" else f"dtw-{self.window}"


EUCLIDEAN = DistanceKind("euclidean", 0)
DTW2 = DistanceKind("dtw", 2)


@njit(cache=True, nogil=True)
def _dtw_sq(a, b, r, prev, curr):
    # prev/curr are scratch rows of length len(a) + 1
    n = a.shape[0]
    if r > n - 1:
        r = n - 1
    acc = 0.0
    for j in range(r + 1):
        d = a[0] - b[j]
        acc += d * d
        prev[j] = acc
    for j in range(r + 1, n + 1):
        prev[j] = np.inf
    for i in range(1, n):
        lo = i - r if i > r else 0
        hi = i + r if i + r < n else n - 1
        ai = a[i]
        if lo == 0:
            d = ai - b[0]
            left = d * d + prev[0]
            curr[0] = left
            start = 1
        else:
            left = np.inf
            start = lo
        diag = prev[start - 1]
        for j in range(start, hi + 1):
            up = prev[j]
            best = up if up < diag else diag
            if left < best:
                best = left
            d = ai - b[j]
            left = d * d + best
            curr[j] = left
            diag = up
        curr[hi + 1] = np.inf
        prev, curr = curr, prev
    return prev[n - 1]


@njit(cache=True, nogil=True)
def _dist(a, b, r, prev, curr):
    return np.sqrt(_dtw_sq(a, b, r, prev, curr))


@njit(cache=True, nogil=True)
def _square_matrix(X, r, out):
    n, phi = X.shape
    prev = np.empty(phi + 1)
    curr = np.empty(phi + 1)
    for i in range(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            v = _dist(X[i], X[j], r, prev, curr)
            out[i, j] = v
            out[j, i] = v


@njit(cache=True, parallel=True)
def _square_matrix_parallel(X, r, out):
    n, phi = X.shape
    for i in prange(n):
        prev = np.empty(phi + 1)
        curr = np.empty(phi + 1)
        out[i, i] = 0.0
        for j in range(i + 1, n):
            v = _dist(X[i], X[j], r, prev, curr)
            out[i, j] = v
            out[j, i] = v


@njit(cache=True, parallel=True)
def _many_square_matrices(X, offsets, mat_offsets, r, out):
    m = offsets.shape[0] - 1
    phi = X.shape[1]
    for c in prange(m):
        prev = np.empty(phi + 1)
        curr = np.empty(phi + 1)
        s = offsets[c]
        n = offsets[c + 1] - s
        base = mat_offsets[c]
        for i in range(n):
            out[base + i * n + i] = 0.0
            for j in range(i + 1, n):
                v = _dist(X[s + i], X[s + j], r, prev, curr)
                out[base + i * n + j] = v
                out[base + j * n + i] = v


@njit(cache=True, nogil=True)
def _cross_matrix(A, B, r, out):
    phi = A.shape[1]
    prev = np.empty(phi + 1)
    curr = np.empty(phi + 1)
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            out[i, j] = _dist(A[i], B[j], r, prev, curr)


def _check_pair(a, b):
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise DataError(f"profiles must be 1-D and of equal length, got {a.shape} and {b.shape}")
    return a, b


def euclidean(a, b) -> float:
    a, b = _check_pair(a, b)
    return float(_dist(a, b, 0, np.empty(a.size + 1), np.empty(a.size + 1)))


def dtw(a, b, window_radius: int = 2) -> float:
    a, b = _check_pair(a, b)
    if window_radius < 0:
        raise ValueError("window radius must be non-negative")
    return float(_dist(a, b, int(window_radius), np.empty(a.size + 1), np.empty(a.size + 1)))


def profile_distance(a, b, kind: DistanceKind = DTW2) -> float:
    kind = DistanceKind.parse(kind)
    return dtw(a, b, kind.radius)


def pairwise_distances(X, kind: DistanceKind = DTW2, parallel: bool = False) -> np.ndarray:
    """Symmetric matrix of distances between the rows of ``X``."""
    kind = DistanceKind.parse(kind)
    X = np.ascontiguousarray(X, dtype=float)
    n = X.shape[0]
    out = np.empty((n, n))
    if n:
        (_square_matrix_parallel if parallel else _square_matrix)(X, kind.radius, out)
    return out


def cross_distances(A, B, kind: DistanceKind = DTW2) -> np.ndarray:
    kind = DistanceKind.parse(kind)
    A = np.ascontiguousarray(np.atleast_2d(A), dtype=float)
    B = np.ascontiguousarray(np.atleast_2d(B), dtype=float)
    if A.shape[1] != B.shape[1]:
        raise DataError("profiles must share a common length")
    out = np.empty((A.shape[0], B.shape[0]))
    _cross_matrix(A, B, kind.radius, out)
    return out


def many_pairwise_distances(blocks, kind: DistanceKind = DTW2) -> list[np.ndarray]:
    """Within-block distance matrices for a list of (p_i, phi) arrays.

    Work is spread over numba threads; the result does not depend on the
    thread count.
    """
    kind = DistanceKind.parse(kind)
    sizes = np.array([b.shape[0] for b in blocks], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    mat_offsets = np.concatenate([[0], np.cumsum(sizes ** 2)])
    if not len(blocks):
        return []
    X = np.ascontiguousarray(np.vstack(blocks), dtype=float)
    out = np.empty(mat_offsets[-1])
    _many_square_matrices(X, offsets, mat_offsets, kind.radius, out)
    return [out[mat_offsets[c]:mat_offsets[c + 1]].reshape(n, n) for c, n in enumerate(sizes)]


def max_threads() -> int:
    return numba.config.NUMBA_NUM_THREADS
