"""Domain types shared across the package, plus partition utilities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterator, Sequence

import numpy as np


class CrocsError(Exception):
    """Base class for errors raised by this package."""


class AlignmentError(CrocsError, ValueError):
    pass


class EmptyRecordError(CrocsError, ValueError):
    pass


class ConfigError(CrocsError, ValueError):
    pass


class DataError(CrocsError, ValueError):
    pass


@dataclass(frozen=True)
class DailyLoadProfile:
    consumer_id: Hashable
    day_index: int
    values: np.ndarray


@dataclass(frozen=True)
class ConsumerRecord:
    """All daily load profiles of one consumer.

    ``values`` is a (p, phi) array, one row per day; ``day_index`` holds the
    strictly increasing ordinal of each row (gaps are allowed).
    """

    consumer_id: Hashable
    values: np.ndarray
    day_index: np.ndarray = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"consumer {self.consumer_id!r}: values must be 2-D (days x phi)")
        if self.day_index is None:
            days = np.arange(values.shape[0])
        else:
            days = np.array(self.day_index, dtype=np.int64)
        if days.shape != (values.shape[0],):
            raise DataError(f"consumer {self.consumer_id!r}: day_index length mismatch")
        if days.size > 1 and np.any(np.diff(days) <= 0):
            raise DataError(f"consumer {self.consumer_id!r}: day_index not strictly increasing")
        values.setflags(write=False)
        days.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "day_index", days)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def phi(self) -> int:
        return self.values.shape[1]

    @property
    def profiles(self) -> list[DailyLoadProfile]:
        return [
            DailyLoadProfile(self.consumer_id, int(d), row)
            for d, row in zip(self.day_index, self.values)
        ]

    @classmethod
    def from_profiles(cls, consumer_id, profiles: Sequence[DailyLoadProfile]) -> "ConsumerRecord":
        if not profiles:
            return cls(consumer_id, np.empty((0, 0)), np.empty(0, dtype=np.int64))
        values = np.vstack([np.asarray(pr.values, dtype=float) for pr in profiles])
        days = np.array([pr.day_index for pr in profiles], dtype=np.int64)
        return cls(consumer_id, values, days)


@dataclass(frozen=True)
class Prototype:
    profile: np.ndarray
    count: int
    members: np.ndarray


@dataclass(frozen=True)
class RepresentativeLoadSet:
    """A consumer's stage-one prototypes with their day counts.

    Prototypes are kept in descending count order, ties broken by the first
    member day, so serialised sets are stable between runs.
    """

    consumer_id: Hashable
    profiles: np.ndarray
    counts: np.ndarray
    member_days: tuple = field(default=())

    def __post_init__(self):
        profiles = np.atleast_2d(np.array(self.profiles, dtype=float))
        counts = np.array(self.counts, dtype=np.int64)
        if profiles.shape[0] == 0:
            raise EmptyRecordError(f"consumer {self.consumer_id!r}: empty representative set")
        if counts.shape != (profiles.shape[0],):
            raise DataError("one count per prototype required")
        if np.any(counts < 1):
            raise DataError("prototype counts must be positive")
        members = tuple(np.asarray(m, dtype=np.int64) for m in self.member_days)
        if members and [len(m) for m in members] != counts.tolist():
            raise DataError("member_days lengths must equal counts")
        profiles.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "member_days", members)

    @property
    def k(self) -> int:
        return self.profiles.shape[0]

    @property
    def total_days(self) -> int:
        return int(self.counts.sum())

    @property
    def phi(self) -> int:
        return self.profiles.shape[1]

    def __iter__(self) -> Iterator[Prototype]:
        members = self.member_days or (np.empty(0, dtype=np.int64),) * self.k
        for prof, n, mem in zip(self.profiles, self.counts, members):
            yield Prototype(prof, int(n), mem)

    @classmethod
    def ordered(cls, consumer_id, profiles, counts, member_days) -> "RepresentativeLoadSet":
        """Build a set with the canonical prototype order."""
        first = [int(np.min(m)) if len(m) else 0 for m in member_days]
        order = sorted(range(len(counts)), key=lambda a: (-int(counts[a]), first[a]))
        profiles = np.asarray(profiles, dtype=float)[order]
        counts = np.asarray(counts)[order]
        members = tuple(np.sort(np.asarray(member_days[a], dtype=np.int64)) for a in order)
        return cls(consumer_id, profiles, counts, members)


@dataclass(frozen=True)
class Partition:
    """Hard partition of N objects into k non-empty clusters."""

    labels: np.ndarray
    k: int = None

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64).ravel()
        k = int(labels.max()) + 1 if self.k is None and labels.size else (self.k or 0)
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise DataError("labels must lie in [0, k)")
        if np.unique(labels).size != k:
            raise DataError("every cluster index in [0, k) must be used")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "k", k)

    def __len__(self) -> int:
        return self.labels.size

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)


def relabel_canonical(p: Partition | Sequence[int]) -> Partition:
    """Renumber clusters by order of first appearance."""
    labels = np.asarray(p.labels if isinstance(p, Partition) else p, dtype=np.int64)
    _, first = np.unique(labels, return_index=True)
    mapping = np.empty(labels.max() + 1 if labels.size else 0, dtype=np.int64)
    mapping[labels[np.sort(first)]] = np.arange(first.size)
    return Partition(mapping[labels], first.size)


def cluster_sizes(p: Partition | Sequence[int]) -> np.ndarray:
    if not isinstance(p, Partition):
        p = Partition(p)
    return np.bincount(p.labels, minlength=p.k)


def check_dissimilarity(D, atol: float = 1e-12) -> np.ndarray:
    """Validate and return a symmetric, zero-diagonal, non-negative matrix."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DataError("dissimilarity matrix must be square")
    if not np.all(np.isfinite(D)):
        raise DataError("dissimilarity matrix has non-finite entries")
    if np.any(D < 0) or np.any(np.abs(np.diag(D)) > atol) or not np.allclose(D, D.T, atol=atol, rtol=0):
        raise DataError("dissimilarity matrix must be symmetric, non-negative, zero-diagonal")
    return D
