"""Single-profile and pooled consumer representations used as comparisons.

RLP is the pointwise mean of a consumer's days, DCP the prototype of their
most populated stage-one cluster, and GPF the share of their days falling in
each of k clusters found by pooling every consumer's days together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cluster import Algorithm, ClusterConfig, cluster_matrix, extract_prototypes, k_means
from .core import ConfigError, ConsumerRecord, DataError, EmptyRecordError, Partition, RepresentativeLoadSet
from .distance import EUCLIDEAN, DistanceKind, pairwise_distances


def rlp(record: ConsumerRecord) -> np.ndarray:
    if record.p == 0:
        raise EmptyRecordError(f"consumer {record.consumer_id!r} has no days")
    return record.values.mean(axis=0)


def dcp(rls: RepresentativeLoadSet) -> np.ndarray:
    """Prototype with the largest count; ties go to the lowest index."""
    return rls.profiles[int(np.argmax(rls.counts))].copy()


@dataclass(frozen=True)
class GpfRepresentation:
    global_prototypes: np.ndarray   # (k, phi)
    proportions: np.ndarray         # (m, k), rows sum to 1
    pooled_labels: Partition        # over all pooled days, consumer by consumer

    @property
    def k(self) -> int:
        return self.global_prototypes.shape[0]


def gpf(records: Sequence[ConsumerRecord], k: int, cfg: ClusterConfig | None = None,
        d: DistanceKind = EUCLIDEAN, init=()) -> GpfRepresentation:
    """Pool all days, cluster them into ``k`` global groups, and count per consumer.

    k-means is used unless ``cfg`` selects a matrix-based algorithm, in which
    case the pooled matrix is built with ``d`` and medoids become prototypes.
    ``init`` passes extra starting centroids to k-means.
    """
    cfg = ClusterConfig(Algorithm.KMEANS, k) if cfg is None else cfg.with_k(k)
    X = np.vstack([r.values for r in records])
    owner = np.repeat(np.arange(len(records)), [r.p for r in records])
    if k > X.shape[0]:
        raise ConfigError(f"k={k} exceeds the {X.shape[0]} pooled days")
    if cfg.algorithm is Algorithm.KMEANS:
        part, centroids = k_means(X, cfg, init=init)
        protos = np.asarray(centroids)
    else:
        D = pairwise_distances(X, d)
        part = cluster_matrix(D, cfg)
        protos = np.array([p.profile for p in extract_prototypes(X, part, "medoid", D=D)])
    props = np.zeros((len(records), k))
    np.add.at(props, (owner, part.labels), 1.0)
    props /= props.sum(axis=1, keepdims=True)
    return GpfRepresentation(protos, props, part)


def gpf_consumer_prototypes(rep: GpfRepresentation, consumer: int) -> np.ndarray:
    """Global prototypes of the clusters the consumer has at least one day in."""
    return rep.global_prototypes[rep.proportions[consumer] > 0]


def cluster_consumers_by_vector(vectors, K: int, cfg: ClusterConfig | None = None) -> Partition:
    """Cluster consumer vectors (RLPs, DCPs or GPF proportions) with Euclidean distance."""
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2:
        raise DataError("vectors must form a 2-D array")
    cfg = ClusterConfig(Algorithm.KMEANS, K) if cfg is None else cfg.with_k(K)
    if cfg.algorithm is Algorithm.KMEANS:
        return k_means(X, cfg)[0]
    return cluster_matrix(pairwise_distances(X, EUCLIDEAN), cfg)
