"""Two-stage consumer segmentation.

Stage one clusters each consumer's days on their own and keeps one prototype
per cluster, with the number of days it stands for. Stage two compares these
representative sets with a set distance and clusters the consumers.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numba
import numpy as np

from .cluster import Algorithm, ClusterConfig, PrototypeKind, cluster_matrix, derive_seed, extract_prototypes
from .core import ConfigError, ConsumerRecord, CrocsError, DataError, EmptyRecordError, Partition, RepresentativeLoadSet
from .distance import DTW2, DistanceKind, many_pairwise_distances
from .preprocess import NormalizationKind, drop_incomplete_days, normalize_record
from .setdist import SetDistanceKind, set_distance_values, wsmd_pairings

# stream keys for derive_seed
_STAGE_ONE = 1
_STAGE_TWO = 2


@dataclass(frozen=True)
class CrocsConfig:
    k_stage1: int = 10
    K_consumers: int = 2
    normalization: NormalizationKind = NormalizationKind.MINMAX
    distance: DistanceKind = DTW2
    stage1_algorithm: ClusterConfig = field(default_factory=ClusterConfig)
    stage2_algorithm: ClusterConfig | None = None   # None: same as stage one
    prototype_kind: PrototypeKind = PrototypeKind.MEDOID
    set_distance: SetDistanceKind = SetDistanceKind.WSMD
    seed: int = 0
    max_missing_fraction: float = 0.1
    on_short_record: str = "error"      # or "skip": exclude and report
    pairings: str = "within"            # "within" (same cluster), "all" or "none"
    threads: int | None = None

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("normalization", NormalizationKind(self.normalization))
        set_("distance", DistanceKind.parse(self.distance))
        set_("prototype_kind", PrototypeKind(self.prototype_kind))
        set_("set_distance", SetDistanceKind(self.set_distance))
        if self.stage2_algorithm is None:
            set_("stage2_algorithm", self.stage1_algorithm)
        if self.k_stage1 < 1:
            raise ConfigError("k_stage1 must be at least 1")
        if self.K_consumers < 1:
            raise ConfigError("K_consumers must be at least 1")
        if self.on_short_record not in ("skip", "error"):
            raise ConfigError("on_short_record must be 'skip' or 'error'")
        if self.pairings not in ("within", "all", "none"):
            raise ConfigError("pairings must be 'within', 'all' or 'none'")
        if self.stage1_algorithm.algorithm is Algorithm.KMEANS:
            raise ConfigError("stage one needs a matrix-based algorithm (hac_ward or kmedoids)")
        if self.stage2_algorithm.algorithm is Algorithm.KMEANS:
            raise ConfigError("stage two needs a matrix-based algorithm (hac_ward or kmedoids)")
        if not 0.0 <= self.max_missing_fraction <= 1.0:
            raise ConfigError("max_missing_fraction must lie in [0, 1]")

    def with_k(self, k_stage1: int) -> "CrocsConfig":
        return replace(self, k_stage1=k_stage1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["normalization"] = self.normalization.value
        d["distance"] = str(self.distance)
        d["prototype_kind"] = self.prototype_kind.value
        d["set_distance"] = self.set_distance.value
        for key in ("stage1_algorithm", "stage2_algorithm"):
            d[key]["algorithm"] = getattr(self, key).algorithm.value
        return d


@contextmanager
def numba_threads(n: int | None):
    """Temporarily limit the numba thread pool."""
    if n is None:
        yield
        return
    old = numba.get_num_threads()
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    try:
        yield
    finally:
        numba.set_num_threads(old)


@dataclass
class StageOneResult:
    rls: list                      # RepresentativeLoadSet per kept consumer, input order
    kept: np.ndarray               # input positions of the kept consumers
    excluded: dict                 # consumer_id -> reason
    matrices: list | None = None   # per kept consumer day-by-day matrices, when requested


def preprocess_records(records: Sequence[ConsumerRecord], cfg: CrocsConfig):
    """Missing-data filtering and normalisation. Returns (records, kept positions, excluded)."""
    out, kept, excluded = [], [], {}
    for pos, rec in enumerate(records):
        try:
            r = drop_incomplete_days(rec, cfg.max_missing_fraction)
        except EmptyRecordError as exc:
            excluded[rec.consumer_id] = str(exc)
            continue
        if r.p < cfg.k_stage1:
            msg = f"consumer {rec.consumer_id!r}: {r.p} days < k_stage1={cfg.k_stage1}"
            if cfg.on_short_record == "error":
                raise DataError(msg)
            excluded[rec.consumer_id] = msg
            continue
        out.append(normalize_record(r, cfg.normalization))
        kept.append(pos)
    return out, np.array(kept, dtype=np.int64), excluded


def day_matrices(records: Sequence[ConsumerRecord], cfg: CrocsConfig) -> list[np.ndarray]:
    with numba_threads(cfg.threads):
        return many_pairwise_distances([r.values for r in records], cfg.distance)


def consumer_key(consumer_id) -> int:
    """Stable 63-bit key of a consumer id, used to derive its random stream."""
    h = hashlib.blake2b(repr(consumer_id).encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


def build_rls(record: ConsumerRecord, D: np.ndarray, cfg: CrocsConfig) -> RepresentativeLoadSet:
    """Cluster one consumer's days and turn the clusters into a representative set.

    The random stream depends on the seed and the consumer id only, so input
    order and the presence of other consumers do not matter.
    """
    k = min(cfg.k_stage1, record.p)
    algo = cfg.stage1_algorithm.with_k(k, derive_seed(cfg.seed, _STAGE_ONE, consumer_key(record.consumer_id)))
    part = cluster_matrix(D, algo)
    protos = extract_prototypes(record.values, part, cfg.prototype_kind, D=D)
    return RepresentativeLoadSet.ordered(
        record.consumer_id,
        [p.profile for p in protos],
        [p.count for p in protos],
        [record.day_index[p.members] for p in protos],
    )


def stage_one_from_matrices(records, matrices, cfg: CrocsConfig) -> list[RepresentativeLoadSet]:
    """Stage one on precomputed day matrices, so a k sweep pays for DTW once."""
    jobs = list(zip(records, matrices))
    threads = cfg.threads or 1
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda j: build_rls(j[0], j[1], cfg), jobs))
    return [build_rls(r, D, cfg) for r, D in jobs]


def stage_one(records: Sequence[ConsumerRecord], cfg: CrocsConfig, keep_matrices: bool = False) -> StageOneResult:
    """Representative load set per consumer.

    Consumers that lose all days to missing data, or have fewer days than
    ``k_stage1``, are excluded and listed in ``excluded`` (or raise, if so
    configured).
    """
    clean, kept, excluded = preprocess_records(records, cfg)
    mats = day_matrices(clean, cfg)
    rls = stage_one_from_matrices(clean, mats, cfg)
    return StageOneResult(rls, kept, excluded, mats if keep_matrices else None)


@dataclass
class StageTwoResult:
    partition: Partition
    set_matrix: np.ndarray
    pairings: dict | None
    timings: dict


def set_matrix(all_rls: Sequence[RepresentativeLoadSet], cfg: CrocsConfig) -> np.ndarray:
    m = len(all_rls)
    iu, ju = np.triu_indices(m, 1)
    with numba_threads(cfg.threads):
        vals = set_distance_values(all_rls, np.column_stack([iu, ju]), cfg.set_distance, cfg.distance)
    D = np.zeros((m, m))
    D[iu, ju] = vals
    D[ju, iu] = vals
    return D


def stage_two(all_rls: Sequence[RepresentativeLoadSet], cfg: CrocsConfig) -> StageTwoResult:
    """Set-distance matrix between consumers, then clustering into ``K_consumers`` groups.

    WSMD pairings are computed after clustering, by default only for pairs
    of consumers that ended up in the same cluster (all the refined
    representative sets need).
    """
    m = len(all_rls)
    if m < cfg.K_consumers:
        raise DataError(f"{m} consumers cannot form {cfg.K_consumers} clusters")
    t0 = time.perf_counter()
    D = set_matrix(all_rls, cfg)
    t1 = time.perf_counter()
    algo = cfg.stage2_algorithm.with_k(cfg.K_consumers, derive_seed(cfg.seed, _STAGE_TWO))
    part = cluster_matrix(D, algo)
    t2 = time.perf_counter()
    pairings = None
    if cfg.set_distance is SetDistanceKind.WSMD and cfg.pairings != "none":
        iu, ju = np.triu_indices(m, 1)
        if cfg.pairings == "within":
            same = part.labels[iu] == part.labels[ju]
            iu, ju = iu[same], ju[same]
        with numba_threads(cfg.threads):
            pairings = wsmd_pairings(all_rls, zip(iu.tolist(), ju.tolist()), cfg.distance)
    t3 = time.perf_counter()
    timings = {"set_matrix": t1 - t0, "clustering": t2 - t1, "pairings": t3 - t2}
    return StageTwoResult(part, D, pairings, timings)


@dataclass
class CrocsResult:
    consumer_ids: list
    rls_per_consumer: list
    consumer_partition: Partition
    set_matrix: np.ndarray
    pairings: dict | None
    timings: dict
    excluded: dict
    kept: np.ndarray
    config: CrocsConfig

    def labels_for_input(self, n_input: int, fill: int = -1) -> np.ndarray:
        """Cluster label per input consumer, ``fill`` for excluded ones."""
        out = np.full(n_input, fill, dtype=np.int64)
        out[self.kept] = self.consumer_partition.labels
        return out


def run_crocs(records: Sequence[ConsumerRecord], cfg: CrocsConfig) -> CrocsResult:
    if not len(records):
        raise DataError("no consumers given")
    t0 = time.perf_counter()
    s1 = stage_one(records, cfg)
    t1 = time.perf_counter()
    if len(s1.rls) < cfg.K_consumers:
        raise CrocsError(f"only {len(s1.rls)} consumers survived preprocessing; "
                         f"K_consumers={cfg.K_consumers}")
    s2 = stage_two(s1.rls, cfg)
    timings = {"stage_one": t1 - t0, **{f"stage_two_{k}": v for k, v in s2.timings.items()}}
    timings["stage_two"] = s2.timings["set_matrix"] + s2.timings["clustering"]
    return CrocsResult([r.consumer_id for r in s1.rls], s1.rls, s2.partition, s2.set_matrix,
                       s2.pairings, timings, s1.excluded, s1.kept, cfg)
