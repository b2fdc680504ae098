"""Synthetic daily load profiles and consumer datasets with known structure.

A fixed catalogue of 20 diurnal shapes (one to three Gaussian peaks on a low
base) is instantiated with jitter in peak timing, width and height plus
additive noise. Consumer clusters are defined by distinct subsets of shapes;
each consumer draws its daily shape sequence either uniformly or from a
first-order Markov chain shared by its cluster.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ConfigError, ConsumerRecord, DataError, Partition
from .preprocess import normalize_days

PHI = 48

# (center in half-hour intervals, width in intervals, relative height)
SHAPES: tuple[tuple[tuple[float, float, float], ...], ...] = (
    ((14, 2.0, 1.0),),                               # morning
    ((25, 2.5, 1.0),),                               # midday
    ((31, 2.5, 1.0),),                               # afternoon
    ((38, 2.5, 1.0),),                               # evening
    ((44, 2.0, 1.0),),                               # late evening
    ((3, 3.0, 1.0),),                                # night
    ((24, 9.0, 1.0),),                               # broad daytime
    ((38, 7.5, 1.0),),                               # broad evening
    ((14, 2.0, 1.0), (38, 2.5, 1.0)),                # morning + evening
    ((20, 2.0, 0.6), (42, 2.5, 1.0)),                # late morning + late evening
    ((5, 2.0, 1.0), (21, 2.5, 0.6)),                 # early morning + late morning
    ((9, 2.0, 1.0), (31, 2.0, 1.0)),                 # early morning + afternoon
    ((15, 2.0, 1.0), (26, 2.0, 1.0)),                # morning + midday
    ((24, 2.5, 1.0), (43, 2.0, 1.0)),                # midday + late evening
    ((14, 2.0, 1.0), (26, 2.0, 0.6), (38, 2.5, 1.0)),  # three peaks
    ((7, 2.0, 1.0), (20, 2.0, 1.0), (41, 2.0, 1.0)),   # three early peaks
    ((3, 3.0, 1.0), (13, 2.0, 0.8)),                 # night + morning
    ((3, 3.0, 0.6), (39, 2.5, 1.0)),                 # night + evening
    ((34, 1.8, 1.0), (43, 1.8, 1.0)),                # double evening
    ((30, 2.5, 1.0), (45, 2.0, 0.8)),                # afternoon + late night
)
N_SHAPES = len(SHAPES)


@dataclass(frozen=True)
class NoiseScales:
    center: float = 0.3     # sd of peak timing, intervals
    width: float = 0.05     # relative sd of peak width
    height: float = 0.05    # relative sd of peak height
    base: float = 0.1       # upper bound of the uniform base level
    additive: float = 0.015  # sd of pointwise noise, relative to peak height 1


DEFAULT_NOISE = NoiseScales()
ZERO_NOISE = NoiseScales(0.0, 0.0, 0.0, 0.0, 0.0)


def _render(peaks, phi: int, base: float) -> np.ndarray:
    t = np.arange(phi, dtype=float)
    y = np.full(phi, base)
    for c, w, h in peaks:
        # circular distance so peaks near midnight wrap around
        dt = np.abs(t - c * phi / PHI)
        dt = np.minimum(dt, phi - dt)
        y += h * np.exp(-0.5 * (dt / (w * phi / PHI)) ** 2)
    return y


def shape_template(s: int, phi: int = PHI) -> np.ndarray:
    """Noise-free, min-max normalised instance of shape ``s``."""
    return normalize_days(_render(SHAPES[s], phi, 0.0)[None, :])[0]


def instantiate_shape(s: int, rng: np.random.Generator, noise: NoiseScales = DEFAULT_NOISE,
                      phi: int = PHI) -> np.ndarray:
    peaks = [
        (c + rng.normal(0, noise.center) if noise.center else c,
         w * max(0.5, 1 + rng.normal(0, noise.width)) if noise.width else w,
         h * max(0.2, 1 + rng.normal(0, noise.height)) if noise.height else h)
        for c, w, h in SHAPES[s]
    ]
    y = _render(peaks, phi, rng.uniform(0, noise.base) if noise.base else 0.0)
    if noise.additive:
        y = y + rng.normal(0, noise.additive, phi)
    return normalize_days(y[None, :])[0]


def generate_outlier_profile(rng: np.random.Generator, phi: int = PHI) -> np.ndarray:
    """A profile unlike every catalogue shape: 4-7 narrow peaks at random times."""
    n_peaks = int(rng.integers(4, 8))
    peaks = [(rng.uniform(0, PHI), rng.uniform(0.4, 1.4), rng.uniform(0.3, 1.0)) for _ in range(n_peaks)]
    y = _render(peaks, phi, rng.uniform(0, 0.2)) + rng.normal(0, 0.05, phi)
    return normalize_days(y[None, :])[0]


# --------------------------------------------------------------------------
# Markov sequencing


@dataclass(frozen=True)
class TransitionProbabilityMatrix:
    matrix: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        P = np.array(self.matrix, dtype=float)
        pi = np.array(self.initial, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or pi.shape != (P.shape[0],):
            raise DataError("TPM must be square with a matching initial distribution")
        if np.any(P < 0) or np.any(np.abs(P.sum(1) - 1) > 1e-12):
            raise DataError("TPM rows must be non-negative and sum to 1")
        if np.any(pi < 0) or abs(pi.sum() - 1) > 1e-12:
            raise DataError("initial distribution must sum to 1")
        object.__setattr__(self, "matrix", P)
        object.__setattr__(self, "initial", pi)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


def fit_tpm(labels, k: int) -> TransitionProbabilityMatrix:
    """Row-normalised transition counts; rows never visited become uniform."""
    x = np.asarray(labels, dtype=np.int64)
    if x.size == 0:
        raise DataError("cannot fit a TPM to an empty sequence")
    if x.min() < 0 or x.max() >= k:
        raise DataError("labels must lie in [0, k)")
    counts = np.zeros((k, k))
    np.add.at(counts, (x[:-1], x[1:]), 1.0)
    rows = counts.sum(1)
    # add-one smoothing only for rows with no observed transitions
    counts[rows == 0] = 1.0
    P = counts / counts.sum(1, keepdims=True)
    pi = np.bincount(x, minlength=k) / x.size
    return TransitionProbabilityMatrix(P, pi)


def sample_sequence(tpm: TransitionProbabilityMatrix, length: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty(length, dtype=np.int64)
    if length == 0:
        return out
    cum = np.cumsum(tpm.matrix, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(length)
    s = int(np.searchsorted(np.cumsum(tpm.initial), u[0], side="right"))
    out[0] = min(s, tpm.k - 1)
    for t in range(1, length):
        s = int(np.searchsorted(cum[out[t - 1]], u[t], side="right"))
        out[t] = min(s, tpm.k - 1)
    return out


def random_tpm(k: int, rng: np.random.Generator, persistence: float = 2.0) -> TransitionProbabilityMatrix:
    """Reference chain: Dirichlet rows with extra mass on staying in the same state."""
    alpha = np.ones((k, k)) + persistence * np.eye(k)
    P = np.vstack([rng.dirichlet(a) for a in alpha])
    # stationary distribution as the initial distribution
    w, v = np.linalg.eig(P.T)
    pi = np.abs(np.real(v[:, np.argmin(np.abs(w - 1))]))
    pi = pi / pi.sum()
    P = P / P.sum(1, keepdims=True)
    return TransitionProbabilityMatrix(P, pi)


def reference_tpm(k: int, rng: np.random.Generator, length: int = 1000) -> TransitionProbabilityMatrix:
    """TPM fitted to a sequence drawn from a random reference chain."""
    seq = sample_sequence(random_tpm(k, rng), length, rng)
    return fit_tpm(seq, k)


# --------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class SyntheticSpec:
    m: int = 50
    p: int = 90
    K: int = 2
    k_shapes: int = 2
    n_outliers: int = 0
    n_outlier_consumers: int = 0
    sequencing: str = "uniform"
    seed: int = 0
    noise: NoiseScales = DEFAULT_NOISE

    def __post_init__(self):
        if self.sequencing not in ("uniform", "markov"):
            raise ConfigError("sequencing must be 'uniform' or 'markov'")
        if not 1 <= self.k_shapes <= N_SHAPES:
            raise ConfigError(f"k_shapes must lie in [1, {N_SHAPES}]")
        if not 0 <= self.n_outliers <= self.p:
            raise ConfigError("n_outliers must lie in [0, p]")
        if self.K < 1 or self.m < 1 or self.p < 1:
            raise ConfigError("m, p and K must be positive")
        if not 0 <= self.n_outlier_consumers <= self.m:
            raise ConfigError("n_outlier_consumers must lie in [0, m]")


@dataclass
class SyntheticDataset:
    records: list
    truth: Partition
    day_shapes: list             # per consumer, shape id per day (-1 for outlier days)
    cluster_shapes: list         # shape subset per true cluster
    outlier_consumers: np.ndarray  # boolean mask
    spec: Optional[SyntheticSpec] = None
    tpms: list = field(default_factory=list)

    @property
    def inlier_mask(self) -> np.ndarray:
        return ~self.outlier_consumers


def _distinct_subsets(n_sets: int, size: int, rng: np.random.Generator, avoid=()) -> list[tuple]:
    from math import comb

    if comb(N_SHAPES, size) < n_sets + len(avoid):
        raise ConfigError(f"cannot draw {n_sets} distinct {size}-subsets of {N_SHAPES} shapes")
    seen = set(avoid)
    out = []
    while len(out) < n_sets:
        sub = tuple(sorted(rng.choice(N_SHAPES, size, replace=False).tolist()))
        if sub not in seen:
            seen.add(sub)
            out.append(sub)
    return out


def _consumer_days(spec, shapes, tpm, rng):
    p = spec.p
    if tpm is None:
        seq = rng.integers(len(shapes), size=p)
    else:
        seq = sample_sequence(tpm, p, rng)
    day_shape = np.asarray(shapes)[seq]
    values = np.empty((p, PHI))
    outlier_days = np.sort(rng.choice(p, spec.n_outliers, replace=False)) if spec.n_outliers else []
    day_shape = day_shape.astype(np.int64)
    day_shape[outlier_days] = -1
    for d in range(p):
        if day_shape[d] < 0:
            values[d] = generate_outlier_profile(rng)
        else:
            values[d] = instantiate_shape(int(day_shape[d]), rng, spec.noise)
    return values, day_shape


def generate_dataset(spec: SyntheticSpec) -> SyntheticDataset:
    """Seeded synthetic dataset with ground-truth consumer clusters.

    Cluster sizes are multinomial with uniform probabilities. Each consumer
    has its own random stream derived from (seed, consumer index), so output
    never depends on how the work is scheduled.
    """
    root = np.random.SeedSequence(spec.seed)
    setup_seq, *consumer_seqs = root.spawn(spec.m + 1)
    setup = np.random.default_rng(setup_seq)

    n_in = spec.m - spec.n_outlier_consumers
    cluster_shapes = _distinct_subsets(spec.K, spec.k_shapes, setup)
    sizes = setup.multinomial(n_in, np.full(spec.K, 1.0 / spec.K))
    labels = np.repeat(np.arange(spec.K), sizes)
    labels = labels[setup.permutation(n_in)]

    # outlier consumers: each gets its own subset and chain, labelled as extra clusters
    out_shapes = _distinct_subsets(spec.n_outlier_consumers, spec.k_shapes, setup, avoid=cluster_shapes) \
        if spec.n_outlier_consumers else []
    all_shapes = list(cluster_shapes) + list(out_shapes)
    markov = spec.sequencing == "markov"
    tpms = [reference_tpm(spec.k_shapes, setup) if markov else None for _ in all_shapes]
    full_labels = np.concatenate([labels, spec.K + np.arange(spec.n_outlier_consumers)]).astype(np.int64)
    order = setup.permutation(spec.m)
    full_labels = full_labels[order]

    records, day_shapes = [], []
    for c in range(spec.m):
        rng = np.random.default_rng(consumer_seqs[c])
        g = int(full_labels[c])
        values, day_shape = _consumer_days(spec, all_shapes[g], tpms[g], rng)
        records.append(ConsumerRecord(f"c{c:05d}", values, np.arange(spec.p)))
        day_shapes.append(day_shape)
    outlier_mask = full_labels >= spec.K
    truth = Partition(_compact(full_labels))
    return SyntheticDataset(records, truth, day_shapes, list(cluster_shapes), outlier_mask, spec,
                            [t for t in tpms if t is not None])


def _compact(labels: np.ndarray) -> np.ndarray:
    _, inv = np.unique(labels, return_inverse=True)
    return inv.astype(np.int64)


def ideal_cluster(n_consumers: int, shapes, p: int = 90, seed: int = 0) -> list[ConsumerRecord]:
    """Consumers that all share exactly ``shapes``, with zero noise.

    Every consumer uses every shape at least once.
    """
    rng = np.random.default_rng(seed)
    templates = np.array([shape_template(s) for s in shapes])
    out = []
    for c in range(n_consumers):
        seq = np.concatenate([np.arange(len(shapes)), rng.integers(len(shapes), size=p - len(shapes))])
        seq = rng.permutation(seq)
        out.append(ConsumerRecord(f"c{c:05d}", templates[seq], np.arange(p)))
    return out


def validate_catalog(n_instances: int = 30, seed: int = 0, noise: NoiseScales = DEFAULT_NOISE,
                     window: int = 2) -> tuple[float, float]:
    """(largest within-shape, smallest cross-shape) DTW distance over sampled instances."""
    from .distance import pairwise_distances

    rng = np.random.default_rng(seed)
    X = np.array([instantiate_shape(s, rng, noise) for s in range(N_SHAPES) for _ in range(n_instances)])
    lab = np.repeat(np.arange(N_SHAPES), n_instances)
    D = pairwise_distances(X, f"dtw-{window}")
    same = lab[:, None] == lab[None, :]
    np.fill_diagonal(same, False)
    diff = lab[:, None] != lab[None, :]
    return float(D[same].max()), float(D[diff].min())
