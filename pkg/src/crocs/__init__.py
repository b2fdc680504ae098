"""Two-stage segmentation of electricity consumers from their daily load profiles."""

__version__ = "0.1.0"

import os as _os

# the bundled TBB is too old for numba; OpenMP is thread-safe and quiet
_os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .core import (AlignmentError, ConfigError, ConsumerRecord, CrocsError, DailyLoadProfile, DataError,
                   EmptyRecordError, Partition, Prototype, RepresentativeLoadSet, cluster_sizes, relabel_canonical)
from .distance import DTW2, EUCLIDEAN, DistanceKind, dtw, euclidean, pairwise_distances
from .cluster import Algorithm, ClusterConfig, PrototypeKind, extract_prototypes, hac_ward, k_means, k_medoids
from .setdist import SetDistanceKind, WsmdPairing, pairwise_set_matrix, set_distance, wsmd
from .pipeline import CrocsConfig, CrocsResult, run_crocs, stage_one, stage_two
from .rrls import (CommunityConfig, PrototypeGraph, RefinedRLS, build_prototype_graph, detect_communities,
                   extract_rrls, rrls_for_partition)
from .metrics import EviReport, ami, ari, evi_report, jsd_normalized, kappa_normalized, psi, reconstruction_error
from .baselines import GpfRepresentation, cluster_consumers_by_vector, dcp, gpf, rlp
from .synth import SyntheticSpec, TransitionProbabilityMatrix, fit_tpm, generate_dataset, sample_sequence

__all__ = [name for name in dir() if not name.startswith("_")]
