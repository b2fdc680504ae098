"""Desk-scale experiment drivers.

Each driver returns an :class:`ExperimentResult` whose ``table`` holds only
seed-determined values and whose ``timings`` hold wall-clock measurements,
so that replaying an experiment from its manifest can be checked byte for
byte on everything except timings.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from . import __version__
from .baselines import dcp, gpf, gpf_consumer_prototypes, rlp
from .cluster import Algorithm, ClusterConfig, derive_seed, extend_centroids, k_means
from .core import ConfigError, ConsumerRecord, RepresentativeLoadSet
from .metrics import evi_report, jsd_normalized, kappa_normalized, reconstruction_error
from .pipeline import (CrocsConfig, day_matrices, numba_threads, preprocess_records, stage_one,
                       stage_one_from_matrices, stage_two)
from .preprocess import normalize_record
from .setdist import SetDistanceKind
from .synth import SyntheticSpec, generate_dataset


@dataclass
class ExperimentResult:
    name: str
    params: dict
    table: pd.DataFrame
    summary: pd.DataFrame
    timings: pd.DataFrame
    extra: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        return {"experiment": self.name, "params": self.params, "seed": self.params.get("seed"),
                "version": __version__}


def _spec_from(params: dict, **over) -> SyntheticSpec:
    keys = {"m", "p", "K", "k_shapes", "n_outliers", "n_outlier_consumers", "sequencing", "seed"}
    kw = {k: v for k, v in params.items() if k in keys}
    kw.update(over)
    return SyntheticSpec(**kw)


def _cfg(algorithm: str, K: int, seed: int, **kw) -> CrocsConfig:
    algo = ClusterConfig(Algorithm(algorithm))
    return CrocsConfig(K_consumers=K, stage1_algorithm=algo, seed=seed, pairings="none", **kw)


def _summarise(df: pd.DataFrame, by: list, cols: list, quantiles=(0.025, 0.975)) -> pd.DataFrame:
    g = df.groupby(by, sort=True)[cols]
    out = g.mean().add_prefix("mean_")
    for q in quantiles:
        out = out.join(g.quantile(q).add_prefix(f"q{q:g}_"))
    return out.reset_index()


# --------------------------------------------------------------------------
# overestimation of k


def run_overestimation_sweep(spec: SyntheticSpec, k_range: Sequence[int], trials: int = 10,
                             algorithm: str = "hac_ward", threads: int | None = None) -> ExperimentResult:
    """CROCS recovery of known consumer clusters as the stage-one k varies.

    Every trial draws a fresh dataset (seed derived from ``spec.seed`` and the
    trial number); day-level DTW matrices are computed once per dataset and
    reused for all k.
    """
    rows, trows = [], []
    for t in range(trials):
        seed = derive_seed(spec.seed, t)
        ds = generate_dataset(replace(spec, seed=seed))
        base = _cfg(algorithm, spec.K, seed, threads=threads, k_stage1=1)
        t0 = time.perf_counter()
        clean, _, _ = preprocess_records(ds.records, base)
        mats = day_matrices(clean, base)
        t_dtw = time.perf_counter() - t0
        mask = ds.inlier_mask
        for k in k_range:
            cfg = base.with_k(k)
            t0 = time.perf_counter()
            rls = stage_one_from_matrices(clean, mats, cfg)
            t1 = time.perf_counter()
            s2 = stage_two(rls, cfg)
            ev = evi_report(ds.truth, s2.partition, mask)
            rows.append({"trial": t, "seed": seed, "k": k, "ari": ev.ari, "ami": ev.ami, "psi": ev.psi})
            trows.append({"trial": t, "k": k, "stage_one": t_dtw + t1 - t0,
                          "stage_two": s2.timings["set_matrix"] + s2.timings["clustering"]})
    table = pd.DataFrame(rows)
    params = {"spec": _spec_dict(spec), "k_range": list(map(int, k_range)), "trials": trials,
              "algorithm": algorithm, "seed": spec.seed}
    return ExperimentResult("overestimation", params, table, _summarise(table, ["k"], ["ari", "ami", "psi"]),
                            pd.DataFrame(trows))


# --------------------------------------------------------------------------
# set distances


def run_set_distance_comparison(spec: SyntheticSpec, n_outliers: Sequence[int], kinds: Sequence = tuple(SetDistanceKind),
                                k_range: Sequence[int] = (4, 8, 12), trials: int = 20,
                                algorithm: str = "hac_ward", threads: int | None = None) -> ExperimentResult:
    """Mean recovery per (set distance, outlier count, k).

    Stage one runs once per dataset and k; every set distance then sees the
    very same representative sets.
    """
    kinds = [SetDistanceKind(k) for k in kinds]
    rows, trows = [], []
    for n_o in n_outliers:
        for t in range(trials):
            seed = derive_seed(spec.seed, int(n_o), t)
            ds = generate_dataset(replace(spec, n_outliers=int(n_o), seed=seed))
            base = _cfg(algorithm, spec.K, seed, threads=threads, k_stage1=1)
            clean, _, _ = preprocess_records(ds.records, base)
            mats = day_matrices(clean, base)
            for k in k_range:
                rls = stage_one_from_matrices(clean, mats, base.with_k(k))
                for kind in kinds:
                    cfg = replace(base, k_stage1=k, set_distance=kind)
                    s2 = stage_two(rls, cfg)
                    ev = evi_report(ds.truth, s2.partition, ds.inlier_mask)
                    rows.append({"n_outliers": int(n_o), "trial": t, "seed": seed, "k": k, "kind": kind.value,
                                 "ari": ev.ari, "ami": ev.ami, "psi": ev.psi})
                    trows.append({"n_outliers": int(n_o), "trial": t, "k": k, "kind": kind.value,
                                  "stage_two": s2.timings["set_matrix"] + s2.timings["clustering"]})
    table = pd.DataFrame(rows)
    summary = table.groupby(["kind", "n_outliers", "k"], sort=True)[["ari", "ami", "psi"]].mean().reset_index()
    params = {"spec": _spec_dict(spec), "n_outliers": list(map(int, n_outliers)), "kinds": [k.value for k in kinds],
              "k_range": list(map(int, k_range)), "trials": trials, "algorithm": algorithm, "seed": spec.seed}
    return ExperimentResult("set-distance", params, table, summary, pd.DataFrame(trows))


# --------------------------------------------------------------------------
# reconstruction error


def kmeans_rls(record: ConsumerRecord, k: int, seed: int, init=()) -> RepresentativeLoadSet:
    """Stage one with k-means and Euclidean distance: centroid prototypes."""
    part, C = k_means(record.values, ClusterConfig(Algorithm.KMEANS, k, seed=seed), init=init)
    members = [record.day_index[part.members(c)] for c in range(part.k)]
    return RepresentativeLoadSet.ordered(record.consumer_id, C, [m.size for m in members], members)


def run_reconstruction_comparison(records: Sequence[ConsumerRecord], k_range: Sequence[int],
                                  seed: int = 0, normalization: str = "minmax") -> ExperimentResult:
    """Mean reconstruction error per representation and k.

    RLS, DCP and GPF all come from k-means with Euclidean distance; RLP does
    not depend on k. When k grows by one, the previous centroids plus one
    k-means++ draw are tried alongside the fresh restarts, so the k-means
    objective cannot get worse along the sweep.
    """
    recs = [normalize_record(r, normalization) for r in records]
    rlp_err = [reconstruction_error(r, rlp(r)) for r in recs]
    rows, trows = [], []
    prev_k, prev_rls, prev_gpf = None, None, None
    for k in k_range:
        warm = prev_k is not None and k == prev_k + 1
        t0 = time.perf_counter()
        rls = []
        for i, r in enumerate(recs):
            ki = min(k, r.p)
            s_i = derive_seed(seed, i, k)
            init = ()
            if warm and prev_rls[i].k == ki - 1:
                init = (extend_centroids(r.values, prev_rls[i].profiles, np.random.default_rng(s_i)),)
            rls.append(kmeans_rls(r, ki, s_i, init))
        t1 = time.perf_counter()
        X = np.vstack([r.values for r in recs])
        init = (extend_centroids(X, prev_gpf.global_prototypes, np.random.default_rng(derive_seed(seed, k))),) \
            if warm else ()
        rep = gpf(recs, k, ClusterConfig(Algorithm.KMEANS, k, seed=derive_seed(seed, k)), init=init)
        t2 = time.perf_counter()
        prev_k, prev_rls, prev_gpf = k, rls, rep
        for i, r in enumerate(recs):
            rows.append({"k": k, "consumer": i, "representation": "RLS", "error": reconstruction_error(r, rls[i].profiles)})
            rows.append({"k": k, "consumer": i, "representation": "DCP", "error": reconstruction_error(r, dcp(rls[i]))})
            rows.append({"k": k, "consumer": i, "representation": "RLP", "error": rlp_err[i]})
            rows.append({"k": k, "consumer": i, "representation": "GPF",
                         "error": reconstruction_error(r, gpf_consumer_prototypes(rep, i))})
        trows.append({"k": k, "rls": t1 - t0, "gpf": t2 - t1})
    table = pd.DataFrame(rows)
    summary = table.groupby(["representation", "k"], sort=True)["error"].mean().rename("mean_error").reset_index()
    dcp_curve = summary[summary.representation == "DCP"]
    rho = float(spearmanr(dcp_curve.k, dcp_curve.mean_error)[0]) if len(dcp_curve) > 1 else float("nan")
    params = {"n_consumers": len(records), "k_range": list(map(int, k_range)), "seed": seed,
              "normalization": normalization}
    return ExperimentResult("reconstruction", params, table, summary, pd.DataFrame(trows),
                            {"dcp_spearman": rho})


# --------------------------------------------------------------------------
# asynchrony


def asynchrony_metrics(seq_a, seq_b, labels: Sequence | None = None) -> tuple[float, float]:
    """(JSD of label counts, normalised kappa of the day-aligned sequences)."""
    a, b = np.asarray(seq_a), np.asarray(seq_b)
    space = np.unique(np.concatenate([a, b])) if labels is None else np.asarray(labels)
    ca = [(a == v).sum() for v in space]
    cb = [(b == v).sum() for v in space]
    return jsd_normalized(ca, cb), kappa_normalized(a, b)


def joint_day_labels(records: Sequence[ConsumerRecord], k_joint: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Pool all days, cluster them with k-means into ``k_joint`` groups, split back per consumer."""
    X = np.vstack([r.values for r in records])
    part, _ = k_means(X, ClusterConfig(Algorithm.KMEANS, k_joint, seed=seed))
    cuts = np.cumsum([r.p for r in records])[:-1]
    return np.split(part.labels, cuts)


def run_asynchrony_census(records: Sequence[ConsumerRecord], window_days: int | None = None, k_joint: int = 10,
                          seed: int = 0, kappa_threshold: float = 0.55, jsd_threshold: float = 0.3,
                          normalization: str = "minmax") -> ExperimentResult:
    """JSD and normalised kappa for every consumer pair.

    Days are matched by ``day_index``; only days both consumers have count.
    With ``window_days`` only the last that many common days are used.
    A pair is similar when JSD <= ``jsd_threshold``, and asynchronous-similar
    when in addition kappa_norm < ``kappa_threshold``.
    """
    recs = [normalize_record(r, normalization) for r in records]
    labels = joint_day_labels(recs, k_joint, seed)
    rows = []
    space = np.arange(k_joint)
    for i in range(len(recs)):
        for j in range(i + 1, len(recs)):
            common, ia, ib = np.intersect1d(recs[i].day_index, recs[j].day_index, return_indices=True)
            if window_days is not None:
                ia, ib = ia[-window_days:], ib[-window_days:]
            if ia.size == 0:
                continue
            jsd, kap = asynchrony_metrics(labels[i][ia], labels[j][ib], space)
            rows.append({"i": i, "j": j, "consumer_i": str(recs[i].consumer_id),
                         "consumer_j": str(recs[j].consumer_id), "days": int(ia.size), "jsd": jsd, "kappa_norm": kap})
    table = pd.DataFrame(rows, columns=["i", "j", "consumer_i", "consumer_j", "days", "jsd", "kappa_norm"])
    similar = table.jsd <= jsd_threshold
    asyn = similar & (table.kappa_norm < kappa_threshold)
    summary = pd.DataFrame([{"pairs": len(table), "similar": int(similar.sum()),
                             "asynchronous_similar": int(asyn.sum()),
                             "synchronous_similar": int((similar & ~asyn).sum())}])
    params = {"n_consumers": len(records), "window_days": window_days, "k_joint": k_joint, "seed": seed,
              "kappa_threshold": kappa_threshold, "jsd_threshold": jsd_threshold}
    return ExperimentResult("asynchrony", params, table, summary, pd.DataFrame())


# --------------------------------------------------------------------------
# scaling


def _digest_outputs(rls, partition, D) -> str:
    h = hashlib.sha256()
    for r in rls:
        h.update(np.ascontiguousarray(r.profiles).tobytes())
        h.update(np.ascontiguousarray(r.counts).tobytes())
    h.update(np.ascontiguousarray(partition.labels).tobytes())
    h.update(np.ascontiguousarray(D).tobytes())
    return h.hexdigest()


def fit_exponent(x, y) -> float:
    """Slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def run_scaling_benchmark(m_list: Sequence[int], k_list: Sequence[int], p: int = 90,
                          threads: Sequence[int] = (1,), seed: int = 0, K: int = 8, k_shapes: int = 6,
                          algorithm: str = "hac_ward") -> ExperimentResult:
    """Stage timings over consumer counts, k values and thread counts.

    ``table`` holds an output digest per (m, k, threads) so that runs with
    different thread counts can be compared for identical results.
    """
    rows, trows = [], []
    for m in m_list:
        ds = generate_dataset(SyntheticSpec(m=m, p=p, K=K, k_shapes=k_shapes, seed=derive_seed(seed, m)))
        for k in k_list:
            for th in threads:
                cfg = _cfg(algorithm, K, seed, threads=th, k_stage1=k)
                with numba_threads(th):
                    t0 = time.perf_counter()
                    s1 = stage_one(ds.records, cfg)
                    t1 = time.perf_counter()
                    s2 = stage_two(s1.rls, cfg)
                rows.append({"m": m, "k": k, "threads": th, "digest": _digest_outputs(s1.rls, s2.partition, s2.set_matrix)})
                trows.append({"m": m, "k": k, "threads": th, "stage_one": t1 - t0,
                              "stage_two": s2.timings["set_matrix"] + s2.timings["clustering"],
                              "set_matrix": s2.timings["set_matrix"]})
    table = pd.DataFrame(rows)
    timings = pd.DataFrame(trows)
    exps = {}
    base = timings[timings.threads == min(threads)]
    for k in k_list:
        sub = base[base.k == k].sort_values("m")
        if len(sub) > 1:
            exps[f"m_exponent_k{k}"] = fit_exponent(sub.m, sub.stage_two)
    for m in m_list:
        sub = base[base.m == m].sort_values("k")
        if len(sub) > 1:
            exps[f"k_exponent_m{m}"] = fit_exponent(sub.k, sub.stage_two)
    params = {"m_list": list(map(int, m_list)), "k_list": list(map(int, k_list)), "p": p,
              "threads": list(map(int, threads)), "seed": seed, "K": K, "k_shapes": k_shapes, "algorithm": algorithm}
    # exponents depend on wall-clock time, so they stay out of the replayable tables
    summary = (table.groupby(["m", "k"], sort=True)["digest"].nunique().eq(1)
               .rename("identical_across_threads").reset_index())
    return ExperimentResult("scaling", params, table, summary, timings, {"timing_exponents": exps})


# --------------------------------------------------------------------------
# registry, persistence and replay


def _spec_dict(spec: SyntheticSpec) -> dict:
    d = asdict(spec)
    d.pop("noise")
    return d


def _overestimation(params):
    spec = _spec_from({"m": 100, "p": 90, "K": 8, "k_shapes": 6, "n_outliers": 0, "seed": 0, **params.get("spec", {})})
    return run_overestimation_sweep(spec, params.get("k_range", list(range(6, 19))), params.get("trials", 10),
                                    params.get("algorithm", "hac_ward"), params.get("threads"))


def _set_distance(params):
    spec = _spec_from({"m": 50, "p": 90, "K": 2, "k_shapes": 2, "seed": 0, **params.get("spec", {})})
    return run_set_distance_comparison(spec, params.get("n_outliers", [0, 20, 40]),
                                       params.get("kinds", [k.value for k in SetDistanceKind]),
                                       params.get("k_range", [4, 8, 12]), params.get("trials", 20),
                                       params.get("algorithm", "hac_ward"), params.get("threads"))


def reconstruction_dataset(m: int = 20, p: int = 90, seed: int = 0) -> list[ConsumerRecord]:
    """Consumers with mixed shapes: each draws its own six shapes, with a few outlier days."""
    ds = generate_dataset(SyntheticSpec(m=m, p=p, K=m, k_shapes=6, n_outliers=p // 10, seed=seed))
    return ds.records


def _reconstruction(params):
    recs = reconstruction_dataset(params.get("m", 20), params.get("p", 90), params.get("seed", 0))
    return run_reconstruction_comparison(recs, params.get("k_range", list(range(2, 31))), params.get("seed", 0))


def _asynchrony(params):
    spec = _spec_from({"m": 40, "p": 90, "K": 4, "k_shapes": 6, "sequencing": "markov", "seed": 0,
                       **params.get("spec", {})})
    ds = generate_dataset(spec)
    return run_asynchrony_census(ds.records, params.get("window_days"), params.get("k_joint", 10), spec.seed)


def _scaling(params):
    return run_scaling_benchmark(params.get("m_list", [500, 1000, 2000]), params.get("k_list", [10]),
                                 params.get("p", 90), params.get("threads", [1]), params.get("seed", 0))


EXPERIMENTS: dict[str, Callable[[dict], ExperimentResult]] = {
    "overestimation": _overestimation,
    "set-distance": _set_distance,
    "reconstruction": _reconstruction,
    "asynchrony": _asynchrony,
    "scaling": _scaling,
}


def run_experiment(name: str, params: dict | None = None) -> ExperimentResult:
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; available: {', '.join(sorted(EXPERIMENTS))}")
    params = dict(params or {})
    res = EXPERIMENTS[name](params)
    # the manifest records exactly what was asked for, so replay runs the same thing
    res.params = {"requested": params, **res.params}
    return res


def write_experiment(res: ExperimentResult, out: str | Path) -> Path:
    """table.csv, summary.csv, timings.csv and manifest.json under ``out``, plus timing_fits.json if any."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    res.table.to_csv(out / "table.csv", index=False, float_format="%.17g")
    res.summary.to_csv(out / "summary.csv", index=False, float_format="%.17g")
    res.timings.to_csv(out / "timings.csv", index=False, float_format="%.6f")
    manifest = res.manifest()
    # anything derived from wall-clock time is kept apart so replays compare byte for byte
    timed = {k: v for k, v in res.extra.items() if k.startswith("timing")}
    manifest["extra"] = {k: v for k, v in res.extra.items() if k not in timed}
    if timed:
        (out / "timing_fits.json").write_text(json.dumps(timed, indent=2, sort_keys=True, default=_json_default) + "\n")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return out


def replay_experiment(manifest_path: str | Path) -> ExperimentResult:
    manifest = json.loads(Path(manifest_path).read_text())
    return run_experiment(manifest["experiment"], manifest["params"]["requested"])


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
