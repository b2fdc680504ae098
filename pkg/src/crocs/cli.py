"""Command-line entry point: ``crocs ingest | run | rrls | experiment | eval | synth``.

Options fall back to environment variables with the ``CROCS_`` prefix
(``CROCS_CONFIG``, ``CROCS_SEED``, ``CROCS_THREADS``, ``CROCS_OUT``).
Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import pandas as pd
import yaml

from . import __version__
from .core import ConfigError, CrocsError, DataError, Partition
from .experiments import EXPERIMENTS, replay_experiment, run_experiment, write_experiment
from .io import (config_from_dict, config_to_dict, dataset_digest, ingest, load_config, load_dataset,
                 read_partition_csv, read_rls_dir, save_dataset, write_config, write_partition_csv,
                 write_rls_dir, write_set_matrix, write_wide_csv)
from .metrics import evi_report
from .pipeline import CrocsConfig, numba_threads, run_crocs
from .preprocess import read_holidays
from .rrls import CommunityConfig, build_prototype_graph, detect_communities, extract_rrls
from .setdist import wsmd_pairings
from .synth import SyntheticSpec, generate_dataset

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
ENV_PREFIX = "CROCS_"


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


def _int_env(name: str):
    v = _env(name)
    if v is None:
        return None
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{ENV_PREFIX}{name}: expected an integer, got {v!r}") from None


@contextmanager
def results_lock(out: Path):
    """Exclusive lock file so two runs cannot write into the same directory."""
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CrocsError(f"{out} is locked by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# commands


def cmd_ingest(args) -> int:
    holidays = read_holidays(args.holidays) if args.holidays else ()
    records, report = ingest(args.input, args.format, args.phi, args.workdays_only, holidays, args.max_missing)
    if not records:
        raise DataError("no consumer survived ingestion")
    out = Path(args.out)
    save_dataset(out, records, report)
    print(f"{report['consumers']} consumers, {report['profiles']} daily profiles -> {out}")
    return EXIT_OK


def _resolve_run(args) -> tuple[CrocsConfig, str]:
    if args.manifest:
        man = json.loads(Path(args.manifest).read_text())
        cfg = config_from_dict(man["config"])
        data = args.data or man["data"]
    else:
        path = args.config or _env("CONFIG")
        if not path:
            raise ConfigError("config: no config file given (--config or CROCS_CONFIG)")
        cfg = load_config(path)
        data = args.data
    if not data:
        raise ConfigError("data: no dataset given (--data)")
    seed = args.seed if args.seed is not None else _int_env("SEED")
    threads = args.threads if args.threads is not None else _int_env("THREADS")
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if threads is not None:
        cfg = replace(cfg, threads=threads)
    return cfg, data


def cmd_run(args) -> int:
    cfg, data = _resolve_run(args)
    records = load_dataset(data)
    if not records:
        raise DataError(f"{data}: empty dataset")
    min_p = min(r.p for r in records)
    if cfg.on_short_record == "error" and cfg.k_stage1 > min_p:
        raise ConfigError(f"k_stage1: {cfg.k_stage1} exceeds the smallest record ({min_p} days)")
    out = Path(args.out or _env("OUT") or "results")
    with results_lock(out):
        res = run_crocs(records, cfg)
        write_rls_dir(res.rls_per_consumer, out / "rls")
        write_partition_csv(res.consumer_ids, res.consumer_partition.labels, out / "partition.csv")
        write_set_matrix(res.set_matrix, out / "set_matrix.bin")
        write_config(cfg, out / "config.yaml")
        manifest = {
            "command": "run",
            "version": __version__,
            "config": config_to_dict(cfg),
            "seed": cfg.seed,
            "data": str(Path(data).resolve()),
            "data_sha256": dataset_digest(data),
            "timings": res.timings,
            "warnings": {"excluded_consumers": {str(k): v for k, v in res.excluded.items()}},
        }
        _write_json(out / "manifest.json", manifest)
    print(f"{len(res.consumer_ids)} consumers in {res.consumer_partition.k} clusters -> {out}")
    return EXIT_OK


def cmd_rrls(args) -> int:
    res_dir = Path(args.results)
    man = json.loads((res_dir / "manifest.json").read_text())
    cfg = config_from_dict(man["config"])
    all_rls = read_rls_dir(res_dir / "rls")
    ids, labels = read_partition_csv(res_dir / "partition.csv")
    if ids != [str(r.consumer_id) for r in all_rls]:
        raise DataError("partition.csv and rls/ disagree on consumers")
    part = Partition(labels)
    ccfg = CommunityConfig(args.gamma, args.gamma_step, args.gamma_max, args.target, args.seed or 0)
    out = Path(args.out) if args.out else res_dir / "rrls"
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    comm_json, cov_rows, hp_rows, long_rows, vert_rows = [], [], [], [], []
    with numba_threads(args.threads):
        for c in range(part.k):
            members = part.members(c)
            pairs = [(int(a), int(b)) for x, a in enumerate(members) for b in members[x + 1:]]
            pairings = wsmd_pairings(all_rls, pairs, cfg.distance)
            g = build_prototype_graph(members, all_rls, pairings)
            found = detect_communities(g, ccfg)
            rr = extract_rrls(g, found, cfg.distance, args.major_threshold, cluster=c)
            entry = {"cluster": c, "gamma": found.gamma, "quality": found.quality, "consumers": len(members),
                     "communities": []}
            for j, com in enumerate(rr.communities):
                verts = [{"consumer_id": str(g.consumer_ids[g.vertex_consumer[v]]),
                          "prototype": int(g.vertex_prototype[v]), "days": int(g.weights[v])} for v in com.vertices]
                entry["communities"].append({"community": j, "consumer_coverage": com.consumer_coverage,
                                             "day_coverage": com.day_coverage, "major": com.major,
                                             "vertices": verts})
                cov_rows.append({"cluster": c, "community": j, "consumer_coverage": com.consumer_coverage,
                                 "day_coverage": com.day_coverage, "major": com.major, "gamma": found.gamma})
                for kind, prof in (("medoid", com.hyperprototype_medoid), ("mean", com.hyperprototype_mean)):
                    hp_rows.append([c, j, kind, *prof.tolist()])
                    long_rows.extend([c, j, kind, t, float(v)] for t, v in enumerate(prof))
                for v in com.vertices:
                    vert_rows.append([c, j, str(g.consumer_ids[g.vertex_consumer[v]]), int(g.vertex_prototype[v]),
                                      int(g.weights[v])])
            comm_json.append(entry)
            print(f"cluster {c}: {rr.n_communities} communities ({len(rr.major)} major) at gamma={found.gamma:g}")
    _write_json(out / "communities.json", {"config": {"gamma": ccfg.gamma, "gamma_step": ccfg.gamma_step,
                                                      "gamma_max": ccfg.gamma_max, "target": ccfg.target_communities,
                                                      "major_threshold": args.major_threshold},
                                           "clusters": comm_json})
    phi = all_rls[0].phi
    pd.DataFrame(hp_rows, columns=["cluster", "community", "kind", *[f"v{i + 1}" for i in range(phi)]]).to_csv(
        out / "hyperprototypes.csv", index=False, float_format="%.17g")
    pd.DataFrame(cov_rows).to_csv(out / "coverage.csv", index=False, float_format="%.17g")
    pd.DataFrame(long_rows, columns=["cluster", "community", "kind", "interval", "value"]).to_csv(
        out / "plotdata" / "hyperprototypes_long.csv", index=False, float_format="%.17g")
    pd.DataFrame(vert_rows, columns=["cluster", "community", "consumer_id", "prototype", "days"]).to_csv(
        out / "plotdata" / "vertices.csv", index=False)
    return EXIT_OK


def _set_param(params: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    value = yaml.safe_load(raw)
    node = params
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def cmd_experiment(args) -> int:
    out = Path(args.out or _env("OUT") or f"experiments/{args.name}")
    if args.manifest:
        with results_lock(out):
            res = replay_experiment(args.manifest)
            write_experiment(res, out)
        print(f"replayed {res.name} -> {out}")
        return EXIT_OK
    if args.name not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown name {args.name!r}; available: {', '.join(sorted(EXPERIMENTS))}")
    params: dict = {}
    for a in args.set or []:
        _set_param(params, a)
    seed = args.seed if args.seed is not None else _int_env("SEED")
    threads = args.threads if args.threads is not None else _int_env("THREADS")
    if args.trials is not None:
        params["trials"] = args.trials
    if seed is not None:
        if args.name in ("overestimation", "set-distance", "asynchrony"):
            params.setdefault("spec", {})["seed"] = seed
        else:
            params["seed"] = seed
    if threads is not None and args.name in ("overestimation", "set-distance"):
        params["threads"] = threads
    with results_lock(out):
        t0 = time.perf_counter()
        with numba_threads(threads):
            res = run_experiment(args.name, params)
        write_experiment(res, out)
    print(f"{args.name}: {len(res.table)} rows in {time.perf_counter() - t0:.1f}s -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ids_t, truth = read_partition_csv(args.truth)
    ids_p, pred = read_partition_csv(args.pred)
    pos = {c: i for i, c in enumerate(ids_p)}
    common = [i for i, c in enumerate(ids_t) if c in pos]
    if not common:
        raise DataError("no consumer ids in common")
    t = truth[common]
    p = pred[[pos[ids_t[i]] for i in common]]
    mask = t >= 0
    rep = evi_report(t, p, mask)
    result = {"consumers": int(mask.sum()), "ari": rep.ari, "ami": rep.ami, "psi": rep.psi}
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SyntheticSpec(m=args.m, p=args.p, K=args.K, k_shapes=args.k_shapes, n_outliers=args.n_outliers,
                         n_outlier_consumers=args.n_outlier_consumers, sequencing=args.sequencing,
                         seed=args.seed if args.seed is not None else (_int_env("SEED") or 0))
    ds = generate_dataset(spec)
    out = Path(args.out or _env("OUT") or "synthetic")
    out.mkdir(parents=True, exist_ok=True)
    write_wide_csv(ds.records, out / "profiles.csv")
    labels = ds.truth.labels.copy()
    labels[ds.outlier_consumers] = -1
    write_partition_csv([r.consumer_id for r in ds.records], labels, out / "truth.csv")
    print(f"{spec.m} consumers x {spec.p} days -> {out}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crocs", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate meter CSV and store daily profiles")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["long", "wide"], default="long")
    p.add_argument("--phi", type=int, default=48)
    p.add_argument("--workdays-only", action="store_true")
    p.add_argument("--holidays", help="file with one ISO date per line")
    p.add_argument("--max-missing", type=float, default=0.1)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="two-stage clustering of an ingested dataset")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--manifest", help="replay the run described by a manifest.json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("rrls", help="refined representative sets of each consumer cluster")
    p.add_argument("results")
    p.add_argument("--out")
    p.add_argument("--gamma", type=float, default=0.02)
    p.add_argument("--gamma-step", type=float, default=0.01)
    p.add_argument("--gamma-max", type=float, default=5.0)
    p.add_argument("--target", type=int, help="sweep gamma until this many communities")
    p.add_argument("--major-threshold", type=float, default=0.03)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_rrls)

    p = sub.add_parser("experiment", help=f"run one of: {', '.join(sorted(EXPERIMENTS))}")
    p.add_argument("name", nargs="?", default="")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="parameter override, e.g. spec.n_outliers=20")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.add_argument("--manifest", help="replay the experiment described by a manifest.json")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("eval", help="ARI, AMI and PSI between two partition CSVs")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic dataset in the wide CSV format")
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--p", type=int, default=90)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--k-shapes", type=int, default=2)
    p.add_argument("--n-outliers", type=int, default=0)
    p.add_argument("--n-outlier-consumers", type=int, default=0)
    p.add_argument("--sequencing", choices=["uniform", "markov"], default="uniform")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ValueError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
