"""File formats: meter CSV ingestion, the dataset store, configs and results.

Day indices written by ingestion count days since 1970-01-01, so the
calendar date of any profile can be recovered from its index.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import struct
from dataclasses import fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
import yaml

from .cluster import ClusterConfig
from .core import ConfigError, ConsumerRecord, DataError, EmptyRecordError, RepresentativeLoadSet
from .pipeline import CrocsConfig
from .preprocess import drop_incomplete_days, is_workday

EPOCH = dt.date(1970, 1, 1)
SET_MATRIX_MAGIC = b"CROCSSM1"


def day_ordinal(date: dt.date) -> int:
    return (date - EPOCH).days


def ordinal_date(index: int) -> dt.date:
    return EPOCH + dt.timedelta(days=int(index))


# --------------------------------------------------------------------------
# ingestion


def _require(df: pd.DataFrame, cols: Sequence[str], path) -> None:
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}; found {', '.join(map(str, df.columns))}")


def _day_filter(dates, workdays_only: bool, holidays) -> np.ndarray:
    if not workdays_only:
        return np.ones(len(dates), dtype=bool)
    hol = set(holidays)
    return np.array([is_workday(d, hol) for d in dates], dtype=bool)


def read_long_csv(path, phi: int = 48) -> dict:
    """Long meter readings ``consumer_id, timestamp, kwh`` into per-consumer day grids.

    Returns ``{consumer_id: (dates, values)}`` with NaN for readings absent
    from the file. Timestamps mark the start of each interval and must be
    strictly increasing within a consumer.
    """
    df = pd.read_csv(path, dtype={"consumer_id": str}, float_precision="round_trip")
    _require(df, ["consumer_id", "timestamp", "kwh"], path)
    try:
        ts = pd.to_datetime(df["timestamp"], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: unparseable timestamp ({exc})") from None
    minutes = 24 * 60 // phi
    if minutes * phi != 24 * 60:
        raise DataError(f"phi={phi} does not divide a day into whole minutes")
    kwh = pd.to_numeric(df["kwh"], errors="coerce").to_numpy(float)
    out = {}
    for cid, idx in df.groupby("consumer_id", sort=False).indices.items():
        t = ts.iloc[idx]
        dup = t.duplicated()
        if dup.any():
            raise DataError(f"consumer {cid!r}: duplicate timestamp {t[dup].iloc[0].isoformat()}")
        bad = np.flatnonzero(np.diff(t.to_numpy().astype("datetime64[ns]").astype(np.int64)) <= 0)
        if bad.size:
            raise DataError(f"consumer {cid!r}: timestamps not increasing at {t.iloc[bad[0] + 1].isoformat()}")
        mins = (t.dt.hour * 60 + t.dt.minute).to_numpy()
        if np.any(mins % minutes) or np.any(t.dt.second.to_numpy()):
            raise DataError(f"consumer {cid!r}: timestamps not aligned to {minutes}-minute intervals")
        slot = mins // minutes
        dates = t.dt.date.to_numpy()
        uniq = sorted(set(dates))
        row = {d: i for i, d in enumerate(uniq)}
        grid = np.full((len(uniq), phi), np.nan)
        grid[[row[d] for d in dates], slot] = kwh[idx]
        out[cid] = (uniq, grid)
    return out


def read_wide_csv(path, phi: int | None = None) -> dict:
    """Wide profiles ``consumer_id, date, v1 .. v_phi`` into per-consumer day grids."""
    df = pd.read_csv(path, dtype={"consumer_id": str}, float_precision="round_trip")
    _require(df, ["consumer_id", "date"], path)
    vcols = [c for c in df.columns if c not in ("consumer_id", "date")]
    if phi is not None and len(vcols) != phi:
        raise DataError(f"{path}: expected {phi} value columns, found {len(vcols)}")
    try:
        dates = pd.to_datetime(df["date"], format="ISO8601").dt.date.to_numpy()
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: unparseable date ({exc})") from None
    vals = df[vcols].apply(pd.to_numeric, errors="coerce").to_numpy(float)
    out = {}
    for cid, idx in df.groupby("consumer_id", sort=False).indices.items():
        d = dates[idx]
        if len(set(d)) != len(d):
            raise DataError(f"consumer {cid!r}: duplicate date {pd.Series(d)[pd.Series(d).duplicated()].iloc[0]}")
        if any(b <= a for a, b in zip(d[:-1], d[1:])):
            raise DataError(f"consumer {cid!r}: dates not increasing")
        out[cid] = (list(d), vals[idx])
    return out


def ingest(path, fmt: str = "long", phi: int = 48, workdays_only: bool = False, holidays: Iterable = (),
           max_missing_fraction: float = 0.1) -> tuple[list[ConsumerRecord], dict]:
    """Validated, day-filtered records plus an ingestion report."""
    if fmt == "long":
        grids = read_long_csv(path, phi)
    elif fmt == "wide":
        grids = read_wide_csv(path, phi)
    else:
        raise ConfigError(f"unknown input format {fmt!r}; use 'long' or 'wide'")
    records, report = [], {"dropped_days": {}, "excluded_consumers": {}, "filtered_days": {}}
    for cid, (dates, grid) in grids.items():
        keep = _day_filter(dates, workdays_only, holidays)
        if (~keep).any():
            report["filtered_days"][cid] = [d.isoformat() for d, k in zip(dates, keep) if not k]
        dates = [d for d, k in zip(dates, keep) if k]
        rec = ConsumerRecord(cid, grid[keep].reshape(-1, grid.shape[1]),
                             np.array([day_ordinal(d) for d in dates], dtype=np.int64))
        try:
            clean = drop_incomplete_days(rec, max_missing_fraction)
        except EmptyRecordError as exc:
            report["excluded_consumers"][cid] = str(exc)
            continue
        dropped = np.setdiff1d(rec.day_index, clean.day_index)
        if dropped.size:
            report["dropped_days"][cid] = [ordinal_date(i).isoformat() for i in dropped]
        records.append(clean)
    report["consumers"] = len(records)
    report["profiles"] = int(sum(r.p for r in records))
    return records, report


# --------------------------------------------------------------------------
# dataset store


def save_dataset(out, records: Sequence[ConsumerRecord], report: dict | None = None) -> Path:
    """``profiles.npz`` (values, owner, day_index, consumer_ids) plus ``ingest_report.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    values = np.vstack([r.values for r in records]) if records else np.zeros((0, 0))
    owner = np.repeat(np.arange(len(records)), [r.p for r in records]).astype(np.int64)
    days = np.concatenate([r.day_index for r in records]).astype(np.int64) if records else np.zeros(0, np.int64)
    ids = np.array([str(r.consumer_id) for r in records])
    with open(out / "profiles.npz", "wb") as fh:
        np.savez(fh, values=values, owner=owner, day_index=days, consumer_ids=ids)
    (out / "ingest_report.json").write_text(json.dumps(report or {}, indent=2, sort_keys=True) + "\n")
    return out


def load_dataset(path) -> list[ConsumerRecord]:
    path = Path(path)
    f = path / "profiles.npz" if path.is_dir() else path
    if not f.exists():
        raise DataError(f"no dataset store at {path}")
    with np.load(f, allow_pickle=False) as z:
        values, owner, days, ids = z["values"], z["owner"], z["day_index"], z["consumer_ids"]
    return [ConsumerRecord(str(cid), values[owner == i], days[owner == i]) for i, cid in enumerate(ids)]


def dataset_digest(path) -> str:
    path = Path(path)
    f = path / "profiles.npz" if path.is_dir() else path
    return hashlib.sha256(f.read_bytes()).hexdigest()


def write_wide_csv(records: Sequence[ConsumerRecord], path) -> None:
    rows = []
    for r in records:
        for d, v in zip(r.day_index, r.values):
            rows.append([str(r.consumer_id), ordinal_date(d).isoformat(), *v.tolist()])
    phi = records[0].phi if records else 0
    pd.DataFrame(rows, columns=["consumer_id", "date", *[f"v{i + 1}" for i in range(phi)]]).to_csv(
        path, index=False, float_format="%.17g")


def write_partition_csv(consumer_ids: Sequence, labels, path, column: str = "cluster") -> None:
    pd.DataFrame({"consumer_id": [str(c) for c in consumer_ids], column: np.asarray(labels, dtype=np.int64)}).to_csv(
        path, index=False)


def read_partition_csv(path, column: str | None = None) -> tuple[list, np.ndarray]:
    df = pd.read_csv(path, dtype={"consumer_id": str}, float_precision="round_trip")
    _require(df, ["consumer_id"], path)
    col = column or next((c for c in df.columns if c != "consumer_id"), None)
    if col is None or col not in df.columns:
        raise DataError(f"{path}: no label column")
    return df["consumer_id"].tolist(), df[col].to_numpy(np.int64)


# --------------------------------------------------------------------------
# representative sets and the set matrix


def rls_to_dict(r: RepresentativeLoadSet) -> dict:
    return {
        "consumer_id": str(r.consumer_id),
        "total_days": r.total_days,
        "prototypes": [
            {"count": int(n), "member_days": [int(x) for x in m], "profile": [float(x) for x in p]}
            for p, n, m in zip(r.profiles, r.counts, r.member_days or [[]] * r.k)
        ],
    }


def rls_from_dict(d: dict) -> RepresentativeLoadSet:
    try:
        protos = d["prototypes"]
        members = [p["member_days"] for p in protos]
        return RepresentativeLoadSet(d["consumer_id"], [p["profile"] for p in protos], [p["count"] for p in protos],
                                     tuple(members) if all(members) else ())
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed representative set: {exc}") from None


def write_rls_dir(all_rls: Sequence[RepresentativeLoadSet], out) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for i, r in enumerate(all_rls):
        (out / f"{i:06d}.json").write_text(json.dumps(rls_to_dict(r), indent=1) + "\n")


def read_rls_dir(path) -> list[RepresentativeLoadSet]:
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise DataError(f"no representative sets under {path}")
    return [rls_from_dict(json.loads(f.read_text())) for f in files]


def write_set_matrix(D: np.ndarray, path) -> None:
    """8-byte magic, uint32 little-endian n, then n*n little-endian float64, row-major."""
    D = np.ascontiguousarray(D, dtype="<f8")
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DataError("set matrix must be square")
    with open(path, "wb") as fh:
        fh.write(SET_MATRIX_MAGIC)
        fh.write(struct.pack("<I", D.shape[0]))
        fh.write(D.tobytes(order="C"))


def read_set_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != SET_MATRIX_MAGIC:
        raise DataError(f"{path}: not a set matrix file")
    (n,) = struct.unpack("<I", raw[8:12])
    body = raw[12:]
    if len(body) != 8 * n * n:
        raise DataError(f"{path}: expected {n}x{n} matrix, got {len(body)} bytes")
    return np.frombuffer(body, dtype="<f8").reshape(n, n).astype(float)


# --------------------------------------------------------------------------
# config


_CLUSTER_KEYS = {f.name for f in fields(ClusterConfig)} - {"k", "seed"}
_TOP_KEYS = {"k_stage1", "K_consumers", "normalization", "distance", "stage1", "stage2", "prototype_kind",
             "set_distance", "seed", "max_missing_fraction", "on_short_record", "pairings", "threads"}
_INT_KEYS = {"k_stage1", "K_consumers", "seed"}


def _cluster_config(d, key: str) -> ClusterConfig:
    if not isinstance(d, dict):
        raise ConfigError(f"{key}: expected a mapping")
    unknown = set(d) - _CLUSTER_KEYS
    if unknown:
        raise ConfigError(f"{key}.{sorted(unknown)[0]}: unknown key (allowed: {', '.join(sorted(_CLUSTER_KEYS))})")
    for k in ("restarts", "max_iterations"):
        if k in d and (not isinstance(d[k], int) or isinstance(d[k], bool)):
            raise ConfigError(f"{key}.{k}: expected an integer")
    try:
        return ClusterConfig(**d)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def config_from_dict(d: dict) -> CrocsConfig:
    """Validate a config mapping; error messages name the offending key."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
    for k in _INT_KEYS:
        if k in d and (not isinstance(d[k], int) or isinstance(d[k], bool)):
            raise ConfigError(f"{k}: expected an integer, got {d[k]!r}")
    if d.get("threads") is not None and (not isinstance(d["threads"], int) or isinstance(d["threads"], bool)
                                         or d["threads"] < 1):
        raise ConfigError(f"threads: expected a positive integer or null, got {d['threads']!r}")
    if "max_missing_fraction" in d and not isinstance(d["max_missing_fraction"], (int, float)):
        raise ConfigError(f"max_missing_fraction: expected a number, got {d['max_missing_fraction']!r}")
    kw = {k: v for k, v in d.items() if k not in ("stage1", "stage2")}
    if "stage1" in d:
        kw["stage1_algorithm"] = _cluster_config(d["stage1"], "stage1")
    if d.get("stage2") is not None:
        kw["stage2_algorithm"] = _cluster_config(d["stage2"], "stage2")
    for k in ("normalization", "distance", "prototype_kind", "set_distance"):
        if k in kw:
            kw[k] = str(kw[k])
    try:
        return CrocsConfig(**kw)
    except ConfigError:
        raise
    except ValueError as exc:
        # enum and distance parsing: find which key it was
        for k in ("normalization", "distance", "prototype_kind", "set_distance"):
            if k in kw and str(kw[k]) in str(exc):
                raise ConfigError(f"{k}: {exc}") from None
        raise ConfigError(str(exc)) from None


def config_to_dict(cfg: CrocsConfig) -> dict:
    d = cfg.to_dict()
    s1 = d.pop("stage1_algorithm")
    s2 = d.pop("stage2_algorithm")
    for s in (s1, s2):
        s.pop("k")
        s.pop("seed")
    d["stage1"] = s1
    d["stage2"] = s2
    return d


def load_config(path) -> CrocsConfig:
    try:
        d = yaml.safe_load(Path(path).read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return config_from_dict(d)


def write_config(cfg: CrocsConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True))
