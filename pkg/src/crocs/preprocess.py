"""Day segmentation, missing-data handling and per-profile normalisation."""

from __future__ import annotations

import datetime as dt
from enum import Enum
from typing import Iterable

import numpy as np

from .core import AlignmentError, ConsumerRecord, DailyLoadProfile, EmptyRecordError


class NormalizationKind(str, Enum):
    MINMAX = "minmax"
    ZNORM = "znorm"
    NONE = "none"


def segment_days(series, phi: int, consumer_id=None, first_day: int = 0) -> list[DailyLoadProfile]:
    """Cut a long series into consecutive days of ``phi`` readings."""
    x = np.asarray(series, dtype=float).ravel()
    if phi < 1 or x.size % phi:
        raise AlignmentError(f"series of length {x.size} is not a multiple of phi={phi}")
    days = x.reshape(-1, phi)
    return [DailyLoadProfile(consumer_id, first_day + i, row) for i, row in enumerate(days)]


def _interpolate_day(day: np.ndarray) -> np.ndarray:
    bad = np.isnan(day)
    if not bad.any():
        return day
    idx = np.arange(day.size)
    out = day.copy()
    # np.interp holds the end values flat outside the observed range.
    out[bad] = np.interp(idx[bad], idx[~bad], day[~bad])
    return out


def drop_incomplete_days(record: ConsumerRecord, max_missing_fraction: float = 0.1) -> ConsumerRecord:
    """Remove days with too many NaN readings and interpolate the rest.

    Raises EmptyRecordError if no day survives.
    """
    values = record.values
    frac = np.isnan(values).mean(axis=1) if values.size else np.zeros(0)
    keep = frac <= max_missing_fraction
    # a day with every reading missing cannot be interpolated
    keep &= frac < 1.0
    if not keep.any():
        raise EmptyRecordError(f"consumer {record.consumer_id!r}: no day survives missing-data filtering")
    kept = np.array([_interpolate_day(v) for v in values[keep]])
    return ConsumerRecord(record.consumer_id, kept, record.day_index[keep])


def normalize_profile(profile, kind: NormalizationKind | str = NormalizationKind.MINMAX) -> np.ndarray:
    return normalize_days(np.asarray(profile, dtype=float)[None, :], kind)[0]


def normalize_days(values: np.ndarray, kind: NormalizationKind | str = NormalizationKind.MINMAX) -> np.ndarray:
    """Row-wise normalisation of a (p, phi) array. Constant rows map to zeros."""
    kind = NormalizationKind(kind)
    x = np.asarray(values, dtype=float)
    if kind is NormalizationKind.NONE:
        return x.copy()
    if kind is NormalizationKind.MINMAX:
        lo = x.min(axis=1, keepdims=True)
        span = x.max(axis=1, keepdims=True) - lo
        out = np.zeros_like(x)
        ok = span[:, 0] > 0
        out[ok] = (x[ok] - lo[ok]) / span[ok]
        return out
    mu = x.mean(axis=1, keepdims=True)
    sd = x.std(axis=1, keepdims=True)  # population std
    out = np.zeros_like(x)
    ok = sd[:, 0] > 0
    out[ok] = (x[ok] - mu[ok]) / sd[ok]
    return out


def normalize_record(record: ConsumerRecord, kind: NormalizationKind | str = NormalizationKind.MINMAX) -> ConsumerRecord:
    return ConsumerRecord(record.consumer_id, normalize_days(record.values, kind), record.day_index)


def is_workday(date: dt.date, holidays: Iterable[dt.date] = ()) -> bool:
    """Monday to Friday and not in ``holidays``."""
    return date.weekday() < 5 and date not in set(holidays)


def read_holidays(path) -> set[dt.date]:
    """One ISO date per line; blank lines and ``#`` comments ignored."""
    out = set()
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                out.add(dt.date.fromisoformat(line))
    return out
