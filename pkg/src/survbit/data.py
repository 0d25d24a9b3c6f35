"""Right-censored survival data: loading, Kaplan-Meier and numbers at risk."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or unusable survival data."""


@dataclass(frozen=True)
class SurvivalRecord:
    time: float
    event: int

    def __post_init__(self):
        if not self.time > 0:
            raise DataError(f"time must be positive, got {self.time}")
        if self.event not in (0, 1):
            raise DataError(f"event must be 0 or 1, got {self.event}")


@dataclass(frozen=True)
class SurvivalDataset:
    """Immutable collection of (time, event) records.

    ``times`` and ``events`` keep the input row order; the derived
    ``event_times``, ``censor_times`` and ``unique_censor_times`` are sorted.
    """

    times: np.ndarray
    events: np.ndarray
    event_times: np.ndarray = field(init=False, repr=False)
    censor_times: np.ndarray = field(init=False, repr=False)
    unique_censor_times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        events = np.asarray(self.events)
        if times.ndim != 1 or times.shape != events.shape:
            raise DataError("times and events must be 1-d arrays of equal length")
        if times.size == 0:
            raise DataError("dataset is empty")
        if not np.all(np.isfinite(times)) or np.any(times <= 0):
            raise DataError("all times must be positive and finite")
        if not np.all((events == 0) | (events == 1)):
            raise DataError("events must be 0 or 1")
        events = events.astype(np.int64)
        times.setflags(write=False)
        events.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        for name, arr in (
            ("event_times", np.sort(times[events == 1])),
            ("censor_times", np.sort(times[events == 0])),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        uniq = np.unique(self.censor_times)
        uniq.setflags(write=False)
        object.__setattr__(self, "unique_censor_times", uniq)

    @classmethod
    def from_records(cls, records: Iterable[SurvivalRecord]) -> "SurvivalDataset":
        records = list(records)
        return cls(
            np.array([r.time for r in records], dtype=float),
            np.array([r.event for r in records], dtype=np.int64),
        )

    def __len__(self):
        return int(self.times.size)

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def n_events(self) -> int:
        return int(self.event_times.size)

    @property
    def n_censors(self) -> int:
        return int(self.censor_times.size)

    @property
    def max_censor_time(self) -> float:
        if self.n_censors == 0:
            raise DataError("dataset has no censored records")
        return float(self.censor_times[-1])

    @property
    def records(self) -> list[SurvivalRecord]:
        return [SurvivalRecord(float(t), int(e)) for t, e in zip(self.times, self.events)]

    def summary(self) -> dict:
        return {
            "n": self.n,
            "events": self.n_events,
            "censors": self.n_censors,
            "unique_censor_times": int(self.unique_censor_times.size),
            "max_time": float(self.times.max()),
        }


def _sniff_delimiter(header: str) -> str:
    counts = {d: header.count(d) for d in (",", "\t", ";")}
    best = max(counts, key=counts.get)
    if counts[best] == 0:
        raise DataError("header must contain 'time' and 'event' separated by comma, tab or semicolon")
    return best


def parse_dataset(text: str) -> SurvivalDataset:
    lines = text.splitlines()
    # skip leading blank lines
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise DataError("input is empty")
    delim = _sniff_delimiter(lines[0])
    reader = csv.reader(io.StringIO("\n".join(lines)), delimiter=delim)
    header = [h.strip().strip('"').lower() for h in next(reader)]
    try:
        it, ie = header.index("time"), header.index("event")
    except ValueError:
        raise DataError(f"header must contain 'time' and 'event' columns, got {header}") from None

    times, events = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            t = float(row[it])
            e = float(row[ie])
        except (IndexError, ValueError):
            raise DataError(f"line {lineno}: cannot parse row {row!r}") from None
        if not (np.isfinite(t) and t > 0):
            raise DataError(f"line {lineno}: time must be positive, got {row[it]!r}")
        if e not in (0.0, 1.0):
            raise DataError(f"line {lineno}: event must be 0 or 1, got {row[ie]!r}")
        times.append(t)
        events.append(int(e))
    if len(times) < 2:
        raise DataError(f"need at least 2 records, got {len(times)}")
    return SurvivalDataset(np.array(times), np.array(events, dtype=np.int64))


def load_dataset(source) -> SurvivalDataset:
    """Read a ``time,event`` table from a path or an open text stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8-sig") as fh:
            return parse_dataset(fh.read())
    return parse_dataset(source.read())


@dataclass(frozen=True)
class KaplanMeierCurve:
    """Step function of the product-limit estimate.

    ``times[i]`` is a distinct event time and ``survival[i]`` the estimate just
    after it; the curve equals 1 before ``times[0]``.
    """

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    n: int

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        surv = np.concatenate([[1.0], self.survival])
        return surv[idx]

    def to_json(self) -> str:
        rows = [{"time": 0.0, "survival": 1.0, "at_risk": self.n}]
        rows += [
            {"time": float(t), "survival": float(s), "at_risk": int(r)}
            for t, s, r in zip(self.times, self.survival, self.at_risk)
        ]
        return json.dumps(rows)


def kaplan_meier(data: SurvivalDataset) -> KaplanMeierCurve:
    # events at a tied time are processed before censors at that time
    uniq = np.unique(data.event_times)
    sorted_times = np.sort(data.times)
    at_risk = data.n - np.searchsorted(sorted_times, uniq, side="left")
    deaths = np.searchsorted(data.event_times, uniq, side="right") - np.searchsorted(
        data.event_times, uniq, side="left"
    )
    surv = np.cumprod(1.0 - deaths / at_risk)
    return KaplanMeierCurve(uniq, surv, at_risk.astype(np.int64), data.n)


def at_risk_table(data: SurvivalDataset, grid: Sequence[float]) -> list[int]:
    """Number of records with time strictly greater than each grid point."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        return []
    if np.any(grid < 0):
        raise ValueError("grid values must be non-negative")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    sorted_times = np.sort(data.times)
    return [int(v) for v in data.n - np.searchsorted(sorted_times, grid, side="right")]
