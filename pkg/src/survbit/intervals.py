"""Interval construction: censor-defined intervals and user-specified grids.

Counting conventions
--------------------
Intervals are right-closed, ``(lower, upper]``. A record whose time equals an
interval's upper end (event or censor) belongs to that interval.

At-risk counts follow the recursion
``N_j = n - sum_{k<j} events_k - sum_{k<=j} censors_k`` (``"exclude"``, the
default): a record censored inside an interval is not counted as at risk
there, since its censoring already tells us it survived. The ``"start"``
convention counts every record still under observation at the lower end,
``N_j = n - sum_{k<j} (events_k + censors_k)``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import DataError, SurvivalDataset
from .models import DegenerateIntervalError, FittedModel
from .pvalues import DiscreteDistribution, binomial_pmf, sum_of_binomials_pmf

RISK_SETS = ("exclude", "start")
DEFAULT_RISK_SET = "exclude"


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    n_at_risk: int
    p_model: float
    n_events: int
    n_censors: int
    expected: float
    subintervals: tuple["Interval", ...] = ()

    def __post_init__(self):
        if not 0 <= self.lower < self.upper:
            raise ValueError(f"invalid interval ({self.lower}, {self.upper}]")

    @property
    def testable(self) -> bool:
        if self.subintervals:
            return True
        return self.n_at_risk >= 1

    @property
    def terms(self) -> list[tuple[int, float]]:
        """Binomial (size, probability) pairs whose sum is the null count."""
        parts = self.subintervals or (self,)
        return [(s.n_at_risk, s.p_model) for s in parts if s.n_at_risk >= 1]

    def null_distribution(self, limit: int | None = None) -> DiscreteDistribution:
        if not self.subintervals:
            return binomial_pmf(self.n_at_risk, self.p_model)
        return sum_of_binomials_pmf(self.terms, limit=limit)

    @property
    def label(self) -> str:
        return f"({_fmt(self.lower)}, {_fmt(self.upper)}]"


def _fmt(x: float) -> str:
    return f"{x:.4g}" if x != int(x) else str(int(x))


@dataclass(frozen=True)
class SpecifiedGrid:
    boundaries: tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        if len(b) < 2:
            raise ValueError("a grid needs at least two boundaries")
        if b[0] < 0:
            raise ValueError("grid must start at a non-negative time")
        if any(not np.isfinite(x) for x in b) or any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("grid boundaries must be finite and strictly increasing")
        object.__setattr__(self, "boundaries", b)

    @property
    def K(self) -> int:
        return len(self.boundaries) - 1

    @classmethod
    def parse(cls, text: str) -> "SpecifiedGrid":
        """Boundaries separated by commas, whitespace or newlines."""
        tokens = text.replace(",", " ").split()
        try:
            values = [float(t) for t in tokens]
        except ValueError as exc:
            raise ValueError(f"malformed grid: {exc}") from None
        return cls(tuple(values))


@dataclass(frozen=True)
class IntervalScheme:
    mode: str
    intervals: tuple[Interval, ...]
    boundaries: tuple[float, ...]
    excluded_events: int = 0
    risk_set: str = DEFAULT_RISK_SET
    warnings: tuple[str, ...] = field(default=())

    @property
    def testable(self) -> list[Interval]:
        return [iv for iv in self.intervals if iv.testable]

    def rows(self) -> list[dict]:
        out = []
        for iv in self.intervals:
            out.append(
                {
                    "interval": iv.label,
                    "lower": iv.lower,
                    "upper": iv.upper,
                    "N.risk": iv.n_at_risk,
                    "p_I": iv.p_model,
                    "events": iv.n_events,
                    "censors": iv.n_censors,
                    "E(events)": iv.expected,
                    "n_subintervals": len(iv.subintervals),
                }
            )
        return out

    def to_json(self, **kw) -> str:
        return json.dumps({"mode": self.mode, "risk_set": self.risk_set, "rows": self.rows()}, **kw)


def _count_grid(data: SurvivalDataset, bounds: np.ndarray, risk_set: str):
    """Events, censors and at-risk counts on consecutive (b[i-1], b[i]]."""
    if risk_set not in RISK_SETS:
        raise ValueError(f"risk_set must be one of {RISK_SETS}")
    ev = np.diff(np.searchsorted(data.event_times, bounds, side="right"))
    ce = np.diff(np.searchsorted(data.censor_times, bounds, side="right"))
    all_sorted = np.sort(data.times)
    n_at_risk = data.n - np.searchsorted(all_sorted, bounds[:-1], side="right")
    if risk_set == "exclude":
        n_at_risk = n_at_risk - ce
    return ev.astype(np.int64), ce.astype(np.int64), n_at_risk.astype(np.int64)


def _probabilities(model: FittedModel, bounds: np.ndarray, n_at_risk: np.ndarray) -> np.ndarray:
    logs = model.logsf(bounds)
    with np.errstate(invalid="ignore"):
        p = -np.expm1(logs[1:] - logs[:-1])
    dead = np.isneginf(logs[:-1])
    if np.any(dead & (n_at_risk >= 1)):
        i = int(np.nonzero(dead & (n_at_risk >= 1))[0][0])
        raise DegenerateIntervalError(
            f"model survival is zero at {bounds[i]:g} but {n_at_risk[i]} subjects are at risk"
        )
    p = np.where(dead, np.nan, np.clip(p, 0.0, 1.0))
    return p


def _leaf_intervals(data, model, bounds, risk_set) -> list[Interval]:
    ev, ce, nr = _count_grid(data, bounds, risk_set)
    p = _probabilities(model, bounds, nr)
    out = []
    for i in range(bounds.size - 1):
        n = int(max(nr[i], 0))
        pi = float(p[i]) if np.isfinite(p[i]) else 0.0
        out.append(
            Interval(float(bounds[i]), float(bounds[i + 1]), n, pi, int(ev[i]), int(ce[i]), n * pi)
        )
    return out


def build_censor_scheme(
    data: SurvivalDataset, model: FittedModel, risk_set: str = DEFAULT_RISK_SET
) -> IntervalScheme:
    if data.n_censors == 0:
        raise DataError("censor-defined intervals need at least one censored record")
    bounds = np.concatenate([[0.0], data.unique_censor_times])
    intervals = _leaf_intervals(data, model, bounds, risk_set)
    excluded = int(np.sum(data.event_times > bounds[-1]))
    return IntervalScheme("censor", tuple(intervals), tuple(bounds.tolist()), excluded, risk_set)


def build_specified_scheme(
    data: SurvivalDataset,
    model: FittedModel,
    grid: SpecifiedGrid | Sequence[float],
    risk_set: str = DEFAULT_RISK_SET,
) -> IntervalScheme:
    if not isinstance(grid, SpecifiedGrid):
        grid = SpecifiedGrid(tuple(grid))
    S = np.asarray(grid.boundaries)
    notes = []
    if S[-1] > data.times.max():
        msg = f"grid ends at {S[-1]:g}, beyond the largest observed time {data.times.max():g}"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)

    tau = np.unique(np.concatenate([[0.0], data.unique_censor_times, S]))
    leaves = _leaf_intervals(data, model, tau, risk_set)
    lowers = tau[:-1]
    uppers = tau[1:]
    lo_idx = np.searchsorted(lowers, S[:-1], side="left")
    hi_idx = np.searchsorted(uppers, S[1:], side="left")

    logs_S = model.logsf(S)
    intervals = []
    for k in range(grid.K):
        subs = tuple(leaves[lo_idx[k]: hi_idx[k] + 1])
        assert subs and subs[0].lower == S[k] and subs[-1].upper == S[k + 1]
        n_start = subs[0].n_at_risk
        p_v = float(np.clip(-np.expm1(logs_S[k + 1] - logs_S[k]), 0.0, 1.0)) if np.isfinite(logs_S[k]) else 0.0
        intervals.append(
            Interval(
                float(S[k]),
                float(S[k + 1]),
                n_start,
                p_v,
                sum(s.n_events for s in subs),
                sum(s.n_censors for s in subs),
                float(sum(s.expected for s in subs)),
                subs,
            )
        )
    excluded = int(np.sum(data.event_times > S[-1]) + np.sum(data.event_times <= S[0]))
    return IntervalScheme(
        "specified", tuple(intervals), tuple(S.tolist()), excluded, risk_set, tuple(notes)
    )


def default_ten_interval_grid(data: SurvivalDataset, k: int = 10) -> SpecifiedGrid:
    """``k`` equal-width intervals from 0 to the largest censor time."""
    t_max = data.max_censor_time
    return SpecifiedGrid(tuple(np.linspace(0.0, t_max, k + 1).tolist()))
