"""Per-interval flags and overall verdicts: individual, Bonferroni, TFT, PAVSI."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .intervals import IntervalScheme
from .pvalues import PValue, binomial_pmf, chi_square_sf, fold

ALPHA = 0.05
INDIVIDUAL_LOW = ALPHA / 2
INDIVIDUAL_HIGH = 1 - ALPHA / 2
PVALUE_MODES = ("midpoint", "randomized")


def _values(pvalues) -> np.ndarray:
    return np.array([float(p) for p in pvalues], dtype=float)


def individual_flags(pvalues: Sequence) -> np.ndarray:
    p = _values(pvalues)
    return (p <= INDIVIDUAL_LOW) | (p >= INDIVIDUAL_HIGH)


def bonferroni_thresholds(I: int) -> tuple[float, float]:
    if I < 1:
        raise ValueError("need at least one interval")
    low = ALPHA / 2 / I
    return low, 1.0 - low


def bonferroni_test(pvalues: Sequence, I: int | None = None) -> tuple[np.ndarray, bool]:
    p = _values(pvalues)
    I = p.size if I is None else I
    low, high = bonferroni_thresholds(I)
    rejected = (p <= low) | (p >= high)
    return rejected, bool(rejected.any())


def tft(pvalues: Sequence) -> tuple[float, float]:
    """Transformed Fisher test: fold p-values to U, then -2 sum log U ~ chi2(2I)."""
    p = _values(pvalues)
    if p.size == 0:
        raise ValueError("need at least one p-value")
    u = fold(p)
    if np.any(u <= 0):
        return math.inf, 0.0
    stat = float(-2.0 * np.sum(np.log(u)))
    stat = max(stat, 0.0)
    return stat, chi_square_sf(stat, 2 * p.size)


def pavsi_pvalue(t: int, I: int) -> float:
    """Upper-tail midpoint p-value of ``t`` under binomial(I, 0.05)."""
    dist = binomial_pmf(I, ALPHA)
    return dist.above(t) + 0.5 * dist.prob(t)


def pavsi(pvalues: Sequence) -> tuple[int, float]:
    p = _values(pvalues)
    if p.size == 0:
        raise ValueError("need at least one p-value")
    t = int(individual_flags(p).sum())
    return t, pavsi_pvalue(t, p.size)


@dataclass(frozen=True)
class IntervalVerdict:
    index: int
    p_value: PValue
    flag: str  # "none" | "individual" | "bonferroni"


@dataclass(frozen=True)
class IntervalTestResult:
    mode: str
    pvalue_mode: str
    scheme: IntervalScheme = field(repr=False)
    verdicts: tuple[IntervalVerdict, ...]
    I: int
    t_cont: float
    tft_pvalue: float
    t_pavsi: int
    pavsi_pvalue: float
    bonferroni_reject: bool
    seed: int | None = None

    @property
    def n_bonferroni(self) -> int:
        return sum(v.flag == "bonferroni" for v in self.verdicts)

    @property
    def n_individual_flags(self) -> int:
        """Flags excluding intervals that are also Bonferroni rejections."""
        return sum(v.flag == "individual" for v in self.verdicts)

    @property
    def n_extreme(self) -> int:
        return self.n_bonferroni + self.n_individual_flags

    @property
    def tft_degenerate(self) -> bool:
        return math.isinf(self.t_cont)

    def overall(self) -> dict:
        out = {
            "I": self.I,
            "t_cont": self.t_cont if math.isfinite(self.t_cont) else None,
            "tft_p": self.tft_pvalue,
            "tft_degenerate": self.tft_degenerate,
            "t_pavsi": self.t_pavsi,
            "pavsi_p": self.pavsi_pvalue,
            "bonferroni_reject": self.bonferroni_reject,
            "n_bonferroni": self.n_bonferroni,
            "n_individual_flags": self.n_individual_flags,
            "n_extreme": self.n_extreme,
        }
        return out

    def rows(self) -> list[dict]:
        by_index = {v.index: v for v in self.verdicts}
        rows = []
        for i, row in enumerate(self.scheme.rows()):
            v = by_index.get(i)
            row = dict(row)
            row["testable"] = v is not None
            row["p_value"] = v.p_value.value if v else None
            row["flag"] = v.flag if v else "skipped"
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "interval_mode": self.mode,
            "pvalue_mode": self.pvalue_mode,
            "seed": self.seed,
            "risk_set": self.scheme.risk_set,
            "excluded_events": self.scheme.excluded_events,
            "rows": self.rows(),
            "overall": self.overall(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def interval_pvalues(
    scheme: IntervalScheme, pvalue_mode: str = "midpoint", rng: np.random.Generator | None = None
) -> tuple[list[int], list[PValue]]:
    """P-values for every testable interval, in scheme order."""
    if pvalue_mode not in PVALUE_MODES:
        raise ValueError(f"pvalue_mode must be one of {PVALUE_MODES}")
    if pvalue_mode == "randomized" and rng is None:
        raise ValueError("randomized p-values need a random generator")
    idx, out = [], []
    for i, iv in enumerate(scheme.intervals):
        if not iv.testable:
            continue
        dist = iv.null_distribution()
        k = iv.n_events
        below, at = dist.below(k), dist.prob(k)
        u = 0.5 if pvalue_mode == "midpoint" else float(rng.random())
        idx.append(i)
        out.append(PValue(min(below + u * at, 1.0), pvalue_mode, k))
    return idx, out


def combine(
    scheme: IntervalScheme,
    indices: Sequence[int],
    pvalues: Sequence[PValue],
    pvalue_mode: str,
    seed: int | None = None,
) -> IntervalTestResult:
    I = len(pvalues)
    if I == 0:
        raise ValueError("no testable intervals")
    indiv = individual_flags(pvalues)
    bonf, any_bonf = bonferroni_test(pvalues, I)
    verdicts = tuple(
        IntervalVerdict(i, p, "bonferroni" if b else ("individual" if f else "none"))
        for i, p, f, b in zip(indices, pvalues, indiv, bonf)
    )
    t_cont, tft_p = tft(pvalues)
    t_pav, pav_p = pavsi(pvalues)
    return IntervalTestResult(
        scheme.mode, pvalue_mode, scheme, verdicts, I, t_cont, tft_p, t_pav, pav_p, any_bonf, seed
    )


def run_full_test(
    scheme: IntervalScheme, pvalue_mode: str = "midpoint", seed: int | None = None
) -> IntervalTestResult:
    """All per-interval p-values, flags and overall statistics for a scheme.

    In randomized mode the uniform draws come from ``numpy.random.default_rng(seed)``
    in interval order, so a run is reproducible from its recorded seed.
    """
    rng = None
    if pvalue_mode == "randomized":
        if seed is None:
            seed = int(np.random.SeedSequence().entropy % (2**31))
        rng = np.random.default_rng(seed)
    else:
        seed = None
    idx, pv = interval_pvalues(scheme, pvalue_mode, rng)
    return combine(scheme, idx, pv, pvalue_mode, seed)
