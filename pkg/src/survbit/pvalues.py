"""Exact discrete null distributions and p-values for interval event counts.

The per-interval null is a binomial (censor-defined intervals) or a sum of
independent binomials (user-specified intervals built from several
sub-intervals). P-values are lower-tail oriented: a value near 1 means more
events were observed than the model expects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

# Trailing entries below this are dropped after each convolution step.
_TAIL_EPS = 1e-18


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability mass function on the support ``0..len(pmf) - 1``.

    ``upper`` is the nominal largest value of the support (the sum of the
    binomial sizes); trailing entries whose mass is numerically zero may have
    been trimmed from ``pmf`` so ``len(pmf) - 1 <= upper``.
    """

    pmf: np.ndarray
    upper: int

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0:
            raise ValueError("pmf must be a non-empty 1-d array")
        if np.any(pmf < 0):
            raise ValueError("pmf entries must be non-negative")
        object.__setattr__(self, "pmf", pmf)

    def prob(self, k: int) -> float:
        if k < 0 or k >= self.pmf.size:
            return 0.0
        return float(self.pmf[k])

    def below(self, k: int) -> float:
        """P(X < k)."""
        if k <= 0:
            return 0.0
        return float(min(self.pmf[:k].sum(), 1.0))

    def above(self, k: int) -> float:
        """P(X > k)."""
        if k + 1 >= self.pmf.size:
            return 0.0
        return float(min(self.pmf[k + 1:].sum(), 1.0))

    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))


@dataclass(frozen=True)
class PValue:
    value: float
    mode: str
    observed: int

    def __float__(self):
        return self.value


_HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


def _stirlerr(n):
    """log(n!) - log(sqrt(2 pi n) (n/e)^n) for n >= 1."""
    n = np.asarray(n, dtype=float)
    small = n <= 15
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = special.gammaln(n + 1) - (n + 0.5) * np.log(n) + n - _HALF_LOG_2PI
        nn = n * n
        series = (1 / 12 - (1 / 360 - (1 / 1260 - (1 / 1680 - 1 / (1188 * nn)) / nn) / nn) / nn) / n
    return np.where(small, direct, series)


def _bd0(x, m):
    """x log(x/m) + m - x, accurate when x is close to m."""
    # a subnormal m overflows the ratio; the pmf is then 0 anyway
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return x * np.log1p((x - m) / m) - (x - m)


def binomial_logpmf(k, n, p):
    """Vectorized log binomial PMF.

    Uses Loader's saddle-point decomposition, which keeps full relative
    precision for large ``n`` where differences of log-gamma values do not.
    """
    k, n, p = np.broadcast_arrays(
        np.asarray(k, dtype=float), np.asarray(n, dtype=float), np.asarray(p, dtype=float)
    )
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = (
            _stirlerr(n) - _stirlerr(k) - _stirlerr(n - k)
            - _bd0(k, n * p) - _bd0(n - k, n * q)
            + 0.5 * np.log(n / (2 * np.pi * k * (n - k)))
        )
        at_zero = special.xlog1py(n, -p)
        at_n = special.xlogy(n, p)
    out = np.where(k == 0, at_zero, np.where(k == n, at_n, inner))
    # degenerate probabilities inside the support
    out = np.where((p == 0) & (k > 0), -np.inf, out)
    out = np.where((p == 1) & (k < n), -np.inf, out)
    out = np.where((k < 0) | (k > n), -np.inf, out)
    return out[()] if out.ndim == 0 else out


def _binomial_vector(n: int, p: float, limit: int | None = None) -> np.ndarray:
    top = n if limit is None else min(n, limit)
    if p <= 0.0:
        vec = np.zeros(top + 1)
        vec[0] = 1.0
        return vec
    if p >= 1.0:
        vec = np.zeros(top + 1)
        if top == n:
            vec[n] = 1.0
        return vec
    return np.exp(binomial_logpmf(np.arange(top + 1), n, p))


def binomial_pmf(n: int, p: float) -> DiscreteDistribution:
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return DiscreteDistribution(_binomial_vector(int(n), float(p)), int(n))


def _trim(pmf: np.ndarray) -> np.ndarray:
    # keep everything up to the last entry carrying non-negligible mass
    big = np.nonzero(pmf > _TAIL_EPS)[0]
    if big.size == 0:
        return pmf
    return pmf[: big[-1] + 1]


def _binomial_vectors(ns: np.ndarray, ps: np.ndarray, limit: int | None) -> list[np.ndarray]:
    """Binomial PMF vectors for many terms from one vectorized evaluation."""
    if ns.size == 0:
        return []
    tops = ns if limit is None else np.minimum(ns, limit)
    lengths = tops + 1
    starts = np.cumsum(lengths) - lengths
    k = np.arange(int(lengths.sum())) - np.repeat(starts, lengths)
    flat = np.exp(binomial_logpmf(k, np.repeat(ns, lengths), np.repeat(ps, lengths)))
    return np.split(flat, np.cumsum(lengths)[:-1])


def sum_of_binomials_pmf(
    terms: Iterable[tuple[int, float]], limit: int | None = None
) -> DiscreteDistribution:
    """PMF of a sum of independent binomials by iterated dense convolution.

    With ``limit`` set, only the probabilities of ``0..limit`` are kept. The
    lower part of a convolution depends only on the lower parts of its
    factors, so those entries are still exact; this is what makes tail
    p-values cheap inside the simulation loop.
    """
    pairs = [(int(n), float(p)) for n, p in terms]
    ns = np.array([n for n, _ in pairs], dtype=np.int64)
    ps = np.array([p for _, p in pairs], dtype=float)
    if np.any(ns < 0):
        raise ValueError(f"binomial size must be non-negative, got {int(ns[ns < 0][0])}")
    bad = ~((ps >= 0.0) & (ps <= 1.0))
    if np.any(bad):
        raise ValueError(f"binomial probability must lie in [0, 1], got {ps[bad][0]}")
    upper = int(ns.sum())
    keep = (ns > 0) & (ps > 0.0)
    acc = np.array([1.0])
    for vec in _binomial_vectors(ns[keep], ps[keep], limit):
        acc = np.convolve(acc, vec)
        if limit is not None:
            acc = acc[: limit + 1]
        else:
            acc = _trim(acc)
    if limit is None:
        total = acc.sum()
        if total > 0 and abs(total - 1.0) > 1e-15:
            acc = acc / total
    return DiscreteDistribution(acc, upper)


def _check_observed(dist: DiscreteDistribution, k: int) -> None:
    if k < 0 or k > dist.upper:
        raise ValueError(f"observed count {k} outside support 0..{dist.upper}")


def midpoint_pvalue(dist: DiscreteDistribution, k: int) -> PValue:
    _check_observed(dist, k)
    return PValue(dist.below(k) + 0.5 * dist.prob(k), "midpoint", int(k))


def randomized_pvalue(dist: DiscreteDistribution, k: int, u: float) -> PValue:
    _check_observed(dist, k)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0, 1], got {u}")
    return PValue(dist.below(k) + u * dist.prob(k), "randomized", int(k))


def binomial_tail_parts(k, n, p):
    """Vectorized (P(X < k), P(X = k)) for X ~ binomial(n, p)."""
    k = np.asarray(k)
    n = np.asarray(n)
    p = np.asarray(p, dtype=float)
    below = np.where(k > 0, special.bdtr(np.maximum(k - 1, 0), n, p), 0.0)
    at = np.exp(binomial_logpmf(k, n, p))
    return below, at


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution, Q(df/2, x/2)."""
    if df < 1:
        raise ValueError(f"df must be a positive integer, got {df}")
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x}")
    if np.isinf(x):
        return 0.0
    return float(special.gammaincc(0.5 * df, 0.5 * x))


def fold(pvalues: Sequence[float]) -> np.ndarray:
    """Map p to 2p below 0.5 and 2(1 - p) above, so both tails land near 0."""
    p = np.asarray(pvalues, dtype=float)
    return np.where(p <= 0.5, 2.0 * p, 2.0 * (1.0 - p))
