"""Parametric survival families and censored maximum-likelihood fitting.

Parameterizations follow flexsurv so that externally fitted models can be
validated without conversion:

=================  ======================  =====================================
family             parameters              survival S(t)
=================  ======================  =====================================
exponential        rate                    exp(-rate t)
weibull            shape, scale            exp(-(t/scale)^shape)
gamma              shape, rate             1 - P(shape, rate t)
generalised-gamma  mu, sigma, Q            Prentice (1974) form, Q = 0 log-normal
gompertz           shape, rate             exp(-(rate/shape)(e^{shape t} - 1))
log-logistic       shape, scale            1 / (1 + (t/scale)^shape)
log-normal         meanlog, sdlog          1 - Phi((log t - meanlog)/sdlog)
=================  ======================  =====================================
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, special

from .data import DataError, SurvivalDataset


class FitError(RuntimeError):
    """The likelihood could not be maximized."""


class DegenerateIntervalError(ValueError):
    """Survival at the start of an interval is zero, so the conditional
    probability is undefined."""


_LOG_TINY = -745.0


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(x, 0.0))


# Each family supplies log-survival and log-density as functions of t and a
# parameter tuple, plus maps between natural and unconstrained coordinates.

def _exp_logsf(t, rate):
    return -rate * t


def _exp_logpdf(t, rate):
    return math.log(rate) - rate * t


def _weib_logsf(t, shape, scale):
    return -((t / scale) ** shape)


def _weib_logpdf(t, shape, scale):
    z = t / scale
    return math.log(shape) - math.log(scale) + (shape - 1) * np.log(z) - z**shape


def _gamma_logsf(t, shape, rate):
    return _safe_log(special.gammaincc(shape, rate * t))


def _gamma_logpdf(t, shape, rate):
    return shape * math.log(rate) + (shape - 1) * np.log(t) - rate * t - special.gammaln(shape)


def _gompertz_cumhaz(t, shape, rate):
    if abs(shape) < 1e-12:
        return rate * t
    return rate * np.expm1(shape * t) / shape


def _gompertz_logsf(t, shape, rate):
    return -_gompertz_cumhaz(t, shape, rate)


def _gompertz_logpdf(t, shape, rate):
    return math.log(rate) + shape * t - _gompertz_cumhaz(t, shape, rate)


def _llogis_logsf(t, shape, scale):
    return -np.log1p((t / scale) ** shape)


def _llogis_logpdf(t, shape, scale):
    z = t / scale
    return (
        math.log(shape) - math.log(scale) + (shape - 1) * np.log(z) - 2.0 * np.log1p(z**shape)
    )


def _lnorm_logsf(t, meanlog, sdlog):
    return special.log_ndtr(-(np.log(t) - meanlog) / sdlog)


def _lnorm_logpdf(t, meanlog, sdlog):
    z = (np.log(t) - meanlog) / sdlog
    return -0.5 * z * z - math.log(sdlog) - np.log(t) - 0.5 * math.log(2 * math.pi)


# generalised gamma switches to its log-normal limit below this |Q|
_GG_Q_EPS = 1e-8


def _gg_logsf(t, mu, sigma, q):
    if abs(q) < _GG_Q_EPS:
        return _lnorm_logsf(t, mu, sigma)
    w = (np.log(t) - mu) / sigma
    a = q ** -2
    u = a * np.exp(q * w)
    if q > 0:
        return _safe_log(special.gammaincc(a, u))
    return _safe_log(special.gammainc(a, u))


def _gg_logpdf(t, mu, sigma, q):
    if abs(q) < _GG_Q_EPS:
        return _lnorm_logpdf(t, mu, sigma)
    w = (np.log(t) - mu) / sigma
    a = q ** -2
    qw = q * w
    return (
        math.log(abs(q)) + a * math.log(a) - math.log(sigma) - np.log(t)
        - special.gammaln(a) + a * qw - a * np.exp(qw)
    )


@dataclass(frozen=True)
class ModelFamily:
    name: str
    param_names: tuple[str, ...]
    logsf: Callable = field(repr=False)
    logpdf: Callable = field(repr=False)
    # True where the parameter is constrained positive (optimized on log scale)
    positive: tuple[bool, ...] = field(repr=False, default=())

    @property
    def arity(self) -> int:
        return len(self.param_names)

    def validate(self, beta) -> tuple[float, ...]:
        beta = tuple(float(b) for b in beta)
        if len(beta) != self.arity:
            raise ValueError(f"{self.name} takes {self.arity} parameters, got {len(beta)}")
        for name, b, pos in zip(self.param_names, beta, self.positive):
            if not math.isfinite(b):
                raise ValueError(f"{self.name}: {name} must be finite, got {b}")
            if pos and b <= 0:
                raise ValueError(f"{self.name}: {name} must be positive, got {b}")
        return beta

    def to_free(self, beta) -> np.ndarray:
        return np.array([math.log(b) if pos else b for b, pos in zip(beta, self.positive)])

    def from_free(self, x) -> tuple[float, ...]:
        return tuple(
            float(math.exp(min(v, 700.0))) if pos else float(v) for v, pos in zip(x, self.positive)
        )


FAMILIES: dict[str, ModelFamily] = {
    f.name: f
    for f in [
        ModelFamily("exponential", ("rate",), _exp_logsf, _exp_logpdf, (True,)),
        ModelFamily("weibull", ("shape", "scale"), _weib_logsf, _weib_logpdf, (True, True)),
        ModelFamily("gamma", ("shape", "rate"), _gamma_logsf, _gamma_logpdf, (True, True)),
        ModelFamily(
            "generalised-gamma", ("mu", "sigma", "Q"), _gg_logsf, _gg_logpdf, (False, True, False)
        ),
        ModelFamily("gompertz", ("shape", "rate"), _gompertz_logsf, _gompertz_logpdf, (False, True)),
        ModelFamily("log-logistic", ("shape", "scale"), _llogis_logsf, _llogis_logpdf, (True, True)),
        ModelFamily("log-normal", ("meanlog", "sdlog"), _lnorm_logsf, _lnorm_logpdf, (False, True)),
    ]
}

FAMILY_NAMES = tuple(FAMILIES)

_ALIASES = {
    "exp": "exponential",
    "weibullph": "weibull",
    "gengamma": "generalised-gamma",
    "generalized-gamma": "generalised-gamma",
    "generalised gamma": "generalised-gamma",
    "llogis": "log-logistic",
    "loglogistic": "log-logistic",
    "lnorm": "log-normal",
    "lognormal": "log-normal",
}


def get_family(name: str) -> ModelFamily:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in FAMILIES:
        raise KeyError(f"unknown family {name!r}; choose from {', '.join(FAMILY_NAMES)}")
    return FAMILIES[key]


@dataclass(frozen=True)
class FittedModel:
    family: ModelFamily
    beta: tuple[float, ...]
    log_likelihood: float | None = None
    n_obs: int | None = None
    converged: bool = True
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "beta", self.family.validate(self.beta))

    @property
    def name(self) -> str:
        return self.family.name

    @property
    def n_params(self) -> int:
        return self.family.arity

    @property
    def params(self) -> dict[str, float]:
        return dict(zip(self.family.param_names, self.beta))

    @property
    def aic(self) -> float | None:
        if self.log_likelihood is None:
            return None
        return information_criteria(self)[0]

    @property
    def bic(self) -> float | None:
        if self.log_likelihood is None or self.n_obs is None:
            return None
        return information_criteria(self)[1]

    def logsf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        if np.any(pos):
            out[pos] = self.family.logsf(t[pos], *self.beta)
        return out

    def survival(self, t):
        return np.exp(self.logsf(t))

    def cdf(self, t):
        return -np.expm1(self.logsf(t))

    def logpdf(self, t):
        t = np.asarray(t, dtype=float)
        return self.family.logpdf(t, *self.beta)

    def pdf(self, t):
        return np.exp(self.logpdf(t))

    def to_dict(self) -> dict:
        out = {
            "family": self.name,
            "beta": self.params,
            "log_likelihood": self.log_likelihood,
            "n_params": self.n_params,
            "n_obs": self.n_obs,
            "aic": self.aic,
            "bic": self.bic,
            "converged": self.converged,
        }
        if self.notes:
            out["notes"] = list(self.notes)
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, obj: dict) -> "FittedModel":
        family = get_family(obj["family"])
        beta = obj["beta"]
        if isinstance(beta, dict):
            missing = [p for p in family.param_names if p not in beta]
            if missing:
                raise ValueError(f"{family.name}: missing parameters {missing}")
            beta = [beta[p] for p in family.param_names]
        return cls(
            family,
            tuple(beta),
            obj.get("log_likelihood"),
            obj.get("n_obs"),
            bool(obj.get("converged", True)),
            tuple(obj.get("notes", ())),
        )


def cdf(model: FittedModel, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    return model.cdf(t)


def interval_prob(model: FittedModel, a, b):
    """P(T in (a, b] | T > a), computed as 1 - S(b)/S(a).

    Vectorized over ``a`` and ``b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < a):
        raise ValueError("interval bounds must satisfy 0 <= a <= b")
    la = model.logsf(a)
    if np.any(np.isneginf(la)):
        raise DegenerateIntervalError("survival is zero at the interval start")
    p = -np.expm1(model.logsf(b) - la)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def log_likelihood(model_or_family, beta, data: SurvivalDataset) -> float:
    family = model_or_family.family if isinstance(model_or_family, FittedModel) else model_or_family
    ll = 0.0
    if data.n_events:
        ll += float(np.sum(family.logpdf(data.event_times, *beta)))
    if data.n_censors:
        ll += float(np.sum(family.logsf(data.censor_times, *beta)))
    return ll


def information_criteria(model: FittedModel) -> tuple[float, float]:
    if model.log_likelihood is None or not math.isfinite(model.log_likelihood):
        raise ValueError("model has no finite log-likelihood")
    k = model.n_params
    aic = -2.0 * model.log_likelihood + 2.0 * k
    bic = -2.0 * model.log_likelihood + k * math.log(model.n_obs) if model.n_obs else math.nan
    return aic, bic


def exponential_mle(data: SurvivalDataset) -> float:
    if data.n_events == 0:
        raise DataError("cannot fit a model to data without events")
    return data.n_events / float(np.sum(data.times))


# Nelder-Mead settings
XATOL = 1e-8
MAXFEV = 10_000
N_RESTARTS = 5
JITTER = 0.5


def _initial_values(family: ModelFamily, data: SurvivalDataset) -> list[tuple[float, ...]]:
    rate = exponential_mle(data)
    median = math.log(2) / rate
    name = family.name
    if name == "exponential":
        return [(rate,)]
    if name == "weibull":
        return [(1.0, 1.0 / rate)]
    if name == "gamma":
        return [(1.0, rate)]
    if name == "gompertz":
        return [(0.0, rate)]
    if name == "log-logistic":
        return [(1.0, median)]
    if name == "log-normal":
        return [(math.log(median), 1.0)]
    if name == "generalised-gamma":
        starts = [(-math.log(rate), 1.0, 1.0)]
        # nested special cases: Q = 1 Weibull, Q = sigma gamma, Q = 0 log-normal
        for sub in ("weibull", "gamma", "log-normal"):
            try:
                m = _fit_optimizer(FAMILIES[sub], data, seed=0)
            except FitError:
                continue
            a, b = m.beta
            if sub == "weibull":
                starts.append((math.log(b), 1.0 / a, 1.0))
            elif sub == "gamma":
                s = 1.0 / math.sqrt(a)
                starts.append((math.log(a / b), s, s))
            else:
                starts.append((a, b, 1e-3))
        return starts
    raise KeyError(name)


def _jitter(family: ModelFamily, beta, rng) -> tuple[float, ...]:
    out = []
    for b, pos in zip(beta, family.positive):
        f = 1.0 + rng.uniform(-JITTER, JITTER)
        if pos or b != 0:
            out.append(b * f)
        else:
            out.append(rng.uniform(-JITTER, JITTER) * 0.1)
    return tuple(out)


def _fit_optimizer(family: ModelFamily, data: SurvivalDataset, seed: int = 0) -> FittedModel:
    if data.n_events == 0:
        raise DataError("cannot fit a model to data without events")
    rng = np.random.default_rng(seed)
    starts = _initial_values(family, data)
    base = list(starts)
    for i in range(N_RESTARTS):
        starts.append(_jitter(family, base[i % len(base)], rng))

    def objective(x):
        beta = family.from_free(x)
        with np.errstate(all="ignore"):
            ll = log_likelihood(family, beta, data)
        if not math.isfinite(ll):
            return 1e300
        return -ll

    best = None
    any_converged = False
    for start in starts:
        x0 = family.to_free(start)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = optimize.minimize(
                objective,
                x0,
                method="Nelder-Mead",
                options={"xatol": XATOL, "fatol": np.inf, "maxfev": MAXFEV, "maxiter": MAXFEV},
            )
        any_converged |= bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or best.fun >= 1e300:
        raise FitError(f"{family.name}: no finite likelihood found")

    beta = family.from_free(best.x)
    notes = []
    if not any_converged:
        notes.append("non-convergence: best point after maximum evaluations")
    if family.name == "gompertz" and beta[0] < 0:
        notes.append("improper distribution: negative shape gives a survival plateau")
    return FittedModel(
        family, beta, -float(best.fun), data.n, converged=any_converged, notes=tuple(notes)
    )


def fit(family, data: SurvivalDataset, method: str = "auto", seed: int = 0) -> FittedModel:
    """Maximum-likelihood fit of ``family`` to right-censored ``data``.

    The exponential uses its closed form unless ``method="optimizer"``; every
    other family is fitted by Nelder-Mead on log-transformed positive
    parameters, started from moment-based guesses plus jittered restarts.
    """
    if isinstance(family, str):
        family = get_family(family)
    if data.n_events == 0:
        raise DataError("cannot fit a model to data without events")
    if family.name == "exponential" and method != "optimizer":
        rate = exponential_mle(data)
        return FittedModel(family, (rate,), log_likelihood(family, (rate,), data), data.n)
    return _fit_optimizer(family, data, seed=seed)


def load_model(obj) -> FittedModel:
    if isinstance(obj, str):
        obj = json.loads(obj)
    return FittedModel.from_dict(obj)
