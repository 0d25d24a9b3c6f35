"""Monte-Carlo type I error study under a correctly specified exponential model.

Trials are simulated with ``T ~ exp(rate)`` and censoring
``C = min(U[0, 100], U[18, 22])``. Each dataset is tested against the true
exponential model and the rejection of each overall test recorded. With
``refit=True`` the closed-form MLE ``E / sum(t)`` is tested instead; the
estimate absorbs part of the sampling noise, so those rates run low.

Every replication draws from its own generator seeded by
``(seed, cell_id, replication)``, so results do not depend on how the
replications are split across worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import SurvivalDataset
from .intervals import DEFAULT_RISK_SET, RISK_SETS, _count_grid, _probabilities
from .models import FAMILIES, FittedModel
from .pvalues import binomial_tail_parts, sum_of_binomials_pmf
from .testsuite import ALPHA, bonferroni_thresholds, pavsi_pvalue, tft

log = logging.getLogger(__name__)

LAMBDAS = (1 / 10, 1 / 30, 1 / 70)
N_PATIENTS = (50, 100, 200, 500)
INTERVAL_MODES = ("censor", "fixed")
PVALUE_MODES = ("midpoint", "randomized")
STATISTICS = ("bonferroni", "tft", "pavsi")
TRIAL_END = 22.0

TABLE_NAMES = {
    ("censor", "midpoint"): "table5",
    ("fixed", "midpoint"): "table6",
    ("censor", "randomized"): "tableD1",
    ("fixed", "randomized"): "tableD2",
}

DESK_REPLICATIONS = 2_000
FULL_REPLICATIONS = 10_000


@dataclass(frozen=True)
class SimulationScenario:
    rate: float
    n_patients: int
    interval_mode: str
    pvalue_mode: str
    replications: int = DESK_REPLICATIONS
    seed: int = 20240101
    n_fixed: int = 10
    risk_set: str = DEFAULT_RISK_SET
    refit: bool = False

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.n_patients < 2:
            raise ValueError("need at least 2 patients")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.interval_mode not in INTERVAL_MODES:
            raise ValueError(f"interval_mode must be one of {INTERVAL_MODES}")
        if self.pvalue_mode not in PVALUE_MODES:
            raise ValueError(f"pvalue_mode must be one of {PVALUE_MODES}")
        if self.risk_set not in RISK_SETS:
            raise ValueError(f"risk_set must be one of {RISK_SETS}")

    @property
    def cell_id(self) -> int:
        # stable across runs and independent of grid ordering; risk_set and refit
        # are left out so that variants of a cell see the same datasets
        key = f"{self.rate!r}|{self.n_patients}|{self.interval_mode}|{self.pvalue_mode}"
        return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


@dataclass
class ScenarioResult:
    scenario: SimulationScenario
    rejections: dict[str, int]
    completed: int
    failures: dict[str, int] = field(default_factory=dict)
    zero_events: int = 0
    zero_censors: int = 0

    def rate(self, statistic: str) -> float:
        return self.rejections[statistic] / self.completed if self.completed else math.nan

    def se(self, statistic: str) -> float:
        r = self.rate(statistic)
        return math.sqrt(r * (1 - r) / self.completed) if self.completed else math.nan

    def to_dict(self) -> dict:
        s = self.scenario
        out = {
            "lambda": s.rate,
            "n": s.n_patients,
            "interval_mode": s.interval_mode,
            "pvalue_mode": s.pvalue_mode,
            "replications": s.replications,
            "risk_set": s.risk_set,
            "refit": s.refit,
            "completed": self.completed,
            "failures": dict(self.failures),
            "zero_events": self.zero_events,
            "zero_censors": self.zero_censors,
        }
        for st in STATISTICS:
            out[f"{st}_rate"] = self.rate(st)
            out[f"{st}_se"] = self.se(st)
        return out


def simulate_trial(rate: float, n_patients: int, rng: np.random.Generator) -> SurvivalDataset:
    if rate <= 0 or n_patients < 2:
        raise ValueError("need rate > 0 and at least 2 patients")
    t = rng.exponential(1.0 / rate, n_patients)
    c1 = rng.uniform(0.0, 100.0, n_patients)
    c2 = rng.uniform(18.0, TRIAL_END, n_patients)
    c = np.minimum(c1, c2)
    event = (t <= c).astype(np.int64)
    return SurvivalDataset(np.minimum(t, c), event)


def replication_rng(seed: int, cell_id: int, rep: int) -> np.random.Generator:
    return np.random.default_rng([seed, cell_id, rep])


def trial_pvalues(
    data: SurvivalDataset,
    model: FittedModel,
    interval_mode: str,
    pvalue_mode: str,
    rng: np.random.Generator,
    n_fixed: int = 10,
    risk_set: str = DEFAULT_RISK_SET,
) -> np.ndarray:
    """Vectorized per-interval p-values; agrees with ``run_full_test``.

    Uniform draws for randomized p-values are taken in interval order, one per
    testable interval, matching the library path.
    """
    if interval_mode == "censor":
        bounds = np.concatenate([[0.0], data.unique_censor_times])
        ev, _, nr = _count_grid(data, bounds, risk_set)
        p = _probabilities(model, bounds, nr)
        keep = nr >= 1
        below, at = binomial_tail_parts(ev[keep], nr[keep], p[keep])
    else:
        S = np.linspace(0.0, data.max_censor_time, n_fixed + 1)
        tau = np.unique(np.concatenate([[0.0], data.unique_censor_times, S]))
        ev, _, nr = _count_grid(data, tau, risk_set)
        p = _probabilities(model, tau, nr)
        cut = np.searchsorted(tau, S)  # tau[cut[k]] == S[k]
        below = np.empty(n_fixed)
        at = np.empty(n_fixed)
        for k in range(n_fixed):
            sl = slice(cut[k], cut[k + 1])
            obs = int(ev[sl].sum())
            m = nr[sl] >= 1
            dist = sum_of_binomials_pmf(zip(nr[sl][m], p[sl][m]), limit=obs)
            below[k] = dist.below(obs)
            at[k] = dist.prob(obs)
    if pvalue_mode == "midpoint":
        u = 0.5
    else:
        u = rng.random(below.size)
    return np.minimum(below + u * at, 1.0)


def replication_model(scenario: SimulationScenario, data: SurvivalDataset) -> FittedModel:
    """The exponential model a replication is tested against."""
    rate = data.n_events / float(data.times.sum()) if scenario.refit else scenario.rate
    return FittedModel(FAMILIES["exponential"], (rate,), n_obs=data.n)


def _run_block(scenario: SimulationScenario, start: int, stop: int) -> dict:
    rej = dict.fromkeys(STATISTICS, 0)
    failures: dict[str, int] = {}
    completed = zero_events = zero_censors = 0
    cell = scenario.cell_id
    for rep in range(start, stop):
        rng = replication_rng(scenario.seed, cell, rep)
        data = simulate_trial(scenario.rate, scenario.n_patients, rng)
        if data.n_events == 0:
            zero_events += 1
            failures["no events"] = failures.get("no events", 0) + 1
            continue
        if data.n_censors == 0:
            zero_censors += 1
            failures["no censors"] = failures.get("no censors", 0) + 1
            continue
        model = replication_model(scenario, data)
        try:
            p = trial_pvalues(
                data,
                model,
                scenario.interval_mode,
                scenario.pvalue_mode,
                rng,
                scenario.n_fixed,
                scenario.risk_set,
            )
        except ValueError as exc:
            key = type(exc).__name__
            failures[key] = failures.get(key, 0) + 1
            continue
        I = p.size
        if I == 0:
            failures["no testable intervals"] = failures.get("no testable intervals", 0) + 1
            continue
        low, high = bonferroni_thresholds(I)
        rej["bonferroni"] += bool(np.any((p <= low) | (p >= high)))
        rej["tft"] += tft(p)[1] <= ALPHA
        t = int(np.sum((p <= ALPHA / 2) | (p >= 1 - ALPHA / 2)))
        rej["pavsi"] += pavsi_pvalue(t, I) <= ALPHA
        completed += 1
    return {
        "rejections": rej,
        "completed": completed,
        "failures": failures,
        "zero_events": zero_events,
        "zero_censors": zero_censors,
    }


def _merge(scenario: SimulationScenario, blocks: list[dict]) -> ScenarioResult:
    rej = dict.fromkeys(STATISTICS, 0)
    failures: dict[str, int] = {}
    res = ScenarioResult(scenario, rej, 0, failures)
    for b in blocks:
        for k, v in b["rejections"].items():
            rej[k] += int(v)
        for k, v in b["failures"].items():
            failures[k] = failures.get(k, 0) + v
        res.completed += b["completed"]
        res.zero_events += b["zero_events"]
        res.zero_censors += b["zero_censors"]
    return res


def _blocks(replications: int, n_blocks: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, replications, max(1, n_blocks) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges, edges[1:]) if b > a]


def run_scenario(scenario: SimulationScenario, workers: int = 1) -> ScenarioResult:
    if workers <= 1:
        return _merge(scenario, [_run_block(scenario, 0, scenario.replications)])
    blocks = _blocks(scenario.replications, workers)
    with ProcessPoolExecutor(workers) as pool:
        futs = [pool.submit(_run_block, scenario, a, b) for a, b in blocks]
        return _merge(scenario, [f.result() for f in futs])


def full_grid(
    replications: int = DESK_REPLICATIONS,
    seed: int = 20240101,
    lambdas=LAMBDAS,
    n_patients=N_PATIENTS,
    interval_modes=INTERVAL_MODES,
    pvalue_modes=PVALUE_MODES,
    risk_set: str = DEFAULT_RISK_SET,
    refit: bool = False,
) -> list[SimulationScenario]:
    return [
        SimulationScenario(lam, n, im, pm, replications, seed, risk_set=risk_set, refit=refit)
        for im, pm, lam, n in itertools.product(interval_modes, pvalue_modes, lambdas, n_patients)
    ]


@dataclass
class TypeIErrorReport:
    results: list[ScenarioResult]

    @property
    def n_datasets(self) -> int:
        return sum(r.scenario.replications for r in self.results)

    def get(self, rate, n, interval_mode, pvalue_mode) -> ScenarioResult:
        for r in self.results:
            s = r.scenario
            if (
                math.isclose(s.rate, rate)
                and s.n_patients == n
                and s.interval_mode == interval_mode
                and s.pvalue_mode == pvalue_mode
            ):
                return r
        raise KeyError((rate, n, interval_mode, pvalue_mode))

    def rows(self) -> list[dict]:
        return [r.to_dict() for r in self.results]

    def tables(self) -> dict[str, list[dict]]:
        """Wide tables: one row per N, one column per (lambda, statistic)."""
        out = {}
        for (im, pm), name in TABLE_NAMES.items():
            cells = [r for r in self.results if r.scenario.interval_mode == im and r.scenario.pvalue_mode == pm]
            if not cells:
                continue
            ns = sorted({r.scenario.n_patients for r in cells})
            lams = sorted({r.scenario.rate for r in cells}, reverse=True)
            rows = []
            for n in ns:
                row = {"n": n}
                for lam in lams:
                    try:
                        r = self.get(lam, n, im, pm)
                    except KeyError:
                        continue
                    tag = f"1/{round(1 / lam)}"
                    for st in STATISTICS:
                        row[f"lambda={tag} {st}"] = round(r.rate(st), 4)
                rows.append(row)
            out[name] = rows
        return out

    def write(self, outdir) -> list[str]:
        os.makedirs(outdir, exist_ok=True)
        written = []
        for name, rows in self.tables().items():
            path = os.path.join(outdir, f"{name}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]))
                w.writeheader()
                w.writerows(rows)
            written.append(path)
            jpath = os.path.join(outdir, f"{name}.json")
            with open(jpath, "w") as fh:
                json.dump(rows, fh, indent=2)
            written.append(jpath)
        path = os.path.join(outdir, "simulation_long.csv")
        rows = self.rows()
        flat = [{k: (json.dumps(v) if isinstance(v, dict) else v) for k, v in r.items()} for r in rows]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(flat[0]))
            w.writeheader()
            w.writerows(flat)
        written.append(path)
        path = os.path.join(outdir, "simulation.json")
        with open(path, "w") as fh:
            json.dump({"n_datasets": self.n_datasets, "results": rows}, fh, indent=2)
        written.append(path)
        return written


def run_grid(
    scenarios: list[SimulationScenario] | None = None, workers: int | None = None, progress=None
) -> TypeIErrorReport:
    if scenarios is None:
        scenarios = full_grid()
    workers = workers or 1
    results = []
    if workers <= 1:
        for s in scenarios:
            results.append(run_scenario(s))
            if progress:
                progress(results[-1])
        return TypeIErrorReport(results)
    # one pool for the whole grid; blocks of every scenario interleave
    with ProcessPoolExecutor(workers) as pool:
        futs = {
            s: [pool.submit(_run_block, s, a, b) for a, b in _blocks(s.replications, workers)]
            for s in scenarios
        }
        for s in scenarios:
            results.append(_merge(s, [f.result() for f in futs[s]]))
            if progress:
                progress(results[-1])
    return TypeIErrorReport(results)


def scenarios_from_config(cfg: dict) -> list[SimulationScenario]:
    """Build a scenario grid from a JSON-style config.

    Recognized keys: ``lambdas``, ``n_patients``, ``interval_modes``,
    ``pvalue_modes``, ``replications``, ``seed``, ``risk_set``, ``refit``, or ``scenarios`` as an
    explicit list of scenario dicts.
    """
    reps = int(cfg.get("replications", DESK_REPLICATIONS))
    seed = int(cfg.get("seed", 20240101))
    risk_set = cfg.get("risk_set", DEFAULT_RISK_SET)
    refit = bool(cfg.get("refit", False))
    if "scenarios" in cfg:
        out = []
        for s in cfg["scenarios"]:
            s = dict(s)
            rate = s.pop("lambda", s.pop("rate", None))
            out.append(
                SimulationScenario(
                    float(rate),
                    int(s.pop("n_patients", s.pop("n", 0))),
                    s.pop("interval_mode"),
                    s.pop("pvalue_mode"),
                    int(s.pop("replications", reps)),
                    int(s.pop("seed", seed)),
                    risk_set=s.pop("risk_set", risk_set),
                    refit=bool(s.pop("refit", refit)),
                )
            )
        return out
    return full_grid(
        reps,
        seed,
        tuple(float(x) for x in cfg.get("lambdas", LAMBDAS)),
        tuple(int(x) for x in cfg.get("n_patients", N_PATIENTS)),
        tuple(cfg.get("interval_modes", INTERVAL_MODES)),
        tuple(cfg.get("pvalue_modes", PVALUE_MODES)),
        risk_set,
        refit,
    )
