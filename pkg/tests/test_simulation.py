import json

import numpy as np
import pytest

from survbit.intervals import build_censor_scheme, build_specified_scheme, default_ten_interval_grid
from survbit.models import FittedModel, fit, get_family
from survbit.simulation import (
    FULL_REPLICATIONS,
    SimulationScenario,
    full_grid,
    replication_model,
    replication_rng,
    run_grid,
    run_scenario,
    scenarios_from_config,
    simulate_trial,
    trial_pvalues,
)
from survbit.testsuite import run_full_test


def test_trial_construction():
    rng = np.random.default_rng(1)
    d = simulate_trial(1 / 10, 500, rng)
    assert d.n == 500
    # every follow-up ends by month 22
    assert d.times.max() <= 22.0
    assert d.censor_times.size > 0


@pytest.mark.parametrize("rate, want", [(1 / 10, np.exp(-2.2)), (1 / 70, np.exp(-22 / 70))])
def test_survival_at_trial_end(rate, want):
    # administrative censoring starts at 18, so P(T > 22) is visible only through
    # the exponential draw itself
    rng = np.random.default_rng(7)
    t = rng.exponential(1 / rate, 100_000)
    assert np.mean(t > 22) == pytest.approx(want, abs=0.01)
    assert want == pytest.approx({0.1: 0.1108, 1 / 70: 0.730}[rate], abs=1e-3)


def test_replication_model():
    d = simulate_trial(1 / 30, 200, np.random.default_rng(3))
    lam = d.n_events / d.times.sum()
    refit = SimulationScenario(1 / 30, 200, "censor", "midpoint", refit=True)
    truth = SimulationScenario(1 / 30, 200, "censor", "midpoint")
    assert replication_model(refit, d).beta == (lam,)
    assert fit("exponential", d).beta[0] == pytest.approx(lam, rel=1e-14)
    assert replication_model(truth, d).beta == (1 / 30,)


def test_refit_shares_datasets_and_runs_low():
    base = dict(rate=1 / 10, n_patients=200, interval_mode="fixed", pvalue_mode="randomized", replications=300)
    truth = SimulationScenario(**base)
    refit = SimulationScenario(**base, refit=True)
    assert truth.cell_id == refit.cell_id
    a, b = run_scenario(truth), run_scenario(refit)
    assert a.completed == b.completed
    assert b.rejections["tft"] <= a.rejections["tft"]


@pytest.mark.parametrize("interval_mode", ["censor", "fixed"])
@pytest.mark.parametrize("pvalue_mode", ["midpoint", "randomized"])
@pytest.mark.parametrize("risk_set", ["exclude", "start"])
def test_fast_path_matches_library(interval_mode, pvalue_mode, risk_set):
    for rep in range(5):
        d = simulate_trial(1 / 30, 100, replication_rng(5, 1, rep))
        m = FittedModel(get_family("exponential"), (d.n_events / d.times.sum(),))
        if interval_mode == "censor":
            scheme = build_censor_scheme(d, m, risk_set)
        else:
            scheme = build_specified_scheme(d, m, default_ten_interval_grid(d), risk_set)
        fast = trial_pvalues(d, m, interval_mode, pvalue_mode, np.random.default_rng(rep), risk_set=risk_set)
        lib = run_full_test(scheme, pvalue_mode, seed=rep)
        slow = [v.p_value.value for v in lib.verdicts]
        np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_seed_layout_is_independent_of_workers():
    s = SimulationScenario(1 / 10, 50, "censor", "randomized", replications=40, seed=11)
    a = run_scenario(s, workers=1)
    b = run_scenario(s, workers=3)
    assert a.rejections == b.rejections
    assert a.completed == b.completed


def test_cell_ids_distinct():
    ids = {s.cell_id for s in full_grid()}
    assert len(ids) == 48


def test_grid_sizes():
    assert len(full_grid()) == 48
    assert sum(s.replications for s in full_grid(FULL_REPLICATIONS)) == 480_000
    assert sum(s.replications for s in full_grid()) == 96_000


@pytest.mark.parametrize(
    "kwargs",
    [
        {"rate": 0.0},
        {"n_patients": 1},
        {"replications": 0},
        {"interval_mode": "quantile"},
        {"pvalue_mode": "exact"},
    ],
)
def test_scenario_validation(kwargs):
    base = dict(rate=0.1, n_patients=50, interval_mode="censor", pvalue_mode="midpoint")
    base.update(kwargs)
    with pytest.raises(ValueError):
        SimulationScenario(**base)


def test_config_explicit_scenarios():
    cfg = {
        "replications": 3,
        "scenarios": [{"lambda": 0.1, "n": 50, "interval_mode": "fixed", "pvalue_mode": "midpoint"}],
    }
    (s,) = scenarios_from_config(cfg)
    assert (s.rate, s.n_patients, s.replications) == (0.1, 50, 3)


def test_config_grid_subset():
    cfg = {"lambdas": [0.1], "n_patients": [50, 100], "pvalue_modes": ["midpoint"], "replications": 2}
    assert len(scenarios_from_config(cfg)) == 4


def test_report_tables(tmp_path):
    scen = full_grid(
        replications=20, lambdas=(1 / 10, 1 / 30), n_patients=(50,), pvalue_modes=("midpoint",)
    )
    report = run_grid(scen)
    tables = report.tables()
    assert set(tables) == {"table5", "table6"}
    row = tables["table5"][0]
    assert row["n"] == 50
    assert "lambda=1/10 tft" in row and "lambda=1/30 pavsi" in row
    paths = report.write(tmp_path)
    assert (tmp_path / "table6.csv").exists()
    data = json.loads((tmp_path / "simulation.json").read_text())
    assert data["n_datasets"] == 80
    assert len(paths) == 6
    for r in report.results:
        assert 0.0 <= r.rate("tft") <= 1.0
        assert r.completed + sum(r.failures.values()) == 20
