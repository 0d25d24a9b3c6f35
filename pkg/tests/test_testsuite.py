import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from survbit.data import SurvivalDataset
from survbit.intervals import build_censor_scheme, build_specified_scheme
from survbit.models import FittedModel, get_family
from survbit.pvalues import PValue
from survbit.testsuite import (
    bonferroni_test,
    individual_flags,
    pavsi,
    pavsi_pvalue,
    run_full_test,
    tft,
)

pvals = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60)


def test_individual_flags():
    assert individual_flags([0.5, 0.02, 0.98]).tolist() == [False, True, True]
    assert not individual_flags([0.5] * 7).any()
    assert individual_flags([0.025, 0.975]).all()


def test_individual_accepts_pvalue_objects():
    assert individual_flags([PValue(0.01, "midpoint", 0)]).tolist() == [True]


def test_bonferroni_worked_thresholds():
    # ten intervals: reject below 0.0025 or above 0.9975
    rej, _ = bonferroni_test([0.0061, 0.002, 0.9727, 0.975, 0.998], I=10)
    assert rej.tolist() == [False, True, False, False, True]
    flags = individual_flags([0.9727, 0.975])
    assert flags.tolist() == [False, True]


@given(pvals)
def test_bonferroni_nested_in_individual(p):
    rej, overall = bonferroni_test(p)
    flags = individual_flags(p)
    assert np.all(flags[rej])
    assert overall == bool(rej.any())


def test_tft_no_signal():
    t, p = tft([0.5] * 12)
    assert t == 0.0 and p == 1.0


def test_tft_matches_fisher_on_folded():
    p = [0.1, 0.8, 0.45, 0.99]
    u = [0.2, 0.4, 0.9, 0.02]
    t, pv = tft(p)
    assert t == pytest.approx(-2 * sum(math.log(x) for x in u), rel=1e-14)
    assert pv == pytest.approx(stats.chi2.sf(t, 8), rel=1e-10)


@given(pvals, st.data())
def test_tft_folding_symmetry(p, data):
    p = [min(max(x, 1e-9), 1 - 1e-9) for x in p]
    mask = data.draw(st.lists(st.booleans(), min_size=len(p), max_size=len(p)))
    flipped = [1 - x if m else x for x, m in zip(p, mask)]
    assert tft(p)[0] == pytest.approx(tft(flipped)[0], rel=1e-6, abs=1e-8)


def test_tft_degenerate():
    t, p = tft([0.3, 1.0])
    assert math.isinf(t) and p == 0.0


def test_tft_calibration_under_uniform():
    rng = np.random.default_rng(2024)
    u = rng.random((100_000, 10))
    rate = np.mean([tft(row)[1] <= 0.05 for row in u])
    assert abs(rate - 0.05) <= 0.004


def test_pavsi_reference_points():
    assert pavsi_pvalue(4, 42) == pytest.approx(0.107, abs=5e-4)
    assert pavsi_pvalue(0, 42) == pytest.approx(1 - 0.5 * 0.95**42, abs=1e-14)
    # ten-interval column: 4, 2, 1 and 3 extreme intervals
    assert pavsi_pvalue(4, 10) == pytest.approx(0.0005, abs=5e-5)
    assert pavsi_pvalue(2, 10) == pytest.approx(0.0488, abs=5e-5)
    assert pavsi_pvalue(1, 10) == pytest.approx(0.2437, abs=5e-5)
    assert pavsi_pvalue(3, 10) == pytest.approx(0.0063, abs=5e-5)


def test_pavsi_counts_flags():
    t, p = pavsi([0.01, 0.5, 0.99, 0.3])
    assert t == 2
    assert p == pytest.approx(pavsi_pvalue(2, 4))


@pytest.mark.parametrize("I", [1, 5, 10, 42, 200])
def test_pavsi_monotone(I):
    vals = [pavsi_pvalue(t, I) for t in range(I + 1)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def _toy():
    rng = np.random.default_rng(4)
    t = rng.exponential(12, 120)
    c = rng.uniform(5, 30, 120)
    d = SurvivalDataset(np.minimum(t, c), (t <= c).astype(int))
    m = FittedModel(get_family("exponential"), (d.n_events / d.times.sum(),))
    return d, m


def test_full_test_consistency():
    d, m = _toy()
    r = run_full_test(build_censor_scheme(d, m))
    p = [v.p_value.value for v in r.verdicts]
    assert r.I == len(p)
    assert r.t_pavsi == int(individual_flags(p).sum())
    assert r.t_pavsi == r.n_extreme
    assert r.bonferroni_reject == (r.n_bonferroni > 0)
    assert (r.t_cont, r.tft_pvalue) == tft(p)
    assert r.seed is None


def test_randomized_reproducible_and_shares_distributions():
    d, m = _toy()
    s = build_specified_scheme(d, m, np.linspace(0, d.max_censor_time, 11))
    a = run_full_test(s, "randomized", seed=9)
    b = run_full_test(s, "randomized", seed=9)
    mid = run_full_test(s, "midpoint")
    assert a.to_json() == b.to_json()
    assert a.seed == 9
    for va, vm, iv in zip(a.verdicts, mid.verdicts, s.intervals):
        dist = iv.null_distribution()
        k = iv.n_events
        assert dist.below(k) - 1e-15 <= va.p_value.value <= dist.below(k) + dist.prob(k) + 1e-15
        assert vm.p_value.value == pytest.approx(dist.below(k) + 0.5 * dist.prob(k), abs=1e-15)


def test_result_json_schema():
    d, m = _toy()
    out = run_full_test(build_censor_scheme(d, m)).to_dict()
    assert set(out["overall"]) >= {
        "I", "t_cont", "tft_p", "t_pavsi", "pavsi_p", "bonferroni_reject", "n_individual_flags"
    }
    assert out["rows"][0]["flag"] in {"none", "individual", "bonferroni"}
