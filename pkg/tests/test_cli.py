import json

import numpy as np
import pytest

from survbit.cli import main
from survbit.report import STRIP_COLORS, fit_table, render_figure, rows_csv, strip_segments


@pytest.fixture
def toy(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text("time,event\n1,1\n2,1\n3,1\n")
    return p


@pytest.fixture
def trial(tmp_path):
    rng = np.random.default_rng(8)
    t = rng.exponential(15, 150)
    c = np.minimum(rng.uniform(0, 100, 150), rng.uniform(18, 22, 150))
    p = tmp_path / "trial.csv"
    lines = ["time,event"] + [f"{min(a, b):.4f},{int(a <= b)}" for a, b in zip(t, c)]
    p.write_text("\n".join(lines) + "\n")
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_fit_toy(capsys, toy):
    code, out, _ = run(capsys, "fit", toy, "--families", "exponential")
    assert code == 0
    (m,) = json.loads(out)["models"]
    assert m["beta"]["rate"] == 0.5


def test_unknown_family(capsys, toy):
    code, _, err = run(capsys, "fit", toy, "--families", "pareto")
    assert code == 1
    assert "log-logistic" in err


def test_bad_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["test"])
    assert exc.value.code == 1


def test_data_error(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,event\n1,1\n-1,0\n")
    code, _, err = run(capsys, "fit", bad)
    assert code == 2
    assert "line 3" in err


def test_fit_failure_exit(capsys, tmp_path):
    p = tmp_path / "nocens.csv"
    p.write_text("time,event\n1,0\n2,0\n")
    code, out, _ = run(capsys, "fit", p, "--families", "weibull")
    assert code == 3
    assert "error" in json.loads(out)["models"][0]


def test_fit_ranking_csv(capsys, trial, tmp_path):
    csv_path = tmp_path / "rank.csv"
    code, out, _ = run(capsys, "fit", trial, "--families", "exponential,weibull,lnorm", "--csv", csv_path)
    assert code == 0
    ranking = json.loads(out)["ranking"]
    assert [r["aic_rank"] for r in ranking] == [1, 2, 3]
    assert csv_path.read_text().startswith("family,log_likelihood,aic")


def _fit_model(capsys, trial, tmp_path):
    model = tmp_path / "fit.json"
    assert run(capsys, "fit", trial, "--families", "exponential,weibull", "-o", model)[0] == 0
    return model


def test_test_needs_family_for_multi_fit(capsys, trial, tmp_path):
    model = _fit_model(capsys, trial, tmp_path)
    code, _, err = run(capsys, "test", trial, "--model", model)
    assert code == 1 and "--family" in err


def test_randomized_reproducible(capsys, trial, tmp_path):
    model = _fit_model(capsys, trial, tmp_path)
    args = ("test", trial, "--model", model, "--family", "weibull", "--pvalues", "rand", "--seed", 42)
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert a == b
    assert json.loads(a)["metadata"]["seed"] == 42


def test_bundle_roundtrip(capsys, trial, tmp_path):
    model = _fit_model(capsys, trial, tmp_path)
    bundle = tmp_path / "bundle.json"
    svg = tmp_path / "fig.svg"
    rows = tmp_path / "rows.csv"
    code, _, _ = run(
        capsys, "test", trial, "--model", model, "--family", "exponential",
        "--intervals", "fixed:10", "-o", bundle, "--csv", rows, "--figure", svg,
    )
    assert code == 0
    first = json.loads(bundle.read_text())
    assert first["overall"]["I"] == 10
    assert rows.read_text().count("\n") == 11
    # the bundle's model block is enough to re-run the test
    again = tmp_path / "again.json"
    run(capsys, "test", trial, "--model", bundle, "--intervals", "fixed:10", "-o", again)
    assert json.loads(again.read_text())["overall"] == first["overall"]
    # figure from the bundle equals the figure written during the test
    code, out, _ = run(capsys, "figure", bundle)
    assert code == 0
    assert out.rstrip("\n") == svg.read_text().rstrip("\n")
    assert svg.read_text().startswith("<?xml")


def test_grid_file(capsys, trial, tmp_path):
    model = _fit_model(capsys, trial, tmp_path)
    grid = tmp_path / "grid.txt"
    grid.write_text("0 5 10 15 20\n")
    code, out, _ = run(capsys, "test", trial, "--model", model, "--family", "weibull", "--intervals", f"grid:{grid}")
    assert code == 0
    assert [r["interval"] for r in json.loads(out)["rows"]][0] == "(0, 5]"


def test_bad_interval_spec(capsys, trial, tmp_path):
    model = _fit_model(capsys, trial, tmp_path)
    code, _, _ = run(capsys, "test", trial, "--model", model, "--family", "weibull", "--intervals", "quantile")
    assert code == 1


def _bundle(flags):
    rows = [
        {"interval": f"({i}, {i + 1}]", "lower": float(i), "upper": float(i + 1), "flag": f}
        for i, f in enumerate(flags)
    ]
    return {
        "rows": rows,
        "overall": {"I": len(flags), "tft_p": 0.5, "pavsi_p": 0.5, "bonferroni_reject": False},
        "model": {"family": "exponential"},
        "dataset": {"max_time": float(len(flags))},
        "km": [{"time": 0.0, "survival": 1.0, "at_risk": 5}, {"time": 1.0, "survival": 0.8, "at_risk": 5}],
        "fitted_curve": {"time": [0.0, 1.0], "survival": [1.0, 0.8]},
        "censor_times": [0.5],
        "at_risk": {"time": [0.0, 1.0], "n": [5, 4]},
    }


def test_figure_byte_stable():
    b = _bundle(["none", "individual", "bonferroni"])
    assert render_figure(b) == render_figure(b)


def test_strip_colors():
    quiet = render_figure(_bundle(["none"] * 4))
    assert "#ff0000" not in quiet
    loud = render_figure(_bundle(["none", "bonferroni"]))
    assert "#ff0000" in loud
    assert STRIP_COLORS["bonferroni"] == "red"
    assert strip_segments(_bundle(["none", "none", "individual"])) == {"none": 2, "individual": 1}


def test_rows_csv_format():
    text = rows_csv([{"interval": "(0, 1]", "N.risk": 10, "p_I": 0.123456, "flag": "none"}])
    assert text.splitlines()[1] == '"(0, 1]",10,0.1235,,,,none'


def test_fit_table_ranks():
    models = [
        {"family": "a", "aic": 10.0, "bic": 14.0, "log_likelihood": -3.0},
        {"family": "b", "aic": 9.0, "bic": 15.0, "log_likelihood": -2.0},
        {"family": "c", "error": "no events"},
    ]
    rows = fit_table(models)
    assert [r["family"] for r in rows] == ["b", "a", "c"]
    assert [r.get("bic_rank") for r in rows] == [2, 1, None]


def test_simulate_smoke(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lambdas": [0.1], "n_patients": [50], "interval_modes": ["censor"], "pvalue_modes": ["midpoint"]}))
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--replications", 1, "--workers", 1, "--outdir", tmp_path / "o")
    assert code == 0
    assert json.loads(out)["n_datasets"] == 1
    assert (tmp_path / "o" / "table5.csv").exists()
