"""Report bundles, delimited tables and the three-panel interval-test figure."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np
from matplotlib import rcParams
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from . import __version__
from .data import SurvivalDataset, at_risk_table, kaplan_meier
from .models import FittedModel
from .testsuite import IntervalTestResult

BUNDLE_SCHEMA = "survbit.report/1"
STRIP_COLORS = {"none": "white", "individual": "0.6", "bonferroni": "red", "skipped": "white"}
KM_COLOR = "#7b2d8e"
N_RISK_POINTS = 5
N_CURVE_POINTS = 200


def _finite(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return x


def build_bundle(
    data: SurvivalDataset, model: FittedModel, result: IntervalTestResult, source: str | None = None
) -> dict:
    """Everything needed to re-render the figure or re-run the test."""
    km = kaplan_meier(data)
    t_end = float(data.times.max())
    grid = np.linspace(0.0, t_end, N_RISK_POINTS).tolist()
    curve_t = np.linspace(0.0, t_end, N_CURVE_POINTS)
    return {
        "schema": BUNDLE_SCHEMA,
        "metadata": {
            "version": __version__,
            "source": source,
            "interval_mode": result.mode,
            "pvalue_mode": result.pvalue_mode,
            "seed": result.seed,
            "risk_set": result.scheme.risk_set,
        },
        "dataset": data.summary(),
        "model": model.to_dict(),
        "rows": result.rows(),
        "overall": result.overall(),
        "excluded_events": result.scheme.excluded_events,
        "warnings": list(result.scheme.warnings),
        "km": json.loads(km.to_json()),
        "fitted_curve": {
            "time": curve_t.tolist(),
            "survival": model.survival(curve_t).tolist(),
        },
        "censor_times": data.unique_censor_times.tolist(),
        "at_risk": {"time": grid, "n": at_risk_table(data, grid)},
    }


ROW_COLUMNS = ("interval", "N.risk", "p_I", "events", "E(events)", "p_value", "flag")


def rows_csv(rows: list[dict], columns=ROW_COLUMNS, digits: int = 4) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        out = []
        for c in columns:
            v = r.get(c)
            if isinstance(v, float):
                v = f"{v:.{digits}f}"
            out.append("" if v is None else v)
        w.writerow(out)
    return buf.getvalue()


def render_figure(bundle: dict, path=None) -> str:
    """Three stacked panels: survival curves, interval strip, numbers at risk.

    Returns the SVG text and writes it to ``path`` when given. Output is
    byte-identical for identical bundles.
    """
    rc = {"svg.hashsalt": "survbit", "svg.fonttype": "path", "font.size": 9}
    old = {k: rcParams[k] for k in rc}
    rcParams.update(rc)
    try:
        fig = Figure(figsize=(7.0, 5.6))
        axes = fig.subplots(3, 1, sharex=True, gridspec_kw={"height_ratios": [4, 0.7, 1.0]})
        _panel_curves(axes[0], bundle)
        _panel_strip(axes[1], bundle)
        _panel_risk(axes[2], bundle)
        fig.subplots_adjust(left=0.12, right=0.97, top=0.94, bottom=0.08, hspace=0.12)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    finally:
        rcParams.update(old)
    svg = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
    return svg


def _panel_curves(ax, bundle):
    km = bundle["km"]
    t = [r["time"] for r in km]
    s = [r["survival"] for r in km]
    t_end = bundle["dataset"]["max_time"]
    ax.step(t + [t_end], s + [s[-1]], where="post", color=KM_COLOR, lw=1.4, label="Kaplan-Meier")
    fc = bundle["fitted_curve"]
    ax.plot(fc["time"], fc["survival"], color="black", lw=1.2, label=bundle["model"]["family"])
    for c in bundle["censor_times"]:
        ax.axvline(c, color="black", ls="--", lw=0.3, alpha=0.5)
    ax.set_ylim(0, 1.02)
    ax.set_xlim(0, t_end)
    ax.set_ylabel("Survival")
    ax.legend(loc="upper right", frameon=False)
    ov = bundle["overall"]
    tft_p = ov["tft_p"]
    ax.set_title(
        f"{bundle['model']['family']}: {ov['I']} intervals, "
        f"TFT p = {tft_p:.4f}, PAVSI p = {ov['pavsi_p']:.4f}, "
        f"Bonferroni {'reject' if ov['bonferroni_reject'] else 'accept'}",
        fontsize=9,
    )
    ax.text(-0.09, 1.0, "a", transform=ax.transAxes, fontweight="bold", va="top")


def _panel_strip(ax, bundle):
    for r in bundle["rows"]:
        color = STRIP_COLORS[r["flag"]]
        ax.add_patch(
            Rectangle(
                (r["lower"], 0.0), r["upper"] - r["lower"], 1.0,
                facecolor=color, edgecolor="black", lw=0.3,
            )
        )
    ax.set_ylim(0, 1)
    ax.set_yticks([])
    ax.text(-0.09, 1.0, "b", transform=ax.transAxes, fontweight="bold", va="top")


def _panel_risk(ax, bundle):
    ar = bundle["at_risk"]
    for t, n in zip(ar["time"], ar["n"]):
        ax.text(t, 0.5, str(n), ha="center", va="center")
    ax.set_ylim(0, 1)
    ax.set_yticks([])
    ax.set_xticks(ar["time"])
    ax.set_xticklabels([f"{t:g}" if t == int(t) else f"{t:.1f}" for t in ar["time"]])
    ax.set_xlabel("Time")
    ax.set_title("Numbers at risk", fontsize=8, loc="left")
    ax.text(-0.09, 1.0, "c", transform=ax.transAxes, fontweight="bold", va="top")
    for side in ("top", "right", "left"):
        ax.spines[side].set_visible(False)


def strip_segments(bundle: dict) -> dict[str, int]:
    """Counts of strip segments per color category, for quick inspection."""
    out: dict[str, int] = {}
    for r in bundle["rows"]:
        out[r["flag"]] = out.get(r["flag"], 0) + 1
    return out


def fit_table(models: list[dict]) -> list[dict]:
    """Rank fit blocks by AIC (BIC as tiebreak); failed fits go last."""
    ok = [m for m in models if m.get("aic") is not None]
    failed = [m for m in models if m.get("aic") is None]
    ok.sort(key=lambda m: (m["aic"], m["bic"]))
    bic_rank = {m["family"]: i + 1 for i, m in enumerate(sorted(ok, key=lambda m: m["bic"]))}
    rows = []
    for i, m in enumerate(ok, start=1):
        rows.append(
            {
                "family": m["family"],
                "log_likelihood": m["log_likelihood"],
                "aic": m["aic"],
                "bic": m["bic"],
                "aic_rank": i,
                "bic_rank": bic_rank[m["family"]],
                "converged": m.get("converged", True),
            }
        )
    for m in failed:
        rows.append({"family": m["family"], "error": m.get("error")})
    return rows
