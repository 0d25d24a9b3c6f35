"""Command line interface: ``survbit fit | test | figure | simulate``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 fit non-convergence.
Test verdicts never change the exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import __version__
from .data import DataError, load_dataset
from .intervals import (
    DEFAULT_RISK_SET,
    RISK_SETS,
    SpecifiedGrid,
    build_censor_scheme,
    build_specified_scheme,
    default_ten_interval_grid,
)
from .models import FAMILY_NAMES, DegenerateIntervalError, FitError, FittedModel, fit, get_family
from .report import build_bundle, fit_table, render_figure, rows_csv
from .simulation import FULL_REPLICATIONS, TypeIErrorReport, run_grid, scenarios_from_config
from .testsuite import run_full_test

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FIT = 0, 1, 2, 3

log = logging.getLogger("survbit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write(text: str, path: str | None):
    if path in (None, "-"):
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _families(names: str) -> list[str]:
    if names.strip().lower() == "all":
        return list(FAMILY_NAMES)
    out = []
    for name in names.split(","):
        try:
            out.append(get_family(name).name)
        except KeyError:
            raise UsageError(
                f"unknown family {name.strip()!r}; valid names: {', '.join(FAMILY_NAMES)}"
            ) from None
    return out


def cmd_fit(args) -> int:
    data = load_dataset(args.data)
    families = _families(args.families)
    blocks = []
    status = EXIT_OK
    for name in families:
        try:
            m = fit(name, data, seed=args.seed)
        except (FitError, DataError) as exc:
            log.error("%s: fit failed: %s", name, exc)
            blocks.append({"family": name, "error": str(exc)})
            status = EXIT_FIT
            continue
        if not m.converged:
            status = EXIT_FIT
        blocks.append(m.to_dict())
    out = {"dataset": data.summary(), "models": blocks, "ranking": fit_table(blocks)}
    _write(json.dumps(out, indent=2), args.output)
    if args.csv:
        cols = ("family", "log_likelihood", "aic", "bic", "aic_rank", "bic_rank", "converged")
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(rows_csv(out["ranking"], cols))
    return status


def _load_model(path: str, family: str | None) -> FittedModel:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if "model" in obj and isinstance(obj["model"], dict):
        obj = obj["model"]
    if "models" in obj:
        candidates = [m for m in obj["models"] if "error" not in m]
        if family is None:
            if len(candidates) != 1:
                raise UsageError("model file holds several fits; choose one with --family")
            obj = candidates[0]
        else:
            want = get_family(family).name
            match = [m for m in candidates if get_family(m["family"]).name == want]
            if not match:
                raise UsageError(f"no fitted {want} model in {path}")
            obj = match[0]
    try:
        return FittedModel.from_dict(obj)
    except (KeyError, ValueError) as exc:
        raise DataError(f"invalid model in {path}: {exc}") from None


def _scheme(choice: str, data, model, risk_set):
    if choice == "censor":
        return build_censor_scheme(data, model, risk_set)
    kind, _, arg = choice.partition(":")
    if kind == "fixed":
        try:
            k = int(arg or 10)
        except ValueError:
            raise UsageError(f"bad interval count in {choice!r}") from None
        if k < 1:
            raise UsageError("fixed:K needs K >= 1")
        return build_specified_scheme(data, model, default_ten_interval_grid(data, k), risk_set)
    if kind == "grid" and arg:
        try:
            with open(arg, encoding="utf-8") as fh:
                grid = SpecifiedGrid.parse(fh.read())
        except OSError as exc:
            raise DataError(f"cannot read grid file: {exc}") from None
        except ValueError as exc:
            raise DataError(f"grid file {arg}: {exc}") from None
        return build_specified_scheme(data, model, grid, risk_set)
    raise UsageError(f"--intervals must be censor, fixed:K or grid:FILE, got {choice!r}")


def run_test(args):
    data = load_dataset(args.data)
    model = _load_model(args.model, args.family)
    scheme = _scheme(args.intervals, data, model, args.risk_set)
    mode = "midpoint" if args.pvalues == "mid" else "randomized"
    result = run_full_test(scheme, mode, seed=args.seed)
    return build_bundle(data, model, result, source=os.path.basename(args.data))


def cmd_test(args) -> int:
    bundle = run_test(args)
    _write(json.dumps(bundle, indent=2), args.output)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(rows_csv(bundle["rows"]))
    if args.figure:
        render_figure(bundle, args.figure)
    return EXIT_OK


def cmd_figure(args) -> int:
    try:
        with open(args.bundle, encoding="utf-8") as fh:
            bundle = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report bundle: {exc}") from None
    svg = render_figure(bundle)
    _write(svg, args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    if args.full_scale:
        cfg["replications"] = FULL_REPLICATIONS
    if args.replications is not None:
        cfg["replications"] = args.replications
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.refit:
        cfg["refit"] = True
    try:
        scenarios = scenarios_from_config(cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad simulation config: {exc}") from None
    t0 = time.time()

    def progress(r):
        s = r.scenario
        log.info(
            "%s/%s lambda=%.4g n=%d: bonferroni=%.4f tft=%.4f (%.0fs)",
            s.interval_mode, s.pvalue_mode, s.rate, s.n_patients,
            r.rate("bonferroni"), r.rate("tft"), time.time() - t0,
        )

    report: TypeIErrorReport = run_grid(scenarios, workers=args.workers, progress=progress)
    paths = report.write(args.outdir)
    print(json.dumps({"n_datasets": report.n_datasets, "written": paths}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="survbit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"survbit {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit parametric families by maximum likelihood")
    f.add_argument("data", help="time,event table (comma, tab or semicolon delimited)")
    f.add_argument("--families", default="all", help="comma-separated names or 'all'")
    f.add_argument("-o", "--output", help="JSON output path (default stdout)")
    f.add_argument("--csv", help="also write the AIC/BIC ranking as CSV")
    f.add_argument("--seed", type=int, default=0, help="seed for optimizer restarts")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("test", help="run the interval tests for one fitted model")
    t.add_argument("data")
    t.add_argument("--model", required=True, help="model JSON (single model, fit output or bundle)")
    t.add_argument("--family", help="pick this family from a multi-model fit file")
    t.add_argument("--intervals", default="censor", help="censor | fixed:K | grid:FILE")
    t.add_argument("--pvalues", choices=("mid", "rand"), default="mid")
    t.add_argument("--seed", type=int, help="seed for randomized p-values")
    t.add_argument("--risk-set", choices=RISK_SETS, default=DEFAULT_RISK_SET)
    t.add_argument("-o", "--output", help="bundle JSON path (default stdout)")
    t.add_argument("--csv", help="also write per-interval rows as CSV")
    t.add_argument("--figure", help="also render the SVG figure to this path")
    t.set_defaults(func=cmd_test)

    g = sub.add_parser("figure", help="render the three-panel SVG from a test bundle")
    g.add_argument("bundle")
    g.add_argument("-o", "--output", help="SVG path (default stdout)")
    g.set_defaults(func=cmd_figure)

    s = sub.add_parser("simulate", help="type I error simulation study")
    s.add_argument("--config", help="JSON grid config")
    s.add_argument("--replications", type=int)
    s.add_argument("--full-scale", action="store_true", help="10,000 replications per cell")
    s.add_argument("--seed", type=int)
    s.add_argument("--refit", action="store_true", help="test the refitted MLE instead of the true rate")
    s.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    s.add_argument("--outdir", default="simulation_out")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"survbit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DegenerateIntervalError, OSError) as exc:
        print(f"survbit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FitError as exc:
        print(f"survbit: fit error: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
