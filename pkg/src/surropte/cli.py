"""Command-line surface.

Four subcommands: ``estimate`` fits the weighted and augmented estimators
on a user CSV and writes point estimates, resampling intervals, and the
transformation curve; ``simulate`` runs one benchmark scenario; ``truth``
computes the Monte Carlo population targets; ``diagnose`` checks the
stochastic-ordering and support-overlap assumptions behind a previous
estimate. Scalar results go to JSON, curves and tables to CSV, and the
report path also renders PNG figures next to them.

Exit codes: 0 on success, 2 on validation problems (bad flags, bad input
schema), 3 on estimation failures (no overlap, unstable ratio, resampling
breakdown). Validation messages are one line on stderr, prefixed
"error:", with the offending item named.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .data import Dataset, load_csv
from .errors import (
    DimensionError,
    NoOverlapError,
    ParseError,
    SampleTooSmallError,
    SchemaError,
    SurroPteError,
)
from .kernels import KernelConfig
from .propensity import DEFAULT_CLIP, BasisSpec, fit_propensity, ipw_weights
from .resampling import PerturbationConfig, PteReport, run_resampling
from .simulation import (
    FROZEN_TRUTH,
    format_rows,
    monte_carlo_truth,
    rows_to_csv,
    run_scenario,
    scenario_table,
)

#: Errors that indicate unusable input rather than a failed estimation.
VALIDATION_ERRORS = (SchemaError, ParseError, DimensionError, SampleTooSmallError)


class CliError(Exception):
    """Flag-level validation failure; carries the one-line reason."""


def _fail(reason: str) -> int:
    print(f"error: {reason}", file=sys.stderr)
    return 2


def _resolve_seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("SURROPTE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"SURROPTE_SEED is not an integer: {env!r}")
    return 0


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(command: str, config: dict, seed: int, started: float,
              input_digest: Optional[str] = None) -> dict:
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "input_digest": input_digest,
        "version": __version__,
        "wall_time": round(time.time() - started, 3),
    }


# =====================================================================
# estimate
# =====================================================================


def _report_block(report: PteReport, base) -> dict:
    lo, hi = report.ci_pte
    return {
        "pte": base.effects.pte,
        "delta": base.effects.delta,
        "delta_g": base.effects.delta_g,
        "lambda": base.transform.lam,
        "se_pte": report.se_pte,
        "se_delta": report.se_delta,
        "se_delta_g": report.se_delta_g,
        "ci_lo": lo,
        "ci_hi": hi,
        "ci_level": report.ci_level,
        "n_failed": report.n_failed,
    }


def _gcurve_rows(est: str, base, report: PteReport, z: float, percentile: bool):
    s = base.grid.points
    g = base.transform.g
    reps = report.g_replicates
    rows = []
    if reps is None or np.isnan(reps).all():
        for i in range(s.size):
            rows.append((est, s[i], g[i], "", "", ""))
        return rows
    se = np.nanstd(reps, axis=0, ddof=1)
    if percentile:
        lo = np.nanquantile(reps, (1 - report.ci_level) / 2, axis=0)
        hi = np.nanquantile(reps, (1 + report.ci_level) / 2, axis=0)
    else:
        lo, hi = g - z * se, g + z * se
    for i in range(s.size):
        rows.append((est, s[i], g[i], se[i], lo[i], hi[i]))
    return rows


def cmd_estimate(args: argparse.Namespace) -> int:
    """Fit the requested estimators on a CSV and write the report artifacts."""
    from scipy.stats import norm

    from .figures import g_curve_figure
    from .pipeline import estimate_dr, estimate_ipw

    started = time.time()
    for role in ("y", "s", "a"):
        if getattr(args, role) is None:
            return _fail(f"missing required column mapping: {role}")
    if not args.x:
        return _fail("missing required column mapping: x")
    if args.input is None:
        return _fail("missing required flag: --input")
    try:
        seed = _resolve_seed(args.seed)
        pc = PerturbationConfig(B=args.B, seed=seed)
    except (CliError, SurroPteError, ValueError) as ex:
        return _fail(str(ex))

    xcols = [c.strip() for c in args.x.split(",") if c.strip()]
    schema = {"y": args.y, "s": args.s, "a": args.a, "x": xcols}
    try:
        data = load_csv(args.input, schema)
    except FileNotFoundError:
        return _fail(f"input file not found: {args.input}")
    except VALIDATION_ERRORS as ex:
        return _fail(str(ex))

    estimators = ["ipw", "dr"] if args.estimator == "both" else [args.estimator]
    ps_basis = args.ps_basis if args.ps_basis else ", ".join(xcols)
    os.makedirs(args.out, exist_ok=True)

    try:
        k = (
            None
            if args.grid_size is None
            else KernelConfig.from_surrogate(data.s, c0=args.c0, grid_size=args.grid_size)
        )
    except SurroPteError as ex:
        return _fail(str(ex))

    blocks: Dict[str, dict] = {}
    curve_rows: List[tuple] = []
    z = norm.ppf(0.5 + pc.ci_level / 2)
    try:
        for est in estimators:
            if est == "ipw":
                base = estimate_ipw(data, ps_basis, k=k, c0=args.c0)
            else:
                base = estimate_dr(
                    data, ps_basis, grm_terms=args.grm_terms,
                    vglm_terms=args.vglm_terms, link=args.link, k=k, c0=args.c0,
                )
            report = run_resampling(
                data, est, pc, base=base, collect_g=True, ps_basis=ps_basis,
                c0=args.c0,
                **(
                    {}
                    if est == "ipw"
                    else {
                        "grm_terms": args.grm_terms,
                        "vglm_terms": args.vglm_terms,
                        "link": args.link,
                    }
                ),
            )
            blocks[est] = _report_block(report, base)
            rows = _gcurve_rows(est, base, report, z,
                                pc.ci_method == "percentile")
            curve_rows.extend(rows)
            has_band = bool(rows) and rows[0][3] != ""
            g_curve_figure(
                os.path.join(args.out, f"gcurve_{est}.png"),
                np.array([r[1] for r in rows], dtype=float),
                np.array([r[2] for r in rows], dtype=float),
                ci_lo=np.array([r[4] for r in rows], dtype=float) if has_band else None,
                ci_hi=np.array([r[5] for r in rows], dtype=float) if has_band else None,
                label=est,
            )
    except VALIDATION_ERRORS as ex:
        return _fail(str(ex))
    except SurroPteError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 3

    def cell(v) -> str:
        return "" if v == "" else repr(float(v))

    _write_json(os.path.join(args.out, "pte.json"), blocks)
    with open(os.path.join(args.out, "gcurve.csv"), "w") as fh:
        fh.write("estimator,s,g,se_g,ci_lo,ci_hi\n")
        for est, s, g, se, lo, hi in curve_rows:
            fh.write(f"{est},{cell(s)},{cell(g)},{cell(se)},{cell(lo)},{cell(hi)}\n")
    config = {
        "input": args.input, "y": args.y, "s": args.s, "a": args.a,
        "x": xcols, "estimator": args.estimator, "ps_basis": ps_basis,
        "grm_terms": args.grm_terms, "vglm_terms": args.vglm_terms,
        "link": args.link, "B": args.B, "c0": args.c0,
        "grid_size": args.grid_size, "out": args.out,
    }
    _write_json(
        os.path.join(args.out, "manifest.json"),
        _manifest("estimate", config, seed, started, _digest(args.input)),
    )
    return 0


# =====================================================================
# simulate
# =====================================================================


def cmd_simulate(args: argparse.Namespace) -> int:
    """Run one benchmark scenario and write its result table."""
    from .figures import results_figure

    started = time.time()
    if args.setting not in (1, 2):
        return _fail(f"unknown setting {args.setting}; expected 1 or 2")
    if args.scenario not in ("cc", "psw", "orw", "bw"):
        return _fail(f"unknown scenario {args.scenario!r}")
    estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]
    if not estimators or any(e not in ("ipw", "dr") for e in estimators):
        return _fail(f"estimators must be a comma list drawn from ipw,dr: {args.estimators!r}")
    if args.n < 40:
        return _fail(f"sample size {args.n} too small for the benchmark")
    if args.reps < 1:
        return _fail("reps must be positive")
    try:
        seed = _resolve_seed(args.seed)
        pc = PerturbationConfig(B=args.B, seed=seed) if args.B else None
    except (CliError, SurroPteError, ValueError) as ex:
        return _fail(str(ex))

    _, truth_pte = FROZEN_TRUTH[args.setting]
    spec = scenario_table(
        args.setting, args.n, reps=args.reps, seed=seed, truth_pte=truth_pte,
    )[args.scenario]
    threads = args.threads if args.threads else (os.cpu_count() or 1)
    try:
        rows = run_scenario(spec, estimators, pc=pc, threads=threads)
    except SurroPteError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 3

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "table.csv"), "w") as fh:
        fh.write(rows_to_csv(rows))
    results_figure(os.path.join(args.out, "table.png"), rows)
    print(format_rows(rows))
    config = {
        "setting": args.setting, "n": args.n, "reps": args.reps,
        "scenario": args.scenario, "estimators": estimators,
        "B": args.B, "out": args.out,
    }
    _write_json(
        os.path.join(args.out, "manifest.json"),
        _manifest("simulate", config, seed, started),
    )
    return 0


# =====================================================================
# truth
# =====================================================================


def cmd_truth(args: argparse.Namespace) -> int:
    """Compute the population targets by repeated counterfactual draws."""
    started = time.time()
    if args.setting not in (1, 2):
        return _fail(f"unknown setting {args.setting}; expected 1 or 2")
    try:
        seed = _resolve_seed(args.seed)
    except CliError as ex:
        return _fail(str(ex))
    try:
        truth = monte_carlo_truth(
            args.setting, n_draw=args.n_draw, reps=args.reps,
            seed=seed, c0=args.c0,
        )
    except VALIDATION_ERRORS as ex:
        return _fail(str(ex))
    except SurroPteError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 3

    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "pte.json"), {
        "delta": truth.delta,
        "delta_g": truth.delta_g,
        "pte": truth.pte,
    })
    with open(os.path.join(args.out, "gcurve.csv"), "w") as fh:
        fh.write("s,g\n")
        for s, g in zip(truth.grid.points.tolist(), truth.g_curve.tolist()):
            fh.write(f"{s!r},{g!r}\n")
    config = {
        "setting": args.setting, "n_draw": args.n_draw, "reps": args.reps,
        "c0": args.c0, "out": args.out,
    }
    _write_json(
        os.path.join(args.out, "manifest.json"),
        _manifest("truth", config, seed, started),
    )
    print(f"setting {args.setting}: delta {truth.delta:.6f} "
          f"delta_g {truth.delta_g:.6f} pte {truth.pte:.6f}")
    return 0


# =====================================================================
# diagnose
# =====================================================================


def _weighted_survival(ghat: np.ndarray, w: np.ndarray, ugrid: np.ndarray) -> np.ndarray:
    total = w.sum()
    if total <= 0:
        raise NoOverlapError("one arm carries no weight; survival curve undefined")
    # indicator matrix over the u grid, weight-averaged per arm
    ind = (ghat[:, None] > ugrid[None, :]).astype(float)
    return (w[:, None] * ind).sum(axis=0) / total


def cmd_diagnose(args: argparse.Namespace) -> int:
    """Check stochastic ordering and support overlap behind an estimate.

    Reads the artifacts a previous ``estimate`` run wrote (manifest, point
    estimates, transformation curve), reloads the input data, reweights it
    with the manifest's propensity basis, and compares the per-arm
    IPW-weighted survival curves of g(S) on a u-grid.
    """
    started = time.time()
    man_path = os.path.join(args.from_dir, "manifest.json")
    try:
        with open(man_path) as fh:
            manifest = json.load(fh)
        with open(os.path.join(args.from_dir, "pte.json")) as fh:
            blocks = json.load(fh)
        curve = np.genfromtxt(
            os.path.join(args.from_dir, "gcurve.csv"),
            delimiter=",", names=True, dtype=None, encoding="utf-8",
        )
    except FileNotFoundError as ex:
        return _fail(f"not an estimate output directory: {ex}")
    if manifest.get("command") != "estimate":
        return _fail(f"{man_path} was not written by the estimate command")

    config = manifest["config"]
    schema = {"y": config["y"], "s": config["s"], "a": config["a"], "x": config["x"]}
    try:
        data = load_csv(config["input"], schema)
        ps = fit_propensity(data, BasisSpec.from_string(config["ps_basis"]))
    except VALIDATION_ERRORS as ex:
        return _fail(str(ex))
    except SurroPteError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 3
    w0, w1 = ipw_weights(ps, data.a, clip=DEFAULT_CLIP)

    est_names = np.asarray(curve["estimator"], dtype=str)
    report: Dict[str, dict] = {}
    exit3 = False
    for est, block in sorted(blocks.items()):
        sel = est_names == est
        if not sel.any():
            continue
        grid_s = np.asarray(curve["s"][sel], dtype=float)
        grid_g = np.asarray(curve["g"][sel], dtype=float)
        ghat = np.interp(data.s, grid_s, grid_g)

        g0, g1 = ghat[data.a == 0], ghat[data.a == 1]
        lo, hi = max(g0.min(), g1.min()), min(g0.max(), g1.max())
        entry = {
            "overlap_lo": float(lo),
            "overlap_hi": float(hi),
            "se_band": 2.0 * float(block["se_pte"]),
        }
        if lo >= hi:
            entry["max_violation"] = None
            entry["flagged"] = True
            entry["no_overlap"] = True
            report[est] = entry
            exit3 = True
            continue
        ugrid = np.linspace(ghat.min(), ghat.max(), args.grid_size)
        surv1 = _weighted_survival(ghat, w1, ugrid)
        surv0 = _weighted_survival(ghat, w0, ugrid)
        gap = surv0 - surv1
        worst = int(np.argmax(gap))
        entry["max_violation"] = float(max(gap[worst], 0.0))
        entry["violation_at"] = float(ugrid[worst])
        entry["flagged"] = bool(entry["max_violation"] > entry["se_band"])
        entry["no_overlap"] = False
        report[est] = entry

    config_out = {"from": args.from_dir, "grid_size": args.grid_size, "out": args.out}
    payload = {
        "checks": report,
        "manifest": _manifest("diagnose", config_out, 0, started,
                              manifest.get("input_digest")),
    }
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "diagnose.json"), payload)
    if exit3:
        print("error: arms share no overlapping support of g(S)", file=sys.stderr)
        return 3
    for est, entry in report.items():
        print(f"{est}: max ordering violation {entry['max_violation']:.4f} "
              f"(band {entry['se_band']:.4f}), overlap "
              f"[{entry['overlap_lo']:.4f}, {entry['overlap_hi']:.4f}]"
              + (", FLAGGED" if entry["flagged"] else ""))
    return 0


# =====================================================================
# parser
# =====================================================================


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="surropte",
        description="Optimal surrogate transformation and PTE estimation",
    )
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="fit estimators on a CSV")
    est.add_argument("--input")
    est.add_argument("--y")
    est.add_argument("--s")
    est.add_argument("--a")
    est.add_argument("--x", default="")
    est.add_argument("--estimator", choices=("ipw", "dr", "both"), default="both")
    est.add_argument("--ps-basis", dest="ps_basis")
    est.add_argument("--grm-terms", dest="grm_terms")
    est.add_argument("--vglm-terms", dest="vglm_terms")
    est.add_argument("--link", choices=("identity", "logit"), default="identity")
    est.add_argument("--B", type=int, default=200)
    est.add_argument("--seed", type=int)
    est.add_argument("--c0", type=float, default=0.11)
    est.add_argument("--grid-size", dest="grid_size", type=int)
    est.add_argument("--out", default="surropte-out")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run one benchmark scenario")
    sim.add_argument("--setting", type=int, required=True)
    sim.add_argument("--n", type=int, default=1000)
    sim.add_argument("--reps", type=int, default=100)
    sim.add_argument("--scenario", default="cc")
    sim.add_argument("--estimators", default="dr")
    sim.add_argument("--B", type=int, default=0)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--threads", type=int, default=0)
    sim.add_argument("--out", default="surropte-out")
    sim.set_defaults(func=cmd_simulate)

    tr = sub.add_parser("truth", help="Monte Carlo population targets")
    tr.add_argument("--setting", type=int, required=True)
    tr.add_argument("--n-draw", dest="n_draw", type=int, default=100_000)
    tr.add_argument("--reps", type=int, default=20)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--c0", type=float, default=0.11)
    tr.add_argument("--out", default="surropte-out")
    tr.set_defaults(func=cmd_truth)

    dia = sub.add_parser("diagnose", help="assumption checks for an estimate")
    dia.add_argument("--from", dest="from_dir", required=True)
    dia.add_argument("--grid-size", dest="grid_size", type=int, default=101)
    dia.add_argument("--out", default=None)
    dia.set_defaults(func=cmd_diagnose)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "diagnose" and args.out is None:
        args.out = args.from_dir
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
