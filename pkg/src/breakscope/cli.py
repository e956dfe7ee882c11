"""Command-line interface: ``breakscope <subcommand> ...``.

Every subcommand writes one JSON document
``{schema_version, command, config_echo, results, timing}`` to ``--output``
or standard output.  Break dates are 1-based positions in the input series.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import check_random_state_seed
from .bayes import (
    build_break_prior,
    build_future_break_prior,
    credible_intervals,
    ddream_sample,
    parameter_draws,
)
from .detect import DetectorConfig, Method, brute_force, detect
from .exceptions import BreakscopeError, DataError
from .mdl import mdl_criterion, mdl_marginal_loglik
from .segstats import Segmentation, build_ar_dataset, build_dataset
from .select import forecast_harness, predictive_draws, sel
from .simlab import DGPS, run_replications

SCHEMA_VERSION = "1"
SCHEMA_PATH = Path(__file__).with_name("schema") / "output.schema.json"

logger = logging.getLogger("breakscope")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# ---------------------------------------------------------------------------
# input


def read_csv_matrix(path) -> tuple[list[str] | None, np.ndarray]:
    """Numeric matrix from a CSV file, skipping a header row if present.

    Raises
    ------
    DataError
        With the 1-based file row and column of the first bad cell.
    """
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        raise DataError(f"{path} contains no data")

    def numeric(cell):
        try:
            float(cell)
            return True
        except ValueError:
            return False

    header = None
    start = 0
    if not all(numeric(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        start = 1
    width = len(rows[start]) if start < len(rows) else 0
    data = []
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise DataError(f"row {i}: expected {width} columns, found {len(row)}")
        vals = []
        for j, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"row {i}, column {j}: non-numeric value {cell.strip()!r}") from None
            if not math.isfinite(v):
                raise DataError(f"row {i}, column {j}: non-finite value {cell.strip()!r}")
            vals.append(v)
        data.append(vals)
    if not data:
        raise DataError(f"{path} has a header but no data rows")
    return header, np.array(data, dtype=float)


def _load_dataset(args):
    """Dataset from ``--input``: column 1 is y, further columns are covariates."""
    _, M = read_csv_matrix(args.input)
    y = M[:, 0]
    if getattr(args, "ar_order", None):
        exog = M[:, 1:] if M.shape[1] > 1 else None
        return build_ar_dataset(y, args.ar_order, exog)
    X = M[:, 1:]
    if not args.no_intercept:
        X = np.column_stack([np.ones(M.shape[0]), X])
    if X.shape[1] == 0:
        raise DataError("no covariates: drop --no-intercept or add columns")
    return build_dataset(y, X)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _methods(text: str, allow_sel: bool = False) -> list:
    out = []
    for name in _str_list(text):
        if allow_sel and name.lower() == "sel":
            out.append("sel")
            continue
        try:
            out.append(Method.parse(name))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if not out:
        raise UsageError("no methods given")
    return out


def _seed(args) -> int:
    return check_random_state_seed(args.seed)


def _threads(args) -> int:
    env = os.environ.get("BREAKSCOPE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"BREAKSCOPE_THREADS must be an integer, got {env!r}") from None
    else:
        n = args.threads
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def _detector_config(args, seed: int) -> DetectorConfig:
    try:
        return DetectorConfig(
            threshold_delta=args.threshold,
            wbs_intervals=args.wbs_intervals,
            min_duration=args.min_duration,
            max_breaks=args.max_breaks,
            scan_radius=args.scan_radius,
            rng_seed=seed,
            cumsum_threshold=args.cumsum_threshold,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommands


def _cmd_detect(args):
    seed = _seed(args)
    cfg = _detector_config(args, seed)
    methods = _methods(args.method, allow_sel=True)
    names = [m if m == "sel" else m.value for m in methods]
    ds = _load_dataset(args)
    results = []
    for meth in methods:
        res = sel(ds, cfg) if meth == "sel" else detect(ds, meth, cfg)
        results.append(res.to_dict(ds.time_offset, include_timing=args.timing))
    echo = {"input": str(args.input), "methods": names, "ar_order": args.ar_order, **cfg.resolve(ds).to_dict()}
    return echo, {"T": ds.T, "K": ds.K, "time_offset": ds.time_offset, "detections": results}


def _cmd_oracle(args):
    seed = _seed(args)
    cfg = _detector_config(args, seed)
    ds = _load_dataset(args)
    res = brute_force(ds, cfg, max_evaluations=args.max_evaluations)
    echo = {"input": str(args.input), "ar_order": args.ar_order, **cfg.resolve(ds).to_dict()}
    return echo, {"T": ds.T, "K": ds.K, "time_offset": ds.time_offset, "detections": [res.to_dict(ds.time_offset, args.timing)]}


def _cmd_simulate(args):
    seed = _seed(args)
    if args.dgp.upper() not in DGPS:
        raise UsageError(f"unknown DGP {args.dgp!r}; choose from {sorted(DGPS)}")
    if args.reps < 1 or args.T < 100:
        raise UsageError("--reps must be >= 1 and --T >= 100")
    methods = _methods(args.methods)
    cfg = _detector_config(args, seed)
    report = run_replications(
        args.dgp, methods, args.reps, args.T, seed, cfg, exact_tol=args.exact_tol, n_jobs=_threads(args)
    )
    echo = {"dgp": args.dgp.upper(), "T": args.T, "reps": args.reps, "methods": [m.value for m in methods],
            "exact_tol": args.exact_tol, **cfg.to_dict()}
    return echo, report.to_dict(include_timing=args.timing)


def _cmd_sample(args):
    seed = _seed(args)
    if args.chains < 7 or args.iters < 1:
        raise UsageError("--chains must be >= 7 and --iters >= 1")
    if not 0 < args.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    ds = _load_dataset(args)
    off = ds.time_offset
    tau = Segmentation.from_breaks([b - off for b in args.breaks], ds.T)
    prior = build_break_prior(tau)
    rng = np.random.default_rng(seed)
    res = ddream_sample(
        ds, prior, n_chains=args.chains, n_iter=args.iters, burn_in=args.burn_in, thin=args.thin,
        seed=rng, min_duration=args.min_duration,
    )
    draws = res.draws + off
    names = [f"tau_{i + 1}" for i in range(tau.m)]
    intervals = credible_intervals(draws, args.level, names=names, integer_columns=names)
    betas, sig = parameter_draws(ds, res.draws, rng)
    params = []
    for k in range(tau.m + 1):
        cols = np.column_stack([betas[:, k, :], sig[:, k]])
        pnames = [f"beta_{j}" for j in range(ds.K)] + ["sigma2"]
        params.append(credible_intervals(cols, args.level, names=pnames))
    results = {
        "T": ds.T,
        "time_offset": off,
        "tau_hat": list(args.breaks),
        "prior": {
            "support_lo": (prior.support_lo + off).tolist(),
            "support_hi": (prior.support_hi + off).tolist(),
        },
        "acceptance": res.acceptance.tolist(),
        "break_draws": draws.tolist(),
        "break_intervals": intervals,
        "regime_intervals": params,
    }
    if args.horizon:
        if ds.K != (args.ar_order or 0) + 1:
            raise UsageError("--horizon requires a pure AR design (--ar-order, no extra columns)")
        paths = predictive_draws(ds, tau, args.horizon, args.n_draws, rng, future_break=args.future_break)
        results["predictive"] = credible_intervals(
            paths, args.level, names=[f"h={j + 1}" for j in range(args.horizon)]
        )
        if args.future_break:
            fb = build_future_break_prior(ds, tau)
            results["future_break_prior"] = {
                "geom_rate": fb.geom_rate,
                "beta_mean": fb.beta_mean.tolist(),
                "beta_var": np.diag(fb.beta_cov).tolist(),
                "sigma2_shape": fb.sigma2_shape,
                "sigma2_scale": fb.sigma2_scale,
            }
    echo = {
        "input": str(args.input), "breaks": list(args.breaks), "ar_order": args.ar_order, "iters": args.iters,
        "chains": args.chains, "burn_in": res.config["burn_in"], "thin": args.thin, "seed": seed,
        "level": args.level, "min_duration": res.config["min_duration"], "future_break": args.future_break,
        "horizon": args.horizon, "n_draws": args.n_draws,
    }
    return echo, results


def _cmd_forecast(args):
    seed = _seed(args)
    cfg = _detector_config(args, seed)
    methods = _methods(args.methods)
    _, M = read_csv_matrix(args.input)
    rep = forecast_harness(
        M[:, 0], ar_orders=args.ar, methods=methods, horizons=args.horizons, start_frac=args.start_frac,
        future_break=args.future_break, n_draws=args.n_draws, refit_every=args.refit_every, seed=seed, cfg=cfg,
    )
    if args.loss_csv:
        header, rows = rep.loss_rows()
        with open(args.loss_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([r[0]] + [repr(v) for v in r[1:]])
    echo = {
        "input": str(args.input), "ar": args.ar, "methods": [m.value for m in methods], "horizons": args.horizons,
        "start_frac": args.start_frac, "future_break": args.future_break, "n_draws": args.n_draws,
        "refit_every": args.refit_every, **cfg.to_dict(),
    }
    results = {
        "scores": rep.table(),
        "n_origins": int(rep.origins.size),
        "first_origin": int(rep.origins[0]) if rep.origins.size else None,
        "skipped_origins": rep.skipped,
    }
    return echo, results


def _cmd_equiv_check(args):
    seed = _seed(args)
    rows = []
    if args.input:
        ds = _load_dataset(args)
        tau = Segmentation.from_breaks([b - ds.time_offset for b in (args.breaks or [])], ds.T)
        rows.append(_equiv_row(ds, tau, args.min_duration))
    else:
        if args.fixtures < 1:
            raise UsageError("--fixtures must be >= 1")
        rng = np.random.default_rng(seed)
        for _ in range(args.fixtures):
            ds, tau = _random_fixture(rng, args.min_n)
            rows.append(_equiv_row(ds, tau, 1))
    worst = max(r["abs_diff"] for r in rows)
    echo = {"input": str(args.input) if args.input else None, "fixtures": len(rows), "seed": seed,
            "min_n": args.min_n, "tolerance": args.tolerance}
    return echo, {"checks": rows, "max_abs_diff": worst, "passed": worst <= args.tolerance}


def _equiv_row(ds, tau, min_duration):
    crit = mdl_criterion(ds, tau, min_duration).value
    marg = mdl_marginal_loglik(ds, tau, min_duration).value
    return {"T": ds.T, "K": ds.K, "breaks": [t + ds.time_offset for t in tau.tau], "mdl": crit,
            "log_marginal": marg, "abs_diff": abs(crit - marg)}


def _random_fixture(rng: np.random.Generator, min_n: int):
    """Random regression with 0-3 breaks and regimes of at least ``min_n`` rows."""
    K = int(rng.integers(1, 4))
    m = int(rng.integers(0, 4))
    lengths = min_n + rng.integers(0, 4 * min_n, size=m + 1)
    T = int(lengths.sum())
    X = np.column_stack([np.ones(T), rng.normal(size=(T, K - 1))])
    y = np.empty(T)
    start = 0
    for n in lengths:
        b = rng.normal(scale=2.0, size=K)
        y[start : start + n] = X[start : start + n] @ b + rng.gamma(2.0) * rng.normal(size=n)
        start += n
    tau = Segmentation(tuple(np.cumsum(lengths)[:-1]), T)
    return build_dataset(y, X), tau


# ---------------------------------------------------------------------------
# parser


def _add_detector_args(p):
    p.add_argument("--threshold", type=float, default=3.0, help="log Bayes-factor threshold for BSMDL/WBSMDL")
    p.add_argument("--wbs-intervals", type=int, default=1000)
    p.add_argument("--min-duration", type=int, default=None)
    p.add_argument("--max-breaks", type=int, default=50)
    p.add_argument("--scan-radius", type=int, default=None)
    p.add_argument("--cumsum-threshold", type=float, default=None)


def _add_common(p, seed=True):
    p.add_argument("--output", "-o", default=None, help="output JSON path (default: stdout)")
    p.add_argument("--timing", action="store_true", help="include wall-clock timings")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="RNG seed (generated and echoed when omitted)")


def _add_input(p, required=True):
    p.add_argument("--input", "-i", required=required, help="CSV file; column 1 is the response")
    p.add_argument("--ar-order", type=int, default=None, help="build an AR(p) design from column 1")
    p.add_argument("--no-intercept", action="store_true", help="do not prepend an intercept column")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="breakscope", description="Change-point detection with MDL marginal likelihoods.")
    parser.add_argument("--version", action="version", version=f"breakscope {__version__}")
    parser.add_argument("--verbose", "-v", action="count", default=0)
    parser.add_argument("--threads", type=int, default=1, help="worker processes (env BREAKSCOPE_THREADS wins)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="run one or more detectors")
    _add_input(p)
    p.add_argument("--method", default="bsmdl", help="comma-separated detectors, or 'sel'")
    _add_detector_args(p)
    _add_common(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("oracle", help="exhaustive search over segmentations (small T)")
    _add_input(p)
    p.add_argument("--max-evaluations", type=int, default=10**7)
    _add_detector_args(p)
    _add_common(p)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("simulate", help="replication study on a benchmark process")
    p.add_argument("--dgp", required=True)
    p.add_argument("--T", type=int, default=1024)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--methods", default="bsmdl,gmdl")
    p.add_argument("--exact-tol", type=int, default=50)
    _add_detector_args(p)
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sample", help="posterior sampling of break dates and regime parameters")
    _add_input(p)
    p.add_argument("--breaks", type=_int_list, required=True, help="estimated breaks, 1-based")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--chains", type=int, default=10)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--min-duration", type=int, default=None)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--horizon", type=int, default=0, help="predictive horizon (0: none)")
    p.add_argument("--n-draws", type=int, default=1000)
    p.add_argument("--future-break", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("forecast", help="expanding-window forecast evaluation")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--ar", type=_int_list, default=[1, 2])
    p.add_argument("--methods", default="bsmdl,wbsmdl,pgmdl")
    p.add_argument("--horizons", type=_int_list, default=[1, 3, 6, 12])
    p.add_argument("--start-frac", type=float, default=0.1)
    p.add_argument("--future-break", action="store_true")
    p.add_argument("--n-draws", type=int, default=200)
    p.add_argument("--refit-every", type=int, default=1)
    p.add_argument("--loss-csv", default=None, help="write per-origin squared errors here")
    _add_detector_args(p)
    _add_common(p)
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("equiv-check", help="compare the MDL criterion with the calibrated marginal likelihood")
    _add_input(p, required=False)
    p.add_argument("--breaks", type=_int_list, default=None)
    p.add_argument("--min-duration", type=int, default=1)
    p.add_argument("--fixtures", type=int, default=100)
    p.add_argument("--min-n", type=int, default=30)
    p.add_argument("--tolerance", type=float, default=1e-4)
    _add_common(p)
    p.set_defaults(func=_cmd_equiv_check)
    return parser


def _emit(doc: dict, path) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise DataError(f"cannot write {path}: {exc.strerror}") from exc


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "ar_order", None) is not None and args.ar_order < 1:
        sys.stderr.write("breakscope: error: --ar-order must be >= 1\n")
        return 1
    if args.seed is None:
        args.seed = check_random_state_seed(None)
    t0 = time.perf_counter()
    try:
        echo, results = args.func(args)
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": args.command,
            "config_echo": echo,
            "results": results,
            "timing": {"wall_seconds": time.perf_counter() - t0} if args.timing else None,
        }
        _emit(doc, args.output)
    except UsageError as exc:
        sys.stderr.write(f"breakscope {args.command}: error: {exc}\n")
        return 1
    except (BreakscopeError, ValueError) as exc:
        sys.stderr.write(f"breakscope {args.command}: data error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
