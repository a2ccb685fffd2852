"""``ivrobust`` command line: estimate, psiv, bootstrap, simulate.

Exit codes: 0 success, 2 data or specification error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import LEVELS, bootstrap_t
from .data import ModelSpec, build_design, load_csv
from .diagnostics import diagnose
from .errors import DataError, IVRobustError, NumericalError
from .estimator import fit_2sls
from .psiv import fit_logit, psiv_estimate, psiv_variance
from .simulator import DgpConfig, run_monte_carlo
from .variance import sigma_c, sigma_cmr, sigma_mr

SCHEMA_VERSION = 1
EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3
VCE_CHOICES = ("c", "mr", "cluster-mr")


def _split(s: str | None) -> list[str]:
    return [t.strip() for t in s.split(",") if t.strip()] if s else []


def _clean(obj):
    """JSON-safe copy: ndarrays to lists, non-finite floats to null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dump(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=False) + "\n"


def _g(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "NA"
    return f"{x:.6g}"


def _table(header, rows) -> str:
    cells = [header] + [[c if isinstance(c, str) else _g(c) for c in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    lines = ["  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(r, widths))) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _add_data_args(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--outcome", required=True)
    p.add_argument("--endogenous", required=True, help="comma-separated endogenous columns")
    p.add_argument("--instruments", required=True, help="comma-separated excluded instruments")
    p.add_argument("--covariates", default="", help="comma-separated exogenous covariates")
    p.add_argument("--cluster", default=None, help="cluster id column")
    p.add_argument("--no-constant", action="store_true", help="do not add a constant")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--na", default="NA", help="missing-value token")
    p.add_argument("--format", choices=("text", "json"), default="text")


def _design(args):
    data = load_csv(args.data, delimiter=args.delimiter, na_token=args.na)
    spec = ModelSpec(
        outcome=args.outcome, endogenous=_split(args.endogenous), instruments=_split(args.instruments),
        covariates=_split(args.covariates), cluster=args.cluster, constant=not args.no_constant,
    )
    return data, build_design(data, spec)


def cmd_estimate(args) -> int:
    vce = [v.lower() for v in _split(args.vce)] or ["c", "mr"]
    bad = [v for v in vce if v not in VCE_CHOICES]
    if bad:
        raise DataError(f"unknown --vce value(s): {', '.join(bad)}")
    if "cluster-mr" in vce and args.cluster is None:
        raise DataError("cluster id required for --vce cluster-mr (pass --cluster)")
    data, design = _design(args)
    est = fit_2sls(design)
    variances = {}
    if "c" in vce:
        variances["c"] = sigma_c(est, design)
    if "mr" in vce:
        variances["mr"] = sigma_mr(est, design)
    if "cluster-mr" in vce:
        variances["cmr"] = sigma_cmr(est, design, correction=not args.no_correction)
    diag = diagnose(est, design, clustered=args.cluster is not None)

    coefs = []
    for j, name in enumerate(design.x_names):
        row = {"name": name, "estimate": est.beta[j]}
        for key, v in variances.items():
            row[f"se_{key}"] = v.se[j]
        coefs.append(row)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "estimate",
        "n": design.n,
        "dropped_rows": data.dropped_count,
        "coefficients": coefs,
        "variance": {k: {"flavor": v.flavor, "sigma": v.sigma, "n_clusters": v.n_clusters,
                         "correction": v.correction} for k, v in variances.items()},
        "diagnostics": {
            "j_stat": diag.j.stat, "j_dof": diag.j.dof, "j_pvalue": diag.j.pvalue,
            "f_classical": diag.f_classical, "f_robust": diag.f_robust,
            "cragg_donald": diag.cragg_donald, "flags": list(diag.flags),
        },
    }
    if design.p == 1:
        payload["rho"] = est.beta[-1]
        for key, v in variances.items():
            payload[f"se_{key}"] = v.se[-1]

    if args.format == "json":
        sys.stdout.write(_dump(payload))
    else:
        header = ["variable", "estimate"] + [f"se_{k}" for k in variances]
        rows = [[c["name"], c["estimate"]] + [c[f"se_{k}"] for k in variances] for c in coefs]
        out = [f"2SLS estimates (n = {design.n}, dropped = {data.dropped_count})", _table(header, rows), ""]
        out.append(f"J test: stat = {_g(diag.j.stat)}, dof = {diag.j.dof}, p-value = {_g(diag.j.pvalue)}")
        endog = design.x_names[design.l:]
        for j, name in enumerate(endog):
            out.append(f"First-stage F ({name}): classical = {_g(diag.f_classical[j])}, "
                       f"robust = {_g(diag.f_robust[j])}")
        out.append(f"Cragg-Donald: {_g(diag.cragg_donald)}")
        for f in diag.flags:
            out.append(f"note: {f}")
        sys.stdout.write("\n".join(out) + "\n")
    return EXIT_OK


def cmd_psiv(args) -> int:
    data, design = _design(args)
    fit = fit_logit(design)
    est = psiv_estimate(design, fit)
    var = psiv_variance(design, fit, est)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "psiv",
        "n": design.n,
        "logit": {"coefficients": dict(zip(design.z_names, fit.delta_pi)), "iterations": fit.iterations,
                  "gradient_norm": fit.gradient_norm, "loglik": fit.loglik, "clamped": fit.clamped},
        "coefficients": [{"name": nm, "estimate": b, "se": s} for nm, b, s in zip(design.x_names, est.beta, var.se)],
        "sigma": var.sigma,
        "rho": est.beta[-1],
        "se": var.se[-1],
    }
    if args.format == "json":
        sys.stdout.write(_dump(payload))
    else:
        rows = [[nm, b, s] for nm, b, s in zip(design.x_names, est.beta, var.se)]
        out = [f"Propensity-score IV (logit first stage, {fit.iterations} Newton steps, n = {design.n})",
               _table(["variable", "estimate", "se"], rows)]
        sys.stdout.write("\n".join(out) + "\n")
    return EXIT_OK


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = secrets.randbits(32)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def cmd_bootstrap(args) -> int:
    data, design = _design(args)
    seed = _seed(args)
    index = -1 if args.coef is None else design.x_names.index(args.coef) if args.coef in design.x_names else None
    if index is None:
        raise DataError(f"unknown coefficient {args.coef!r}; choose from {', '.join(design.x_names)}")
    res = bootstrap_t(design, index=index, B=args.reps, seed=seed, clustered=args.cluster is not None,
                      threads=args.threads, correction=not args.no_correction)
    name = design.x_names[res.index]
    cv = res.critical_values()
    cis = {str(a): {"equal_tailed": res.ci(a, "equal_tailed"), "symmetric": res.ci(a, "symmetric")} for a in LEVELS}
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "bootstrap",
        "seed": seed,
        "B": res.B,
        "coefficient": name,
        "estimate": res.estimate[res.index],
        "se": res.se[res.index],
        "studentizer": res.flavor,
        "clustered": res.clustered,
        "failures": res.failures,
        "warning": res.warning,
        "critical_values": {str(a): v for a, v in cv.items()},
        "ci": cis,
    }
    if args.format == "json":
        sys.stdout.write(_dump(payload))
    else:
        rows = []
        for a in LEVELS:
            et, sy = cis[str(a)]["equal_tailed"], cis[str(a)]["symmetric"]
            rows.append([f"{1 - a:.0%}", et[0], et[1], sy[0], sy[1]])
        out = [f"Percentile-t bootstrap for {name}: estimate = {_g(res.estimate[res.index])}, "
               f"se_{res.flavor.lower()} = {_g(res.se[res.index])}, B = {res.B}, redrawn = {res.failures}",
               _table(["level", "eq_lo", "eq_hi", "sym_lo", "sym_hi"], rows)]
        if res.warning:
            out.append(f"warning: {res.warning}")
        sys.stdout.write("\n".join(out) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = DgpConfig.from_json(args.config)
    if args.n is not None:
        config = config.replace(n=args.n)
    seed = _seed(args)
    report = run_monte_carlo(config, args.reps, seed=seed, level=args.level, threads=args.threads)
    summary = {"schema_version": SCHEMA_VERSION, "command": "simulate", "seed": seed,
               "config": config.to_dict(), **report.summary()}
    out_dir = Path(args.out_dir) if args.out_dir else None
    text = "\n".join(
        [f"Monte Carlo: {report.completed} of {report.reps} replicates (skipped {report.skipped}), "
         f"n = {config.n}, rho0 = {_g(report.rho0)}",
         _table(["mean", "sd", "mean_se_c", "mean_se_mr", "se_c/sd", "se_mr/sd", "J rej", "cov_c", "cov_mr"],
                [[report.mean_rho, report.sd_rho, report.mean_se_c, report.mean_se_mr, report.ratio_c,
                  report.ratio_mr, report.j_reject, report.coverage_c, report.coverage_mr]])]
    ) + "\n"
    rendered = _dump(summary) if args.format == "json" else text
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / ("summary.json" if args.format == "json" else "summary.txt")).write_text(rendered)
        (out_dir / "replicates.csv").write_text(report.rows_csv())
    sys.stdout.write(rendered)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ivrobust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="2SLS with conventional and multiple-LATEs-robust SEs")
    _add_data_args(p)
    p.add_argument("--vce", default="c,mr", help="comma list of c, mr, cluster-mr")
    p.add_argument("--no-correction", action="store_true", help="disable the cluster finite-sample factor")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("psiv", help="propensity-score IV with a logit first stage")
    _add_data_args(p)
    p.set_defaults(func=cmd_psiv)

    p = sub.add_parser("bootstrap", help="misspecification-robust percentile-t bootstrap")
    _add_data_args(p)
    p.add_argument("--coef", default=None, help="coefficient name (default: last endogenous)")
    p.add_argument("--reps", type=int, default=999)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--no-correction", action="store_true")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("simulate", help="Monte Carlo study on a synthetic heterogeneous-effect DGP")
    p.add_argument("--config", required=True, help="DGP config as JSON")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--n", type=int, default=None, help="override the config sample size")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out-dir", default=None, help="write summary and replicates.csv here")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error ({args.command}: data/spec): {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error ({args.command}: numerical): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except IVRobustError as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
