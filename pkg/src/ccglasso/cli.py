"""Command-line front end.

Subcommands: fit (one penalty pair), path (grid + BIC selection), simulate
(synthetic dataset files), bench (replicated method comparison) and moments
(truncated-moment debugging).  All outputs are deterministic functions of the
flags and seed; --threads only affects wall time.  Exit codes: 0 success,
1 usage or I/O failure, 2 non-convergence (outputs still written).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .benchmark import run_benchmark, write_report
from .data import load_dataset, save_dataset
from .em import EmOptions, fit_em, fit_impute_at_limit
from .exceptions import CCGlassoError
from .simulate import SimScenario, gen_truth, scenario_from_file, simulate
from .truncmoments import TruncRegion, trunc_moments_approx, trunc_moments_mc
from .tuning import fit_path, lambda_rho_max, make_grid


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _parse_bound(value, which):
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        pass
    if not os.path.exists(value):
        raise CCGlassoError(f"--{which} is neither a number nor an existing file: {value}")
    import pandas as pd

    df = pd.read_csv(value)
    if df.shape[1] == 1:
        return df.iloc[:, 0].astype(float).to_numpy()
    if df.shape[1] == 2:
        return {str(k): float(v) for k, v in zip(df.iloc[:, 0], df.iloc[:, 1])}
    raise CCGlassoError(f"bounds file {value} must have one or two columns")


def _load(args):
    return load_dataset(
        args.responses, args.predictors,
        lower=_parse_bound(args.lower, "lower"),
        upper=_parse_bound(args.upper, "upper"),
    )


def _estimate_payload(estimate):
    theta = estimate.theta
    p = theta.shape[0]
    edges = []
    for h in range(p):
        for k in range(h + 1, p):
            if theta[h, k] != 0.0:
                edges.append([h, k, float(theta[h, k])])
    return {
        "b": estimate.b.tolist(),
        "theta_diagonal": np.diag(theta).tolist(),
        "theta_edges": edges,
        "p": p,
        "q": estimate.b.shape[0] - 1,
    }


def _em_options(args, default_seed: int = 0):
    seed = args.seed if getattr(args, "seed", None) is not None else default_seed
    return EmOptions(
        moment_mode=args.moment_mode,
        mc_samples=args.mc_samples,
        seed=seed,
    )


def cmd_fit(args) -> int:
    dataset = _load(args)
    lam, rho = args.lam, args.rho
    if args.lambda_max or args.rho_max or lam is None or rho is None:
        lam_max, rho_max, _ = lambda_rho_max(dataset)
        if args.lambda_max:
            lam = lam_max
        if args.rho_max:
            rho = rho_max
    if lam is None or rho is None:
        raise CCGlassoError("provide --lambda/--rho values or --lambda-max/--rho-max")
    fitter = fit_em if args.method == "em" else fit_impute_at_limit
    opts = _em_options(args)
    result = fitter(dataset, lam, rho, opts=opts)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_json(os.path.join(args.out_dir, "estimate.json"),
                {**_estimate_payload(result.estimate),
                 "lambda": result.lam, "rho": result.rho})
    _write_json(os.path.join(args.out_dir, "diagnostics.json"), {
        "lambda": result.lam, "rho": result.rho, "method": result.method,
        "converged": result.converged, "em_iterations": result.em_iterations,
        "m_iterations": result.m_iterations, "kkt_residual": result.kkt_residual,
        "q_trace": result.q_trace, "q_decreased": result.q_decreased,
        "seed": opts.seed, "moment_mode": args.moment_mode,
    })
    return 0 if result.converged else 2


def cmd_path(args) -> int:
    dataset = _load(args)
    lam_max, rho_max, _ = lambda_rho_max(dataset)
    grid = make_grid(lam_max, rho_max, n_lambda=args.n_lambda, n_rho=args.n_rho,
                     lambda_min_ratio=args.lambda_min_ratio or args.min_ratio,
                     rho_min_ratio=args.rho_min_ratio or args.min_ratio)
    opts = _em_options(args)
    path = fit_path(dataset, grid, opts=opts, method=args.method,
                    bic_mode=args.bic, mc_samples=args.mc_samples)
    os.makedirs(args.out_dir, exist_ok=True)
    rows = ["lambda,rho,df,bic,n_edges,n_beta,em_iters,kkt_residual"]
    order = []
    for i, lam in enumerate(grid.lambdas):
        for j, rho in enumerate(grid.rhos):
            order.append([i, j])
            fit = path.fits[i][j]
            if fit is None:
                rows.append(f"{float(lam)!r},{float(rho)!r},,,,,,")
                continue
            est = fit.estimate
            n_edges = int(np.count_nonzero(np.triu(est.theta, 1)))
            n_beta = int(np.count_nonzero(est.b[1:]))
            rows.append(
                f"{float(lam)!r},{float(rho)!r},{fit.df()},{float(path.bic[i, j])!r},"
                f"{n_edges},{n_beta},{fit.em_iterations},{float(fit.kkt_residual)!r}"
            )
    with open(os.path.join(args.out_dir, "path.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
    lam_s, rho_s = path.selected
    sel_fit = None
    for i in range(len(grid.lambdas)):
        for j in range(len(grid.rhos)):
            if (path.fits[i][j] is not None and grid.lambdas[i] == lam_s
                    and grid.rhos[j] == rho_s):
                sel_fit = path.fits[i][j]
    payload = {
        "selected_lambda": lam_s, "selected_rho": rho_s, "bic_mode": path.bic_mode,
        "lambda_max": lam_max, "rho_max": rho_max,
        "grid": {"lambdas": grid.lambdas.tolist(), "rhos": grid.rhos.tolist()},
        "fit_order": order,
        "warm_starts": {f"{i},{j}": v for (i, j), v in sorted(path.warm_starts.items())},
        "failures": {f"{i},{j}": v for (i, j), v in sorted(path.failures.items())},
        "seed": opts.seed, "moment_mode": args.moment_mode,
    }
    if sel_fit is not None:
        payload["estimate"] = _estimate_payload(sel_fit.estimate)
    _write_json(os.path.join(args.out_dir, "selected.json"), payload)
    return 0


def _scenario(args) -> SimScenario:
    if args.scenario:
        scen = scenario_from_file(args.scenario)
        if getattr(args, "seed", None) is not None and args.seed != scen.seed:
            raise CCGlassoError("--seed conflicts with the scenario file; set it in one place")
        return scen
    return SimScenario(
        n=args.n, p=args.p, q=args.q, censor_fraction=args.censor_fraction,
        target_pi=args.target_pi, u=args.u, edge_prob=args.edge_prob,
        seed=args.seed if args.seed is not None else 0,
    )


def cmd_simulate(args) -> int:
    scen = _scenario(args)
    truth = gen_truth(scen)
    dataset = simulate(scen, truth)
    os.makedirs(args.out_dir, exist_ok=True)
    save_dataset(dataset,
                 os.path.join(args.out_dir, "responses.csv"),
                 os.path.join(args.out_dir, "predictors.csv"))
    _write_json(os.path.join(args.out_dir, "scenario.json"), vars(scen).copy())
    theta = truth.theta_true
    edges = [[h, k, float(theta[h, k])]
             for h in range(scen.p) for k in range(h + 1, scen.p) if theta[h, k] != 0.0]
    _write_json(os.path.join(args.out_dir, "truth.json"), {
        "b_true": truth.b_true.tolist(),
        "theta_diagonal": np.diag(theta).tolist(),
        "theta_edges": edges,
        "offdiag_scale": truth.offdiag_scale,
        "censored_share": float((dataset.status != 0).mean()),
    })
    return 0


def cmd_bench(args) -> int:
    scen = _scenario(args)
    big = scen.p > 100 or scen.q > 100 or args.replicates > 30
    if big and not args.full:
        raise CCGlassoError(
            "large benchmark requested (p/q > 100 or replicates > 30); rerun with --full"
        )
    ratios = tuple(float(x) for x in args.ratios.split(","))
    report = run_benchmark(scen, args.replicates, ratios=ratios,
                           n_sweep=args.n_sweep,
                           opts=_em_options(args, default_seed=scen.seed),
                           threads=args.threads)
    write_report(report, args.out_dir)
    _write_json(os.path.join(args.out_dir, "bench_meta.json"), {
        "scenario": vars(scen).copy(), "replicates": args.replicates,
        "ratios": list(ratios), "n_sweep": args.n_sweep,
        "failed_replicates": report.n_failed,
    })
    return 0


def _parse_vector(text):
    return np.array([float(x) for x in text.split(",")])


def cmd_moments(args) -> int:
    mean = _parse_vector(args.mean)
    cov = np.array([[float(v) for v in row.split(",")] for row in args.cov.split(";")])
    lower = _parse_vector(args.lower) if args.lower else np.full(mean.size, -np.inf)
    upper = _parse_vector(args.upper) if args.upper else np.full(mean.size, np.inf)
    region = TruncRegion(lower=lower, upper=upper)
    if args.moment_mode == "approx":
        mom = trunc_moments_approx(mean, cov, region)
    else:
        mom = trunc_moments_mc(mean, cov, region, args.mc_samples, args.seed)
    json.dump({"m1": mom.mean.tolist(), "m2": mom.second.tolist()},
              sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _add_io_flags(sp):
    sp.add_argument("--responses", required=True, help="response CSV (header row)")
    sp.add_argument("--predictors", required=True, help="predictor CSV (header row)")
    sp.add_argument("--lower", default=None,
                    help="lower bound: scalar or per-column CSV file")
    sp.add_argument("--upper", default=None,
                    help="upper bound: scalar or per-column CSV file")
    sp.add_argument("--out-dir", default="ccglasso-out")


def _add_common_flags(sp):
    sp.add_argument("--moment-mode", choices=("approx", "mc"), default="approx")
    sp.add_argument("--mc-samples", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--threads", type=int, default=1,
                    help="worker pool size; never changes numerical output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ccglasso", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one penalty pair")
    _add_io_flags(fit)
    _add_common_flags(fit)
    fit.add_argument("--lambda", dest="lam", type=float, default=None)
    fit.add_argument("--rho", type=float, default=None)
    fit.add_argument("--lambda-max", action="store_true",
                     help="use the computed coefficient-penalty boundary")
    fit.add_argument("--rho-max", action="store_true",
                     help="use the computed precision-penalty boundary")
    fit.add_argument("--method", choices=("em", "impute"), default="em")
    fit.set_defaults(func=cmd_fit)

    path = sub.add_parser("path", help="fit a penalty grid and select by BIC")
    _add_io_flags(path)
    _add_common_flags(path)
    path.add_argument("--n-lambda", type=int, default=10)
    path.add_argument("--n-rho", type=int, default=10)
    path.add_argument("--min-ratio", type=float, default=0.1)
    path.add_argument("--lambda-min-ratio", type=float, default=None)
    path.add_argument("--rho-min-ratio", type=float, default=None)
    path.add_argument("--bic", choices=("approx", "exact"), default="approx")
    path.add_argument("--method", choices=("em", "impute"), default="em")
    path.set_defaults(func=cmd_path)

    sim = sub.add_parser("simulate", help="write a synthetic censored dataset")
    sim.add_argument("--scenario", default=None, help="JSON or TOML scenario file")
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--p", type=int, default=50)
    sim.add_argument("--q", type=int, default=50)
    sim.add_argument("--censor-fraction", type=float, default=0.2)
    sim.add_argument("--target-pi", type=float, default=0.4)
    sim.add_argument("--u", type=float, default=50.0)
    sim.add_argument("--edge-prob", type=float, default=0.2)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out-dir", default="ccglasso-out")
    sim.set_defaults(func=cmd_simulate)

    bench = sub.add_parser("bench", help="replicated comparison of both methods")
    bench.add_argument("--scenario", default=None, help="JSON or TOML scenario file")
    bench.add_argument("--n", type=int, default=50)
    bench.add_argument("--p", type=int, default=10)
    bench.add_argument("--q", type=int, default=10)
    bench.add_argument("--censor-fraction", type=float, default=0.2)
    bench.add_argument("--target-pi", type=float, default=0.4)
    bench.add_argument("--u", type=float, default=50.0)
    bench.add_argument("--edge-prob", type=float, default=0.2)
    bench.add_argument("--replicates", type=int, default=1)
    bench.add_argument("--ratios", default="1.0,0.75,0.5,0.25")
    bench.add_argument("--n-sweep", type=int, default=10)
    bench.add_argument("--full", action="store_true",
                       help="allow large scenarios (p or q > 100, > 30 replicates)")
    bench.add_argument("--out-dir", default="ccglasso-out")
    _add_common_flags(bench)
    bench.set_defaults(func=cmd_bench)

    mom = sub.add_parser("moments", help="print truncated-Gaussian moments as JSON")
    mom.add_argument("--mean", required=True, help="comma-separated vector")
    mom.add_argument("--cov", required=True, help="semicolon-separated rows")
    mom.add_argument("--lower", default=None)
    mom.add_argument("--upper", default=None)
    mom.add_argument("--moment-mode", choices=("approx", "mc"), default="approx")
    mom.add_argument("--mc-samples", type=int, default=100000)
    mom.add_argument("--seed", type=int, default=0)
    mom.set_defaults(func=cmd_moments)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (CCGlassoError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
