"""Command-line front end: trace analysis, model fitting, simulation sweeps,
and Pareto-frontier extraction.

All subcommands emit plot-ready CSV data (never images) in SI units (bits,
Hz, seconds), with a header row, deterministically reproducible from the
same inputs and seed. Exit codes: 0 success, 2 input error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from . import laplace, pareto, regression, simulation, stats, traces
from .errors import (
    IllConditionedMixtureError,
    NoConvergenceError,
    RankDeficientError,
    VrsliceError,
)

_NUMERICAL_ERRORS = (RankDeficientError, NoConvergenceError, IllConditionedMixtureError)


def _int_list(text: str):
    return [int(x) for x in text.split(",") if x]


def _float_list(text: str):
    return [float(x) for x in text.split(",") if x]


def _load_trace_arg(trace_path: str, args) -> traces.FrameTrace:
    path = Path(trace_path)
    sidecar = path.with_suffix(".json")
    if getattr(args, "rate_bps", None):
        meta = traces.TraceMeta(content=getattr(args, "content", None) or path.stem,
                                rate_bps=args.rate_bps, fps=args.fps)
    elif sidecar.exists():
        meta = traces.load_meta(sidecar)
    else:
        raise VrsliceError(
            f"no metadata for {path}: provide --rate-bps/--fps or a {sidecar.name} sidecar"
        )
    return traces.load_trace(path, meta)


# --- analyze ---

def cmd_analyze(args) -> int:
    trace = _load_trace_arg(args.trace, args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for window in args.windows:
        rates = traces.moving_average_rate(trace, window)
        dist = stats.EmpiricalDistribution.from_samples(rates)
        with open(out / f"rate_cdf_S{window}.csv", "w", encoding="utf-8") as fh:
            fh.write("rate_bps,cdf\n")
            n = dist.sorted_samples.size
            for i, r in enumerate(dist.sorted_samples):
                fh.write(f"{float(r)!r},{(i + 1) / n!r}\n")

    with open(out / "overflow_percentiles.csv", "w", encoding="utf-8") as fh:
        fh.write("window_frames,std_bps,p95_bps,p99_bps\n")
        for window in args.windows:
            ov = stats.overflow_rate(trace, window, trace.meta.rate_bps)
            fh.write(f"{window},{ov.std()!r},{ov.quantile(0.95)!r},{ov.quantile(0.99)!r}\n")

    sizes = trace.sizes.astype(float)
    diffs = np.diff(sizes)
    with open(out / "autocorr.csv", "w", encoding="utf-8") as fh:
        fh.write("series,lag,value\n")
        for name, series in (("frame_size", sizes), ("frame_size_diff", diffs)):
            res = stats.autocorrelation(series, args.max_lag)
            for lag, val in zip(res.lags, res.values):
                fh.write(f"{name},{lag},{float(val)!r}\n")

    roll = stats.rolling_autocorrelation(diffs, args.roll_window, args.roll_step,
                                         args.max_lag)
    with open(out / "rolling_autocorr.csv", "w", encoding="utf-8") as fh:
        fh.write("window_start_s,lag,value\n")
        for i, off in enumerate(roll.offsets):
            start_s = off / trace.meta.fps
            for lag in roll.lags:
                fh.write(f"{float(start_s)!r},{lag},{float(roll.values[i, lag])!r}\n")
    return 0


# --- fit ---

def _reference_logliks(w: np.ndarray):
    """Laplace vs Normal vs Logistic maximum-likelihood log-likelihoods."""
    lap = laplace.fit_laplace_mle(w, fix_mu_zero=False)
    ll_lap = laplace.laplace_loglik(w, lap)
    mu, sigma = sstats.norm.fit(w)
    ll_norm = float(np.sum(sstats.norm.logpdf(w, mu, sigma)))
    loc, scale = sstats.logistic.fit(w)
    ll_logi = float(np.sum(sstats.logistic.logpdf(w, loc, scale)))
    return lap, ll_lap, ll_norm, ll_logi


def cmd_fit(args) -> int:
    trace_list = [_load_trace_arg(t, args) for t in args.traces]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ntraces = [traces.normalize(t) for t in trace_list]

    scoped_sets = [("all", ntraces)] if args.scope != "CRM" else [
        (nt.meta.content, [nt]) for nt in ntraces
    ]

    diag_rows = []
    for set_name, nset in scoped_sets:
        for n in args.n_list:
            for tau in args.tau_list:
                spec = regression.PredictionSpec(
                    n_memory=n, horizon=args.horizon, lookahead=tau,
                    method=args.method,
                    p_s=args.ps if args.method == "quantile" else None)
                model = regression.fit_scoped(nset, spec, args.scope)
                tag = f"{args.scope}_{set_name}_{args.method}_N{n}_T{args.horizon}_tau{tau}"
                regression.save_model(model, out / f"model_{tag}.json")

                # residual diagnostics computed in-sample on the first trace
                src = trace_list[0] if args.scope != "CRM" else \
                    trace_list[[nt.meta.content for nt in ntraces].index(set_name)]
                res = regression.residuals(model, src)
                lap, ll_lap, ll_norm, ll_logi = _reference_logliks(res.w)
                diag_rows.append((set_name, n, tau, float(np.std(res.w)), lap.b,
                                  ll_lap, ll_norm, ll_logi))

                ac = stats.autocorrelation(res.w, args.max_lag)
                with open(out / f"resid_autocorr_{tag}.csv", "w", encoding="utf-8") as fh:
                    fh.write("lag,value\n")
                    for lag, val in zip(ac.lags, ac.values):
                        fh.write(f"{lag},{float(val)!r}\n")

                sw = np.sort(res.w)
                ccdf = 1.0 - np.arange(1, sw.size + 1) / sw.size
                with open(out / f"resid_ccdf_{tag}.csv", "w", encoding="utf-8") as fh:
                    fh.write("w_bytes,ccdf\n")
                    for wv, cv in zip(sw, ccdf):
                        fh.write(f"{float(wv)!r},{float(cv)!r}\n")

    with open(out / "diagnostics.csv", "w", encoding="utf-8") as fh:
        fh.write("set,n_memory,lookahead,resid_std_bytes,laplace_b_bytes,"
                 "loglik_laplace,loglik_normal,loglik_logistic\n")
        for row in diag_rows:
            fh.write(",".join(repr(float(x)) if isinstance(x, float) else str(x)
                              for x in row) + "\n")

    surface = regression.residual_std_surface(
        trace_list[0], args.n_list, args.tau_list, args.horizon,
        method=args.method, p_s=args.ps if args.method == "quantile" else None)
    with open(out / "std_surface.csv", "w", encoding="utf-8") as fh:
        fh.write("n_memory,lookahead,std_bytes\n")
        for i, n in enumerate(args.n_list):
            for j, tau in enumerate(args.tau_list):
                fh.write(f"{n},{tau},{float(surface[i, j])!r}\n")
    return 0


# --- simulate ---

def _cell_seed(base_seed: int, cell_index: int) -> int:
    return int(np.random.SeedSequence((base_seed, cell_index)).generate_state(1)[0])


def cmd_simulate(args) -> int:
    with open(args.scenario, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if args.seed is not None:
        cfg["seed"] = args.seed
    base_dir = Path(args.scenario).parent
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    base = simulation.scenario_from_config(cfg, base_dir)
    schemes = args.schemes or [cfg["scheme"]]
    ps_list = args.ps_list or [cfg["p_s"]]

    summary_rows = []
    cell = 0
    for scheme in schemes:
        for p_s in ps_list:
            scen = simulation.Scenario(
                users=base.users, budget=base.budget, scheme=scheme,
                interval_frames=base.interval_frames, p_s=p_s,
                seed=_cell_seed(cfg["seed"], cell),
                duration_frames=base.duration_frames,
                predictors=base.predictors, cluster_tol=base.cluster_tol)
            result = simulation.run(scen)
            run_id = f"{scheme}_S{scen.interval_frames}_ps{p_s:g}"
            simulation.write_kpi_csvs(result, run_id,
                                      out / f"latency_{run_id}.csv",
                                      out / f"bandwidth_{run_id}.csv")
            kpi = simulation.collect_kpis(result)
            kpi_mtp = simulation.collect_kpis(result, which="mtp")
            summary_rows.append(
                (run_id, scheme, scen.interval_frames, p_s,
                 kpi.latency_mean_s, kpi.latency_p95_s, kpi.latency_p99_s,
                 kpi_mtp.latency_p95_s, kpi_mtp.latency_p99_s,
                 kpi.mean_user_bandwidth_hz, kpi.deadline_met_fraction))
            cell += 1

    with open(out / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write("run_id,scheme,S,p_s,downlink_mean_s,downlink_p95_s,downlink_p99_s,"
                 "mtp_p95_s,mtp_p99_s,mean_user_bandwidth_hz,deadline_met_fraction\n")
        for row in summary_rows:
            fh.write(",".join(repr(float(x)) if isinstance(x, float) else str(x)
                              for x in row) + "\n")
    return 0


# --- pareto ---

def cmd_pareto(args) -> int:
    import csv

    with open(args.summary, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise VrsliceError(f"no rows in {args.summary}")

    groups: dict = {}
    if args.group:
        for spec_str in args.group:
            name, schemes = spec_str.split("=", 1)
            groups[name] = set(schemes.split(","))
    else:
        for row in rows:
            groups.setdefault(row["scheme"], set()).add(row["scheme"])

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("group,scheme,p_s,latency_s,bandwidth_hz\n")
        for name in sorted(groups):
            points = [
                pareto.ParetoPoint(
                    p_s=float(r["p_s"]), latency_s=float(r[args.latency_col]),
                    bandwidth_hz=float(r["mean_user_bandwidth_hz"]),
                    scheme=r["scheme"])
                for r in rows if r["scheme"] in groups[name]
            ]
            for p in pareto.pareto_frontier(points):
                fh.write(f"{name},{p.scheme},{p.p_s!r},{p.latency_s!r},{p.bandwidth_hz!r}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrslice",
        description="Quasi-CBR VR traffic analysis and predictive slicing simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="trace statistics (rate CDFs, overflow, autocorrelation)")
    pa.add_argument("--trace", required=True)
    pa.add_argument("--rate-bps", type=float, default=None)
    pa.add_argument("--fps", type=float, default=60.0)
    pa.add_argument("--content", default=None)
    pa.add_argument("--windows", type=_int_list, default=[1, 6, 60, 600])
    pa.add_argument("--max-lag", type=int, default=50)
    pa.add_argument("--roll-window", type=int, default=600)
    pa.add_argument("--roll-step", type=int, default=60)
    pa.add_argument("--out-dir", default="analysis_out")
    pa.set_defaults(func=cmd_analyze)

    pf = sub.add_parser("fit", help="fit prediction models and residual diagnostics")
    pf.add_argument("--traces", type=lambda s: s.split(","), required=True)
    pf.add_argument("--rate-bps", type=float, default=None)
    pf.add_argument("--fps", type=float, default=60.0)
    pf.add_argument("--content", default=None)
    pf.add_argument("--n-list", type=_int_list, default=[0, 1, 2, 4, 6, 10])
    pf.add_argument("--tau-list", type=_int_list, default=[1])
    pf.add_argument("--horizon", type=int, default=1)
    pf.add_argument("--method", choices=["ols", "quantile"], default="ols")
    pf.add_argument("--ps", type=float, default=0.95)
    pf.add_argument("--scope", choices=list(regression.SCOPES), default="GM")
    pf.add_argument("--max-lag", type=int, default=20)
    pf.add_argument("--out-dir", default="fit_out")
    pf.set_defaults(func=cmd_fit)

    ps = sub.add_parser("simulate", help="run slicing simulations over a sweep")
    ps.add_argument("--scenario", required=True)
    ps.add_argument("--schemes", type=lambda s: s.split(","), default=None)
    ps.add_argument("--ps-list", type=_float_list, default=None)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--out-dir", default="sim_out")
    ps.set_defaults(func=cmd_simulate)

    pp = sub.add_parser("pareto", help="extract Pareto frontiers from a sweep summary")
    pp.add_argument("--summary", required=True)
    pp.add_argument("--latency-col", default="downlink_p95_s")
    pp.add_argument("--group", action="append", default=None,
                    help="name=SCHEME1,SCHEME2 (repeatable); default one group per scheme")
    pp.add_argument("--out", default="frontier.csv")
    pp.set_defaults(func=cmd_pareto)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (VrsliceError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
