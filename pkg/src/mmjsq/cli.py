"""Command-line interface.

Four subcommands: ``analyze`` (closed-form report for a model file),
``simulate`` (replicated runs with aggregate JSON and per-run CSV), ``sweep``
(load or modulation-rate sweeps as CSV plus JSON summary) and ``verify``
(built-in correctness suites).  Output is a pure function of the inputs and
flags; rerunning a command reproduces its files byte for byte.  JSON keys and
CSV columns are documented in ``output_schema.json`` next to this module.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import output
from .errors import MmJsqError
from .experiments import SweepSpec, run_sweep
from .model import check_ssc, derived_rates, heavy_traffic_prediction, limit_laplace
from .modelfile import ParsedModel, list_bundled, load_model_file
from .sim import RNG_NAME, SimConfig, replicate
from .verify import DEFAULT_SEED, run_suite

STATE_INDEXING_NOTE = "0-based modulating-state indices; add 1 for 1-based texts"


def _add_model_arg(p):
    p.add_argument("model_file", help="path to a JSON model file")
    p.add_argument("--rho", type=float, default=None, help="override target mean load")
    p.add_argument(
        "--alpha-scale",
        type=float,
        default=None,
        help="override the scalar multiplying all modulation rates",
    )


def _add_sim_args(p):
    p.add_argument("--arrivals", type=float, default=1e6, help="arrivals per run")
    p.add_argument("--runs", type=int, default=10, help="independent replications")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="base 64-bit seed")
    p.add_argument(
        "--burn-in", type=float, default=0.1, help="fraction of arrivals discarded"
    )
    p.add_argument("--pmf-cap", type=int, default=512, help="largest tracked queue length")
    p.add_argument(
        "--laplace-s",
        type=float,
        nargs="+",
        default=[0.5, 1.0, 2.0],
        help="evaluation points for empirical Laplace transforms",
    )


def _sim_config(args) -> SimConfig:
    return SimConfig(
        num_arrivals=int(args.arrivals),
        burn_in_fraction=args.burn_in,
        pmf_cap=args.pmf_cap,
        laplace_s_values=tuple(args.laplace_s),
        seed=args.seed,
    )


def _model_block(parsed: ParsedModel) -> dict:
    model = parsed.model
    return {
        "name": parsed.name,
        "m": model.m,
        "n": model.n,
        "alpha_scale": parsed.alpha_scale,
        "rho_requested": parsed.rho,
        "alpha_matrix": model.chain.Q,
        "lambda": model.lam,
        "mu": model.mu,
    }


def _meanci_block(mc) -> dict:
    return {"mean": mc.mean, "ci_half_width": mc.half_width}


def _nan_to_none(vec) -> list:
    return [None if math.isnan(v) else float(v) for v in np.asarray(vec, float).ravel()]


def _reference_block(parsed: ParsedModel, k_star: float) -> dict | None:
    ref = parsed.reference
    expected = None
    if "k_star" in ref:
        expected = float(ref["k_star"])
    elif "k_star_times_alpha" in ref:
        exits = parsed.model.chain.exit_rates
        if not np.allclose(exits, exits.max(), rtol=1e-9):
            return {"note": "reference needs a uniform modulation rate; skipped"}
        expected = float(ref["k_star_times_alpha"]) / float(exits.max())
    if expected is None:
        return None
    gap = abs(k_star - expected) / max(1.0, abs(expected))
    return {
        "expected_k_star": expected,
        "computed_k_star": k_star,
        "relative_gap": gap,
        "matches": gap <= 1e-6,
    }


def cmd_analyze(args) -> int:
    parsed = load_model_file(args.model_file, rho=args.rho, alpha_scale=args.alpha_scale)
    model = parsed.model
    rates = derived_rates(model)
    ssc = check_ssc(model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pred = heavy_traffic_prediction(model)
    s_values = list(args.laplace_s)
    report = {
        "model": _model_block(parsed),
        "state_indexing": STATE_INDEXING_NOTE,
        "pi": rates.pi,
        "rates": {
            "lambda_bar": rates.lambda_bar,
            "mu_per_server": rates.mu_per_server,
            "mu_sigma": rates.mu_sigma,
            "mu_state_sigma": rates.mu_state_sigma,
            "mu_state_min": rates.mu_state_min,
            "rho": rates.rho,
            "epsilon": rates.epsilon,
            "lambda_star": rates.lambda_star,
            "lambda_ideal": rates.lambda_ideal,
            "lambda_max": model.lambda_max,
            "mu_max": model.mu_max,
        },
        "ssc": {
            "satisfied": ssc.satisfied,
            "margins": ssc.margins,
            "thresholds": ssc.thresholds,
            "critical_load": ssc.critical_load,
            "delta": _nan_to_none(ssc.delta),
            "lambda_prime": ssc.lambda_prime,
            "lambda_prime_min": ssc.lambda_prime_min,
            "gamma": ssc.gamma,
            "B": ssc.B,
            "nu_max": ssc.nu_max,
            "g_bar": ssc.g_bar,
            "theta_cap": ssc.theta_cap,
            "c_exp": ssc.c_exp,
        },
        "prediction": {
            "h": pred.h,
            "v_h": pred.V_h.V,
            "poisson_residual": pred.V_h.residual,
            "k": pred.k,
            "k_star": pred.k_star,
            "limit_mean_per_server": pred.limit_mean_per_server,
            "limit_rate": pred.limit_rate,
            "ssc_satisfied_at_limit": pred.ssc_at_limit.satisfied,
            "rho_input": pred.rho_input,
            "k_mean_at_input_load": pred.k_mean_at_input_load,
        },
        "limit_laplace": {
            "s": s_values,
            "values": [limit_laplace(pred, s) for s in s_values],
        },
    }
    ref = _reference_block(parsed, pred.k_star)
    if ref is not None:
        report["reference"] = ref
    text = output.dumps(report)
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def _aggregate_block(agg) -> dict:
    return {
        "num_runs": agg.num_runs,
        "epsilon": agg.epsilon,
        "s_values": list(agg.s_values),
        "pmf_cap": agg.pmf_cap,
        "mean_q": _meanci_block(agg.mean_q),
        "mean_q_sigma_over_n": _meanci_block(agg.mean_q_sigma_over_n),
        "scaled_mean_q": {
            "mean": agg.mean_q.mean * agg.epsilon,
            "ci_half_width": agg.mean_q.half_width * agg.epsilon,
        },
        "ssc_gap": _meanci_block(agg.ssc_gap),
        "ssc_norm_tail": {
            "thresholds": agg.thresholds,
            "mean": agg.ssc_norm_tail.mean,
            "ci_half_width": agg.ssc_norm_tail.half_width,
        },
        "laplace_per_server": _meanci_block(agg.laplace_per_server),
        "laplace_avg_queue": _meanci_block(agg.laplace_avg_queue),
        "empty_drift": _meanci_block(agg.empty_drift),
        "pmf": _meanci_block(agg.pmf),
    }


def cmd_simulate(args) -> int:
    parsed = load_model_file(args.model_file, rho=args.rho, alpha_scale=args.alpha_scale)
    config = _sim_config(args)
    runs, agg = replicate(parsed.model, config, args.runs)
    rates = derived_rates(parsed.model)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    report = {
        "model": _model_block(parsed),
        "config": {
            "num_arrivals": config.num_arrivals,
            "burn_in_fraction": config.burn_in_fraction,
            "pmf_cap": config.pmf_cap,
            "laplace_s_values": list(config.laplace_s_values),
            "seed": config.seed,
            "num_runs": args.runs,
            "rng": RNG_NAME,
            "replication_seeds": "seed + run_index (mod 2**64)",
        },
        "identities": {
            "mu_sigma_epsilon": rates.mu_sigma * rates.epsilon,
        },
        "aggregate": _aggregate_block(agg),
    }
    output.write_json(outdir / "aggregate.json", report)
    n = parsed.model.n
    header = (
        ["run_index", "seed", "total_sim_time", "arrivals", "departures", "empty_drift",
         "mean_q_sigma_over_n"]
        + [f"mean_q_{j}" for j in range(n)]
        + [f"ssc_gap_{j}" for j in range(n)]
    )
    rows = []
    for r, stats in enumerate(runs):
        rows.append(
            [r, stats.seed, stats.total_sim_time, stats.arrivals, stats.departures,
             stats.empty_drift, stats.mean_q_sigma_over_n]
            + [stats.mean_q[j] for j in range(n)]
            + [stats.ssc_gap[j] for j in range(n)]
        )
    output.write_csv(outdir / "runs.csv", header, rows)
    print(f"wrote {outdir / 'aggregate.json'} and {outdir / 'runs.csv'}")
    return 0


def cmd_sweep(args) -> int:
    parsed = load_model_file(args.model_file, rho=args.rho, alpha_scale=args.alpha_scale)
    spec = SweepSpec(
        base_model=parsed.model,
        sweep_kind=args.kind,
        grid=tuple(args.grid),
        sim=_sim_config(args),
        num_runs=args.runs,
    )
    result = run_sweep(spec)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    n = parsed.model.n
    header = (
        ["grid_value", "rho", "epsilon", "modulation_rate", "k_star",
         "limit_mean_per_server", "ssc_satisfied"]
        + [f"scaled_mean_q_{j}" for j in range(n)]
        + [f"scaled_mean_q_ci_{j}" for j in range(n)]
        + [f"mean_q_{j}" for j in range(n)]
        + [f"mean_q_ci_{j}" for j in range(n)]
        + [f"ssc_gap_{j}" for j in range(n)]
        + [f"ssc_gap_ci_{j}" for j in range(n)]
    )
    rows = []
    for row in result.rows:
        agg = row.aggregate
        rows.append(
            [row.grid_value, row.rho, row.epsilon, row.modulation_rate, row.k_star,
             row.limit_mean_per_server, row.ssc_satisfied]
            + list(row.scaled_mean_q.mean)
            + list(row.scaled_mean_q.half_width)
            + list(agg.mean_q.mean)
            + list(agg.mean_q.half_width)
            + list(agg.ssc_gap.mean)
            + list(agg.ssc_gap.half_width)
        )
    output.write_csv(outdir / "sweep.csv", header, rows)
    summary = {
        "model": _model_block(parsed),
        "sweep_kind": args.kind,
        "grid": list(spec.grid),
        "config": {
            "num_arrivals": spec.sim.num_arrivals,
            "burn_in_fraction": spec.sim.burn_in_fraction,
            "pmf_cap": spec.sim.pmf_cap,
            "laplace_s_values": list(spec.sim.laplace_s_values),
            "seed": spec.sim.seed,
            "num_runs": spec.num_runs,
            "rng": RNG_NAME,
        },
        "rows": [
            {
                "grid_value": row.grid_value,
                "rho": row.rho,
                "epsilon": row.epsilon,
                "modulation_rate": row.modulation_rate,
                "k_star": row.k_star,
                "limit_mean_per_server": row.limit_mean_per_server,
                "ssc_satisfied": row.ssc_satisfied,
                "ssc_margins": row.ssc_margins,
                "scaled_mean_q": _meanci_block(row.scaled_mean_q),
                "mean_q": _meanci_block(row.aggregate.mean_q),
                "ssc_gap": _meanci_block(row.aggregate.ssc_gap),
            }
            for row in result.rows
        ],
    }
    output.write_json(outdir / "summary.json", summary)
    print(f"wrote {outdir / 'sweep.csv'} and {outdir / 'summary.json'}")
    return 0


def cmd_verify(args) -> int:
    results = run_suite(suite=args.suite, only=args.only, seed=args.seed)
    failures = 0
    for res in results:
        tag = "PASS" if res.ok else "FAIL"
        print(f"[{tag}] {res.name} ({res.seconds:.1f}s): {res.detail}")
        failures += 0 if res.ok else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmjsq",
        description=(
            "Heavy-traffic analysis and deterministic simulation of "
            "Join-the-Shortest-Queue systems with Markov-modulated rates. "
            f"Bundled example models: {', '.join(list_bundled())}."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="closed-form analysis report as JSON")
    _add_model_arg(p)
    p.add_argument(
        "--laplace-s", type=float, nargs="+", default=[0.5, 1.0, 2.0],
        help="evaluation points for the limiting Laplace transform",
    )
    p.add_argument("-o", "--output", default=None, help="write JSON here instead of stdout")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("simulate", help="replicated simulation runs")
    _add_model_arg(p)
    _add_sim_args(p)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="load or modulation-rate sweep")
    _add_model_arg(p)
    p.add_argument("--kind", choices=("load", "alpha"), required=True)
    p.add_argument("--grid", type=float, nargs="+", required=True,
                   help="strictly increasing grid values")
    _add_sim_args(p)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("verify", help="run built-in correctness checks")
    p.add_argument("--suite", choices=("quick", "full"), default="quick")
    p.add_argument("--only", nargs="+", default=None,
                   help="restrict to the named checks")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except MmJsqError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
