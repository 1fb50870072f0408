"""Self-contained correctness checks behind ``mmjsq verify``.

Each check pits one part of the pipeline against an independent reference:
closed-form laws, exact truncated solves, stationary identities, or published
constants.  The quick suite runs desk-friendly workloads; the full suite adds
the figure-scale reproductions.  All checks are deterministic given the seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import MmJsqError
from .experiments import SweepSpec, convergence_order, log_pmf_slope, run_sweep
from .model import (
    MmJsqModel,
    derived_rates,
    heavy_traffic_prediction,
    scale_to_load,
)
from .modelfile import load_bundled
from .oracle import (
    exact_stationary,
    exact_statistics,
    mm1_geometric,
    poisson_covariance_check,
)
from .sim import SimConfig, replicate
from .chain import validate_generator

DEFAULT_SEED = 20_260_809


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def _result(name, t0, ok, detail):
    return CheckResult(name, bool(ok), detail, time.time() - t0)


def _mm1_model(rho=0.5):
    chain = validate_generator([[0.0]])
    return MmJsqModel(chain, 1, np.array([rho]), np.array([[1.0]]))


def _modulated_single_server(rho=0.9):
    chain = validate_generator([[0.0, 0.5], [0.5, 0.0]])
    model = MmJsqModel(chain, 1, np.array([1.0, 1.0]), np.array([[1.0], [3.0]]))
    return scale_to_load(model, rho)


def _two_state_two_server():
    chain = validate_generator([[0.0, 0.5], [0.5, 0.0]])
    return MmJsqModel(
        chain, 2, np.array([2.0, 1.0]), np.array([[1.5, 1.0], [0.7, 1.3]])
    )


def check_kstar_invariance(seed=DEFAULT_SEED):
    """k* must not move when the Poisson solution is shifted by a constant."""
    t0 = time.time()
    pred = heavy_traffic_prediction(load_bundled("jsq3_ssc").model)
    worst = 0.0
    for c in (-1e3, 1.0, 1e3):
        shifted = float(pred.pi @ (pred.h * (pred.V_h.V + c)))
        worst = max(worst, abs(shifted - pred.k_star))
    return _result(
        "kstar_invariance",
        t0,
        worst < 1e-9,
        f"max |k* shift| = {worst:.2e} over c in {{-1e3, 1, 1e3}} (tol 1e-9)",
    )


def check_mm1_geometric(seed=DEFAULT_SEED, arrivals=5 * 10**5, runs=40):
    """Simulated M/M/1 PMF within 3 SE of the geometric law; oracle to 1e-10.

    Many moderate runs rather than a few long ones: the per-bin standard
    errors then carry enough degrees of freedom for a 3 SE test to be sharp.
    """
    t0 = time.time()
    model = _mm1_model(0.5)
    cfg = SimConfig(num_arrivals=arrivals, pmf_cap=128, seed=seed)
    _, agg = replicate(model, cfg, runs)
    bad = []
    for x in range(21):
        target = mm1_geometric(0.5, 1.0, x)
        se = agg.pmf.half_width[0, x] / 1.96
        if abs(agg.pmf.mean[0, x] - target) > 3.0 * se:
            bad.append(x)
    exact = exact_stationary(model, cap=200)
    oracle_err = max(
        abs(exact.dist[x] - mm1_geometric(0.5, 1.0, x)) for x in range(51)
    )
    ok = not bad and oracle_err <= 1e-10
    return _result(
        "mm1_geometric",
        t0,
        ok,
        f"sim bins outside 3 SE: {bad or 'none'} (x <= 20); "
        f"oracle max |err| = {oracle_err:.2e} (tol 1e-10, x <= 50)",
    )


def check_empty_drift(seed=DEFAULT_SEED, arrivals=4 * 10**6, runs=8):
    """Stationary identity: E[sum_j mu_ij 1{q_j=0}] = mu_sigma * epsilon."""
    t0 = time.time()
    lines = []
    ok = True
    for name in ("jsq3_ssc", "jsq3_nossc", "mm1"):
        base = load_bundled(name).base_model
        for rho in (0.8, 0.95):
            model = scale_to_load(base, rho)
            rates = derived_rates(model)
            cfg = SimConfig(num_arrivals=arrivals, seed=seed)
            _, agg = replicate(model, cfg, runs)
            target = rates.mu_sigma * rates.epsilon
            se = agg.empty_drift.half_width / 1.96
            gap = abs(float(agg.empty_drift.mean) - target)
            good = gap <= 3.0 * se
            ok = ok and good
            lines.append(f"{name}@{rho}: |gap|={gap:.2e} vs 3SE={3 * se:.2e}")
    return _result("empty_drift", t0, ok, "; ".join(lines))


def _coverage_counts(agg, stats, n, pmf_bins):
    """(inside, total) CI-coverage counts for one model's statistic set."""
    inside = total = 0

    def tally(mean, hw, target):
        nonlocal inside, total
        total += 1
        if abs(mean - target) <= hw:
            inside += 1

    for j in range(n):
        tally(agg.mean_q.mean[j], agg.mean_q.half_width[j], stats.mean_q[j])
    tally(
        float(agg.mean_q_sigma_over_n.mean),
        float(agg.mean_q_sigma_over_n.half_width),
        stats.mean_q_sigma_over_n,
    )
    tally(
        float(agg.empty_drift.mean),
        float(agg.empty_drift.half_width),
        stats.empty_drift,
    )
    if n > 1:
        for j in range(n):
            tally(agg.ssc_gap.mean[j], agg.ssc_gap.half_width[j], stats.ssc_gap[j])
    for si in range(len(agg.s_values)):
        for j in range(n):
            tally(
                agg.laplace_per_server.mean[si, j],
                agg.laplace_per_server.half_width[si, j],
                stats.laplace_per_server[si, j],
            )
        tally(
            agg.laplace_avg_queue.mean[si],
            agg.laplace_avg_queue.half_width[si],
            stats.laplace_avg_queue[si],
        )
    for j in range(n):
        for x in range(pmf_bins):
            tally(agg.pmf.mean[j, x], agg.pmf.half_width[j, x], stats.pmf[j, x])
    return inside, total


def check_oracle_vs_sim(
    seed=DEFAULT_SEED, arrivals=2 * 10**6, runs=16, small_only=False
):
    """Simulator CIs must cover exact truncated-solve values >= 90% of the time."""
    t0 = time.time()
    cases = [("m2n1", _modulated_single_server(0.9), 400)]
    if not small_only:
        ssc = load_bundled("jsq3_ssc").base_model
        reduced = MmJsqModel(ssc.chain, 2, ssc.lam, ssc.mu[:, :2])
        cases.append(("jsq3n2", scale_to_load(reduced, 0.9), 300))
    inside = total = 0
    details = []
    for name, model, cap in cases:
        exact = exact_stationary(model, cap)
        if exact.truncation_mass >= 1e-8:
            return _result(
                "oracle_vs_sim",
                t0,
                False,
                f"{name}: truncation mass {exact.truncation_mass:.1e} too big",
            )
        cfg = SimConfig(num_arrivals=arrivals, pmf_cap=cap, seed=seed)
        stats = exact_statistics(exact, model, cfg.laplace_s_values)
        _, agg = replicate(model, cfg, runs)
        got, checked = _coverage_counts(agg, stats, model.n, pmf_bins=25)
        inside += got
        total += checked
        details.append(f"{name}: {got}/{checked}")
    frac = inside / total
    return _result(
        "oracle_vs_sim",
        t0,
        frac >= 0.9,
        f"CI coverage {inside}/{total} = {frac:.1%} (need >= 90%); "
        + ", ".join(details),
    )


def check_theorem5_decay(seed=DEFAULT_SEED, s=1.0):
    """Exact covariance-identity residual must shrink >= 1.5x per eps halving."""
    t0 = time.time()
    base = _two_state_two_server()
    plan = ((0.2, 100), (0.1, 200), (0.05, 340))
    solves = []
    for eps, cap in plan:
        model = scale_to_load(base, 1.0 - eps)
        exact = exact_stationary(model, cap)
        if exact.truncation_mass >= 1e-8:
            return _result(
                "theorem5_decay",
                t0,
                False,
                f"eps={eps}: truncation mass {exact.truncation_mass:.1e} too big",
            )
        solves.append((eps, model, exact))
    ok = True
    lines = []
    probes = {
        "h": lambda model, rates: rates.mu_state_sigma - model.lam,
        "ell": lambda model, rates: rates.mu_state_sigma,
        "indicator": lambda model, rates: np.array([1.0, 0.0]),
    }
    for label, fn in probes.items():
        residuals = []
        for eps, model, exact in solves:
            rates = derived_rates(model)
            residuals.append(
                poisson_covariance_check(model, exact, fn(model, rates), s).residual
            )
        ratios = [residuals[k] / residuals[k + 1] for k in range(len(residuals) - 1)]
        good = all(r >= 1.5 for r in ratios)
        ok = ok and good
        lines.append(f"f={label}: decay ratios {[f'{r:.2f}' for r in ratios]}")
    return _result("theorem5_decay", t0, ok, "; ".join(lines) + " (need >= 1.5)")


def check_convergence_slope(seed=DEFAULT_SEED):
    """Fitted transform-error order must clear the 0.35 floor (predicted 1/2)."""
    t0 = time.time()
    fits = {
        "mm1": convergence_order(_mm1_model(), 1.0, (0.05, 0.1, 0.2), method="oracle"),
        "m2n1": convergence_order(
            _modulated_single_server(0.9),
            1.0,
            (0.05, 0.1, 0.15, 0.25),
            method="oracle",
        ),
    }
    ok = all(f.slope >= 0.35 and not f.noisy for f in fits.values())
    detail = "; ".join(
        f"{k}: slope={f.slope:.3f} R^2={f.r_squared:.3f}" for k, f in fits.items()
    )
    return _result("convergence_slope", t0, ok, detail + " (need >= 0.35)")


def check_fig_load_convergence(seed=DEFAULT_SEED, arrivals=10**7, runs=10):
    """Scaled means approach the predicted limit monotonically over the load grid."""
    t0 = time.time()
    parsed = load_bundled("jsq3_ssc")
    spec = SweepSpec(
        parsed.base_model,
        "load",
        (0.8, 0.9, 0.95, 0.98),
        SimConfig(num_arrivals=arrivals, pmf_cap=600, seed=seed),
        runs,
    )
    result = run_sweep(spec)
    limit = result.rows[0].limit_mean_per_server
    last = result.rows[-1]
    rel = np.abs(last.scaled_mean_q.mean - limit) / limit
    ok = bool(np.all(rel <= 0.05))
    dists = np.stack([np.abs(r.scaled_mean_q.mean - limit) for r in result.rows])
    hws = np.stack([r.scaled_mean_q.half_width for r in result.rows])
    for k in range(len(result.rows) - 1):
        slack = hws[k] + hws[k + 1]
        if not np.all(dists[k + 1] <= dists[k] + slack):
            ok = False
    if not np.all(dists[-1] < dists[0]):
        ok = False
    return _result(
        "fig_load_convergence",
        t0,
        ok,
        f"rel gap at rho=0.98: {np.array2string(rel, precision=4)} (tol 5%); "
        f"distances {np.array2string(dists.mean(axis=1), precision=4)} decreasing",
    )


def check_pmf_exponential(seed=DEFAULT_SEED, arrivals=10**7, runs=10):
    """At rho=0.98 the per-server PMF decays at the predicted exponential rate."""
    t0 = time.time()
    parsed = load_bundled("jsq3_ssc", rho=0.98)
    cfg = SimConfig(num_arrivals=arrivals, pmf_cap=600, seed=seed)
    _, agg = replicate(parsed.model, cfg, runs)
    target_mean = 1775.0 / 54.0
    target_slope = -54.0 / 1775.0
    ok = True
    lines = []
    for j in range(3):
        slope = log_pmf_slope(agg.pmf.mean[j], 5, 60)
        mean = float(agg.mean_q.mean[j])
        s_ok = abs(slope - target_slope) <= 0.1 * abs(target_slope)
        m_ok = abs(mean - target_mean) <= 0.05 * target_mean
        ok = ok and s_ok and m_ok
        lines.append(f"server {j}: slope {slope:.5f}, mean {mean:.2f}")
    return _result(
        "fig_pmf_exponential",
        t0,
        ok,
        f"target slope {target_slope:.5f} (10%), mean {target_mean:.2f} (5%); "
        + "; ".join(lines),
    )


def check_ssc_gap_bounded(seed=DEFAULT_SEED, arrivals=10**7, runs=10):
    """With the load condition satisfied, queue imbalance stays small at all
    modulation speeds."""
    t0 = time.time()
    parsed = load_bundled("jsq3_ssc", rho=0.95)
    spec = SweepSpec(
        parsed.model,
        "alpha",
        (0.01, 0.1, 1.0),
        SimConfig(num_arrivals=arrivals, seed=seed),
        runs,
    )
    result = run_sweep(spec)
    gaps = np.stack([r.aggregate.ssc_gap.mean for r in result.rows])
    bounded = bool(np.all(gaps < 1.5))
    spread = float((gaps.max(axis=0) / gaps.min(axis=0)).max())
    # means must also ride the predicted 1/alpha trajectory
    traj_err = 0.0
    for row in result.rows:
        predicted = row.limit_mean_per_server / row.epsilon
        traj_err = max(
            traj_err,
            float(np.abs(row.aggregate.mean_q.mean / predicted - 1.0).max()),
        )
    ok = bounded and spread < 2.0 and traj_err <= 0.15
    return _result(
        "fig_ssc_gap_bounded",
        t0,
        ok,
        f"per-server gaps {np.array2string(gaps, precision=3)} jobs "
        f"(cap 1.5); max across-alpha spread x{spread:.2f} (cap 2); "
        f"worst mean-trajectory error {traj_err:.1%} (cap 15%)",
    )


def check_ssc_breakdown_slope(seed=DEFAULT_SEED, arrivals=10**7, runs=10):
    """Without the load condition, imbalance grows linearly in the modulation
    duration."""
    t0 = time.time()
    parsed = load_bundled("jsq3_nossc", rho=0.95)
    alphas = (0.01, 0.1, 1.0)
    spec = SweepSpec(
        parsed.model,
        "alpha",
        alphas,
        SimConfig(num_arrivals=arrivals, seed=seed),
        runs,
    )
    result = run_sweep(spec)
    log_inv_alpha = np.log([1.0 / a for a in alphas])
    ok = True
    slopes = []
    for j in range(3):
        gaps = np.array([r.aggregate.ssc_gap.mean[j] for r in result.rows])
        slope, _ = np.polyfit(log_inv_alpha, np.log(gaps), 1)
        slopes.append(float(slope))
        if not 0.75 <= slope <= 1.25:
            ok = False
    return _result(
        "fig_ssc_breakdown",
        t0,
        ok,
        f"log-log slopes of gap vs 1/alpha: "
        f"{[f'{s:.3f}' for s in slopes]} (need 1 +/- 0.25)",
    )


QUICK_CHECKS = {
    "kstar_invariance": lambda seed: check_kstar_invariance(seed),
    "mm1_geometric": lambda seed: check_mm1_geometric(seed, arrivals=2 * 10**5, runs=30),
    "empty_drift": lambda seed: check_empty_drift(seed, arrivals=2 * 10**6, runs=6),
    "oracle_vs_sim": lambda seed: check_oracle_vs_sim(
        seed, arrivals=10**6, runs=12, small_only=True
    ),
    "theorem5_decay": lambda seed: check_theorem5_decay(seed),
    "convergence_slope": lambda seed: check_convergence_slope(seed),
}

FULL_CHECKS = {
    **QUICK_CHECKS,
    "mm1_geometric": lambda seed: check_mm1_geometric(seed),
    "empty_drift": lambda seed: check_empty_drift(seed, arrivals=4 * 10**6, runs=8),
    "oracle_vs_sim": lambda seed: check_oracle_vs_sim(
        seed, arrivals=2 * 10**6, runs=16, small_only=False
    ),
    "fig_load_convergence": lambda seed: check_fig_load_convergence(seed),
    "fig_pmf_exponential": lambda seed: check_pmf_exponential(seed),
    "fig_ssc_gap_bounded": lambda seed: check_ssc_gap_bounded(seed),
    "fig_ssc_breakdown": lambda seed: check_ssc_breakdown_slope(seed),
}


def run_suite(suite="quick", only=None, seed=DEFAULT_SEED):
    """Execute the named suite; returns results in registry order."""
    registry = QUICK_CHECKS if suite == "quick" else FULL_CHECKS
    if suite not in ("quick", "full"):
        raise ValueError(f"unknown suite {suite!r}")
    names = list(registry)
    if only:
        unknown = [n for n in only if n not in registry]
        if unknown:
            raise ValueError(f"unknown checks {unknown}; available: {names}")
        names = [n for n in names if n in only]
    results = []
    for name in names:
        try:
            results.append(registry[name](seed))
        except MmJsqError as exc:
            results.append(CheckResult(name, False, f"error: {exc}", 0.0))
    return results
