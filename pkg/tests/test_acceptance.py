"""Acceptance suite: every criterion at its stated tolerance.

Heavy desk-scale reproductions (criteria 4-7, 8-10, 12) delegate to the
package's verify checks so the command-line suite and this gate share one
implementation.  Each test prints a single pass/fail line; run with ``-s`` to
see them live.  Budget for the whole module is around ten minutes on one core.
"""

import json

import numpy as np
import pytest

from mmjsq import (
    check_ssc,
    heavy_traffic_prediction,
    limit_laplace,
    scale_modulation,
    scale_to_load,
)
from mmjsq.cli import main
from mmjsq.modelfile import bundled_model_path, load_bundled
from mmjsq.verify import (
    check_convergence_slope,
    check_empty_drift,
    check_fig_load_convergence,
    check_kstar_invariance,
    check_mm1_geometric,
    check_oracle_vs_sim,
    check_pmf_exponential,
    check_ssc_breakdown_slope,
    check_ssc_gap_bounded,
    check_theorem5_decay,
)

SEED = 20_260_809


def report(num, name, ok, detail=""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num:02d} {name}: {detail}")
    assert ok, f"criterion {num} {name}: {detail}"


def run_check(num, name, result):
    report(num, name, result.ok, f"{result.detail} [{result.seconds:.0f}s]")


def analyze_report(tmp_path, model_name):
    out = tmp_path / f"{model_name}.json"
    rc = main(["analyze", str(bundled_model_path(model_name)), "-o", str(out)])
    assert rc == 0
    return json.loads(out.read_text())


def test_criterion_01_k_star_exactness(tmp_path):
    rep = analyze_report(tmp_path, "jsq3_ssc")
    k_star = rep["prediction"]["k_star"]
    mean = rep["prediction"]["limit_mean_per_server"]
    k_err = abs(k_star - 35.0 / 6.0) / (35.0 / 6.0)
    m_err = abs(mean - 71.0 / 108.0) / (71.0 / 108.0)
    report(
        1,
        "k_star exactness",
        k_err <= 1e-10 and m_err <= 1e-10,
        f"k*={k_star!r} (rel err {k_err:.1e}), "
        f"limit mean={mean!r} (rel err {m_err:.1e}), tol 1e-10",
    )


def test_criterion_02_k_star_alpha_formula():
    base = load_bundled("jsq3_ssc").model
    worst = 0.0
    for alpha in (1.0, 0.1, 0.01):
        pred = heavy_traffic_prediction(scale_modulation(base, alpha))
        expected = (7.0 / 12.0) / alpha
        worst = max(worst, abs(pred.k_star - expected) / expected)
    report(
        2,
        "k_star modulation-rate formula",
        worst <= 1e-10,
        f"max rel err {worst:.1e} over alpha in {{1, 0.1, 0.01}}, tol 1e-10",
    )


def test_criterion_03_ssc_condition_reports(tmp_path):
    ssc_base = load_bundled("jsq3_ssc").base_model
    rep = check_ssc(ssc_base)
    ok = bool(np.array_equal(rep.thresholds, [0.5, 2.5, 3.0]))
    ok = ok and rep.critical_load == 5.0 / 12.0
    ok = ok and check_ssc(scale_to_load(ssc_base, 0.42)).satisfied
    ok = ok and not check_ssc(scale_to_load(ssc_base, 0.41)).satisfied
    nossc_base = load_bundled("jsq3_nossc").base_model
    rep2 = check_ssc(scale_to_load(nossc_base, 0.95))
    # thresholds follow from the bundled service-rate rows; the externally
    # published vector (6.5, 0.5, 1) disagrees in state 0 and the analysis
    # report flags the related published constant as mismatched
    ok = ok and bool(np.array_equal(rep2.thresholds, [8.0, 0.5, 1.0]))
    ok = ok and rep2.margins[0] < 0 < min(rep2.margins[1], rep2.margins[2])
    ok = ok and not check_ssc(scale_to_load(nossc_base, 0.999)).satisfied
    flagged = analyze_report(tmp_path, "jsq3_nossc")["reference"]["matches"] is False
    ok = ok and flagged
    report(
        3,
        "SSC condition reports",
        ok,
        "thresholds (0.5, 2.5, 3) exact, critical load == 5/12 exact; "
        "unbalanced scenario fails in state 0 (paper-state 1) with computed "
        "thresholds (8, 0.5, 1) and its published reference constant flagged",
    )


def test_criterion_04_load_sweep_convergence():
    run_check(4, "scaled means approach the limit",
              check_fig_load_convergence(SEED, arrivals=10**7, runs=10))


def test_criterion_05_pmf_exponential():
    run_check(5, "PMF matches limiting exponential",
              check_pmf_exponential(SEED, arrivals=10**7, runs=10))


def test_criterion_06_ssc_gap_bounded():
    run_check(6, "imbalance bounded under slow modulation",
              check_ssc_gap_bounded(SEED, arrivals=10**7, runs=10))


def test_criterion_07_ssc_breakdown_slope():
    run_check(7, "imbalance grows linearly without the condition",
              check_ssc_breakdown_slope(SEED, arrivals=10**7, runs=10))


def test_criterion_08_mm1_oracle():
    run_check(8, "M/M/1 geometric law", check_mm1_geometric(SEED))


def test_criterion_09_empty_drift_identity():
    run_check(9, "empty-service drift identity",
              check_empty_drift(SEED, arrivals=4 * 10**6, runs=8))


def test_criterion_10_covariance_identity_decay():
    run_check(10, "covariance-identity residual decay", check_theorem5_decay(SEED))


def test_criterion_11_k_star_normalization_invariance():
    run_check(11, "k_star normalization invariance", check_kstar_invariance(SEED))


def test_criterion_12_oracle_simulator_equivalence():
    run_check(12, "oracle-simulator equivalence",
              check_oracle_vs_sim(SEED, arrivals=2 * 10**6, runs=16))


def test_supplement_convergence_order():
    result = check_convergence_slope(SEED)
    print(f"\n[{'PASS' if result.ok else 'FAIL'}] supplement convergence order: "
          f"{result.detail}")
    assert result.ok, result.detail


def test_supplement_limit_laplace_value():
    pred = heavy_traffic_prediction(load_bundled("jsq3_ssc").model)
    value = limit_laplace(pred, 1.0)
    ok = abs(value - 108.0 / 179.0) <= 1e-12
    print(f"\n[{'PASS' if ok else 'FAIL'}] supplement limiting transform at s=1: "
          f"{value!r} vs 108/179")
    assert ok
