"""Scripted sweeps and convergence-order measurement.

Load sweeps rescale the arrival vector; modulation sweeps rescale the whole
generator uniformly, which leaves the stationary distribution (and so the
load) untouched while changing how fast the environment mixes.  Every grid
point gets a fresh analytical prediction plus replicated simulations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import (
    MmJsqModel,
    check_ssc,
    derived_rates,
    heavy_traffic_prediction,
    limit_laplace,
    scale_to_load,
)
from .oracle import exact_stationary, exact_statistics
from .sim import AggregateStats, MeanCI, RunStats, SimConfig, replicate


class NoisyFitWarning(UserWarning):
    """A log-log slope fit explained too little variance to be trusted."""


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: which knob to turn, over which grid, and how to simulate."""

    base_model: MmJsqModel
    sweep_kind: str
    grid: tuple[float, ...]
    sim: SimConfig
    num_runs: int

    def __post_init__(self):
        if self.sweep_kind not in ("load", "alpha"):
            raise ValueError(f"sweep_kind must be 'load' or 'alpha', got {self.sweep_kind!r}")
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise ValueError("grid must be nonempty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if self.sweep_kind == "load" and not all(0.0 < g < 1.0 for g in grid):
            raise ValueError("load grid values must lie in (0, 1)")
        if self.sweep_kind == "alpha" and not all(g > 0.0 for g in grid):
            raise ValueError("alpha grid values must be positive")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class SweepRow:
    """Predictions and simulated aggregates for one grid point."""

    grid_value: float
    rho: float
    epsilon: float
    modulation_rate: float
    k_star: float
    limit_mean_per_server: float
    ssc_satisfied: bool
    ssc_margins: np.ndarray
    scaled_mean_q: MeanCI
    aggregate: AggregateStats
    runs: tuple[RunStats, ...]


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: tuple[SweepRow, ...]


def scale_modulation(model: MmJsqModel, alpha_target: float) -> MmJsqModel:
    """Rescale all modulation rates so the fastest exit rate equals the target."""
    base = float(model.chain.exit_rates.max())
    if base <= 0.0:
        raise ValueError("model has no modulation to rescale")
    return MmJsqModel(
        model.chain.scaled(alpha_target / base), model.n, model.lam, model.mu
    )


def _model_at(spec: SweepSpec, value: float) -> MmJsqModel:
    if spec.sweep_kind == "load":
        return scale_to_load(spec.base_model, value)
    return scale_modulation(spec.base_model, value)


def run_sweep(spec: SweepSpec, max_workers: int | None = None) -> SweepResult:
    """Simulate and predict at every grid point, in grid order."""
    rows = []
    for value in spec.grid:
        model = _model_at(spec, value)
        rates = derived_rates(model)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            prediction = heavy_traffic_prediction(model)
        ssc = check_ssc(model)
        runs, aggregate = replicate(model, spec.sim, spec.num_runs, max_workers)
        scaled = MeanCI(
            aggregate.mean_q.mean * rates.epsilon,
            aggregate.mean_q.half_width * rates.epsilon,
        )
        rows.append(
            SweepRow(
                grid_value=value,
                rho=rates.rho,
                epsilon=rates.epsilon,
                modulation_rate=float(model.chain.exit_rates.max()),
                k_star=prediction.k_star,
                limit_mean_per_server=prediction.limit_mean_per_server,
                ssc_satisfied=ssc.satisfied,
                ssc_margins=ssc.margins,
                scaled_mean_q=scaled,
                aggregate=aggregate,
                runs=tuple(runs),
            )
        )
    return SweepResult(spec, tuple(rows))


@dataclass(frozen=True)
class ConvergenceFit:
    """Least-squares slope of log error against log epsilon."""

    slope: float
    intercept: float
    r_squared: float
    noisy: bool
    eps_used: tuple[float, ...]
    errors: tuple[float, ...]


def convergence_order(
    base_model: MmJsqModel,
    s: float,
    eps_grid,
    method: str = "oracle",
    sim_config: SimConfig | None = None,
    num_runs: int = 5,
    eps_max: float = 0.3,
    truncation_tol: float = 1e-8,
) -> ConvergenceFit:
    """Fit how fast the scaled-queue transform approaches its limit.

    For each ``eps`` the model is rescaled to load ``1 - eps`` and the error
    ``|E[exp(-s * eps * q_j)] - limit| `` (averaged over servers) is measured
    with the exact truncated solver (``method='oracle'``) or replicated
    simulation (``method='sim'``).  Grid points above ``eps_max`` are dropped
    as pre-asymptotic before fitting ``log err = slope * log eps + c``.
    """
    if not s > 0.0:
        raise ValueError("s must be positive")
    eps_grid = tuple(float(e) for e in eps_grid)
    if len(eps_grid) < 3:
        raise ValueError("need at least 3 epsilon grid points")
    if not all(0.0 < e < 0.5 for e in eps_grid):
        raise ValueError("epsilon grid must lie inside (0, 0.5)")
    if method not in ("oracle", "sim"):
        raise ValueError(f"method must be 'oracle' or 'sim', got {method!r}")
    use = tuple(e for e in eps_grid if e <= eps_max)
    if len(use) < 3:
        raise ValueError(f"fewer than 3 grid points at or below eps_max={eps_max}")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prediction = heavy_traffic_prediction(base_model)
    limit = limit_laplace(prediction, s)

    errors = []
    for eps in use:
        model = scale_to_load(base_model, 1.0 - eps)
        if method == "oracle":
            value = _oracle_laplace(model, s, eps, prediction, truncation_tol)
        else:
            cfg = sim_config if sim_config is not None else SimConfig(10**6)
            _, agg = replicate(model, cfg, num_runs)
            si = _nearest_s_index(cfg.laplace_s_values, s)
            value = float(agg.laplace_per_server.mean[si].mean())
        errors.append(abs(value - limit))

    logs_e = np.log(np.asarray(use))
    logs_err = np.log(np.asarray(errors))
    slope, intercept = np.polyfit(logs_e, logs_err, 1)
    fitted = slope * logs_e + intercept
    ss_res = float(((logs_err - fitted) ** 2).sum())
    ss_tot = float(((logs_err - logs_err.mean()) ** 2).sum())
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    noisy = r_squared < 0.8
    if noisy:
        warnings.warn(
            f"convergence fit explains only R^2={r_squared:.3f}",
            NoisyFitWarning,
            stacklevel=2,
        )
    return ConvergenceFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        noisy=noisy,
        eps_used=use,
        errors=tuple(errors),
    )


def _nearest_s_index(s_values, s):
    diffs = [abs(v - s) for v in s_values]
    idx = diffs.index(min(diffs))
    if diffs[idx] > 1e-9:
        raise ValueError(f"s={s} not among the simulated values {s_values}")
    return idx


def _oracle_laplace(model, s, eps, prediction, truncation_tol):
    mean_guess = max(prediction.limit_mean_per_server, 0.5) / eps
    cap = max(32, int(25.0 * mean_guess))
    for _ in range(6):
        exact = exact_stationary(model, cap)
        if exact.truncation_mass < truncation_tol:
            stats = exact_statistics(exact, model, (s,))
            return float(stats.laplace_per_server[0].mean())
        cap = int(cap * 1.6)
    raise RuntimeError(f"could not reach truncation mass below {truncation_tol}")


def log_pmf_slope(pmf_row, x_lo: int, x_hi: int) -> float:
    """Least-squares slope of log P(q = x) over the window ``[x_lo, x_hi]``.

    For a queue whose scaled length is nearly exponential the slope is minus
    the reciprocal of the unscaled mean.
    """
    pmf_row = np.asarray(pmf_row)
    if not 0 <= x_lo < x_hi < pmf_row.shape[0]:
        raise ValueError("window out of PMF range")
    xs = np.arange(x_lo, x_hi + 1)
    ys = pmf_row[x_lo : x_hi + 1]
    if np.any(ys <= 0.0):
        raise ValueError("PMF window contains empty bins; widen the run")
    slope, _ = np.polyfit(xs, np.log(ys), 1)
    return float(slope)
