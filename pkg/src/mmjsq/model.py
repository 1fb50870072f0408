"""Markov-modulated JSQ model: rates, load scaling, and heavy-traffic predictions.

The model couples a modulating chain with per-state arrival rates and a
per-state per-server service-rate table.  From it we derive mean loads, the
state-space-collapse (SSC) load condition report with its drift constants, and
the heavy-traffic predictor: the constant ``k_star`` obtained from the Poisson
equation at critical load, the limiting per-server exponential mean
``(1/n) * (1 + k_star / mu_sigma)``, and the limiting Laplace transform of the
scaled queue length.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .chain import (
    ModulatingChain,
    PoissonSolution,
    StationaryDistribution,
    _frozen,
    solve_poisson,
    stationary_distribution,
)
from .errors import InvalidModel, NonpositiveS, ZeroArrivalVector


class SscConditionWarning(UserWarning):
    """Emitted when a prediction is computed although the SSC load condition fails."""


@dataclass(frozen=True)
class MmJsqModel:
    """JSQ system with ``n`` servers modulated by a finite chain.

    ``lam[i]`` is the total arrival rate and ``mu[i, j]`` the service rate of
    server ``j`` while the modulating chain sits in state ``i``.
    """

    chain: ModulatingChain
    n: int
    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidModel(f"need a positive integer server count, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        lam = np.asarray(self.lam, dtype=np.float64)
        mu = np.asarray(self.mu, dtype=np.float64)
        m = self.chain.m
        if lam.shape != (m,):
            raise InvalidModel(f"lambda must have shape ({m},), got {lam.shape}")
        if mu.shape != (m, self.n):
            raise InvalidModel(f"mu must have shape ({m},{self.n}), got {mu.shape}")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(mu))):
            raise InvalidModel("rates must be finite")
        if np.any(lam < 0.0) or np.any(mu < 0.0):
            raise InvalidModel("rates must be nonnegative")
        pi = stationary_distribution(self.chain).pi
        mean_service = pi @ mu
        if np.any(mean_service <= 0.0):
            j = int(np.argmin(mean_service))
            raise InvalidModel(f"server {j} has zero mean service rate")
        object.__setattr__(self, "lam", _frozen(lam))
        object.__setattr__(self, "mu", _frozen(mu))

    @property
    def m(self) -> int:
        return self.chain.m

    @property
    def lambda_max(self) -> float:
        return float(self.lam.max())

    @property
    def mu_max(self) -> float:
        return float(self.mu.max())


@dataclass(frozen=True)
class DerivedRates:
    """Stationary-averaged rate bookkeeping for a model.

    ``lambda_star`` is the limiting arrival-rate vector (one entry per server,
    equal to the mean service rates), and ``lambda_ideal = rho * lambda_star``.
    """

    pi: np.ndarray
    lambda_bar: float
    mu_per_server: np.ndarray
    mu_sigma: float
    mu_state_sigma: np.ndarray
    mu_state_min: np.ndarray
    rho: float
    epsilon: float
    lambda_star: np.ndarray
    lambda_ideal: np.ndarray


@dataclass(frozen=True)
class SscReport:
    """SSC load condition ``lam_i > mu_state_sigma_i - n * mu_state_min_i``.

    ``margins`` are the per-state slack values (positive everywhere iff the
    condition is satisfied), ``thresholds`` the load-independent right-hand
    sides, and ``critical_load`` the smallest proportional load above which
    every margin is positive.  The drift constants ``gamma``, ``B``,
    ``nu_max``, ``g_bar``, ``theta_cap`` and ``c_exp`` (reported only when the
    condition is satisfied) certify an exponential tail bound for the queue
    imbalance: ``theta_cap`` uses the conservative total-rate bound ``g_bar``,
    and ``c_exp`` is evaluated at ``theta_cap / 2`` to stay strictly inside the
    convergence region of the underlying geometric series.
    """

    satisfied: bool
    margins: np.ndarray
    thresholds: np.ndarray
    delta: np.ndarray
    lambda_prime: np.ndarray
    lambda_prime_min: float
    critical_load: float
    gamma: float | None
    B: float | None
    nu_max: float | None
    g_bar: float | None
    theta_cap: float | None
    c_exp: float | None


@dataclass(frozen=True)
class HtPrediction:
    """Heavy-traffic prediction at critical load (``rho = 1``).

    ``k`` holds ``(mu_state_sigma - lam) * V_h`` per state at critical load,
    ``k_star`` its stationary mean, and ``limit_mean_per_server`` the mean of
    the limiting exponential law of the scaled per-server queue length.
    ``k_mean_at_input_load`` is the same statistic evaluated at the model's own
    load (diagnostic; it differs from ``k_star`` by O(epsilon)).
    """

    n: int
    mu_sigma: float
    pi: np.ndarray
    h: np.ndarray
    V_h: PoissonSolution
    k: np.ndarray
    k_star: float
    limit_mean_per_server: float
    limit_rate: float
    ssc_at_limit: SscReport
    rho_input: float
    k_mean_at_input_load: float


def derived_rates(model: MmJsqModel) -> DerivedRates:
    """Stationary averages, per-state totals, load and heavy-traffic gap."""
    pi = stationary_distribution(model.chain).pi
    lambda_bar = float(pi @ model.lam)
    mu_per_server = pi @ model.mu
    mu_state_sigma = model.mu.sum(axis=1)
    mu_state_min = model.mu.min(axis=1)
    # same dot-product structure as lambda_bar, so the rho = 1 case is exact
    mu_sigma = float(pi @ mu_state_sigma)
    rho = lambda_bar / mu_sigma
    return DerivedRates(
        pi=_frozen(pi),
        lambda_bar=lambda_bar,
        mu_per_server=_frozen(mu_per_server),
        mu_sigma=mu_sigma,
        mu_state_sigma=_frozen(mu_state_sigma),
        mu_state_min=_frozen(mu_state_min),
        rho=rho,
        epsilon=1.0 - rho,
        lambda_star=_frozen(mu_per_server),
        lambda_ideal=_frozen(mu_per_server * rho),
    )


def scale_to_load(model: MmJsqModel, rho_target: float) -> MmJsqModel:
    """Rescale the arrival vector so the mean load is exactly ``rho_target``.

    The arrival vector keeps its shape (a single scalar multiplies it);
    service rates and the modulating chain are untouched.  ``rho_target`` may
    be 1 for the predictor's limit computation.
    """
    if not 0.0 < rho_target <= 1.0:
        raise ValueError(f"rho_target must be in (0, 1], got {rho_target}")
    rates = derived_rates(model)
    if rates.lambda_bar == 0.0:
        raise ZeroArrivalVector("cannot scale an all-zero arrival vector")
    factor = rho_target * rates.mu_sigma / rates.lambda_bar
    return MmJsqModel(model.chain, model.n, model.lam * factor, model.mu)


def check_ssc(model: MmJsqModel) -> SscReport:
    """Evaluate the SSC load condition and its drift constants.

    An unsatisfied condition is a valid report, not an error; the constants
    are then omitted because the drift argument behind them needs every
    hypothetical per-server arrival rate to be positive.
    """
    rates = derived_rates(model)
    n = model.n
    thresholds = rates.mu_state_sigma - n * rates.mu_state_min
    margins = model.lam - thresholds
    # lambda_prime rows sum to lam[i]; per-state minimum equals margins / n.
    shift = (rates.mu_state_sigma - model.lam) / n
    lambda_prime = model.mu - shift[:, None]
    lambda_prime_min = float(lambda_prime.min())
    satisfied = bool(np.all(margins > 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(
            rates.mu_state_sigma > 0.0,
            (1.0 - model.lam / rates.mu_state_sigma) / n,
            np.nan,
        )
    critical_load = _critical_load(model, rates, thresholds)
    gamma = B = nu_max = g_bar = theta_cap = c_exp = None
    if satisfied:
        state_min = lambda_prime.min(axis=1)
        gamma = 0.5 * float(state_min.min())
        B = (1.0 - 1.0 / n) * float(
            ((model.lam + rates.mu_state_sigma) / state_min).max()
        )
        nu_max = 1.0 + 1.0 / math.sqrt(n)
        g_bar = model.lambda_max + n * model.mu_max + float(
            model.chain.exit_rates.max()
        )
        theta_cap = gamma / (4.0 * nu_max * (g_bar * nu_max + gamma))
        theta_half = 0.5 * theta_cap
        c_exp = math.exp(2.0 * B * theta_half) + gamma / (
            gamma - 4.0 * theta_half * nu_max * (g_bar * nu_max + gamma)
        )
    return SscReport(
        satisfied=satisfied,
        margins=_frozen(margins),
        thresholds=_frozen(thresholds),
        delta=_frozen(delta),
        lambda_prime=_frozen(lambda_prime),
        lambda_prime_min=lambda_prime_min,
        critical_load=critical_load,
        gamma=gamma,
        B=B,
        nu_max=nu_max,
        g_bar=g_bar,
        theta_cap=theta_cap,
        c_exp=c_exp,
    )


def _critical_load(model, rates, thresholds) -> float:
    """Smallest load r such that the condition holds whenever load > r.

    Loads are reached by scaling the arrival vector proportionally, so state
    ``i`` needs ``r * lam_at_rho1[i] > thresholds[i]``.
    """
    if rates.lambda_bar == 0.0:
        return math.inf if np.any(thresholds >= 0.0) else 0.0
    lam_at_one = model.lam * (rates.mu_sigma / rates.lambda_bar)
    worst = 0.0
    for lam_i, thr_i in zip(lam_at_one, thresholds):
        if lam_i > 0.0:
            worst = max(worst, thr_i / lam_i)
        elif thr_i >= 0.0:
            return math.inf
    return worst


def heavy_traffic_prediction(model: MmJsqModel) -> HtPrediction:
    """Predict the heavy-traffic law of the scaled per-server queue length.

    The model is scaled to critical load, the Poisson equation is solved for
    ``h = mu_state_sigma - lam``, and ``k_star`` is the stationary mean of
    ``h * V_h``.  The scaled queue length converges to an exponential law with
    mean ``(1/n) * (1 + k_star / mu_sigma)``.  A failing SSC condition issues
    a warning instead of an error: the mean prediction is often still
    informative there.
    """
    limit = scale_to_load(model, 1.0)
    rates = derived_rates(limit)
    ssc = check_ssc(limit)
    if not ssc.satisfied:
        warnings.warn(
            "SSC load condition fails at critical load; prediction may not "
            "describe per-server distributions",
            SscConditionWarning,
            stacklevel=2,
        )
    pi = StationaryDistribution(rates.pi)
    h = rates.mu_state_sigma - limit.lam
    if abs(float(rates.pi @ h)) > 1e-10 * max(1.0, rates.mu_sigma):
        raise InvalidModel("h does not average to zero at critical load")
    V_h = solve_poisson(limit.chain, pi, h)
    k = h * V_h.V
    k_star = float(rates.pi @ k)
    limit_mean = (1.0 + k_star / rates.mu_sigma) / model.n
    in_rates = derived_rates(model)
    h_in = in_rates.mu_state_sigma - model.lam
    V_in = solve_poisson(model.chain, pi, h_in)
    k_mean_in = float(in_rates.pi @ (h_in * V_in.V))
    return HtPrediction(
        n=model.n,
        mu_sigma=rates.mu_sigma,
        pi=rates.pi,
        h=_frozen(h),
        V_h=V_h,
        k=_frozen(k),
        k_star=k_star,
        limit_mean_per_server=limit_mean,
        limit_rate=1.0 / limit_mean,
        ssc_at_limit=ssc,
        rho_input=in_rates.rho,
        k_mean_at_input_load=k_mean_in,
    )


def limit_laplace(prediction: HtPrediction, s: float) -> float:
    """Limiting Laplace transform of the scaled per-server queue length.

    Returns ``1 / (1 + (s/n) * (1 + k_star / mu_sigma))`` for ``s > 0``.
    """
    if not s > 0.0:
        raise NonpositiveS(f"s must be positive, got {s}")
    return 1.0 / (1.0 + s * prediction.limit_mean_per_server)
