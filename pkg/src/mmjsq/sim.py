"""Event-driven simulation of the Markov-modulated JSQ system.

Dynamics are simulated by competing exponential clocks: in state ``(i, q)``
the total event rate is ``R = lam[i] + sum_j mu[i, j] * 1{q_j > 0} +
exit_rate[i]``; the holding time is Exp(R) and the event category is chosen
with probability proportional to its rate.  Because every distribution is
exponential and rates change at each transition, re-drawing all clocks after
every event is exact by memorylessness.  Arrivals join a shortest queue with
uniform tie-breaking; statistics are time integrals over the post-burn-in
holding intervals divided by the post-burn-in elapsed time.

Randomness comes from a xoshiro256++ generator seeded by expanding the 64-bit
run seed through SplitMix64 (a standard, platform-stable pairing).
Replication ``r`` of :func:`replicate` uses seed ``(seed + r) mod 2**64``.
Identical ``(model, config)`` pairs produce bit-identical results.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import InvalidModel, OverflowGuard, UnstableModel
from .model import MmJsqModel, derived_rates

PARALLEL_ENV = "MMJSQ_PARALLEL"
RNG_NAME = "xoshiro256++ (SplitMix64-seeded)"

_QUEUE_GUARD = 2**31
_TWO53_INV = 1.0 / 9007199254740992.0
_LAPLACE_TABLE = 16384


@dataclass(frozen=True)
class SimConfig:
    """Run-length, burn-in and measurement settings for one simulation.

    ``num_arrivals`` counts arrival events; the first
    ``burn_in_fraction * num_arrivals`` arrivals are discarded before
    statistics start.  ``pmf_cap`` is the largest queue length tracked
    individually (one extra overflow bin collects the rest) and also bounds
    the geometric grid of imbalance-norm tail thresholds.
    """

    num_arrivals: int
    burn_in_fraction: float = 0.1
    pmf_cap: int = 512
    laplace_s_values: tuple[float, ...] = (0.5, 1.0, 2.0)
    seed: int = 0x5EED

    def __post_init__(self):
        if self.num_arrivals < 10_000:
            raise ValueError("num_arrivals must be at least 10**4")
        if not 0.0 <= self.burn_in_fraction < 0.5:
            raise ValueError("burn_in_fraction must lie in [0, 0.5)")
        if self.pmf_cap < 1:
            raise ValueError("pmf_cap must be positive")
        s = tuple(float(v) for v in self.laplace_s_values)
        if any(v <= 0.0 for v in s):
            raise ValueError("laplace_s_values must be positive")
        object.__setattr__(self, "laplace_s_values", s)
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class RunStats:
    """Time-weighted stationary statistics of a single run.

    ``pmf`` rows cover queue lengths ``0..pmf_cap`` plus one overflow bin and
    each sum to one.  ``laplace_per_server[si, j]`` estimates
    ``E[exp(-s_si * eps * q_j)]`` and ``laplace_avg_queue[si]`` the same for
    the across-server average queue length.  ``ssc_norm_tail[ti]`` estimates
    ``P(||q - mean(q) * 1|| > thresholds[ti])``.  ``total_sim_time`` is the
    post-burn-in elapsed time used as the statistics denominator.
    """

    n: int
    seed: int
    rng: str
    epsilon_used: float
    s_values: tuple[float, ...]
    pmf_cap: int
    thresholds: np.ndarray
    mean_q: np.ndarray
    mean_q_sigma_over_n: float
    pmf: np.ndarray
    ssc_gap: np.ndarray
    ssc_norm_tail_values: np.ndarray
    laplace_per_server: np.ndarray
    laplace_avg_queue: np.ndarray
    empty_drift: float
    total_sim_time: float
    arrivals: int
    departures: int

    @property
    def ssc_norm_tail(self) -> dict[float, float]:
        return dict(zip(self.thresholds.tolist(), self.ssc_norm_tail_values.tolist()))

    @property
    def laplace_emp(self) -> dict[float, tuple[np.ndarray, float]]:
        return {
            s: (self.laplace_per_server[i], float(self.laplace_avg_queue[i]))
            for i, s in enumerate(self.s_values)
        }


@dataclass(frozen=True)
class MeanCI:
    """Across-run mean and 95% normal-approximation half-width."""

    mean: np.ndarray
    half_width: np.ndarray


@dataclass(frozen=True)
class AggregateStats:
    """Per-statistic mean and confidence half-width across replications."""

    num_runs: int
    n: int
    epsilon: float
    s_values: tuple[float, ...]
    pmf_cap: int
    thresholds: np.ndarray
    mean_q: MeanCI
    mean_q_sigma_over_n: MeanCI
    pmf: MeanCI
    ssc_gap: MeanCI
    ssc_norm_tail: MeanCI
    laplace_per_server: MeanCI
    laplace_avg_queue: MeanCI
    empty_drift: MeanCI


@njit(inline="always")
def _xo_next(s0, s1, s2, s3):
    # xoshiro256++: output rotl(s0 + s3, 23) + s0, then advance the state.
    x = s0 + s3
    x = ((x << np.uint64(23)) | (x >> np.uint64(41))) + s0
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
    return x, s0, s1, s2, s3


@njit(inline="always")
def _splitmix64(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _kernel(
    num_arrivals,
    burn_arrivals,
    lam,
    mu,
    exit_rate,
    a_offset,
    a_count,
    a_rate,
    a_target,
    s_eps,
    s_eps_avg,
    pow_srv,
    pow_avg,
    pmf_cap,
    thresholds,
    seed,
):
    m, n = mu.shape
    n_s = s_eps.shape[0]
    n_thr = thresholds.shape[0]
    table = pow_srv.shape[1]
    table_avg = pow_avg.shape[1]

    z = _splitmix64(seed)
    s0 = z
    z = _splitmix64(z)
    s1 = z
    z = _splitmix64(z)
    s2 = z
    z = _splitmix64(z)
    s3 = z
    if s0 | s1 | s2 | s3 == np.uint64(0):
        s0 = np.uint64(1)

    q = np.zeros(n, np.int64)
    qsum = np.int64(0)
    i = 0
    arrivals = np.int64(0)
    departures = np.int64(0)
    collecting = burn_arrivals == 0

    elapsed = 0.0
    sum_tq = np.zeros(n)
    pmf_t = np.zeros((n, pmf_cap + 2))
    gap_t = np.zeros(n)
    tail_t = np.zeros(n_thr)
    lap_srv_t = np.zeros((n_s, n))
    lap_avg_t = np.zeros(n_s)
    empty_t = np.zeros(1)
    status = 0

    inv_n = 1.0 / n

    while arrivals < num_arrivals:
        busy = 0.0
        for j in range(n):
            if q[j] > 0:
                busy += mu[i, j]
        total = lam[i] + busy + exit_rate[i]

        x, s0, s1, s2, s3 = _xo_next(s0, s1, s2, s3)
        u = (np.float64(x >> np.uint64(11)) + 1.0) * _TWO53_INV
        dt = -math.log(u) / total

        if collecting:
            elapsed += dt
            qbar = qsum * inv_n
            norm2 = 0.0
            empty_rate = 0.0
            for j in range(n):
                qj = q[j]
                sum_tq[j] += dt * qj
                if qj <= pmf_cap:
                    pmf_t[j, qj] += dt
                else:
                    pmf_t[j, pmf_cap + 1] += dt
                d = qj - qbar
                gap_t[j] += dt * abs(d)
                norm2 += d * d
                if qj == 0:
                    empty_rate += mu[i, j]
            empty_t[0] += dt * empty_rate
            norm = math.sqrt(norm2)
            for ti in range(n_thr):
                if norm > thresholds[ti]:
                    tail_t[ti] += dt
            for si in range(n_s):
                for j in range(n):
                    qj = q[j]
                    if qj < table:
                        v = pow_srv[si, qj]
                    else:
                        v = math.exp(-s_eps[si] * qj)
                    lap_srv_t[si, j] += dt * v
                if qsum < table_avg:
                    va = pow_avg[si, qsum]
                else:
                    va = math.exp(-s_eps_avg[si] * qsum)
                lap_avg_t[si] += dt * va

        x, s0, s1, s2, s3 = _xo_next(s0, s1, s2, s3)
        y = np.float64(x >> np.uint64(11)) * _TWO53_INV * total

        if y < lam[i]:
            qmin = q[0]
            for j in range(1, n):
                if q[j] < qmin:
                    qmin = q[j]
            ties = 0
            for j in range(n):
                if q[j] == qmin:
                    ties += 1
            if ties == 1:
                for j in range(n):
                    if q[j] == qmin:
                        q[j] += 1
                        break
            else:
                x, s0, s1, s2, s3 = _xo_next(s0, s1, s2, s3)
                pick = int(np.float64(x >> np.uint64(11)) * _TWO53_INV * ties)
                if pick >= ties:
                    pick = ties - 1
                seen = 0
                for j in range(n):
                    if q[j] == qmin:
                        if seen == pick:
                            q[j] += 1
                            break
                        seen += 1
            qsum += 1
            arrivals += 1
            if qmin + 1 > _QUEUE_GUARD:
                status = 1
                break
            if arrivals == burn_arrivals:
                collecting = True
        elif y < lam[i] + busy:
            y -= lam[i]
            done = False
            last_busy = -1
            for j in range(n):
                if q[j] > 0:
                    last_busy = j
                    y -= mu[i, j]
                    if y < 0.0:
                        q[j] -= 1
                        done = True
                        break
            if not done:
                q[last_busy] -= 1
            qsum -= 1
            departures += 1
        else:
            y -= lam[i] + busy
            base = a_offset[i]
            cnt = a_count[i]
            nxt = i
            for kk in range(cnt):
                nxt = a_target[base + kk]
                y -= a_rate[base + kk]
                if y < 0.0:
                    break
            i = nxt

    return (
        status,
        arrivals,
        departures,
        elapsed,
        sum_tq,
        pmf_t,
        gap_t,
        tail_t,
        lap_srv_t,
        lap_avg_t,
        empty_t[0],
    )


def _modulation_tables(chain):
    offsets = np.zeros(chain.m, np.int64)
    counts = np.zeros(chain.m, np.int64)
    rates = []
    targets = []
    pos = 0
    for i in range(chain.m):
        offsets[i] = pos
        for i2 in range(chain.m):
            if i2 != i and chain.Q[i, i2] > 0.0:
                rates.append(chain.Q[i, i2])
                targets.append(i2)
                pos += 1
        counts[i] = pos - offsets[i]
    return (
        offsets,
        counts,
        np.asarray(rates, np.float64),
        np.asarray(targets, np.int64),
    )


def tail_thresholds(pmf_cap: int) -> np.ndarray:
    """Geometric grid 1, 2, 4, ... capped at ``pmf_cap``."""
    out = []
    t = 1
    while t <= pmf_cap:
        out.append(float(t))
        t *= 2
    return np.asarray(out)


def simulate(model: MmJsqModel, config: SimConfig) -> RunStats:
    """Run one deterministic-seeded simulation and collect stationary statistics."""
    rates = derived_rates(model)
    if rates.rho >= 1.0:
        raise UnstableModel(f"mean load {rates.rho} is not below one")
    if rates.lambda_bar <= 0.0:
        raise InvalidModel("mean arrival rate must be positive to simulate")
    eps = rates.epsilon
    s_values = np.asarray(config.laplace_s_values)
    s_eps = s_values * eps
    s_eps_avg = s_values * eps / model.n
    qgrid = np.arange(_LAPLACE_TABLE, dtype=np.float64)
    qgrid_avg = np.arange(model.n * _LAPLACE_TABLE, dtype=np.float64)
    pow_srv = np.exp(-np.outer(s_eps, qgrid))
    pow_avg = np.exp(-np.outer(s_eps_avg, qgrid_avg))
    thresholds = tail_thresholds(config.pmf_cap)
    a_offset, a_count, a_rate, a_target = _modulation_tables(model.chain)
    burn = int(config.burn_in_fraction * config.num_arrivals)

    (
        status,
        arrivals,
        departures,
        elapsed,
        sum_tq,
        pmf_t,
        gap_t,
        tail_t,
        lap_srv_t,
        lap_avg_t,
        empty_t,
    ) = _kernel(
        np.int64(config.num_arrivals),
        np.int64(burn),
        model.lam,
        model.mu,
        model.chain.exit_rates.copy(),
        a_offset,
        a_count,
        a_rate,
        a_target,
        s_eps,
        s_eps_avg,
        pow_srv,
        pow_avg,
        np.int64(config.pmf_cap),
        thresholds,
        np.uint64(config.seed),
    )
    if status == 1:
        raise OverflowGuard(f"a queue exceeded {_QUEUE_GUARD} jobs (runaway run)")
    if departures > arrivals:
        raise RuntimeError("departure count exceeded arrivals: simulator bug")
    if elapsed <= 0.0:
        raise RuntimeError("no post-burn-in time accumulated")

    mean_q = sum_tq / elapsed
    pmf = pmf_t / pmf_t.sum(axis=1, keepdims=True)
    laplace_srv = np.minimum(lap_srv_t / elapsed, 1.0)
    laplace_avg = np.minimum(lap_avg_t / elapsed, 1.0)
    if np.any(laplace_srv <= 0.0) or np.any(laplace_avg <= 0.0):
        raise RuntimeError("empirical Laplace values must stay positive")
    _check_pmf_mean(pmf, mean_q, config.pmf_cap)

    return RunStats(
        n=model.n,
        seed=config.seed,
        rng=RNG_NAME,
        epsilon_used=eps,
        s_values=config.laplace_s_values,
        pmf_cap=config.pmf_cap,
        thresholds=thresholds,
        mean_q=mean_q,
        mean_q_sigma_over_n=float(mean_q.sum()) / model.n,
        pmf=pmf,
        ssc_gap=gap_t / elapsed,
        ssc_norm_tail_values=tail_t / elapsed,
        laplace_per_server=laplace_srv,
        laplace_avg_queue=laplace_avg,
        empty_drift=float(empty_t) / elapsed,
        total_sim_time=elapsed,
        arrivals=int(arrivals),
        departures=int(departures),
    )


def _check_pmf_mean(pmf, mean_q, pmf_cap):
    # With negligible overflow mass, the PMF-implied mean must agree with the
    # directly integrated mean; a mismatch signals an accumulation bug.
    xs = np.arange(pmf_cap + 1, dtype=np.float64)
    for j in range(pmf.shape[0]):
        if pmf[j, -1] < 1e-6:
            pmf_mean = float(pmf[j, :-1] @ xs)
            if abs(pmf_mean - mean_q[j]) > 0.01 * max(mean_q[j], 1e-9):
                raise RuntimeError(
                    f"PMF mean {pmf_mean} disagrees with mean_q {mean_q[j]}"
                )


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(PARALLEL_ENV, "1")))
    except ValueError:
        return 1


def replicate(
    model: MmJsqModel,
    config: SimConfig,
    num_runs: int,
    max_workers: int | None = None,
) -> tuple[list[RunStats], AggregateStats]:
    """Run independent replications and aggregate them.

    Replication ``r`` uses seed ``(config.seed + r) mod 2**64``.  The
    aggregate holds, for every statistic, the across-run mean and the 95%
    normal-approximation half-width ``1.96 * std / sqrt(num_runs)``.
    Replications share no mutable state; with ``max_workers > 1`` (default:
    the MMJSQ_PARALLEL environment variable) they execute concurrently and
    are folded in run-index order, so results do not depend on the worker
    count.
    """
    if num_runs < 2:
        raise ValueError("need at least 2 runs for confidence intervals")
    configs = [
        replace(config, seed=(config.seed + r) % 2**64) for r in range(num_runs)
    ]
    workers = max_workers if max_workers is not None else _default_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda c: simulate(model, c), configs))
    else:
        runs = [simulate(model, c) for c in configs]

    def agg(pull):
        stack = np.stack([np.asarray(pull(r), dtype=np.float64) for r in runs])
        mean = stack.mean(axis=0)
        hw = 1.96 * stack.std(axis=0, ddof=1) / math.sqrt(num_runs)
        return MeanCI(mean, hw)

    first = runs[0]
    aggregate = AggregateStats(
        num_runs=num_runs,
        n=model.n,
        epsilon=first.epsilon_used,
        s_values=first.s_values,
        pmf_cap=first.pmf_cap,
        thresholds=first.thresholds,
        mean_q=agg(lambda r: r.mean_q),
        mean_q_sigma_over_n=agg(lambda r: r.mean_q_sigma_over_n),
        pmf=agg(lambda r: r.pmf),
        ssc_gap=agg(lambda r: r.ssc_gap),
        ssc_norm_tail=agg(lambda r: r.ssc_norm_tail_values),
        laplace_per_server=agg(lambda r: r.laplace_per_server),
        laplace_avg_queue=agg(lambda r: r.laplace_avg_queue),
        empty_drift=agg(lambda r: r.empty_drift),
    )
    return runs, aggregate
