"""Exact finite-state references used as ground truth for the simulator.

A truncated copy of the joint (modulating state, queue vector) chain is built
with per-queue buffers capped at ``cap`` jobs; arrivals that would overflow
the chosen queue are dropped (blocking truncation, which keeps generator rows
valid and biases tail mass down).  Its stationary distribution is solved
exactly with a sparse LU factorization, pinning one reference state instead
of appending a dense normalization row so the factorization stays sparse.
``truncation_mass``, the stationary probability that some queue sits at the
cap, indicates how faithful the truncation is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chain import solve_poisson, stationary_distribution
from .errors import SingularSystem, TooLarge, UnstableInput
from .model import MmJsqModel, derived_rates

STATE_GUARD = 5_000_000


@dataclass(frozen=True)
class TruncatedChain:
    """Enumerated truncated state space and its generator.

    States are numbered with the modulating state as the major coordinate and
    the queue lengths in row-major order; ``z[s]`` and ``q[s]`` decode state
    ``s``.
    """

    cap: int
    m: int
    n: int
    num_states: int
    z: np.ndarray
    q: np.ndarray
    generator: sp.csr_matrix


@dataclass(frozen=True)
class ExactStationary:
    """Exact stationary distribution of a truncated chain."""

    chain: TruncatedChain
    dist: np.ndarray
    truncation_mass: float


def truncated_chain(model: MmJsqModel, cap: int) -> TruncatedChain:
    """Build the truncated joint generator with JSQ routing.

    The arrival rate in each state is split equally among the queues attaining
    the minimum length (the generator-level equivalent of uniform
    tie-breaking); when every queue is full the arrival is dropped.
    """
    if cap < 1:
        raise ValueError("cap must be positive")
    m, n = model.m, model.n
    K = cap + 1
    num_states = m * K**n
    if num_states > STATE_GUARD:
        raise TooLarge(f"{num_states} states exceed the {STATE_GUARD} guard")

    idx = np.arange(num_states)
    z = idx // K**n
    rest = idx % K**n
    q = np.empty((num_states, n), dtype=np.int64)
    strides = np.empty(n, dtype=np.int64)
    for j in range(n):
        strides[j] = K ** (n - 1 - j)
        q[:, j] = rest // strides[j] % K

    rows, cols, vals = [], [], []

    def add(src, dst, rate):
        rows.append(src)
        cols.append(dst)
        vals.append(rate)

    for j in range(n):
        busy = q[:, j] > 0
        add(idx[busy], idx[busy] - strides[j], model.mu[z[busy], j])
    Q = model.chain.Q
    for i in range(m):
        for i2 in range(m):
            if i2 != i and Q[i, i2] > 0.0:
                mask = z == i
                add(
                    idx[mask],
                    idx[mask] + (i2 - i) * K**n,
                    np.full(int(mask.sum()), Q[i, i2]),
                )
    qmin = q.min(axis=1)
    room = qmin < cap
    at_min = (q == qmin[:, None]) & room[:, None]
    n_min = at_min.sum(axis=1).astype(np.float64)
    for j in range(n):
        mask = at_min[:, j]
        add(idx[mask], idx[mask] + strides[j], model.lam[z[mask]] / n_min[mask])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    gen = sp.coo_matrix((vals, (rows, cols)), shape=(num_states, num_states)).tocsr()
    gen = (gen - sp.diags(np.asarray(gen.sum(axis=1)).ravel())).tocsr()
    q.setflags(write=False)
    z.setflags(write=False)
    return TruncatedChain(cap, m, n, num_states, z, q, gen)


def exact_stationary(model: MmJsqModel, cap: int) -> ExactStationary:
    """Solve the truncated chain for its stationary distribution.

    Pins the empty-system reference state to mass one, solves the remaining
    nonsingular sparse system, then renormalizes.
    """
    chain = truncated_chain(model, cap)
    S = chain.num_states
    A = chain.generator.T.tocsc()
    keep = np.ones(S, dtype=bool)
    keep[0] = False
    Asub = A[keep][:, keep]
    b = -A[keep][:, [0]].toarray().ravel()
    try:
        lu = spla.splu(Asub.tocsc())
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SingularSystem(f"truncated stationary solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("truncated stationary solve produced non-finite mass")
    dist = np.empty(S)
    dist[0] = 1.0
    dist[keep] = x
    if dist.min() < -1e-9 * dist.max():
        raise SingularSystem("truncated stationary solve produced negative mass")
    np.clip(dist, 0.0, None, out=dist)
    dist /= dist.sum()
    residual = float(np.abs(dist @ chain.generator).max())
    if residual > 1e-8 * max(1.0, float(model.mu.max()) * model.n):
        raise SingularSystem(f"stationary residual {residual:.3e} above tolerance")
    at_cap = (chain.q == chain.cap).any(axis=1)
    dist.setflags(write=False)
    return ExactStationary(chain, dist, float(dist[at_cap].sum()))


@dataclass(frozen=True)
class ExactStatistics:
    """Stationary expectations computed from an exact truncated solve.

    Mirrors the simulator's statistics so the two can be compared one-to-one:
    ``pmf`` covers queue lengths ``0..cap`` per server, ``laplace_*`` are the
    transforms of the scaled queue lengths at the model's own ``epsilon``.
    """

    epsilon: float
    s_values: tuple[float, ...]
    mean_q: np.ndarray
    mean_q_sigma_over_n: float
    pmf: np.ndarray
    ssc_gap: np.ndarray
    empty_drift: float
    laplace_per_server: np.ndarray
    laplace_avg_queue: np.ndarray
    laplace_total: np.ndarray


def exact_statistics(
    exact: ExactStationary,
    model: MmJsqModel,
    s_values: tuple[float, ...] = (0.5, 1.0, 2.0),
) -> ExactStatistics:
    """Evaluate the simulator's statistic set exactly on the truncated chain."""
    chain = exact.chain
    w = exact.dist
    q = chain.q
    n = chain.n
    eps = derived_rates(model).epsilon
    mean_q = w @ q
    qsum = q.sum(axis=1)
    qbar = qsum / n
    ssc_gap = np.array([float(w @ np.abs(q[:, j] - qbar)) for j in range(n)])
    pmf = np.zeros((n, chain.cap + 1))
    for j in range(n):
        pmf[j] = np.bincount(q[:, j], weights=w, minlength=chain.cap + 1)
    empty_drift = float(w @ (model.mu[chain.z] * (q == 0)).sum(axis=1))
    svals = tuple(float(s) for s in s_values)
    lap_srv = np.array(
        [[float(w @ np.exp(-s * eps * q[:, j])) for j in range(n)] for s in svals]
    )
    lap_avg = np.array([float(w @ np.exp(-s * eps * qbar)) for s in svals])
    lap_tot = np.array([float(w @ np.exp(-s * eps * qsum)) for s in svals])
    return ExactStatistics(
        epsilon=eps,
        s_values=svals,
        mean_q=mean_q,
        mean_q_sigma_over_n=float(mean_q.sum()) / n,
        pmf=pmf,
        ssc_gap=ssc_gap,
        empty_drift=empty_drift,
        laplace_per_server=lap_srv,
        laplace_avg_queue=lap_avg,
        laplace_total=lap_tot,
    )


@dataclass(frozen=True)
class CovarianceCheck:
    """Both sides of the Poisson-equation covariance identity.

    ``covariance`` is ``Cov(exp(-s * eps * q_sigma), f(Z))`` and
    ``poisson_term`` is ``(exp(-s * eps) - 1) *
    E[exp(-s * eps * q_sigma) * V_f(Z) * (lam_Z - mu_state_sigma_Z)]``;
    their gap shrinks like ``eps**2`` as the load approaches one.
    """

    covariance: float
    poisson_term: float
    residual: float


def poisson_covariance_check(
    model: MmJsqModel, exact: ExactStationary, f, s: float
) -> CovarianceCheck:
    """Evaluate the covariance identity exactly for a state function ``f``."""
    if not s > 0.0:
        raise ValueError("s must be positive")
    f = np.asarray(f, dtype=np.float64)
    chain = exact.chain
    w = exact.dist
    rates = derived_rates(model)
    eps = rates.epsilon
    pi = stationary_distribution(model.chain)
    V = solve_poisson(model.chain, pi, f).V
    e_tot = np.exp(-s * eps * chain.q.sum(axis=1))
    fz = f[chain.z]
    cov = float(w @ (e_tot * fz)) - float(w @ e_tot) * float(w @ fz)
    drift_fn = V[chain.z] * (model.lam[chain.z] - rates.mu_state_sigma[chain.z])
    term = (np.exp(-s * eps) - 1.0) * float(w @ (e_tot * drift_fn))
    return CovarianceCheck(cov, term, abs(cov - term))


def mm1_geometric(a: float, b: float, x: int) -> float:
    """Stationary P(q = x) of an M/M/1 queue: ``(1 - a/b) * (a/b)**x``."""
    if not (0.0 < a < b):
        raise UnstableInput(f"need 0 < arrival rate < service rate, got {a}, {b}")
    if x < 0 or x != int(x):
        raise ValueError("x must be a nonnegative integer")
    r = a / b
    return (1.0 - r) * r ** int(x)


def mm1_scaled_laplace(a: float, b: float, s: float) -> float:
    """Exact ``E[exp(-s * eps * q)]`` for an M/M/1 queue with ``eps = 1 - a/b``."""
    if not (0.0 < a < b):
        raise UnstableInput(f"need 0 < arrival rate < service rate, got {a}, {b}")
    if not s > 0.0:
        raise ValueError("s must be positive")
    r = a / b
    return (1.0 - r) / (1.0 - r * np.exp(-s * (1.0 - r)))
