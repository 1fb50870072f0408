"""Finite continuous-time Markov chains.

Generator validation, stationary distribution, and the Poisson equation
``Q V = -(f - f_bar * 1)`` whose solution quantifies transient deviations of a
state function ``f`` along the chain.  All linear systems here are small and
dense: the stationary distribution comes from subtraction-free GTH state
elimination and the Poisson equation from a least-squares solve with the
normalization row appended.  Solutions are normalized deterministically so
results are reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyChain, NegativeRate, NotIrreducible, SingularSystem

STATIONARY_RESIDUAL_TOL = 1e-10
POISSON_RESIDUAL_TOL = 1e-9
POISSON_NORMALIZATION_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ModulatingChain:
    """Irreducible CTMC over states ``0..m-1`` with generator ``Q``.

    ``Q[i, i']`` is the transition rate from ``i`` to ``i'`` for ``i != i'``;
    the diagonal holds minus the off-diagonal row sums, so every row sums to
    zero as stored.  Build instances through :func:`validate_generator`.
    """

    m: int
    Q: np.ndarray

    @property
    def exit_rates(self) -> np.ndarray:
        """Rate of leaving each state (minus the generator diagonal)."""
        return -np.diag(self.Q)

    def scaled(self, factor: float) -> "ModulatingChain":
        """Chain with every transition rate multiplied by ``factor`` > 0.

        Uniform scaling speeds up or slows down the modulation without
        changing its stationary distribution.
        """
        if not factor > 0.0:
            raise ValueError(f"scale factor must be positive, got {factor}")
        return ModulatingChain(self.m, _frozen(self.Q * factor))


@dataclass(frozen=True)
class StationaryDistribution:
    """Probability vector ``pi`` with ``pi Q = 0`` and sum one."""

    pi: np.ndarray

    @property
    def m(self) -> int:
        return self.pi.shape[0]


@dataclass(frozen=True)
class PoissonSolution:
    """Solution ``V`` of ``Q V = -(f - f_bar * 1)``, normalized to ``pi . V = 0``.

    ``residual`` is the max-norm defect of the linear system at the returned
    ``V``.  Any constant shift of ``V`` also solves the equation; the
    ``pi . V = 0`` representative is chosen for reproducibility.
    """

    V: np.ndarray
    f_bar: float
    residual: float


def validate_generator(raw) -> ModulatingChain:
    """Validate a raw rate matrix and return the chain it defines.

    Off-diagonal entries are transition rates (units 1/time) and must be
    nonnegative; diagonal entries of the input are ignored and recomputed as
    minus the off-diagonal row sums.  The directed graph of strictly positive
    rates must be strongly connected.
    """
    Q = np.array(raw, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"generator must be a square matrix, got shape {Q.shape}")
    m = Q.shape[0]
    if m == 0:
        raise EmptyChain("modulating chain needs at least one state")
    off = Q.copy()
    np.fill_diagonal(off, 0.0)
    if not np.all(np.isfinite(off)):
        raise ValueError("transition rates must be finite")
    if np.any(off < 0.0):
        i, j = np.argwhere(off < 0.0)[0]
        raise NegativeRate(f"rate ({i},{j}) = {off[i, j]} is negative")
    if m > 1:
        ncomp, _ = connected_components(
            csr_matrix(off > 0.0), directed=True, connection="strong"
        )
        if ncomp != 1:
            raise NotIrreducible(
                f"positivity graph has {ncomp} strongly connected components"
            )
    gen = off - np.diag(off.sum(axis=1))
    return ModulatingChain(m, _frozen(gen))


def stationary_distribution(chain: ModulatingChain) -> StationaryDistribution:
    """Solve ``pi Q = 0`` with ``sum(pi) = 1``; all entries strictly positive.

    Uses Grassmann-Taksar-Heyman state elimination, which is subtraction-free
    and therefore componentwise accurate even for badly conditioned chains.
    """
    m = chain.m
    A = chain.Q.copy()
    np.fill_diagonal(A, 0.0)
    for k in range(m - 1, 0, -1):
        exit_to_rest = A[k, :k].sum()
        if not exit_to_rest > 0.0:
            raise SingularSystem(f"state {k} cannot reach lower-numbered states")
        A[:k, k] /= exit_to_rest
        # censor state k: reroute its flow through the remaining states
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
        np.fill_diagonal(A[:k, :k], 0.0)
    pi = np.ones(m)
    for k in range(1, m):
        pi[k] = pi[:k] @ A[:k, k]
    pi /= pi.sum()
    residual = float(np.abs(pi @ chain.Q).max())
    if residual > STATIONARY_RESIDUAL_TOL * max(1.0, float(chain.exit_rates.max())):
        raise SingularSystem(f"stationary residual {residual:.3e} above tolerance")
    if np.any(pi <= 0.0):
        raise SingularSystem("stationary solve produced nonpositive mass")
    return StationaryDistribution(_frozen(pi))


def solve_poisson(
    chain: ModulatingChain, pi: StationaryDistribution, f
) -> PoissonSolution:
    """Solve the Poisson equation for the state function ``f``.

    State by state the equation reads
    ``exit_rate(i) * V(i) - sum_{i' != i} Q[i, i'] * V(i') = f(i) - f_bar``
    with ``f_bar = pi . f``; in matrix form ``Q V = -(f - f_bar * 1)``.  The
    solution is unique up to an additive constant and is returned with
    ``pi . V = 0``.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (chain.m,):
        raise ValueError(f"f must have shape ({chain.m},), got {f.shape}")
    p = pi.pi
    f_bar = float(p @ f)
    g = f - f_bar
    if abs(p @ g) > 1e-12 * max(1.0, float(np.abs(f).max())):
        raise SingularSystem("centered f is not orthogonal to pi")
    # Stacking the normalization row makes the rank-(m-1) system full rank;
    # the system is consistent, so least squares returns the exact solution.
    A = np.vstack([chain.Q, p])
    b = np.concatenate([-g, [0.0]])
    V, *_ = np.linalg.lstsq(A, b, rcond=None)
    V = V - (p @ V)
    residual = float(np.abs(chain.Q @ V + g).max())
    if residual > POISSON_RESIDUAL_TOL:
        raise SingularSystem(f"Poisson residual {residual:.3e} above tolerance")
    if abs(p @ V) > POISSON_NORMALIZATION_TOL:
        raise SingularSystem("Poisson normalization drifted")
    return PoissonSolution(_frozen(V), f_bar, residual)
