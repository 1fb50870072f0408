import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmjsq import (
    solve_poisson,
    stationary_distribution,
    validate_generator,
)
from mmjsq.errors import EmptyChain, NegativeRate, NotIrreducible

from conftest import cyclic_chain


def random_irreducible(m, seed):
    """Random chain made irreducible by superimposing a cycle."""
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(0.0, 2.0, (m, m)) * rng.integers(0, 2, (m, m))
    for i in range(m):
        alpha[i, (i + 1) % m] = max(alpha[i, (i + 1) % m], 0.1)
    return validate_generator(alpha)


class TestValidateGenerator:
    def test_cyclic_setting_accepted(self):
        chain = cyclic_chain(rate=0.1)
        assert chain.m == 3
        np.testing.assert_allclose(chain.exit_rates, 0.1)
        np.testing.assert_allclose(chain.Q.sum(axis=1), 0.0, atol=1e-15)

    def test_single_state_accepted(self):
        chain = validate_generator([[0.0]])
        assert chain.m == 1
        assert chain.Q[0, 0] == 0.0

    def test_input_diagonal_ignored(self):
        chain = validate_generator([[99.0, 2.0], [1.0, -42.0]])
        assert chain.Q[0, 0] == -2.0
        assert chain.Q[1, 1] == -1.0

    def test_absorbing_state_rejected(self):
        with pytest.raises(NotIrreducible):
            validate_generator([[0.0, 1.0], [0.0, 0.0]])

    def test_empty_rejected(self):
        with pytest.raises(EmptyChain):
            validate_generator(np.zeros((0, 0)))

    def test_negative_rate_rejected(self):
        with pytest.raises(NegativeRate):
            validate_generator([[0.0, -1.0], [1.0, 0.0]])

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            validate_generator([[0.0, 1.0]])

    def test_scaled_multiplies_rates(self):
        chain = cyclic_chain(rate=0.1).scaled(10.0)
        np.testing.assert_allclose(chain.exit_rates, 1.0)


class TestStationaryDistribution:
    def test_cyclic_symmetry(self):
        pi = stationary_distribution(cyclic_chain()).pi
        np.testing.assert_allclose(pi, 1.0 / 3.0, atol=1e-14)

    def test_single_state(self):
        pi = stationary_distribution(validate_generator([[0.0]])).pi
        np.testing.assert_allclose(pi, [1.0])

    def test_two_state_balance(self):
        # pi solves pi_0 * 2 = pi_1 * 1
        chain = validate_generator([[0.0, 2.0], [1.0, 0.0]])
        pi = stationary_distribution(chain).pi
        np.testing.assert_allclose(pi, [1.0 / 3.0, 2.0 / 3.0], atol=1e-14)

    @given(st.integers(2, 7), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_permutation_equivariance(self, m, seed):
        chain = random_irreducible(m, seed)
        pi = stationary_distribution(chain).pi
        perm = np.random.default_rng(seed + 1).permutation(m)
        permuted = validate_generator(chain.Q[np.ix_(perm, perm)])
        pi_perm = stationary_distribution(permuted).pi
        np.testing.assert_allclose(pi_perm, pi[perm], atol=1e-12)

    @given(st.integers(1, 8), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_invariants(self, m, seed):
        chain = random_irreducible(m, seed)
        pi = stationary_distribution(chain).pi
        assert np.all(pi > 0.0)
        assert abs(pi.sum() - 1.0) <= 1e-12
        assert np.abs(pi @ chain.Q).max() <= 1e-10


class TestSolvePoisson:
    def test_constant_f_gives_zero(self):
        chain = cyclic_chain()
        pi = stationary_distribution(chain)
        sol = solve_poisson(chain, pi, np.full(3, 7.5))
        np.testing.assert_allclose(sol.V, 0.0, atol=1e-12)
        assert sol.f_bar == pytest.approx(7.5)

    def test_cyclic_setting_differences(self):
        # Service-minus-arrival imbalance at critical load for the bundled
        # cyclic scenario; hand-solved cycle equations give the differences.
        chain = cyclic_chain(rate=0.1)
        pi = stationary_distribution(chain)
        sol = solve_poisson(chain, pi, np.array([-1.0, -0.5, 1.5]))
        assert sol.V[1] - sol.V[0] == pytest.approx(10.0, abs=1e-10)
        assert sol.V[2] - sol.V[1] == pytest.approx(5.0, abs=1e-10)
        assert abs(pi.pi @ sol.V) <= 1e-10

    def test_two_state_hand_solution(self):
        chain = validate_generator([[0.0, 1.0], [1.0, 0.0]])
        pi = stationary_distribution(chain)
        sol = solve_poisson(chain, pi, np.array([1.0, -1.0]))
        np.testing.assert_allclose(sol.V, [0.5, -0.5], atol=1e-12)

    def test_single_state(self):
        chain = validate_generator([[0.0]])
        pi = stationary_distribution(chain)
        sol = solve_poisson(chain, pi, np.array([3.0]))
        np.testing.assert_allclose(sol.V, [0.0], atol=1e-15)

    @given(
        st.integers(2, 7),
        st.integers(0, 10_000),
        st.lists(st.floats(-50.0, 50.0), min_size=2, max_size=7),
    )
    @settings(max_examples=40, deadline=None)
    def test_defect_and_normalization(self, m, seed, fvals):
        chain = random_irreducible(m, seed)
        pi = stationary_distribution(chain)
        f = np.resize(np.asarray(fvals), m)
        sol = solve_poisson(chain, pi, f)
        # per-state form of the equation
        defect = chain.exit_rates * sol.V - (
            (chain.Q - np.diag(np.diag(chain.Q))) @ sol.V
        )
        np.testing.assert_allclose(defect, f - sol.f_bar, atol=1e-9)
        assert sol.residual <= 1e-9
        assert abs(pi.pi @ sol.V) <= 1e-10

    def test_shift_invariance_and_idempotence(self):
        chain = random_irreducible(5, 42)
        pi = stationary_distribution(chain)
        f = np.array([1.0, -2.0, 0.5, 3.0, -1.0])
        sol = solve_poisson(chain, pi, f)
        for c in (-1e3, 1.0, 1e3):
            shifted = sol.V + c
            np.testing.assert_allclose(
                chain.Q @ shifted, chain.Q @ sol.V, atol=1e-9
            )
        again = solve_poisson(chain, pi, f)
        np.testing.assert_allclose(again.V, sol.V, atol=0.0)
