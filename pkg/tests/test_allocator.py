import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcnoma.allocator import (
    AllocationProblem,
    extract_decoding_order,
    maximize_sum_rate,
    minimize_energy,
    solve_bc_design,
)
from mcnoma.baselines import rate_target_waterfill, waterfill
from mcnoma.channel import ChannelSet
from mcnoma.duality import bc_to_mac_channel
from mcnoma.errors import InfeasibleError, InputError
from mcnoma.sic import all_subsets, sic_rates, subset_capacity

from conftest import random_bc, random_mac, scalar_mac


def _problem(ch, floors, weights=None):
    U = ch.num_users
    return AllocationProblem(ch, np.ones(U) if weights is None else weights, np.asarray(floors, float))


def _check_certificate(sol, floors):
    assert sol.kkt_residual < 1e-6
    slack = sol.rate_totals - np.asarray(floors)
    assert np.all(slack >= -1e-6 * np.maximum(1.0, floors))
    assert np.max(sol.duals * np.maximum(slack, 0.0)) <= 1e-5
    assert np.all(sol.duals >= 0)


def test_zero_floors_give_zero_solution(rng):
    sol = minimize_energy(_problem(random_mac(rng, 3, 2, 4), [0, 0, 0]))
    assert sol.energy == 0.0
    np.testing.assert_array_equal(sol.duals, 0.0)
    assert sol.covariances.total_trace() == 0.0


@pytest.mark.parametrize("gain,noise,target", [(1.0, 1.0, 1.0), (0.25, 2.0, 3.0), (4.0, 0.5, 0.1)])
def test_single_user_scalar_closed_form(gain, noise, target):
    ch = scalar_mac([[gain]], noise=noise)
    sol = minimize_energy(_problem(ch, [target]))
    expected = (2.0**target - 1.0) * noise / gain
    assert sol.energy == pytest.approx(expected, rel=1e-7)
    # theta is the marginal energy per bit: d/db of (2^b - 1) sigma^2/g
    assert sol.duals[0] == pytest.approx(np.log(2) * 2.0**target * noise / gain, rel=1e-5)
    _check_certificate(sol, [target])


def test_two_user_hand_example():
    ch = scalar_mac([[1.0], [1.0]])
    sol = minimize_energy(_problem(ch, [1.0, 1.0]))
    assert sol.energy == pytest.approx(3.0, rel=1e-7)
    np.testing.assert_allclose(sol.rate_totals, [1.0, 1.0], atol=1e-6)
    # symmetric users tie; both receive 4 ln 2 per bit
    np.testing.assert_allclose(sol.duals, 4 * np.log(2), rtol=1e-5)
    assert sol.tie_groups == ((0, 1),)
    _check_certificate(sol, [1.0, 1.0])


def test_order_from_multipliers():
    order, tied = extract_decoding_order(np.array([0.5, 0.2, 0.9]))
    assert order.sequence == (1, 0, 2)
    assert not tied
    order, tied = extract_decoding_order(np.array([0.4, 0.4, 0.4]))
    assert tied and order.tie_groups == ((0, 1, 2),)
    order, tied = extract_decoding_order(np.array([1.3]))
    assert order.sequence == (0,) and not tied


def test_single_user_sum_rate_is_waterfilling(rng):
    ch = random_mac(rng, 1, 1, 16)
    g = np.abs(ch.matrices[:, 0, 0]) ** 2
    p = waterfill(g, 5.0)
    sol = maximize_sum_rate(ch, 5.0)
    assert sol.sum_rate == pytest.approx(np.sum(np.log2(1 + g * p)), rel=1e-7)
    np.testing.assert_allclose(sol.covariances.traces()[0], p, atol=1e-6)


def test_single_user_energy_matches_rate_target_waterfill(rng):
    ch = random_mac(rng, 1, 3, 8, dims=(2,))
    eig = np.concatenate([np.linalg.eigvalsh(H.conj().T @ H) for H in ch.matrices])
    p = rate_target_waterfill(eig, 12.0)
    sol = minimize_energy(_problem(ch, [12.0]))
    assert sol.energy == pytest.approx(p.sum(), rel=1e-7)


def test_sum_rate_hand_example():
    sol = maximize_sum_rate(scalar_mac([[1.0], [1.0]]), 3.0)
    assert sol.sum_rate == pytest.approx(2.0, rel=1e-8)
    assert sol.total_power == pytest.approx(3.0, rel=1e-7)


def test_vanishing_budget(rng):
    ch = random_mac(rng, 3, 2, 4)
    assert maximize_sum_rate(ch, 0.0).sum_rate == 0.0
    assert maximize_sum_rate(ch, 1e-9).sum_rate < 1e-7


def test_weighted_sum_rate_follows_weights():
    ch = scalar_mac([[1.0], [1.0]])
    sol = maximize_sum_rate(ch, 3.0, weights=[2.0, 1.0])
    # the heavier user is decoded last and gets the interference-free rate
    assert sol.order.sequence == (1, 0)
    assert sol.rate_totals[0] > sol.rate_totals[1]
    assert sol.sum_rate == pytest.approx(2.0, rel=1e-6)


def test_errors():
    ch = scalar_mac([[1.0], [0.0]])
    with pytest.raises(InfeasibleError):
        minimize_energy(_problem(ch, [1.0, 1.0]))
    with pytest.raises(InputError):
        minimize_energy(_problem(scalar_mac([[1.0], [1.0]]), [1.0, 1.0], weights=np.array([1.0, 0.0])))
    with pytest.raises(InputError):
        AllocationProblem(ch, np.ones(2), np.array([-1.0, 0.0]))
    with pytest.raises(InputError):
        maximize_sum_rate(scalar_mac(np.ones((9, 1))), 1.0)


def test_finite_difference_duals_agree(rng):
    ch = random_mac(rng, 3, 2, 2)
    prob = _problem(ch, [1.0, 2.0, 1.5])
    a = minimize_energy(prob)
    b = minimize_energy(prob, dual_method="finite-difference")
    np.testing.assert_allclose(b.duals, a.duals, rtol=1e-3)
    assert b.dual_source == "finite-difference"


def test_bc_design_single_user(rng):
    bc = random_bc(rng, 1, 3, 4)
    eig = np.concatenate([np.linalg.eigvalsh(H.conj().T @ H) for H in bc.matrices])
    sol = solve_bc_design(AllocationProblem(bc, np.ones(1), np.array([6.0])))
    assert sol.energy == pytest.approx(rate_target_waterfill(eig, 6.0).sum(), rel=1e-7)


def test_bc_design_rates_match_mac(rng):
    bc = random_bc(rng, 3, 2, 4)
    floors = np.array([2.0, 3.0, 1.0])
    sol = solve_bc_design(AllocationProblem(bc, np.ones(3), floors))
    np.testing.assert_allclose(sol.rates.totals, sol.mac_solution.rates.totals, rtol=1e-6)
    np.testing.assert_allclose(sol.rates.totals, floors, rtol=1e-6)
    assert sol.total_power == pytest.approx(sol.mac_solution.total_power, rel=1e-8)


def test_bc_design_zero_floors(rng):
    sol = solve_bc_design(AllocationProblem(random_bc(rng, 2, 2, 3), np.ones(2), np.zeros(2)))
    assert sol.energy == 0.0


def test_multi_antenna_users(rng):
    ch = random_mac(rng, 2, 3, 3, dims=(2, 1))
    floors = np.array([4.0, 2.0])
    sol = minimize_energy(_problem(ch, floors, weights=np.array([1.0, 2.0])))
    _check_certificate(sol, floors)
    np.testing.assert_allclose(sol.rates.totals, floors, rtol=1e-6)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 100_000), U=st.integers(1, 3), N=st.sampled_from([1, 2, 4]))
def test_scalar_sum_rate_matches_best_user_waterfilling(seed, U, N):
    """Scalar MAC sum capacity: each subcarrier goes to its strongest user."""
    rng = np.random.default_rng(seed)
    g = rng.exponential(1.0, (U, N))
    ch = scalar_mac(g)
    P = float(rng.uniform(0.5, 10.0))
    best = g.max(axis=0)
    expected = np.sum(np.log2(1 + best * waterfill(best, P)))
    sol = maximize_sum_rate(ch, P)
    assert sol.sum_rate == pytest.approx(expected, rel=1e-6)
    assert sol.kkt_residual < 1e-6


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 100_000), U=st.integers(2, 3))
def test_energy_solution_is_feasible_and_certified(seed, U):
    rng = np.random.default_rng(seed)
    ch = random_mac(rng, U, 2, 2)
    floors = rng.uniform(0.2, 2.0, U)
    weights = rng.uniform(0.5, 2.0, U)
    sol = minimize_energy(_problem(ch, floors, weights))
    _check_certificate(sol, floors)
    np.testing.assert_allclose(sol.rates.totals, floors, rtol=1e-6, atol=1e-9)
    # the covariances support the rates: every subset stays below its capacity
    for T in all_subsets(U):
        assert sol.rates.totals[list(T)].sum() <= subset_capacity(ch, sol.covariances, T).sum() + 1e-6
    # the reported order reproduces the rates when there is no time sharing
    if sol.schedule is None:
        np.testing.assert_allclose(sic_rates(ch, sol.covariances, sol.order).totals, floors, rtol=1e-6)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_energy_is_monotone_in_floors(seed):
    rng = np.random.default_rng(seed)
    ch = random_mac(rng, 2, 2, 2)
    floors = rng.uniform(0.5, 2.0, 2)
    low = minimize_energy(_problem(ch, floors)).energy
    high = minimize_energy(_problem(ch, floors * 1.2)).energy
    assert high > low
