import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcnoma.allocator import AllocationProblem, maximize_sum_rate, minimize_energy
from mcnoma.baselines import (
    fixed_order_rates,
    greedy_partition,
    mc_noma_allocate,
    noma_allocate,
    oma_allocate,
    rate_target_waterfill,
    subcarrier_gain_orders,
    waterfill,
)
from mcnoma.errors import InfeasibleError, InputError
from mcnoma.sic import CovarianceSet, DecodingOrder, sic_rates

from conftest import random_mac, scalar_mac


def test_waterfill_examples():
    np.testing.assert_allclose(waterfill([1.0, 1.0], 2.0), [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(waterfill([2.0, 1.0], 1.0), [0.75, 0.25], atol=1e-12)
    np.testing.assert_array_equal(waterfill([3.0, 1.0], 0.0), [0.0, 0.0])
    # a weak channel stays dry: level 1.5 is below 1/0.1
    np.testing.assert_allclose(waterfill([1.0, 0.1], 0.5), [0.5, 0.0], atol=1e-12)


def test_waterfill_rejects_bad_input():
    with pytest.raises(InputError):
        waterfill([-1.0], 1.0)
    with pytest.raises(InputError):
        waterfill([1.0], -1.0)


@settings(max_examples=200, deadline=None)
@given(
    gains=st.lists(st.one_of(st.just(0.0), st.floats(1e-200, 100.0)), min_size=1, max_size=20),
    budget=st.floats(0.0, 100.0),
)
def test_waterfill_kkt(gains, budget):
    g = np.array(gains)
    p = waterfill(g, budget)
    assert np.all(p >= 0)
    if not np.any(g > 0):
        assert np.all(p == 0)
        return
    assert p.sum() == pytest.approx(budget, rel=1e-9, abs=1e-12)
    if budget == 0:
        return
    on = p > 0
    level = p[on] + 1.0 / g[on]
    np.testing.assert_allclose(level, level[0], rtol=1e-9)
    off = (~on) & (g > 0)
    assert np.all(1.0 / g[off] >= level[0] * (1 - 1e-9))


@settings(max_examples=100, deadline=None)
@given(gains=st.lists(st.floats(0.01, 100.0), min_size=1, max_size=12), target=st.floats(0.0, 30.0))
def test_rate_target_waterfill_meets_target(gains, target):
    g = np.array(gains)
    p = rate_target_waterfill(g, target)
    assert np.sum(np.log2(1 + g * p)) == pytest.approx(target, rel=1e-9, abs=1e-9)
    # it is the water-filling for its own total power
    np.testing.assert_allclose(p, waterfill(g, p.sum()), atol=1e-9 * max(1.0, p.sum()))


def test_rate_target_waterfill_infeasible():
    with pytest.raises(InfeasibleError):
        rate_target_waterfill([0.0, 0.0], 1.0)


def test_greedy_partition_gives_every_user_a_subcarrier(rng):
    gains = rng.exponential(1.0, (3, 8))
    assignment = greedy_partition(gains)
    assert set(assignment) == {0, 1, 2}
    assert assignment.size == 8
    assert sorted(np.bincount(assignment)) == [2, 3, 3]


@pytest.mark.parametrize("variant", ["partition", "linear"])
def test_oma_single_user_is_waterfilling(rng, variant):
    ch = random_mac(rng, 1, 1, 16)
    g = np.abs(ch.matrices[:, 0, 0]) ** 2
    partition, rates = oma_allocate(ch, 4.0, variant=variant)
    assert rates.sum_rate == pytest.approx(np.sum(np.log2(1 + g * waterfill(g, 4.0))), rel=1e-9)


@pytest.mark.parametrize("variant", ["partition", "linear"])
def test_oma_symmetric_users_get_equal_rates(variant):
    ch = scalar_mac(np.ones((2, 4)))
    res = oma_allocate(ch, 4.0, variant=variant)
    assert res.rates.totals[0] == pytest.approx(res.rates.totals[1], rel=1e-9)


@pytest.mark.parametrize("variant", ["partition", "linear"])
def test_oma_below_optimal_sum_rate(rng, variant):
    ch = random_mac(rng, 3, 2, 64)
    oma = oma_allocate(ch, 10.0, variant=variant)
    assert oma.sum_rate <= maximize_sum_rate(ch, 10.0).sum_rate * (1 + 1e-9)
    assert oma.total_power == pytest.approx(10.0, rel=1e-6)


def test_oma_partition_is_interference_free(rng):
    ch = random_mac(rng, 2, 2, 6)
    res = oma_allocate(ch, 3.0, variant="partition")
    traces = res.covariances.traces()
    for u in range(2):
        others = np.setdiff1d(np.arange(6), res.partition.subcarriers_of(u))
        np.testing.assert_array_equal(traces[u, others], 0.0)


def test_oma_energy_mode_meets_floors(rng):
    ch = random_mac(rng, 2, 2, 8)
    floors = np.array([3.0, 5.0])
    for variant in ("partition", "linear"):
        res = oma_allocate(ch, min_rates=floors, variant=variant)
        np.testing.assert_allclose(res.rates.totals, floors, rtol=1e-6)
        opt = minimize_energy(AllocationProblem(ch, np.ones(2), floors))
        assert res.total_power >= opt.energy * (1 - 1e-6)


def test_oma_argument_errors(rng):
    ch = random_mac(rng, 2, 2, 4)
    with pytest.raises(InputError):
        oma_allocate(ch)
    with pytest.raises(InputError):
        oma_allocate(ch, 1.0, per_user_power=1.0)
    with pytest.raises(InputError):
        oma_allocate(ch, 1.0, variant="other")


def test_noma_single_user_is_waterfilling(rng):
    ch = random_mac(rng, 1, 1, 8)
    g = np.abs(ch.matrices[:, 0, 0]) ** 2
    sol = noma_allocate(ch, 2.0)
    assert sol.sum_rate == pytest.approx(np.sum(np.log2(1 + g * waterfill(g, 2.0))), rel=1e-7)
    assert mc_noma_allocate(ch, 2.0).sum_rate == pytest.approx(sol.sum_rate, rel=1e-9)


def test_noma_symmetric_energy_matches_optimum():
    ch = scalar_mac([[1.0], [1.0]])
    sol = noma_allocate(ch, min_rates=[1.0, 1.0])
    assert sol.energy == pytest.approx(3.0, rel=1e-5)
    np.testing.assert_allclose(sol.rates.totals, [1.0, 1.0], rtol=1e-6)


def test_gain_order_can_cost_energy():
    """Weak user needs a high rate: the gain order is the wrong one."""
    ch = scalar_mac([[1.0, 1.0], [4.0, 4.0]])
    floors = np.array([4.0, 0.5])
    noma = noma_allocate(ch, min_rates=floors)
    opt = minimize_energy(AllocationProblem(ch, np.ones(2), floors))
    assert noma.order.sequence == (0, 1)
    np.testing.assert_allclose(noma.rates.totals, floors, rtol=1e-5)
    assert noma.energy > opt.energy * 1.01
    # brute force over the two orders agrees with the optimizer
    both = [noma_allocate(ch, min_rates=floors, order=DecodingOrder(s)).energy for s in ((0, 1), (1, 0))]
    assert min(both) == pytest.approx(opt.energy, rel=1e-4)


def test_flat_channels_make_mc_noma_equal_noma(rng):
    h = rng.standard_normal((1, 2, 3)) + 1j * rng.standard_normal((1, 2, 3))
    from mcnoma.channel import ChannelSet

    ch = ChannelSet(np.repeat(h, 4, axis=0), ((0, 0, 1), (1, 1, 2), (2, 2, 3)), np.eye(2), side="mac")
    orders = subcarrier_gain_orders(ch)
    assert all(o.sequence == orders[0].sequence for o in orders)
    a = noma_allocate(ch, 3.0, weights=[1.0, 2.0, 3.0])
    b = mc_noma_allocate(ch, 3.0, weights=[1.0, 2.0, 3.0])
    assert b.sum_rate == pytest.approx(a.sum_rate, rel=1e-6)


def test_method_ordering_on_selective_channel(rng):
    ch = random_mac(rng, 2, 2, 16)
    for weights in (None, [1.0, 1.5]):
        prop = maximize_sum_rate(ch, 5.0, weights)
        mc = mc_noma_allocate(ch, 5.0, weights=weights)
        noma = noma_allocate(ch, 5.0, weights=weights)
        w = np.ones(2) if weights is None else np.array(weights)
        value = lambda s: float(w @ s.rates.totals)
        assert value(prop) >= value(mc) * (1 - 1e-6)
        assert value(prop) >= value(noma) * (1 - 1e-6)
        assert mc.total_power <= 5.0 * (1 + 1e-6)


def test_fixed_order_rates_use_per_subcarrier_orders(rng):
    ch = random_mac(rng, 2, 1, 2)
    covs = CovarianceSet.from_powers([[1.0, 2.0], [0.5, 1.0]])
    orders = [DecodingOrder((0, 1)), DecodingOrder((1, 0))]
    rates = fixed_order_rates(ch, covs, orders).per_subcarrier
    for n, o in enumerate(orders):
        np.testing.assert_allclose(rates[:, n], sic_rates(ch, covs, o).per_subcarrier[:, n], rtol=1e-12)
