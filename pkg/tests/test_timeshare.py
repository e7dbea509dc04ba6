import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcnoma.errors import EnumerationCapError, OutsideHullError, ValidationError
from mcnoma.sic import CovarianceSet, DecodingOrder, sic_rates
from mcnoma.timeshare import (
    ScheduleBlock,
    TimeShareSchedule,
    Vertex,
    average_rates,
    cluster_users,
    convex_hull_fractions,
    enumerate_vertices,
)

from conftest import random_mac, scalar_mac

VERTEX_A = (123.0, 170.0, 62.0)
VERTEX_B = (123.0, 196.0, 31.0)


def _vertices(*rates):
    return [Vertex(DecodingOrder(tuple(range(len(r)))), np.array(r, float)) for r in rates]


def test_cluster_examples():
    assert cluster_users([0.5, 0.5, 0.1]) == [(0, 1), (2,)]
    assert cluster_users([0.3, 0.1, 0.2]) == [(0,), (2,), (1,)]
    assert cluster_users([2.0, 2.0, 2.0]) == [(0, 1, 2)]


def test_cluster_tolerance_is_relative():
    assert cluster_users([1.0, 1.0 + 5e-6]) == [(0, 1)]
    assert cluster_users([1.0, 1.0 + 5e-5]) == [(1,), (0,)]


def _three_user_instance():
    ch = scalar_mac([[1.0, 2.0], [0.5, 1.5], [2.0, 0.3]])
    covs = CovarianceSet.from_powers([[1.0, 0.5], [2.0, 1.0], [0.7, 0.2]])
    return ch, covs


def test_singleton_clusters_give_one_vertex():
    ch, covs = _three_user_instance()
    verts = enumerate_vertices([(2,), (0,), (1,)], ch, covs)
    assert len(verts) == 1
    # lowest-multiplier cluster (listed last) is decoded first
    assert verts[0].order.sequence == (1, 0, 2)


def test_two_user_cluster_keeps_cluster_sum():
    ch, covs = _three_user_instance()
    verts = enumerate_vertices([(2,), (0, 1)], ch, covs)
    assert len(verts) == 2
    sums = [v.rates[[0, 1]].sum() for v in verts]
    assert sums[0] == pytest.approx(sums[1], rel=1e-12)
    np.testing.assert_allclose(verts[0].rates[2], verts[1].rates[2], rtol=1e-12)


def test_full_cluster_has_six_vertices_with_equal_sum():
    ch, covs = _three_user_instance()
    verts = enumerate_vertices([(0, 1, 2)], ch, covs)
    assert len(verts) == 6
    totals = [v.rates.sum() for v in verts]
    np.testing.assert_allclose(totals, totals[0], rtol=1e-12)


def test_enumeration_cap():
    ch, covs = _three_user_instance()
    with pytest.raises(EnumerationCapError):
        enumerate_vertices([(0, 1, 2)], ch, covs, cap=5)


def test_worked_example_average():
    verts = _vertices(VERTEX_A, VERTEX_B)
    sched = TimeShareSchedule((
        ScheduleBlock(0.91, verts[0].order, verts[0].rates),
        ScheduleBlock(0.09, verts[1].order, verts[1].rates),
    ))
    avg = average_rates(sched)
    np.testing.assert_allclose(avg, [123.0, 172.34, 59.21], atol=1e-9)


def test_worked_example_inversion():
    sched = convex_hull_fractions(_vertices(VERTEX_A, VERTEX_B), [np.nan, 172.34, np.nan])
    rho = {tuple(b.rates): b.fraction for b in sched.blocks}
    assert rho[VERTEX_A] == pytest.approx(0.91, abs=1e-6)
    assert rho[VERTEX_B] == pytest.approx(0.09, abs=1e-6)


def test_target_at_vertex_and_midpoint():
    verts = _vertices((1.0, 3.0), (3.0, 1.0))
    at = convex_hull_fractions(verts, [3.0, 1.0])
    assert len(at.blocks) == 1 and at.blocks[0].fraction == pytest.approx(1.0)
    mid = convex_hull_fractions(verts, [2.0, 2.0])
    np.testing.assert_allclose(mid.fractions, [0.5, 0.5], atol=1e-9)


def test_constant_user_unaffected_by_fractions():
    verts = _vertices(VERTEX_A, VERTEX_B)
    for rho in (0.0, 0.3, 1.0):
        blocks = tuple(
            ScheduleBlock(f, v.order, v.rates) for f, v in zip((rho, 1 - rho), verts) if f > 0
        )
        assert average_rates(TimeShareSchedule(blocks))[0] == pytest.approx(123.0)


def test_single_block_schedule():
    v = _vertices(VERTEX_A)[0]
    sched = TimeShareSchedule((ScheduleBlock(1.0, v.order, v.rates),))
    np.testing.assert_array_equal(average_rates(sched), v.rates)


def test_outside_hull_reports_coordinate():
    verts = _vertices((1.0, 3.0), (3.0, 1.0))
    with pytest.raises(OutsideHullError) as err:
        convex_hull_fractions(verts, [3.0, 3.0])
    assert err.value.coordinate in (0, 1)
    assert abs(err.value.violation) > 0.1


def test_schedule_validates_fractions_and_target():
    v = _vertices(VERTEX_A)[0]
    with pytest.raises(ValidationError):
        TimeShareSchedule((ScheduleBlock(0.5, v.order, v.rates),))
    with pytest.raises(ValidationError):
        TimeShareSchedule((ScheduleBlock(1.0, v.order, v.rates),), target=np.array([0.0, 0.0, 0.0]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), U=st.integers(2, 4))
def test_random_hull_points_are_recovered(seed, U):
    """Any convex combination of SIC vertices is matched with at most U+1 blocks."""
    rng = np.random.default_rng(seed)
    ch = random_mac(rng, U, 2, 3)
    covs = CovarianceSet.from_powers(rng.uniform(0.1, 2.0, (U, 3)))
    verts = enumerate_vertices([tuple(range(U))], ch, covs)
    weights = rng.dirichlet(np.ones(len(verts)))
    target = weights @ np.array([v.rates for v in verts])
    sched = convex_hull_fractions(verts, target)
    assert len(sched.blocks) <= U + 1
    assert np.all(sched.fractions >= 0)
    assert sched.fractions.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(average_rates(sched), target, rtol=1e-6, atol=1e-9)
    for blk in sched.blocks:
        np.testing.assert_allclose(blk.rates, sic_rates(ch, covs, blk.order).totals, rtol=1e-12)
