import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcnoma.errors import InputError, NumericError, ValidationError
from mcnoma.sic import (
    CovarianceSet,
    DecodingOrder,
    RateAllocation,
    all_subsets,
    channel_gain_order,
    logdet_ratio,
    sic_rates,
    subset_capacity,
)

from conftest import random_mac, random_psd, scalar_mac


def test_two_user_scalar_hand_example():
    ch = scalar_mac([[1.0], [1.0]])
    covs = CovarianceSet.from_powers([[1.0], [1.0]])
    # user index 1 decoded first, sees user 0 as interference
    rates = sic_rates(ch, covs, DecodingOrder((1, 0)))
    np.testing.assert_allclose(rates.totals, [1.0, np.log2(1.5)], atol=1e-12)
    assert rates.sum_rate == pytest.approx(np.log2(3.0), abs=1e-12)
    assert subset_capacity(ch, covs, (0, 1), subcarrier=0) == pytest.approx(np.log2(3.0), abs=1e-12)


def test_zero_covariances_give_zero_rates(rng):
    ch = random_mac(rng, 3, 2, 4)
    rates = sic_rates(ch, CovarianceSet.zeros(ch.user_dims, 4), DecodingOrder.identity(3))
    np.testing.assert_array_equal(rates.per_subcarrier, 0.0)


def test_single_user_rate_is_logdet(rng):
    ch = random_mac(rng, 1, 3, 5, dims=(2,))
    R = random_psd(rng, 5, 2)
    H = ch.matrices
    expected = [
        np.log2(np.linalg.det(np.eye(3) + H[n] @ R[n] @ H[n].conj().T).real) for n in range(5)
    ]
    rates = sic_rates(ch, CovarianceSet((R,)), DecodingOrder.identity(1))
    np.testing.assert_allclose(rates.per_subcarrier[0], expected, rtol=1e-10)


def test_singleton_subset_with_zero_covariance(rng):
    ch = random_mac(rng, 2, 2, 3)
    covs = CovarianceSet((np.zeros((3, 1, 1)), random_psd(rng, 3, 1)))
    np.testing.assert_allclose(subset_capacity(ch, covs, (0,)), 0.0, atol=1e-14)


def test_gain_order_examples():
    ch = scalar_mac([[4.0], [1.0], [9.0]])
    order = channel_gain_order(ch)
    assert order.sequence == (1, 0, 2)
    assert not order.has_ties
    assert channel_gain_order(scalar_mac([[2.0]])).sequence == (0,)
    tied = channel_gain_order(scalar_mac([[1.0], [1.0], [1.0]]))
    assert tied.sequence == (0, 1, 2)
    assert tied.tie_groups == ((0, 1, 2),)


def test_decoding_order_positions():
    order = DecodingOrder((2, 0, 1))
    assert order.position == (1, 2, 0)
    assert DecodingOrder.from_positions(order.position) == order
    with pytest.raises(ValidationError):
        DecodingOrder((0, 0, 1))


def test_covariance_set_rejects_non_hermitian_and_negative():
    with pytest.raises(ValidationError):
        CovarianceSet((np.array([[[1.0, 1.0], [0.0, 1.0]]]),))
    with pytest.raises(ValidationError):
        CovarianceSet((np.array([[[-1.0]]]),))
    # roundoff-sized negative eigenvalues are clipped
    blk = CovarianceSet((np.array([[[-1e-12]]]),)).blocks[0]
    assert blk[0, 0, 0].real == 0.0


def test_rate_allocation_clips_tiny_negatives():
    r = RateAllocation(np.array([[1.0, -1e-12]]))
    assert r.per_subcarrier.min() == 0.0
    with pytest.raises(ValidationError):
        RateAllocation(np.array([[-1e-3]]))


def test_singular_noise_is_numeric_error():
    with pytest.raises(NumericError):
        logdet_ratio(np.zeros((1, 2, 2)), np.eye(2)[None])


def test_bc_side_channels_are_rejected(rng):
    from conftest import random_bc

    bc = random_bc(rng, 2, 2, 2)
    with pytest.raises(InputError):
        sic_rates(bc, CovarianceSet.zeros((1, 1), 2), DecodingOrder.identity(2))


def test_all_subsets_count():
    assert len(all_subsets(4)) == 15
    assert all_subsets(2) == [(0,), (1,), (0, 1)]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), U=st.integers(1, 4), nt=st.integers(1, 3), N=st.integers(1, 4))
def test_chain_rule_sum_is_order_invariant(seed, U, nt, N):
    rng = np.random.default_rng(seed)
    ch = random_mac(rng, U, nt, N)
    covs = CovarianceSet(tuple(random_psd(rng, N, 1) for _ in range(U)))
    full = subset_capacity(ch, covs, range(U))
    for seq in itertools.islice(itertools.permutations(range(U)), 6):
        rates = sic_rates(ch, covs, DecodingOrder(seq))
        np.testing.assert_allclose(rates.per_subcarrier.sum(axis=0), full, rtol=1e-9, atol=1e-12)
        assert np.all(rates.per_subcarrier >= 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), U=st.integers(2, 4))
def test_sic_rates_lie_in_capacity_region(seed, U):
    """Every subset's rate sum is at most its subset capacity (polymatroid)."""
    rng = np.random.default_rng(seed)
    ch = random_mac(rng, U, 2, 2)
    covs = CovarianceSet(tuple(random_psd(rng, 2, 1) for _ in range(U)))
    order = DecodingOrder(tuple(rng.permutation(U)))
    rates = sic_rates(ch, covs, order)
    for T in all_subsets(U):
        cap = subset_capacity(ch, covs, T)
        assert np.all(rates.per_subcarrier[list(T)].sum(axis=0) <= cap + 1e-9)
