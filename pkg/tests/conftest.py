import numpy as np
import pytest

from mcnoma.channel import ChannelSet


def scalar_mac(gains, noise=1.0):
    """Single-antenna MAC with real channel amplitudes sqrt(gains); gains is (U, N)."""
    g = np.atleast_2d(np.asarray(gains, dtype=float))
    U, N = g.shape
    H = np.sqrt(g).T.reshape(N, 1, U).astype(complex)
    return ChannelSet(H, tuple((u, u, u + 1) for u in range(U)), noise * np.eye(1), side="mac")


def random_mac(rng, U, nt, N, dims=None, noise=1.0):
    dims = dims or (1,) * U
    cols = sum(dims)
    H = (rng.standard_normal((N, nt, cols)) + 1j * rng.standard_normal((N, nt, cols))) / np.sqrt(2)
    part, start = [], 0
    for u, d in enumerate(dims):
        part.append((u, start, start + d))
        start += d
    return ChannelSet(H, tuple(part), noise * np.eye(nt), side="mac")


def random_bc(rng, U, nt, N, dims=None, noise=1.0):
    dims = dims or (1,) * U
    rows = sum(dims)
    H = (rng.standard_normal((N, rows, nt)) + 1j * rng.standard_normal((N, rows, nt))) / np.sqrt(2)
    part, start = [], 0
    for u, d in enumerate(dims):
        part.append((u, start, start + d))
        start += d
    return ChannelSet(H, tuple(part), noise * np.eye(rows), side="bc")


def random_psd(rng, N, d, scale=1.0):
    A = rng.standard_normal((N, d, d)) + 1j * rng.standard_normal((N, d, d))
    return scale * A @ np.swapaxes(A, 1, 2).conj() / d


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
