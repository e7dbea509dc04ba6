"""Broadcast / multiple-access duality.

The downlink design problem is solved on the dual uplink (MAC), whose
capacity constraints are jointly concave in the user covariances, and the
result is mapped back to downlink (BC) covariances that achieve the same
per-user rates with the same total power.

Order convention: the MAC is described by its *decoding* order. The BC
user encoded first is the MAC user decoded last, and BC user ``s_k`` (the
``k``-th MAC user decoded) is interfered by ``s_1 .. s_{k-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .errors import InputError
from .sic import CovarianceSet, RateAllocation, logdet_ratio

__all__ = [
    "DualityMaps",
    "permutation_matrices",
    "bc_to_mac_channel",
    "mac_to_bc_covariances",
    "bc_dpc_rates",
    "whitened_user_blocks",
]

EIG_FLOOR = 1e-12
RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DualityMaps:
    """Block-reversing permutations applied on each side of ``H_BC^H``."""

    tx_permutation: np.ndarray
    rx_permutation: np.ndarray
    tx_dims: tuple
    rx_dims: tuple


def _block_reversal(dims):
    """Permutation P such that ``P @ x`` lists the blocks of ``x`` in reverse."""
    dims = [int(d) for d in dims]
    if not dims or min(dims) < 1:
        raise InputError("block dimensions must be positive")
    n = sum(dims)
    P = np.zeros((n, n), dtype=int)
    for u, d in enumerate(dims):
        row = sum(dims[u + 1 :])
        col = sum(dims[:u])
        P[row : row + d, col : col + d] = np.eye(d, dtype=int)
    return P


def permutation_matrices(tx_dims, rx_dims):
    """Transmit- and receive-side permutations for the BC -> MAC map.

    ``tx_permutation`` reverses the transmit blocks when applied from the
    left; ``rx_permutation`` reverses the user blocks when applied from
    the right of ``H_BC^H``. With one block both are identities.
    """
    P_T = _block_reversal(tx_dims)
    P_R = _block_reversal(rx_dims).T.copy()
    return DualityMaps(P_T, P_R, tuple(int(d) for d in tx_dims), tuple(int(d) for d in rx_dims))


def _scalar_noise_levels(noise):
    """Per-subcarrier sigma^2 if every noise matrix is sigma^2 I, else None."""
    diag = np.diagonal(noise, axis1=1, axis2=2).real
    level = diag[:, :1]
    off = noise - level[:, :, None] * np.eye(noise.shape[1])
    if np.allclose(diag, level, rtol=1e-12, atol=0) and np.abs(off).max() <= 1e-12 * level.max():
        return level[:, 0]
    return None


def whitened_user_blocks(bc_channels):
    """Noise-whitened BC blocks ``G_u = L_u^{-1} H_u`` per user, each (N, d_u, n_T).

    The BC noise must be block diagonal across users (receivers do not
    share observations).
    """
    if bc_channels.side != "bc":
        raise InputError("expected a BC-side channel set")
    noise = bc_channels.noise_per_subcarrier()
    out = []
    for u in range(bc_channels.num_users):
        s = bc_channels.user_slice(u)
        mask = np.ones(noise.shape[1], dtype=bool)
        mask[s] = False
        if np.any(np.abs(noise[:, s][:, :, mask]) > 0):
            raise InputError("BC noise must be block diagonal across users")
        L = np.linalg.cholesky(noise[:, s, s])
        out.append(np.linalg.solve(L, bc_channels.matrices[:, s, :]))
    return out


def bc_to_mac_channel(bc_channels, maps=None):
    """Dual MAC channel set ``P_T H_BC^H P_R`` on every subcarrier.

    If the BC noise is ``sigma^2 I`` the MAC noise is ``sigma^2 I_{n_T}``;
    otherwise the BC channel is whitened first and the MAC noise is ``I``.
    The returned set is MAC-side: users own column blocks (in reversed
    order) and keep their labels.
    """
    if bc_channels.side != "bc":
        raise InputError("bc_to_mac_channel expects a BC-side channel set")
    dims = bc_channels.user_dims
    nt = bc_channels.bs_dim
    if maps is None:
        maps = permutation_matrices([nt], dims)
    if maps.tx_permutation.shape != (nt, nt) or sum(maps.rx_dims) != sum(dims):
        raise InputError(
            f"permutations {maps.tx_permutation.shape}/{maps.rx_permutation.shape} do not fit "
            f"a {sum(dims)}x{nt} channel"
        )
    if tuple(maps.rx_dims) != tuple(dims):
        raise InputError(f"rx block dims {maps.rx_dims} differ from user dims {dims}")
    noise = bc_channels.noise_per_subcarrier()
    levels = _scalar_noise_levels(noise)
    if levels is None:
        H = np.concatenate(whitened_user_blocks(bc_channels), axis=1)
        mac_noise = np.eye(nt, dtype=complex)
    else:
        H = bc_channels.matrices
        mac_noise = levels[:, None, None] * np.eye(nt)
        if np.all(levels == levels[0]):
            mac_noise = mac_noise[0]
    H_mac = maps.tx_permutation @ np.swapaxes(H, 1, 2).conj() @ maps.rx_permutation
    partition = []
    for u, d in enumerate(dims):
        start = sum(dims[u + 1 :])
        partition.append((u, start, start + d))
    return ChannelSet(
        matrices=H_mac,
        partition=tuple(partition),
        noise=mac_noise,
        side="mac",
        seed=bc_channels.seed,
        scenario_hash=bc_channels.scenario_hash,
    )


def mac_to_bc_channel(mac_channels, maps=None):
    """Inverse of :func:`bc_to_mac_channel` for sets with ``sigma^2 I`` noise."""
    if mac_channels.side != "mac":
        raise InputError("mac_to_bc_channel expects a MAC-side channel set")
    dims = mac_channels.user_dims
    nt = mac_channels.receive_dim
    if maps is None:
        maps = permutation_matrices([nt], dims)
    H_bc = maps.rx_permutation @ np.swapaxes(mac_channels.matrices, 1, 2).conj() @ maps.tx_permutation
    levels = _scalar_noise_levels(mac_channels.noise_per_subcarrier())
    if levels is None:
        raise InputError("MAC noise must be sigma^2 I to map back to a BC channel")
    noise = levels[:, None, None] * np.eye(sum(dims))
    if np.all(levels == levels[0]):
        noise = noise[0]
    partition, start = [], 0
    for u, d in enumerate(dims):
        partition.append((u, start, start + d))
        start += d
    return ChannelSet(H_bc, tuple(partition), noise, "bc", mac_channels.seed, mac_channels.scenario_hash)


def _herm_power(M, p):
    w, v = np.linalg.eigh(M)
    w = np.maximum(w, EIG_FLOOR)
    return (v * (w**p)[..., None, :]) @ np.swapaxes(v, -1, -2).conj()


def _hermitize(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2).conj())


def mac_to_bc_covariances(bc_channels, mac_covs, order):
    """BC covariances with the same per-user rates and total power.

    Parameters
    ----------
    bc_channels : ChannelSet
        BC-side channels (the MAC channels are their duals).
    mac_covs : CovarianceSet
        MAC covariances, one ``(N, d_u, d_u)`` block per user.
    order : DecodingOrder
        MAC decoding order used for the MAC rates.

    Returns
    -------
    CovarianceSet
        ``side="bc"``; user blocks are ``(N, n_T, n_T)``.

    Notes
    -----
    Users are processed in MAC decoding order. For user ``s_k`` the BC
    interference ``A = I + G (sum_{j<k} S_j) G^H`` and the MAC interference
    ``B = I + sum_{j>k} G_j^H Q_j G_j`` define the effective channel
    ``B^{-1/2} G^H A^{-1/2} = F diag(s) E^H``; the BC covariance is
    ``B^{-1/2} F E^H A^{1/2} Q A^{1/2} E F^H B^{-1/2}``. Singular directions
    below ``1e-12`` of the largest are dropped: MAC power sent there reaches
    no receive antenna, so it is discarded rather than mapped.
    """
    G = whitened_user_blocks(bc_channels)
    U, N, nt = bc_channels.num_users, bc_channels.num_subcarriers, bc_channels.bs_dim
    if mac_covs.num_users != U or mac_covs.dims != bc_channels.user_dims:
        raise InputError("MAC covariances do not match the BC user dimensions")
    if mac_covs.num_subcarriers != N:
        raise InputError("MAC covariances and channels disagree on the number of subcarriers")
    if len(order) != U:
        raise InputError("decoding order length differs from the number of users")
    seq = order.sequence
    Q = mac_covs.blocks
    GH = [np.swapaxes(g, 1, 2).conj() for g in G]
    eye_t = np.eye(nt)

    # B for the user decoded first collects every later user's MAC signal
    mac_terms = [GH[u] @ Q[u] @ G[u] for u in seq]
    suffix = [np.zeros((N, nt, nt), dtype=complex) for _ in range(U + 1)]
    for k in range(U - 1, -1, -1):
        suffix[k] = suffix[k + 1] + mac_terms[k]

    bc_blocks = [None] * U
    bc_sum = np.zeros((N, nt, nt), dtype=complex)
    for k, u in enumerate(seq):
        d = G[u].shape[1]
        A = np.eye(d) + _hermitize(G[u] @ bc_sum @ GH[u])
        B = eye_t + _hermitize(suffix[k + 1])
        A_ih, A_h = _herm_power(A, -0.5), _herm_power(A, 0.5)
        B_ih = _herm_power(B, -0.5)
        F, s, Eh = np.linalg.svd(B_ih @ GH[u] @ A_ih, full_matrices=False)
        keep = s > RANK_TOL * np.maximum(s[:, :1], 1e-300)
        F = F * keep[:, None, :]
        E = np.swapaxes(Eh, 1, 2).conj() * keep[:, None, :]
        T = B_ih @ F @ np.swapaxes(E, 1, 2).conj() @ A_h
        S = _hermitize(T @ Q[u] @ np.swapaxes(T, 1, 2).conj())
        bc_blocks[u] = S
        bc_sum = bc_sum + S
    return CovarianceSet(tuple(bc_blocks), side="bc")


def bc_dpc_rates(bc_channels, bc_covs, order):
    """Per-user BC rates under dirty-paper coding dual to MAC ``order``.

    User ``order.sequence[k]`` is interfered by ``order.sequence[:k]``
    (the users encoded after it); the user decoded last on the MAC is
    interfered by everybody on the BC.
    """
    if bc_covs.side != "bc":
        raise InputError("bc_dpc_rates expects BC-side covariances")
    G = whitened_user_blocks(bc_channels)
    U, N, nt = bc_channels.num_users, bc_channels.num_subcarriers, bc_channels.bs_dim
    rates = np.zeros((U, N))
    interference = np.zeros((N, nt, nt), dtype=complex)
    for u in order.sequence:
        d = G[u].shape[1]
        GH = np.swapaxes(G[u], 1, 2).conj()
        A = np.eye(d) + _hermitize(G[u] @ interference @ GH)
        signal = _hermitize(G[u] @ bc_covs.blocks[u] @ GH)
        rates[u] = logdet_ratio(A, signal)
        interference = interference + bc_covs.blocks[u]
    return RateAllocation(rates)
