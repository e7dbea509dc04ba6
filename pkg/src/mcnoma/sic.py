"""Chain-rule rates for successive interference cancellation.

Channels here are MAC-side :class:`~mcnoma.channel.ChannelSet` objects:
every user's block maps its transmit signal into one common receiver whose
noise covariance is ``channels.noise``. Rates are in bits per subcarrier
use. The user decoded first treats every user still undecoded as noise;
the user decoded last sees only noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InputError, NumericError, ValidationError

__all__ = [
    "DecodingOrder",
    "CovarianceSet",
    "RateAllocation",
    "sic_rates",
    "subset_capacity",
    "channel_gain_order",
    "logdet_ratio",
]

HERMITIAN_TOL = 1e-10
EIG_CLIP_TOL = 1e-9


@dataclass(frozen=True)
class DecodingOrder:
    """SIC order.

    ``sequence[k]`` is the user decoded in step ``k`` (so ``sequence[0]``
    is decoded first, seeing everyone else as interference), i.e. the
    inverse permutation. ``position[u]`` is the step at which user ``u`` is
    decoded. ``tie_groups`` lists clusters of users whose relative order was
    arbitrary when the order was derived.
    """

    sequence: tuple
    tie_groups: tuple = ()

    def __post_init__(self):
        seq = tuple(int(u) for u in self.sequence)
        if sorted(seq) != list(range(len(seq))):
            raise ValidationError(f"{seq} is not a permutation of 0..{len(seq) - 1}")
        object.__setattr__(self, "sequence", seq)
        object.__setattr__(self, "tie_groups", tuple(tuple(int(u) for u in g) for g in self.tie_groups))

    @classmethod
    def identity(cls, num_users):
        return cls(tuple(range(num_users)))

    @classmethod
    def from_positions(cls, position):
        position = [int(p) for p in position]
        seq = [0] * len(position)
        for u, p in enumerate(position):
            seq[p] = u
        return cls(tuple(seq))

    @property
    def position(self):
        pos = [0] * len(self.sequence)
        for k, u in enumerate(self.sequence):
            pos[u] = k
        return tuple(pos)

    @property
    def has_ties(self):
        return any(len(g) > 1 for g in self.tie_groups)

    def __len__(self):
        return len(self.sequence)


@dataclass(frozen=True, eq=False)
class CovarianceSet:
    """Transmit covariance of every user on every subcarrier.

    ``blocks[u]`` has shape ``(N, d_u, d_u)``. On the MAC side ``d_u`` is
    the user's antenna count; on the BC side it is ``n_T`` (``side="bc"``).
    Construction checks Hermitian symmetry and clips tiny negative
    eigenvalues to zero.
    """

    blocks: tuple
    side: str = "mac"

    def __post_init__(self):
        cleaned = []
        for u, blk in enumerate(self.blocks):
            blk = np.asarray(blk, dtype=complex)
            if blk.ndim == 2:
                blk = blk[None]
            if blk.ndim != 3 or blk.shape[1] != blk.shape[2]:
                raise ValidationError(f"user {u}: covariance blocks must be (N, d, d)")
            scale = max(1.0, float(np.abs(blk).max(initial=0.0)))
            if np.abs(blk - np.swapaxes(blk, 1, 2).conj()).max(initial=0.0) > HERMITIAN_TOL * scale:
                raise ValidationError(f"user {u}: covariance is not Hermitian")
            blk = 0.5 * (blk + np.swapaxes(blk, 1, 2).conj())
            w, v = np.linalg.eigh(blk)
            if w.size and w.min() < -EIG_CLIP_TOL * scale:
                raise ValidationError(f"user {u}: covariance has eigenvalue {w.min():.3e} < 0")
            if w.size and w.min() < 0:
                blk = (v * np.clip(w, 0.0, None)[:, None, :]) @ np.swapaxes(v, 1, 2).conj()
            cleaned.append(blk)
        if len({b.shape[0] for b in cleaned}) > 1:
            raise ValidationError("all users need the same number of subcarriers")
        object.__setattr__(self, "blocks", tuple(cleaned))

    @classmethod
    def zeros(cls, dims, num_subcarriers, side="mac"):
        return cls(tuple(np.zeros((num_subcarriers, d, d), dtype=complex) for d in dims), side)

    @classmethod
    def from_powers(cls, powers, side="mac"):
        """Single-antenna users: ``powers`` has shape (U, N)."""
        powers = np.asarray(powers, dtype=float)
        return cls(tuple(p[:, None, None].astype(complex) for p in powers), side)

    @property
    def num_users(self):
        return len(self.blocks)

    @property
    def num_subcarriers(self):
        return self.blocks[0].shape[0] if self.blocks else 0

    @property
    def dims(self):
        return tuple(b.shape[1] for b in self.blocks)

    def traces(self):
        """(U, N) array of trace(R(u, n))."""
        return np.array([np.trace(b, axis1=1, axis2=2).real for b in self.blocks])

    def total_trace(self):
        return float(self.traces().sum())

    def scaled(self, factor):
        return CovarianceSet(tuple(b * factor for b in self.blocks), self.side)

    def __eq__(self, other):
        if not isinstance(other, CovarianceSet):
            return NotImplemented
        return self.side == other.side and len(self.blocks) == len(other.blocks) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RateAllocation:
    """Per-user, per-subcarrier rates ``per_subcarrier[u, n]`` in bits/use."""

    per_subcarrier: np.ndarray

    def __post_init__(self):
        b = np.array(self.per_subcarrier, dtype=float, ndmin=2)
        if np.any(b < -EIG_CLIP_TOL):
            raise ValidationError(f"negative rate {b.min():.3e}")
        object.__setattr__(self, "per_subcarrier", np.clip(b, 0.0, None))

    @property
    def totals(self):
        return self.per_subcarrier.sum(axis=1)

    @property
    def sum_rate(self):
        return float(self.per_subcarrier.sum())

    def to_bps(self, bandwidth):
        """Per-user bit rates in bits/s, each subcarrier carrying ``W/N`` Hz."""
        return self.totals * bandwidth / self.per_subcarrier.shape[1]

    def spectral_efficiency(self):
        """Per-user bits/s/Hz averaged over the band."""
        return self.totals / self.per_subcarrier.shape[1]


def _cholesky(mats, what):
    try:
        return np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        raise NumericError(f"{what} is not positive definite") from None


def logdet_ratio(noise, signal):
    """``log2 det(noise + signal) - log2 det(noise)`` batched over axis 0.

    Evaluated as ``log2 det(I + L^-1 signal L^-H)`` with ``noise = L L^H``;
    no explicit inverse is formed.
    """
    L = _cholesky(noise, "noise covariance")
    X = np.linalg.solve(L, signal)
    W = np.linalg.solve(L, np.swapaxes(X, -1, -2).conj())
    W = np.eye(W.shape[-1]) + 0.5 * (W + np.swapaxes(W, -1, -2).conj())
    C = _cholesky(W, "I + whitened signal covariance")
    return 2.0 * np.sum(np.log2(np.diagonal(C, axis1=-2, axis2=-1).real), axis=-1)


def _received_covariance(channels, covs, users):
    """Sum over ``users`` of H_u R_u H_u^H, shape (N, r, r)."""
    N, r = channels.num_subcarriers, channels.receive_dim
    acc = np.zeros((N, r, r), dtype=complex)
    for u in users:
        H = channels.user_block(u)
        acc += H @ covs.blocks[u] @ np.swapaxes(H, 1, 2).conj()
    return acc


def _check_inputs(channels, covs):
    if channels.side != "mac":
        raise InputError("SIC rates need a MAC-side channel set; convert with duality.bc_to_mac_channel")
    if covs.num_users != channels.num_users:
        raise InputError(f"{covs.num_users} covariance users vs {channels.num_users} channel users")
    if covs.num_subcarriers != channels.num_subcarriers:
        raise InputError("covariances and channels disagree on the number of subcarriers")
    if covs.dims != channels.user_dims:
        raise InputError(f"covariance dims {covs.dims} do not match user antennas {channels.user_dims}")


def sic_rates(channels, covs, order):
    """Rates of every user when decoding in ``order``.

    Returns a :class:`RateAllocation` of shape (U, N). Whatever the order,
    the rates sum to :func:`subset_capacity` over all users.
    """
    _check_inputs(channels, covs)
    if len(order) != channels.num_users:
        raise InputError("decoding order length differs from the number of users")
    noise = channels.noise_per_subcarrier()
    U, N = channels.num_users, channels.num_subcarriers
    rates = np.zeros((U, N))
    # suffix sums: interference still present when sequence[k] is decoded
    remaining = np.zeros_like(noise)
    previous = np.zeros(N)
    for u in reversed(order.sequence):
        remaining = remaining + _received_covariance(channels, covs, [u])
        current = logdet_ratio(noise, remaining)
        rates[u] = current - previous
        previous = current
    return RateAllocation(rates)


def subset_capacity(channels, covs, subset, subcarrier=None):
    """log2 |R_nn + sum_{u in T} H R H^H| / |R_nn| for subset ``T``.

    With ``subcarrier=None`` the per-subcarrier values are returned as an
    array of length N; otherwise the single value on that subcarrier.
    """
    _check_inputs(channels, covs)
    subset = sorted(set(int(u) for u in subset))
    if not subset:
        raise InputError("subset must be non-empty")
    if subset[0] < 0 or subset[-1] >= channels.num_users:
        raise InputError(f"subset {subset} has users outside 0..{channels.num_users - 1}")
    values = logdet_ratio(channels.noise_per_subcarrier(), _received_covariance(channels, covs, subset))
    return values if subcarrier is None else float(values[subcarrier])


def all_subsets(num_users):
    """Every non-empty subset of users, as sorted tuples."""
    return [s for k in range(1, num_users + 1) for s in combinations(range(num_users), k)]


def channel_gain_order(channels, gains=None):
    """Weakest user decoded first, by total squared Frobenius norm.

    Exact ties keep user-index order and are reported in ``tie_groups``.
    ``gains`` overrides the per-user gains (used for per-subcarrier orders).
    """
    g = channels.user_gains() if gains is None else np.asarray(gains, dtype=float)
    seq = tuple(int(u) for u in np.argsort(g, kind="stable"))
    groups, current = [], [seq[0]]
    for u in seq[1:]:
        if g[u] == g[current[-1]]:
            current.append(u)
        else:
            groups.append(tuple(current))
            current = [u]
    groups.append(tuple(current))
    return DecodingOrder(seq, tie_groups=tuple(g for g in groups if len(g) > 1))
