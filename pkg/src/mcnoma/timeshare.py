"""Time sharing between decoding orders.

When several users end up with (numerically) equal rate multipliers, no
single decoding order meets their targets exactly. The symbol period is
then split into blocks, each using a different within-cluster order, with
fractions chosen so that the time-averaged rates hit the targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations, product

import numpy as np
from scipy.optimize import nnls

from .errors import EnumerationCapError, InputError, OutsideHullError, ValidationError
from .sic import DecodingOrder, sic_rates

__all__ = [
    "Vertex",
    "ScheduleBlock",
    "TimeShareSchedule",
    "cluster_users",
    "enumerate_vertices",
    "convex_hull_fractions",
    "average_rates",
    "ENUMERATION_CAP",
]

ENUMERATION_CAP = 10_080
DEDUP_TOL = 1e-9
PRUNE_TOL = 1e-9
HULL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Vertex:
    """Rates reached by one decoding order with the covariances held fixed."""

    order: DecodingOrder
    rates: np.ndarray
    per_subcarrier: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ScheduleBlock:
    fraction: float
    order: DecodingOrder
    rates: np.ndarray
    per_subcarrier: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class TimeShareSchedule:
    """Blocks of a symbol period and the per-user rates they average to.

    ``target`` may contain NaN for users whose rate was left free.
    """

    blocks: tuple
    target: np.ndarray | None = None

    def __post_init__(self):
        if not self.blocks:
            raise ValidationError("a schedule needs at least one block")
        rho = self.fractions
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-9:
            raise ValidationError(f"fractions {rho} are not a probability vector")
        if self.target is not None:
            target = np.asarray(self.target, dtype=float)
            object.__setattr__(self, "target", target)
            avg = average_rates(self)
            mask = ~np.isnan(target)
            err = np.abs(avg[mask] - target[mask])
            if np.any(err > HULL_TOL * np.maximum(1.0, np.abs(target[mask]))):
                raise ValidationError(f"block average {avg} misses target {target}")

    @property
    def fractions(self):
        return np.array([blk.fraction for blk in self.blocks], dtype=float)

    def per_subcarrier_average(self):
        """Time-averaged (U, N) rates, if every block carries per-subcarrier rates."""
        if any(blk.per_subcarrier is None for blk in self.blocks):
            return None
        return sum(blk.fraction * blk.per_subcarrier for blk in self.blocks)


def cluster_users(duals, tie_tol=1e-5):
    """Group users whose multipliers agree to ``tie_tol`` relative.

    Clusters are returned by descending multiplier; inside a cluster users
    keep index order. Every pair in a cluster differs by at most
    ``tie_tol * max(max(duals), 1e-12)``.
    """
    theta = np.asarray(duals, dtype=float)
    if theta.ndim != 1 or theta.size == 0:
        raise InputError("duals must be a non-empty vector")
    if np.any(theta < 0):
        raise InputError("duals must be non-negative")
    width = tie_tol * max(float(theta.max()), 1e-12)
    idx = sorted(range(theta.size), key=lambda u: (-theta[u], u))
    clusters, current = [], [idx[0]]
    for u in idx[1:]:
        if theta[current[0]] - theta[u] <= width:
            current.append(u)
        else:
            clusters.append(tuple(sorted(current)))
            current = [u]
    clusters.append(tuple(sorted(current)))
    return clusters


def _num_orders(clusters):
    return math.prod(math.factorial(len(c)) for c in clusters)


def enumerate_vertices(clusters, channels, covariances, cap=ENUMERATION_CAP):
    """SIC rate vertices for every within-cluster permutation.

    ``clusters`` come from :func:`cluster_users` (descending multiplier);
    the lowest-multiplier cluster is decoded first. Vertices whose total
    rate vectors agree within ``1e-9`` are reported once.
    """
    count = _num_orders(clusters)
    if count > cap:
        raise EnumerationCapError(
            f"{count} decoding orders exceed the cap of {cap}; tighten tie_tol to split clusters"
        )
    ascending = list(reversed(clusters))
    out = []
    for perms in product(*(permutations(c) for c in ascending)):
        seq = tuple(u for p in perms for u in p)
        order = DecodingOrder(seq, tie_groups=tuple(c for c in clusters if len(c) > 1))
        alloc = sic_rates(channels, covariances, order)
        totals = alloc.totals
        if any(np.all(np.abs(v.rates - totals) <= DEDUP_TOL * np.maximum(1.0, np.abs(totals))) for v in out):
            continue
        out.append(Vertex(order, totals, alloc.per_subcarrier))
    return out


def _fit_simplex(V, target):
    """Non-negative weights summing to one with V.T @ rho ~= target."""
    k = V.shape[0]
    scale = max(1.0, float(np.abs(V).max()))
    weight = 1e3 * scale
    A = np.vstack([V.T, weight * np.ones((1, k))])
    y = np.concatenate([target, [weight]])
    rho, _ = nnls(A, y, maxiter=50 * (k + 1))
    if rho.sum() <= 0:
        rho = np.full(k, 1.0 / k)
    return rho / rho.sum()


def _caratheodory(V, rho, dim):
    """Reduce the support of rho to at most dim + 1 points, same average."""
    rho = rho.copy()
    while True:
        support = np.flatnonzero(rho > PRUNE_TOL)
        rho[rho <= PRUNE_TOL] = 0.0
        if support.size <= dim + 1:
            return rho / rho.sum()
        M = np.vstack([V[support].T, np.ones(support.size)])
        _, _, vh = np.linalg.svd(M)
        z = vh[-1]
        if not np.any(z > 0):
            z = -z
        ratios = np.where(z > 0, rho[support] / np.where(z > 0, z, 1.0), np.inf)
        j = int(np.argmin(ratios))
        rho[support] -= ratios[j] * z
        rho[support[j]] = 0.0


def convex_hull_fractions(vertices, target):
    """Time fractions whose average of vertex rates equals ``target``.

    Parameters
    ----------
    vertices : sequence of Vertex
    target : array_like, shape (U,)
        NaN entries are left unconstrained.

    Returns
    -------
    TimeShareSchedule
        At most ``(#constrained users) + 1`` blocks, zero-fraction blocks
        pruned.

    Raises
    ------
    OutsideHullError
        If no convex combination reaches the target within ``1e-6``
        relative; carries the worst user and its violation.
    """
    if not vertices:
        raise InputError("no vertices to share time between")
    target = np.asarray(target, dtype=float)
    mask = ~np.isnan(target)
    V = np.array([v.rates for v in vertices], dtype=float)
    if V.shape[1] != target.size:
        raise InputError(f"target has {target.size} users, vertices have {V.shape[1]}")
    Vm = V[:, mask]
    rho = _fit_simplex(Vm, target[mask])
    rho = _caratheodory(Vm, rho, int(mask.sum()))
    support = np.flatnonzero(rho > 0)
    # refit on the reduced support for accuracy
    rho_s = _fit_simplex(Vm[support], target[mask])
    avg = rho_s @ Vm[support]
    err = avg - target[mask]
    rel = np.abs(err) / np.maximum(1.0, np.abs(target[mask]))
    if rel.size and rel.max() > HULL_TOL:
        j = int(np.argmax(rel))
        user = int(np.flatnonzero(mask)[j])
        raise OutsideHullError(
            f"target lies outside the rate hull; user {user} off by {err[j]:.6g}",
            coordinate=user,
            violation=float(err[j]),
        )
    blocks = tuple(
        ScheduleBlock(float(r), vertices[i].order, vertices[i].rates, vertices[i].per_subcarrier)
        for i, r in zip(support, rho_s)
        if r > PRUNE_TOL
    )
    total = sum(b.fraction for b in blocks)
    blocks = tuple(ScheduleBlock(b.fraction / total, b.order, b.rates, b.per_subcarrier) for b in blocks)
    return TimeShareSchedule(blocks, target)


def average_rates(schedule):
    """Per-user rates averaged over the blocks, weighted by their fractions."""
    return sum(blk.fraction * np.asarray(blk.rates, dtype=float) for blk in schedule.blocks)
