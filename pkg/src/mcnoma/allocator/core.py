"""Weighted energy minimization and weighted sum-rate maximization on the MAC.

Both problems are posed over the MAC covariances ``R_u[n]`` and the per-user
rate totals ``b_u`` (bits summed over the band). The capacity region of the
multi-carrier MAC is described by one constraint per non-empty user subset
``T``::

    sum_{u in T} b_u <= sum_n log2 det(I + sum_{u in T} G_u[n] R_u[n] G_u[n]^H)

with ``G`` the noise-whitened channels. Rate floors ``b_u >= b_min,u`` carry
the multipliers ``theta_u`` whose ordering fixes the decoding order: the
smallest multiplier is decoded first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..channel import ChannelSet
from ..errors import EnumerationCapError, InfeasibleError, InputError, OutsideHullError
from ..sic import CovarianceSet, DecodingOrder, RateAllocation
from ..timeshare import (
    ENUMERATION_CAP,
    ScheduleBlock,
    TimeShareSchedule,
    _caratheodory,
    _fit_simplex,
    cluster_users,
    enumerate_vertices,
)
from .engine import Layout, LogDetProgram, Row

MAX_USERS = 8
TIE_TOL = 1e-5
GAP_TOL = 1e-10
FD_STEP = 1e-4


@dataclass(frozen=True, eq=False)
class AllocationProblem:
    """Weights, rate floors (bits per band use) and channels of one instance.

    ``channels`` is MAC-side for :func:`minimize_energy` and BC-side for
    :func:`solve_bc_design`.
    """

    channels: ChannelSet
    weights: np.ndarray
    min_rates: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        b = np.asarray(self.min_rates, dtype=float).ravel()
        U = self.channels.num_users
        if w.size != U or b.size != U:
            raise InputError(f"need {U} weights and {U} rate floors, got {w.size} and {b.size}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise InputError("weights and rate floors must be finite")
        if np.any(w < 0) or np.any(b < 0):
            raise InputError("weights and rate floors must be non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "min_rates", b)

    @property
    def noise(self):
        return self.channels.noise_per_subcarrier()

    @property
    def num_users(self):
        return self.channels.num_users


@dataclass(frozen=True, eq=False)
class AllocationSolution:
    """Optimal covariances, rates and multipliers.

    Attributes
    ----------
    covariances : CovarianceSet
    rates : RateAllocation
        Per-user, per-subcarrier rates. With tied multipliers these are the
        time-sharing average over ``schedule``.
    duals : ndarray
        ``theta_u``, the marginal weighted energy per extra bit of user ``u``.
    energy : float
        ``sum_u w_u sum_n trace(R_u[n])`` with the problem's weights.
    kkt_residual : float
        Largest normalized KKT residual of the barrier solve.
    tie_groups : tuple
        Clusters of users with equal multipliers (size > 1 only).
    order : DecodingOrder
    mode : str
        ``"energy"``, ``"sum_rate"``, or the baseline's name.
    schedule : TimeShareSchedule or None
    dual_source : str
        ``"multiplier"`` or ``"finite-difference"``.
    """

    covariances: CovarianceSet
    rates: RateAllocation
    duals: np.ndarray
    energy: float
    kkt_residual: float
    tie_groups: tuple
    order: DecodingOrder
    mode: str = "energy"
    schedule: TimeShareSchedule | None = None
    dual_source: str = "multiplier"
    complementarity: float = 0.0
    rate_totals: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    mac_solution: "AllocationSolution | None" = None
    block_covariances: tuple = ()

    @property
    def sum_rate(self):
        return self.rates.sum_rate

    @property
    def total_power(self):
        return self.covariances.total_trace()


# --- helpers shared with the baselines -------------------------------------------


def whitened_blocks(channels):
    """Noise-whitened MAC blocks ``L^{-1} H_u``, each (N, m, d_u)."""
    if channels.side != "mac":
        raise InputError("the allocator works on MAC-side channels; use solve_bc_design for BC input")
    L = np.linalg.cholesky(channels.noise_per_subcarrier())
    return [np.linalg.solve(L, channels.user_block(u)) for u in range(channels.num_users)]


def gain_scale(G):
    """Average squared gain per transmit dimension, used to normalize units."""
    num = sum(float(np.sum(np.abs(g) ** 2)) for g in G)
    den = sum(g.shape[0] * g.shape[2] for g in G)
    return num / den if num > 0 else 1.0


def local_subsets(k):
    return [s for r in range(1, k + 1) for s in combinations(range(k), r)]


def expand_covariances(channels, active, mats, scale):
    """Full CovarianceSet with ``mats`` (scaled units) on ``active`` users, zero elsewhere."""
    N = channels.num_subcarriers
    blocks = [np.zeros((N, d, d), dtype=complex) for d in channels.user_dims]
    for i, u in enumerate(active):
        R = mats[i] / scale
        blocks[u] = 0.5 * (R + np.swapaxes(R, 1, 2).conj())
    return CovarianceSet(tuple(blocks))


def weighted_energy(covs, weights):
    return float(np.asarray(weights, dtype=float) @ covs.traces().sum(axis=1))


def _zero_solution(channels, mode):
    U, N = channels.num_users, channels.num_subcarriers
    covs = CovarianceSet.zeros(channels.user_dims, N)
    duals = np.zeros(U)
    order, _ = extract_decoding_order(duals)
    return AllocationSolution(
        covariances=covs,
        rates=RateAllocation(np.zeros((U, N))),
        duals=duals,
        energy=0.0,
        kkt_residual=0.0,
        tie_groups=order.tie_groups,
        order=order,
        mode=mode,
        rate_totals=np.zeros(U),
    )


# Rows that couple all N subcarriers get barrier weight N; otherwise the
# N * sum(d_u) covariance barrier terms squeeze their slack to ~1/N on the
# central path and Newton's method crawls.


def _subset_rows(k, N):
    rows = []
    for S in local_subsets(k):
        cb = np.zeros(k)
        cb[list(S)] = -1.0
        rows.append(Row(terms={S: np.ones(N)}, cb=cb, name=f"subset{S}", weight=N))
    return rows


def _floor_rows(floors, N):
    rows = []
    for i, f in enumerate(floors):
        cb = np.zeros(len(floors))
        cb[i] = 1.0
        rows.append(Row(cb=cb, const=-float(f), name=f"floor{i}", weight=N))
    return rows


# --- decoding order ---------------------------------------------------------------


def extract_decoding_order(solution, tie_tol=TIE_TOL):
    """Decoding order implied by the multipliers.

    Parameters
    ----------
    solution : AllocationSolution or array_like
        A solution, or the multiplier vector itself.
    tie_tol : float
        Relative tolerance under which two multipliers count as equal.

    Returns
    -------
    order : DecodingOrder
        Smallest multiplier decoded first; tied users keep index order and
        are listed in ``order.tie_groups``.
    tied : bool
        Whether any cluster has more than one user.
    """
    theta = solution.duals if isinstance(solution, AllocationSolution) else solution
    clusters = cluster_users(np.asarray(theta, dtype=float), tie_tol)
    seq = tuple(u for c in reversed(clusters) for u in c)
    groups = tuple(c for c in clusters if len(c) > 1)
    return DecodingOrder(seq, tie_groups=groups), bool(groups)


# --- per-subcarrier rates for a solution --------------------------------------------


def _schedule_for(channels, covs, theta, active, totals, tie_tol, allow_fallback):
    """Rates (and a schedule if users tie) reproducing the solver's totals.

    Inactive users carry no power, so they are decoded first in index order
    and never take part in the enumeration.
    """
    inactive = [u for u in range(channels.num_users) if u not in set(active)]
    act_theta = np.asarray(theta, dtype=float)[list(active)]
    clusters = [tuple(active[i] for i in c) for c in cluster_users(act_theta, tie_tol)]
    clusters = clusters + [(u,) for u in reversed(inactive)]
    order = DecodingOrder(
        tuple(u for c in reversed(clusters) for u in c),
        tie_groups=tuple(c for c in clusters if len(c) > 1),
    )
    if not order.has_ties:
        vertex = enumerate_vertices(clusters, channels, covs)[0]
        return RateAllocation(vertex.per_subcarrier), order, None
    try:
        vertices = enumerate_vertices(clusters, channels, covs, cap=ENUMERATION_CAP)
    except EnumerationCapError:
        if not allow_fallback:
            raise
        vertex = enumerate_vertices([(u,) for c in clusters for u in c], channels, covs)[0]
        return RateAllocation(vertex.per_subcarrier), order, None
    V = np.array([v.rates for v in vertices])
    rho = _caratheodory(V, _fit_simplex(V, totals), channels.num_users)
    support = np.flatnonzero(rho > 0)
    rho_s = _fit_simplex(V[support], totals)
    keep = [(i, r) for i, r in zip(support, rho_s) if r > 1e-9]
    total = sum(r for _, r in keep)
    blocks = tuple(
        ScheduleBlock(r / total, vertices[i].order, vertices[i].rates, vertices[i].per_subcarrier) for i, r in keep
    )
    schedule = TimeShareSchedule(blocks)
    return RateAllocation(schedule.per_subcarrier_average()), order, schedule


# --- energy minimization ------------------------------------------------------------


def _solve_energy_program(G, weights, floors):
    """Barrier solve in normalized units; returns (result, program, scale, wmax)."""
    N, k = G[0].shape[0], len(G)
    scale = gain_scale(G)
    Gs = [g / np.sqrt(scale) for g in G]
    wmax = float(max(weights))
    layout = Layout([g.shape[2] for g in Gs])
    cx = np.broadcast_to((np.asarray(weights) / wmax) @ layout.trace_vectors, (N, layout.size)).copy()
    rows = _subset_rows(k, N) + _floor_rows(floors, N)
    prog = LogDetProgram(Gs, rows, cx, np.zeros(k))
    b0 = np.asarray(floors, dtype=float) * 1.01 + 1e-6
    alpha = 1.0
    for _ in range(400):
        x0 = layout.identity(N, alpha)
        if np.all(prog.row_values(x0, b0) > 0):
            break
        alpha *= 2.0
    else:
        raise InfeasibleError("could not find a power level meeting the rate floors")
    res = prog.solve(x0, b0, gap_tol=GAP_TOL)
    return res, prog, scale, wmax


def minimize_energy(problem, *, tie_tol=TIE_TOL, dual_method="multiplier"):
    """Minimum weighted transmit energy meeting every user's rate floor.

    Parameters
    ----------
    problem : AllocationProblem
        MAC-side channels, positive weights on users with positive floors.
    tie_tol : float
        Relative multiplier tolerance for declaring a decoding-order tie.
    dual_method : {"multiplier", "finite-difference"}
        Read ``theta`` from the rate-floor multipliers (default), or from a
        two-sided finite difference of the optimal energy in ``b_min``.

    Returns
    -------
    AllocationSolution

    Raises
    ------
    InfeasibleError
        A user with a positive floor has an all-zero channel.
    ConvergenceError
        The barrier method hit its Newton-step cap.
    """
    channels = problem.channels
    U = channels.num_users
    if U > MAX_USERS:
        raise InputError(f"at most {MAX_USERS} users are supported, got {U}")
    if dual_method not in ("multiplier", "finite-difference"):
        raise InputError(f"unknown dual_method {dual_method!r}")
    G_all = whitened_blocks(channels)
    active = [u for u in range(U) if problem.min_rates[u] > 0]
    if not active:
        return _zero_solution(channels, "energy")
    for u in active:
        if problem.weights[u] <= 0:
            raise InputError(f"user {u} has a rate floor but zero weight; its energy would be unbounded")
        if not np.any(G_all[u]):
            raise InfeasibleError(f"user {u} has an all-zero channel but needs {problem.min_rates[u]} bits")
    w = problem.weights[active]
    res, prog, scale, wmax = _solve_energy_program([G_all[u] for u in active], w, problem.min_rates[active])
    k = len(active)
    covs = expand_covariances(channels, active, prog.layout.to_matrices(res.x), scale)
    theta = np.zeros(U)
    floor_duals = res.row_duals[-k:]
    theta[active] = floor_duals * wmax / scale
    totals = np.zeros(U)
    totals[active] = res.b
    slack = res.b - problem.min_rates[active]
    comp = float(np.max(floor_duals * slack) / max(abs(res.objective), 1e-300))
    source = "multiplier"
    if dual_method == "finite-difference":
        theta = _finite_difference_duals(problem, active)
        source = "finite-difference"
    rates, order, schedule = _schedule_for(channels, covs, theta, active, totals, tie_tol, allow_fallback=False)
    return AllocationSolution(
        covariances=covs,
        rates=rates,
        duals=theta,
        energy=weighted_energy(covs, problem.weights),
        kkt_residual=float(res.kkt["residual"]),
        tie_groups=order.tie_groups,
        order=order,
        mode="energy",
        schedule=schedule,
        dual_source=source,
        complementarity=comp,
        rate_totals=totals,
        diagnostics={**res.kkt, "newton_steps": res.newton_steps, "gap": res.gap},
    )


def _finite_difference_duals(problem, active):
    """theta_u = d(energy)/d(b_min,u) by two-sided differences of step ``FD_STEP``."""
    theta = np.zeros(problem.num_users)
    G_all = whitened_blocks(problem.channels)
    G = [G_all[u] for u in active]
    w = problem.weights[active]

    def energy(floors):
        res, _, scale, wmax = _solve_energy_program(G, w, floors)
        return res.objective * wmax / scale

    base = problem.min_rates[active].astype(float)
    for i, u in enumerate(active):
        h = min(FD_STEP, 0.5 * base[i])
        up, down = base.copy(), base.copy()
        up[i] += h
        down[i] -= h
        theta[u] = (energy(up) - energy(down)) / (2.0 * h)
    return theta


# --- weighted sum-rate maximization ------------------------------------------------------


def maximize_sum_rate(channels, total_power_budget, weights=None, *, tie_tol=TIE_TOL):
    """Maximize ``sum_u w_u b_u`` under a total transmit power budget.

    Users with zero weight or an all-zero channel get no power. The returned
    ``duals`` are ``(sum_{T contains u} lambda_T) / lambda_power``: the same
    energy-per-bit multipliers as in the energy problem whose floors are the
    optimal rates, so they induce the same decoding order.
    """
    U = channels.num_users
    if U > MAX_USERS:
        raise InputError(f"at most {MAX_USERS} users are supported, got {U}")
    budget = float(total_power_budget)
    if not np.isfinite(budget) or budget < 0:
        raise InputError("power budget must be finite and non-negative")
    w_full = np.ones(U) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w_full.size != U or np.any(w_full < 0) or not np.all(np.isfinite(w_full)):
        raise InputError(f"need {U} finite non-negative weights")
    G_all = whitened_blocks(channels)
    active = [u for u in range(U) if w_full[u] > 0 and np.any(G_all[u])]
    if budget == 0 or not active:
        return _zero_solution(channels, "sum_rate")
    G = [G_all[u] for u in active]
    N, k = G[0].shape[0], len(active)
    scale = gain_scale(G)
    Gs = [g / np.sqrt(scale) for g in G]
    P = budget * scale
    wmax = float(w_full[active].max())
    w = w_full[active] / wmax
    layout = Layout([g.shape[2] for g in Gs])
    # written as 1 - sum(trace) / P >= 0 so its slack keeps relative precision
    power = Row(
        lin=-np.broadcast_to(layout.trace_vectors.sum(axis=0) / P, (N, layout.size)).copy(),
        const=1.0,
        name="power",
        weight=N,
    )
    rows = _subset_rows(k, N) + _floor_rows(np.zeros(k), N) + [power]
    prog = LogDetProgram(Gs, rows, np.zeros((N, layout.size)), -w)
    x0 = layout.identity(N, P / (2.0 * N * layout.num_antennas))
    vals, _, _ = prog.subset_values(x0)
    per_user = min(vals[j].sum() / len(S) for j, S in enumerate(prog.subsets))
    b0 = np.full(k, 0.5 * per_user)
    res = prog.solve(x0, b0, gap_tol=GAP_TOL, obj_scale=max(per_user * k, 1e-12))
    covs = expand_covariances(channels, active, prog.layout.to_matrices(res.x), scale)
    lam_power = res.row_duals[-1] / P
    n_sub = len(prog.subsets)
    lam_T = res.row_duals[:n_sub]
    theta = np.zeros(U)
    for j, S in enumerate(local_subsets(k)):
        for i in S:
            theta[active[i]] += lam_T[j]
    theta[active] = theta[active] / lam_power / scale
    totals = np.zeros(U)
    totals[active] = res.b
    rates, order, schedule = _schedule_for(channels, covs, theta, active, totals, tie_tol, allow_fallback=True)
    slack = P - prog.layout.trace_vectors.sum(axis=0) @ res.x.sum(axis=0)  # normalized units
    comp = float(lam_power * slack / max(abs(res.objective), 1e-300))
    return AllocationSolution(
        covariances=covs,
        rates=rates,
        duals=theta,
        energy=weighted_energy(covs, np.ones(U)),
        kkt_residual=float(res.kkt["residual"]),
        tie_groups=order.tie_groups,
        order=order,
        mode="sum_rate",
        schedule=schedule,
        complementarity=comp,
        rate_totals=totals,
        diagnostics={**res.kkt, "newton_steps": res.newton_steps, "gap": res.gap, "weights": w_full},
    )


# --- downlink design through the dual uplink -----------------------------------------------


def solve_bc_design(problem, *, tie_tol=TIE_TOL):
    """Downlink covariances meeting the rate floors with minimum weighted energy.

    The BC problem is mapped to its dual MAC, solved there, and the MAC
    covariances are transformed back block by block (one set of BC
    covariances per time-sharing block when multipliers tie).
    """
    from ..duality import bc_dpc_rates, bc_to_mac_channel, mac_to_bc_covariances

    bc = problem.channels
    if bc.side != "bc":
        raise InputError("solve_bc_design expects a BC-side channel set")
    mac = bc_to_mac_channel(bc)
    mac_sol = minimize_energy(AllocationProblem(mac, problem.weights, problem.min_rates), tie_tol=tie_tol)
    if mac_sol.schedule is None:
        orders, fracs = [mac_sol.order], [1.0]
    else:
        orders = [blk.order for blk in mac_sol.schedule.blocks]
        fracs = [blk.fraction for blk in mac_sol.schedule.blocks]
    block_covs = tuple(mac_to_bc_covariances(bc, mac_sol.covariances, o) for o in orders)
    per_sub = sum(f * bc_dpc_rates(bc, c, o).per_subcarrier for f, c, o in zip(fracs, block_covs, orders))
    main = block_covs[int(np.argmax(fracs))]
    return AllocationSolution(
        covariances=main,
        rates=RateAllocation(per_sub),
        duals=mac_sol.duals,
        energy=weighted_energy(main, problem.weights),
        kkt_residual=mac_sol.kkt_residual,
        tie_groups=mac_sol.tie_groups,
        order=mac_sol.order,
        mode="bc_energy",
        schedule=mac_sol.schedule,
        dual_source=mac_sol.dual_source,
        complementarity=mac_sol.complementarity,
        rate_totals=mac_sol.rate_totals,
        diagnostics=mac_sol.diagnostics,
        mac_solution=mac_sol,
        block_covariances=block_covs,
    )
