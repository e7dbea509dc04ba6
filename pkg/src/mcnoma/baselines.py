"""Reference schemes: water-filling, OMA, full-band NOMA and per-subcarrier MC-NOMA.

All schemes work on the MAC side of the duality (users transmit, the base
station receives), where single-user rates and SIC rates under a fixed
order are directly computable; the downlink values follow from duality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .allocator.core import (
    AllocationSolution,
    expand_covariances,
    gain_scale,
    maximize_sum_rate,
    weighted_energy,
    whitened_blocks,
)
from .allocator.engine import Layout, LogDetProgram, Row
from .errors import InfeasibleError, InputError, ValidationError
from .sic import CovarianceSet, DecodingOrder, RateAllocation, channel_gain_order, logdet_ratio

__all__ = [
    "ResourcePartition",
    "OmaResult",
    "waterfill",
    "rate_target_waterfill",
    "oma_allocate",
    "noma_allocate",
    "mc_noma_allocate",
    "fixed_order_rates",
    "subcarrier_gain_orders",
]

SCA_TOL = 1e-5
SCA_MAX_ITER = 20
IWF_MAX_SWEEPS = 500
IWF_TOL = 1e-10


# --- water-filling ------------------------------------------------------------------


def waterfill(gains, budget):
    """Powers ``p_i = max(mu - 1/g_i, 0)`` with ``sum(p) = budget``.

    Parameters
    ----------
    gains : array_like
        Non-negative channel gains (signal-to-noise ratio per unit power).
        Zero-gain channels never receive power.
    budget : float
        Total power, ``>= 0``.

    Returns
    -------
    ndarray
        Powers with the same shape as ``gains``.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise InputError("gains must be finite and non-negative")
    budget = float(budget)
    if budget < 0 or not np.isfinite(budget):
        raise InputError("budget must be finite and non-negative")
    flat = g.ravel()
    p = np.zeros_like(flat)
    if budget == 0 or not np.any(flat > 0):
        return p.reshape(g.shape)
    idx = np.argsort(-flat, kind="stable")
    idx = idx[flat[idx] > 0]
    inv = 1.0 / flat[idx]
    csum = np.cumsum(inv)
    k = np.arange(1, idx.size + 1)
    # water level minus 1/g of the weakest member, split so that a single
    # active channel gets exactly the budget even when 1/g dwarfs it
    spread = csum / k - inv
    # largest active set whose weakest member still sits below the water level
    valid = budget / k + spread > 0
    valid[0] = True
    n_active = int(np.flatnonzero(valid)[-1]) + 1
    p[idx[:n_active]] = budget / n_active + (csum[n_active - 1] / n_active - inv[:n_active])
    return p.reshape(g.shape)


def rate_target_waterfill(gains, target):
    """Least total power with ``sum(log2(1 + g_i p_i)) = target`` bits.

    The solution is again a water-filling ``p_i = max(mu - 1/g_i, 0)``;
    ``mu`` solves ``sum_active log2(mu g_i) = target``.
    """
    g = np.asarray(gains, dtype=float)
    target = float(target)
    if target < 0 or not np.isfinite(target):
        raise InputError("target rate must be finite and non-negative")
    flat = g.ravel()
    p = np.zeros_like(flat)
    if target == 0:
        return p.reshape(g.shape)
    if not np.any(flat > 0):
        raise InfeasibleError("no channel gain to carry a positive rate")
    idx = np.argsort(-flat, kind="stable")
    idx = idx[flat[idx] > 0]
    lg = np.log2(flat[idx])
    csum = np.cumsum(lg)
    k = np.arange(1, idx.size + 1)
    log_mu = (target - csum) / k
    valid = log_mu > -lg
    valid[0] = True  # target > 0 always activates the strongest channel
    n_active = int(np.flatnonzero(valid)[-1]) + 1
    mu = 2.0 ** log_mu[n_active - 1]
    p[idx[:n_active]] = np.maximum(mu - 1.0 / flat[idx[:n_active]], 0.0)
    return p.reshape(g.shape)


def _eigenmodes(G, interference=None):
    """Per-subcarrier eigen-gains and input directions of ``G`` against ``I + interference``.

    Returns ``(gains (N, d), V (N, d, d))`` with ``G^H K^-1 G = V diag(gains) V^H``.
    """
    GH = np.swapaxes(G, 1, 2).conj()
    if interference is None:
        M = GH @ G
    else:
        K = np.eye(G.shape[1]) + interference
        M = GH @ np.linalg.solve(K, G)
    M = 0.5 * (M + np.swapaxes(M, 1, 2).conj())
    w, V = np.linalg.eigh(M)
    return np.clip(w, 0.0, None), V


def _covariance_from_modes(V, p):
    return (V * p[:, None, :]) @ np.swapaxes(V, 1, 2).conj()


# --- OMA ------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ResourcePartition:
    """Subcarrier ownership: ``assignment[n]`` is the user on subcarrier ``n``.

    ``assignment is None`` marks a shared band (every user on every subcarrier).
    """

    assignment: np.ndarray | None
    num_users: int

    def __post_init__(self):
        if self.assignment is None:
            return
        a = np.asarray(self.assignment, dtype=int)
        if a.ndim != 1 or a.size == 0:
            raise ValidationError("assignment must be a non-empty vector")
        if a.min() < 0 or a.max() >= self.num_users:
            raise ValidationError("assignment refers to unknown users")
        object.__setattr__(self, "assignment", a)

    @property
    def shared(self):
        return self.assignment is None

    def subcarriers_of(self, u):
        if self.shared:
            raise InputError("a shared band has no per-user subcarrier sets")
        return np.flatnonzero(self.assignment == u)


@dataclass(frozen=True, eq=False)
class OmaResult:
    """OMA outcome; unpacks as ``(partition, rates)``."""

    partition: ResourcePartition
    rates: RateAllocation
    covariances: CovarianceSet
    variant: str
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.partition
        yield self.rates

    @property
    def sum_rate(self):
        return self.rates.sum_rate

    @property
    def total_power(self):
        return self.covariances.total_trace()


def greedy_partition(subcarrier_gains):
    """Assign subcarriers in index order, each to the best-gain user among those
    furthest below their proportional share ``N / U``."""
    g = np.asarray(subcarrier_gains, dtype=float)
    U, N = g.shape
    share = N / U
    counts = np.zeros(U)
    out = np.zeros(N, dtype=int)
    for n in range(N):
        deficit = share - counts
        cand = np.flatnonzero(deficit >= deficit.max() - 1e-12)
        u = int(cand[np.argmax(g[cand, n])])
        out[n] = u
        counts[u] += 1
    return out


def oma_allocate(
    channels,
    total_power=None,
    *,
    per_user_power=None,
    min_rates=None,
    variant="partition",
):
    """Orthogonal or linear-receiver reference allocation.

    Parameters
    ----------
    channels : ChannelSet
        MAC-side channels.
    total_power : float, optional
        Power shared by all users (water-filled jointly over the partition).
    per_user_power : float or array_like, optional
        Individual budgets; defaults to ``total_power / U`` for the linear
        variant.
    min_rates : array_like, optional
        Energy mode: every user reaches its floor with least power instead.
    variant : {"partition", "linear"}
        ``"partition"``: disjoint subcarriers from :func:`greedy_partition`,
        interference free. ``"linear"``: every user on the whole band with a
        linear MMSE receiver that treats the others as noise; covariances
        from iterative (simultaneous) water-filling.

    Returns
    -------
    OmaResult
    """
    if channels.side != "mac":
        raise InputError("oma_allocate expects MAC-side channels")
    U, N = channels.num_users, channels.num_subcarriers
    modes = [total_power is not None, per_user_power is not None, min_rates is not None]
    if sum(modes) != 1:
        raise InputError("give exactly one of total_power, per_user_power, min_rates")
    G = whitened_blocks(channels)
    if variant == "partition":
        if N < U:
            raise InputError(f"OMA needs at least one subcarrier per user (N={N} < U={U})")
        return _oma_partition(channels, G, total_power, per_user_power, min_rates)
    if variant == "linear":
        return _oma_linear(channels, G, total_power, per_user_power, min_rates)
    raise InputError(f"unknown OMA variant {variant!r}")


def _oma_partition(channels, G, total_power, per_user_power, min_rates):
    U, N = channels.num_users, channels.num_subcarriers
    assign = greedy_partition(channels.subcarrier_gains())
    part = ResourcePartition(assign, U)
    modes = [_eigenmodes(g) for g in G]
    powers = [np.zeros_like(m[0]) for m in modes]
    masks = [(assign == u)[:, None] for u in range(U)]
    if total_power is not None:
        # one water level across every (user, subcarrier, mode) the partition allows
        flat = np.concatenate([np.where(masks[u], modes[u][0], 0.0).ravel() for u in range(U)])
        p = waterfill(flat, total_power)
        cut = np.cumsum([0] + [modes[u][0].size for u in range(U)])
        powers = [p[cut[u] : cut[u + 1]].reshape(modes[u][0].shape) for u in range(U)]
    else:
        budgets = None if per_user_power is None else np.broadcast_to(np.asarray(per_user_power, float), (U,))
        floors = None if min_rates is None else np.broadcast_to(np.asarray(min_rates, float), (U,))
        for u in range(U):
            gains = np.where(masks[u], modes[u][0], 0.0)
            if budgets is not None:
                powers[u] = waterfill(gains, budgets[u])
            else:
                powers[u] = rate_target_waterfill(gains, floors[u])
    covs = CovarianceSet(tuple(_covariance_from_modes(modes[u][1], powers[u]) for u in range(U)))
    rates = np.array([np.sum(np.log2(1.0 + modes[u][0] * powers[u]), axis=1) for u in range(U)])
    return OmaResult(part, RateAllocation(rates), covs, "partition")


def _interference(G, covs, users):
    N, m = G[0].shape[0], G[0].shape[1]
    acc = np.zeros((N, m, m), dtype=complex)
    for v in users:
        acc += G[v] @ covs[v] @ np.swapaxes(G[v], 1, 2).conj()
    return acc


def _linear_rates(G, covs):
    U = len(G)
    total = _interference(G, covs, range(U))
    eye = np.eye(G[0].shape[1])
    rates = []
    for u in range(U):
        own = G[u] @ covs[u] @ np.swapaxes(G[u], 1, 2).conj()
        rates.append(logdet_ratio(eye + total - own, own))
    return np.array(rates)


def _oma_linear(channels, G, total_power, per_user_power, min_rates):
    U, N = channels.num_users, channels.num_subcarriers
    covs = [np.zeros((N, g.shape[2], g.shape[2]), dtype=complex) for g in G]
    if min_rates is not None:
        floors = np.broadcast_to(np.asarray(min_rates, float), (U,))
        budgets = None
    else:
        budgets = np.broadcast_to(
            np.asarray(per_user_power if per_user_power is not None else total_power / U, float), (U,)
        )
    converged = False
    for sweep in range(IWF_MAX_SWEEPS):
        change = 0.0
        for u in range(U):
            others = _interference(G, covs, [v for v in range(U) if v != u])
            gains, V = _eigenmodes(G[u], others)
            p = waterfill(gains, budgets[u]) if budgets is not None else rate_target_waterfill(gains, floors[u])
            new = _covariance_from_modes(V, p)
            scale = max(np.abs(new).max(), np.abs(covs[u]).max(), 1e-300)
            change = max(change, float(np.abs(new - covs[u]).max() / scale))
            covs[u] = new
        if budgets is None and sum(np.trace(c, axis1=1, axis2=2).real.sum() for c in covs) > 1e30:
            raise InfeasibleError("rate floors unreachable with linear receivers (powers diverge)")
        if change < IWF_TOL:
            converged = True
            break
    cov_set = CovarianceSet(tuple(covs))
    rates = _linear_rates(G, cov_set.blocks)
    if budgets is None and not converged:
        raise InfeasibleError("iterative water-filling did not reach the rate floors")
    return OmaResult(
        ResourcePartition(None, U),
        RateAllocation(rates),
        cov_set,
        "linear",
        {"sweeps": sweep + 1, "converged": converged},
    )


# --- fixed-order NOMA -------------------------------------------------------------------


def subcarrier_gain_orders(channels):
    """Per-subcarrier decoding orders, weakest ``||H_{u,n}||`` decoded first."""
    g = channels.subcarrier_gains()
    return [channel_gain_order(channels, gains=g[:, n]) for n in range(channels.num_subcarriers)]


def _order_list(orders, N):
    if isinstance(orders, DecodingOrder):
        return [orders] * N
    orders = list(orders)
    if len(orders) != N:
        raise InputError(f"need one decoding order per subcarrier ({N}), got {len(orders)}")
    return orders


def fixed_order_rates(channels, covs, orders):
    """SIC rates with a (possibly per-subcarrier) fixed decoding order.

    ``orders`` is one DecodingOrder for the whole band or a list of N.
    """
    U, N = channels.num_users, channels.num_subcarriers
    orders = _order_list(orders, N)
    noise = channels.noise_per_subcarrier()
    rates = np.zeros((U, N))
    groups = {}
    for n, o in enumerate(orders):
        groups.setdefault(o.sequence, []).append(n)
    for seq, idx in groups.items():
        idx = np.array(idx)
        remaining = np.zeros_like(noise[idx])
        previous = np.zeros(idx.size)
        for u in reversed(seq):
            H = channels.user_block(u)[idx]
            remaining = remaining + H @ covs.blocks[u][idx] @ np.swapaxes(H, 1, 2).conj()
            current = logdet_ratio(noise[idx], remaining)
            rates[u, idx] = current - previous
            previous = current
    return RateAllocation(rates)


def _after_sets(orders, users):
    """For each subcarrier and each local user: users (local) decoded after it."""
    local = {u: i for i, u in enumerate(users)}
    out = []
    for o in orders:
        seq = [local[u] for u in o.sequence if u in local]
        out.append({seq[k]: tuple(sorted(seq[k + 1 :])) for k in range(len(seq))})
    return out


def _order_groups(after):
    """Subcarriers sharing the same after-sets: list of (indices, after dict)."""
    groups = {}
    for n, a in enumerate(after):
        key = tuple(sorted(a.items()))
        groups.setdefault(key, []).append(n)
    return [(np.array(idx), dict(key)) for key, idx in groups.items()]


def _interference_after(G, mats, groups, i):
    """(N, m, m) covariance of the users decoded after local user ``i``."""
    N, m = G[0].shape[0], G[0].shape[1]
    interf = np.zeros((N, m, m), dtype=complex)
    for idx, a in groups:
        for j in a[i]:
            interf[idx] += G[j][idx] @ mats[j][idx] @ np.swapaxes(G[j][idx], 1, 2).conj()
    return interf


def _local_rates(G, mats, after):
    """Fixed-order rates (k, N) from whitened blocks and local covariances."""
    groups = _order_groups(after)
    eye = np.eye(G[0].shape[1])
    rates = np.zeros((len(G), G[0].shape[0]))
    for i in range(len(G)):
        K = eye + _interference_after(G, mats, groups, i)
        own = G[i] @ mats[i] @ np.swapaxes(G[i], 1, 2).conj()
        rates[i] = logdet_ratio(K, own)
    return rates


def _sequential_targets(G, after, targets):
    """Covariances meeting ``targets`` (bits over the band) for the fixed orders.

    Users are updated Gauss-Seidel style, each water-filling against the
    interference of the users decoded after it; with one global order a
    single pass in reverse decoding order is exact, otherwise the sweep is
    repeated to the fixed point (standard interference function, so it
    converges whenever the targets are feasible).
    """
    k, N = len(G), G[0].shape[0]
    groups = _order_groups(after)
    mats = [np.zeros((N, g.shape[2], g.shape[2]), dtype=complex) for g in G]
    # users decoded last on most subcarriers go first
    mean_pos = np.array([sum(len(a[i]) * idx.size for idx, a in groups) for i in range(k)])
    sweep_order = np.argsort(mean_pos, kind="stable")
    for sweep in range(IWF_MAX_SWEEPS):
        change = 0.0
        for i in sweep_order:
            gains, V = _eigenmodes(G[i], _interference_after(G, mats, groups, i))
            new = _covariance_from_modes(V, rate_target_waterfill(gains, targets[i]))
            scale = max(np.abs(new).max(), np.abs(mats[i]).max(), 1e-300)
            change = max(change, float(np.abs(new - mats[i]).max() / scale))
            mats[i] = new
        if sum(np.abs(mt).max() for mt in mats) > 1e30:
            raise InfeasibleError("rate floors unreachable with the fixed decoding orders")
        if change < IWF_TOL:
            return mats
    raise InfeasibleError("sequential water-filling did not settle; floors look infeasible for these orders")


def _weights_follow_orders(weights, orders):
    """True if, on every subcarrier, users decoded later never have smaller weight."""
    for o in orders:
        w = np.asarray(weights)[list(o.sequence)]
        if np.any(np.diff(w) < 0):
            return False
    return True


def _sca(G, after, *, floors=None, weights, budget=None, start):
    """Successive convex approximation of the fixed-order problem (normalized units).

    Each round linearizes the subtracted interference log-det around the
    current point, which under-estimates every user's rate, so each round's
    solution is feasible for the true problem and the objective improves
    monotonically.
    """
    k, N = len(G), G[0].shape[0]
    layout = Layout([g.shape[2] for g in G])
    x = layout.from_matrices(start)
    energy_mode = floors is not None
    wn = np.asarray(weights, float) / max(weights)
    if energy_mode:
        cx = np.broadcast_to(wn @ layout.trace_vectors, (N, layout.size)).copy()
        cb = np.zeros(k)
    else:
        cx = np.zeros((N, layout.size))
        cb = -wn
    history = []
    res = None
    # subsets needed: own-plus-after and after-only, per subcarrier
    plus = [[tuple(sorted((i,) + after[n][i])) for i in range(k)] for n in range(N)]
    minus = [[after[n][i] for i in range(k)] for n in range(N)]
    probe_sets = sorted({S for n in range(N) for S in minus[n] if S} | {S for n in range(N) for S in plus[n]})
    probe = LogDetProgram(G, [Row(terms={S: np.ones(N)}) for S in probe_sets], cx, np.zeros(0))
    for it in range(SCA_MAX_ITER):
        vals, grads, _ = probe.subset_values(x, derivs=True, hessians=False)
        pos = {S: j for j, S in enumerate(probe.subsets)}
        rows = []
        for i in range(k):
            terms, lin, const = {}, np.zeros((N, layout.size)), 0.0
            for n in range(N):
                S = plus[n][i]
                terms.setdefault(S, np.zeros(N))[n] = 1.0
                T = minus[n][i]
                if T:
                    j = pos[T]
                    index, gr = grads[j]
                    lin[n, index] -= gr[n]
                    const -= vals[j, n] - gr[n] @ x[n, index]
            cbr = np.zeros(k)
            cbr[i] = -1.0
            rows.append(Row(terms=terms, lin=lin, cb=cbr, const=const, name=f"rate{i}", weight=N))
        rates_now = _local_rates(G, layout.to_matrices(x), after).sum(axis=1)
        if energy_mode:
            rows += [Row(cb=np.eye(k)[i], const=-float(floors[i]), name=f"floor{i}", weight=N) for i in range(k)]
            b0 = floors + 0.5 * (rates_now - floors)
        else:
            rows += [Row(cb=np.eye(k)[i], name=f"floor{i}", weight=N) for i in range(k)]
            rows.append(
                Row(
                    lin=-np.broadcast_to(layout.trace_vectors.sum(axis=0) / budget, (N, layout.size)).copy(),
                    const=1.0,
                    name="power",
                    weight=N,
                )
            )
            b0 = 0.5 * rates_now
        prog = LogDetProgram(G, rows, cx, cb)
        # strictly interior start: shrink toward the current point's rates
        x_start = x
        if not energy_mode:
            used = layout.trace_vectors.sum(axis=0) @ x.sum(axis=0)
            if used >= budget:
                x_start = x * (1.0 - 1e-6)
        res = prog.solve(x_start, b0, gap_tol=1e-10, obj_scale=max(abs(prog.objective(x_start, b0)), 1e-12))
        x = res.x
        history.append(res.objective)
        if len(history) > 1 and abs(history[-2] - history[-1]) <= SCA_TOL * max(abs(history[-1]), 1e-300):
            break
    return layout.to_matrices(x), res, history


def _fixed_order_allocate(channels, orders, *, total_power, min_rates, weights, name):
    U, N = channels.num_users, channels.num_subcarriers
    orders = _order_list(orders, N)
    if (total_power is None) == (min_rates is None):
        raise InputError("give exactly one of total_power (sum-rate mode) or min_rates (energy mode)")
    w = np.ones(U) if weights is None else np.asarray(weights, float).ravel()
    if w.size != U or np.any(w < 0):
        raise InputError(f"need {U} non-negative weights")
    G_all = whitened_blocks(channels)
    global_order = orders[0] if all(o.sequence == orders[0].sequence for o in orders) else None

    if total_power is not None:
        if _weights_follow_orders(w, orders):
            # the weighted sum-rate optimum decodes larger weights later, which
            # these orders already do, so fixing them costs nothing
            opt = maximize_sum_rate(channels, total_power, w)
            rates = fixed_order_rates(channels, opt.covariances, orders)
            return _package(channels, opt.covariances, rates, opt.duals, w, opt.kkt_residual, orders, name,
                            global_order, {"path": "polymatroid"})
        active = [u for u in range(U) if w[u] > 0 and np.any(G_all[u])]
        if not active or total_power == 0:
            zero = CovarianceSet.zeros(channels.user_dims, N)
            return _package(channels, zero, RateAllocation(np.zeros((U, N))), np.zeros(U), w, 0.0, orders, name,
                            global_order, {"path": "zero"})
        G = [G_all[u] for u in active]
        scale = gain_scale(G)
        Gs = [g / np.sqrt(scale) for g in G]
        P = total_power * scale
        layout = Layout([g.shape[2] for g in Gs])
        start = layout.to_matrices(layout.identity(N, P / (2.0 * N * layout.num_antennas)))
        after = _after_sets(orders, active)
        mats, res, hist = _sca(Gs, after, weights=w[active], budget=P, start=start)
        covs = expand_covariances(channels, active, mats, scale)
        rates = fixed_order_rates(channels, covs, orders)
        theta = np.zeros(U)
        return _package(channels, covs, rates, theta, w, res.kkt["residual"], orders, name, global_order,
                        {"path": "sca", "sca_iterations": len(hist)})

    floors = np.asarray(min_rates, float).ravel()
    if floors.size != U or np.any(floors < 0):
        raise InputError(f"need {U} non-negative rate floors")
    active = [u for u in range(U) if floors[u] > 0]
    if not active:
        zero = CovarianceSet.zeros(channels.user_dims, N)
        return _package(channels, zero, RateAllocation(np.zeros((U, N))), np.zeros(U), w, 0.0, orders, name,
                        global_order, {"path": "zero"})
    for u in active:
        if w[u] <= 0:
            raise InputError(f"user {u} has a rate floor but zero weight")
        if not np.any(G_all[u]):
            raise InfeasibleError(f"user {u} has an all-zero channel but needs {floors[u]} bits")
    G = [G_all[u] for u in active]
    scale = gain_scale(G)
    Gs = [g / np.sqrt(scale) for g in G]
    after = _after_sets(orders, active)
    target = floors[active]
    start = _sequential_targets(Gs, after, target * (1.0 + 1e-3) + 1e-6)
    layout = Layout([g.shape[2] for g in Gs])
    # nudge to a strictly positive definite start; the inflated targets absorb it
    eps = 1e-9 * max(float(np.abs(layout.from_matrices(start)).max()), 1e-300)
    start = [s + eps * np.eye(s.shape[1]) for s in start]
    if np.any(_local_rates(Gs, start, after).sum(axis=1) <= target):
        raise InfeasibleError("could not find a strictly feasible start for the fixed orders")
    mats, res, hist = _sca(Gs, after, floors=target, weights=w[active], start=start)
    covs = expand_covariances(channels, active, mats, scale)
    rates = fixed_order_rates(channels, covs, orders)
    theta = np.zeros(U)
    theta[active] = res.row_duals[-len(active):] * max(w[active]) / scale
    return _package(channels, covs, rates, theta, w, res.kkt["residual"], orders, name, global_order,
                    {"path": "sca", "sca_iterations": len(hist)})


def _package(channels, covs, rates, theta, weights, kkt, orders, name, global_order, diag):
    order = global_order if global_order is not None else orders[0]
    return AllocationSolution(
        covariances=covs,
        rates=rates,
        duals=np.asarray(theta, float),
        energy=weighted_energy(covs, weights),
        kkt_residual=float(kkt),
        tie_groups=order.tie_groups,
        order=order,
        mode=name,
        rate_totals=rates.totals,
        diagnostics={**diag, "orders": tuple(o.sequence for o in orders)},
    )


def noma_allocate(channels, total_power=None, *, min_rates=None, weights=None, order=None):
    """Full-band NOMA with one decoding order for every subcarrier.

    The order defaults to :func:`~mcnoma.sic.channel_gain_order` (weakest
    user decoded first). With ``total_power`` the weighted sum rate is
    maximized; with ``min_rates`` the weighted energy is minimized.
    """
    if channels.side != "mac":
        raise InputError("noma_allocate expects MAC-side channels")
    order = channel_gain_order(channels) if order is None else order
    return _fixed_order_allocate(channels, order, total_power=total_power, min_rates=min_rates,
                                 weights=weights, name="noma")


def mc_noma_allocate(channels, total_power=None, *, min_rates=None, weights=None, orders=None):
    """Multi-carrier NOMA: a separate gain-ranked decoding order on every subcarrier."""
    if channels.side != "mac":
        raise InputError("mc_noma_allocate expects MAC-side channels")
    orders = subcarrier_gain_orders(channels) if orders is None else orders
    return _fixed_order_allocate(channels, orders, total_power=total_power, min_rates=min_rates,
                                 weights=weights, name="mc_noma")
