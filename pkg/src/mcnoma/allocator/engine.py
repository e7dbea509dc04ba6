"""Barrier interior-point method for log-det constrained covariance programs.

Variables are one Hermitian PSD covariance per (user, subcarrier),
stored as real coordinates in an orthonormal Hermitian basis, plus a short
vector ``b`` of auxiliary scalars (per-user rate totals). Every constraint
has the form::

    sum_S sum_n alpha[S, n] f_n(S) + <lin, x> + <cb, b> + const >= 0

where ``f_n(S) = log2 det(I + sum_{u in S} G_u R_u G_u^H)`` on subcarrier
``n`` and all ``alpha >= 0``, so each constraint is concave. The objective
is linear. Covariance positivity is enforced by a log-det barrier.

The Newton matrix is block diagonal over subcarriers plus a rank-``m``
term (one column per constraint). Steps are computed with a Schur
complement on the constraints, so the cost grows linearly with ``N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..errors import ConvergenceError, InputError

LN2 = np.log(2.0)
QUADRATIC_REGION = 1e-3


@lru_cache(maxsize=None)
def hermitian_basis(d):
    """Orthonormal basis of d x d Hermitian matrices, shape (d*d, d, d)."""
    mats = []
    for i in range(d):
        E = np.zeros((d, d), dtype=complex)
        E[i, i] = 1.0
        mats.append(E)
    s = 1.0 / np.sqrt(2.0)
    for i in range(d):
        for j in range(i + 1, d):
            E = np.zeros((d, d), dtype=complex)
            E[i, j] = E[j, i] = s
            mats.append(E)
            E = np.zeros((d, d), dtype=complex)
            E[i, j] = 1j * s
            E[j, i] = -1j * s
            mats.append(E)
    out = np.array(mats)
    out.setflags(write=False)
    return out


class Layout:
    """Where each user's covariance coordinates live in the stacked vector."""

    def __init__(self, dims):
        self.dims = tuple(int(d) for d in dims)
        self.offsets = np.concatenate([[0], np.cumsum([d * d for d in self.dims])]).astype(int)
        self.ant_offsets = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)
        self.size = int(self.offsets[-1])
        self.num_antennas = int(self.ant_offsets[-1])
        # trace functional per user: 1 on that user's diagonal coordinates
        self.trace_vectors = np.zeros((len(self.dims), self.size))
        for u, d in enumerate(self.dims):
            self.trace_vectors[u, self.offsets[u] : self.offsets[u] + d] = 1.0

    def params(self, u):
        return slice(self.offsets[u], self.offsets[u + 1])

    def antennas(self, u):
        return slice(self.ant_offsets[u], self.ant_offsets[u + 1])

    def to_matrices(self, x):
        """(N, D) coordinates -> list of (N, d_u, d_u) covariances."""
        return [
            np.einsum("nk,kij->nij", x[:, self.params(u)], hermitian_basis(d))
            for u, d in enumerate(self.dims)
        ]

    def from_matrices(self, mats):
        x = np.zeros((mats[0].shape[0], self.size))
        for u, d in enumerate(self.dims):
            x[:, self.params(u)] = np.einsum("kij,nji->nk", hermitian_basis(d), mats[u]).real
        return x

    def identity(self, num_subcarriers, scale=1.0):
        x = np.zeros((num_subcarriers, self.size))
        for u, d in enumerate(self.dims):
            x[:, self.offsets[u] : self.offsets[u] + d] = scale
        return x

    @lru_cache(maxsize=None)
    def subset_basis(self, subset):
        """Basis of the block-diagonal covariance of ``subset`` and its coordinate indices."""
        dims = [self.dims[u] for u in subset]
        total = sum(dims)
        blocks, index = [], []
        a = 0
        for u, d in zip(subset, dims):
            E = hermitian_basis(d)
            big = np.zeros((E.shape[0], total, total), dtype=complex)
            big[:, a : a + d, a : a + d] = E
            blocks.append(big)
            index.extend(range(self.offsets[u], self.offsets[u + 1]))
            a += d
        ants = np.concatenate([np.arange(self.ant_offsets[u], self.ant_offsets[u + 1]) for u in subset])
        return np.concatenate(blocks), np.array(index), ants


@dataclass
class Row:
    """One concave constraint ``value >= 0`` (see module docstring)."""

    terms: dict = field(default_factory=dict)  # subset tuple -> alpha, shape (N,)
    lin: np.ndarray | None = None  # (N, D)
    cb: np.ndarray | None = None  # (n_b,)
    const: float = 0.0
    name: str = ""
    weight: float = 1.0  # barrier weight (counts as this many constraints)


@dataclass
class BarrierResult:
    x: np.ndarray
    b: np.ndarray
    row_duals: np.ndarray
    row_values: np.ndarray
    psd_duals: list
    objective: float
    t: float
    gap: float
    newton_steps: int
    kkt: dict


class LogDetProgram:
    """Minimize ``<cx, x> + <cb, b>`` subject to concave log-det rows and PSD covariances.

    Parameters
    ----------
    G : list of ndarray
        Whitened channel of each user, shape (N, m, d_u): the receiver sees
        ``sum_u G_u x_u`` plus unit white noise.
    rows : list of Row
    cx : ndarray, shape (N, D)
    cb : ndarray, shape (n_b,)
    """

    def __init__(self, G, rows, cx, cb):
        self.G = [np.asarray(g, dtype=complex) for g in G]
        self.N = self.G[0].shape[0]
        self.m = self.G[0].shape[1]
        self.layout = Layout([g.shape[2] for g in self.G])
        self.Gall = np.concatenate(self.G, axis=2)
        self.rows = list(rows)
        self.cx = np.asarray(cx, dtype=float)
        self.cb = np.asarray(cb, dtype=float)
        self.nb = self.cb.shape[0]
        self.subsets = sorted({S for r in self.rows for S in r.terms}, key=lambda s: (len(s), s))
        self.psd_degree = self.N * self.layout.num_antennas
        self.num_rows = len(self.rows)
        # constraint data as dense arrays for vectorized evaluation
        self.alpha = np.zeros((self.num_rows, len(self.subsets), self.N))
        s_index = {S: k for k, S in enumerate(self.subsets)}
        self.lin = np.zeros((self.num_rows, self.N, self.layout.size))
        self.rcb = np.zeros((self.num_rows, self.nb))
        self.const = np.zeros(self.num_rows)
        self.row_weights = np.array([float(r.weight) for r in self.rows])
        if np.any(self.row_weights <= 0):
            raise InputError("barrier weights must be positive")
        for i, r in enumerate(self.rows):
            for S, a in r.terms.items():
                a = np.broadcast_to(np.asarray(a, dtype=float), (self.N,))
                if np.any(a < 0):
                    raise InputError(f"row {r.name!r}: negative log-det weight makes it non-concave")
                self.alpha[i, s_index[S]] += a
            if r.lin is not None:
                self.lin[i] = r.lin
            if r.cb is not None:
                self.rcb[i] = r.cb
            self.const[i] = r.const
        self.has_lin = bool(np.any(self.lin))

    # --- function evaluations -------------------------------------------------

    def _block_diag(self, x):
        mats = self.layout.to_matrices(x)
        R = np.zeros((self.N, self.layout.num_antennas, self.layout.num_antennas), dtype=complex)
        for u, Ru in enumerate(mats):
            s = self.layout.antennas(u)
            R[:, s, s] = Ru
        return R, mats

    def subset_values(self, x, derivs=False, hessians=True):
        """f_n(S) for every subset (S, N); optionally gradients and Hessians in bits."""
        Rbig, _ = self._block_diag(x)
        vals = np.zeros((len(self.subsets), self.N))
        grads, hess = [], []
        self._subset_chols = []
        eye = np.eye(self.m)
        for k, S in enumerate(self.subsets):
            E, index, ants = self.layout.subset_basis(S)
            Gs = self.Gall[:, :, ants]
            Rs = Rbig[:, ants][:, :, ants]
            M = eye + Gs @ Rs @ np.swapaxes(Gs, 1, 2).conj()
            M = 0.5 * (M + np.swapaxes(M, 1, 2).conj())
            C = np.linalg.cholesky(M)
            self._subset_chols.append(C)
            vals[k] = 2.0 * np.sum(np.log(np.diagonal(C, axis1=1, axis2=2).real), axis=1) / LN2
            if derivs:
                Y = np.linalg.solve(C, Gs)
                P = np.swapaxes(Y, 1, 2).conj() @ Y  # Gs^H M^-1 Gs
                g = np.einsum("kij,nji->nk", E, P).real / LN2
                grads.append((index, g))
                if not hessians:
                    continue
                T = np.einsum("kij,njm->nkim", E, P)
                h = -np.einsum("nkim,nlmi->nkl", T, T).real / LN2
                hess.append((index, h))
        return vals, grads, hess

    def row_values(self, x, b, vals=None):
        if vals is None:
            vals, _, _ = self.subset_values(x)
        out = np.einsum("isn,sn->i", self.alpha, vals) + self.rcb @ b + self.const
        if self.has_lin:
            out += np.einsum("ind,nd->i", self.lin, x)
        return out

    def _psd_chol(self, x):
        """Cholesky factors of every covariance, or None if one is not PD."""
        mats = self.layout.to_matrices(x)
        try:
            return [np.linalg.cholesky(0.5 * (R + np.swapaxes(R, 1, 2).conj())) for R in mats], mats
        except np.linalg.LinAlgError:
            return None, mats

    def _psd_logdet(self, chols):
        return sum(2.0 * np.sum(np.log(np.diagonal(C, axis1=1, axis2=2).real)) for C in chols)

    def _max_psd_step(self, x, dx, chols):
        """Largest s with R + s dR still PD, and the whitened step eigenvalues."""
        dmats = self.layout.to_matrices(dx)
        smax = np.inf
        eigs = []
        for C, dR in zip(chols, dmats):
            Y = np.linalg.solve(C, dR)
            W = np.linalg.solve(C, np.swapaxes(Y, 1, 2).conj())
            w = np.linalg.eigvalsh(0.5 * (W + np.swapaxes(W, 1, 2).conj()))
            eigs.append(w)
            lo = w[:, 0]
            neg = lo < 0
            if np.any(neg):
                smax = min(smax, float(np.min(-1.0 / lo[neg])))
        return smax, eigs

    def _row_change(self, zx, zb, s):
        """g(x + s zx, b + s zb) - g(x, b), using the factors cached at x.

        Each log-det difference is evaluated as ``log det(I + C^-1 dM C^-H)``
        so the change keeps full relative precision even when the rows
        themselves are large.
        """
        dR, _ = self._block_diag(s * zx)
        dvals = np.zeros((len(self.subsets), self.N))
        eye = np.eye(self.m)
        for k, S in enumerate(self.subsets):
            _, _, ants = self.layout.subset_basis(S)
            Gs = self.Gall[:, :, ants]
            dM = Gs @ dR[:, ants][:, :, ants] @ np.swapaxes(Gs, 1, 2).conj()
            C = self._subset_chols[k]
            Y = np.linalg.solve(C, dM)
            X = np.linalg.solve(C, np.swapaxes(Y, 1, 2).conj())
            X = eye + 0.5 * (X + np.swapaxes(X, 1, 2).conj())
            w = np.linalg.eigvalsh(X)
            if np.any(w <= 0):
                return None
            dvals[k] = np.sum(np.log(w), axis=1) / LN2
        out = np.einsum("isn,sn->i", self.alpha, dvals) + s * (self.rcb @ zb)
        if self.has_lin:
            out += s * np.einsum("ind,nd->i", self.lin, zx)
        return out

    def _barrier_change(self, t, g, zx, zb, s, psd_eigs):
        """phi(x + s z) - phi(x) computed as a difference, or inf if infeasible."""
        dg = self._row_change(zx, zb, s)
        if dg is None:
            return np.inf
        ratio = dg / g
        if np.any(ratio <= -1.0) or not np.all(np.isfinite(ratio)):
            return np.inf
        step = 1.0 + s * np.concatenate([w.ravel() for w in psd_eigs])
        if np.any(step <= 0):
            return np.inf
        d_obj = s * (np.sum(self.cx * zx) + self.cb @ zb)
        return t * d_obj - self.row_weights @ np.log1p(ratio) - np.sum(np.log(step))

    def objective(self, x, b):
        return float(np.sum(self.cx * x) + self.cb @ b)

    def barrier_value(self, t, x, b):
        chols, _ = self._psd_chol(x)
        if chols is None:
            return np.inf
        g = self.row_values(x, b)
        if np.any(g <= 0) or not np.all(np.isfinite(g)):
            return np.inf
        return t * self.objective(x, b) - self.row_weights @ np.log(g) - self._psd_logdet(chols)

    # --- Newton step ----------------------------------------------------------

    def _newton(self, t, x, b):
        N, D, nb = self.N, self.layout.size, self.nb
        vals, grads, hess = self.subset_values(x, derivs=True)
        g = self.row_values(x, b, vals)
        inv_g = self.row_weights / g
        g_hat = g / np.sqrt(self.row_weights)  # Hessian of the row barrier is diag(1/g_hat^2)
        # row gradients: Vx (rows, N, D), Vb (rows, nb)
        Vx = self.lin.copy() if self.has_lin else np.zeros((self.num_rows, N, D))
        for k, (index, gr) in enumerate(grads):
            Vx[:, :, index] += self.alpha[:, k, :, None] * gr[None]
        Vb = self.rcb
        # block Hessian from the curvature of the log-dets
        A = np.zeros((N, D, D))
        weights = np.einsum("isn,i->sn", self.alpha, inv_g)
        for k, (index, h) in enumerate(hess):
            A[:, index[:, None], index[None, :]] -= weights[k][:, None, None] * h
        chols, mats = self._psd_chol(x)
        gx_psd = np.zeros((N, D))
        for u, (C, d) in enumerate(zip(chols, self.layout.dims)):
            E = hermitian_basis(d)
            Rinv = np.linalg.inv(mats[u])
            Rinv = 0.5 * (Rinv + np.swapaxes(Rinv, 1, 2).conj())
            sl = self.layout.params(u)
            gx_psd[:, sl] = -np.einsum("kij,nji->nk", E, Rinv).real
            T = np.einsum("kij,njm->nkim", E, Rinv)
            A[:, sl, sl] += np.einsum("nkim,nlmi->nkl", T, T).real
        grad_x = t * self.cx - np.einsum("i,ind->nd", inv_g, Vx) + gx_psd
        grad_b = t * self.cb - inv_g @ Vb

        # Schur complement on the constraint columns
        A = 0.5 * (A + np.swapaxes(A, 1, 2))
        try:
            LA = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            A = A + 1e-12 * np.max(np.abs(A)) * np.eye(D)
            LA = np.linalg.cholesky(A)
        Vcols = np.moveaxis(Vx, 0, 2)  # (N, D, rows)
        rhs = np.concatenate([grad_x[:, :, None], Vcols], axis=2)
        sol = _chol_solve(LA, rhs)
        Ainv_g = sol[:, :, 0]
        Ainv_V = sol[:, :, 1:]
        # scaled by the row slacks the Schur matrix is I + (V/g_hat)^T A^-1 (V/g_hat),
        # which stays well conditioned as active rows approach zero slack
        K = np.einsum("ndi,ndj->ij", Vcols, Ainv_V) / np.outer(g_hat, g_hat) + np.eye(self.num_rows)
        r = -np.einsum("ndi,nd->i", Vcols, Ainv_g) / g_hat
        K = 0.5 * (K + K.T)
        Kc = _robust_cholesky(K)
        Kinv_r = _chol_solve(Kc, r)
        if nb:
            Vb_s = Vb / g_hat[:, None]
            Kinv_VbT = _chol_solve(Kc, Vb_s)
            Sb = Vb_s.T @ Kinv_VbT
            zb = _floored_solve(0.5 * (Sb + Sb.T), -grad_b - Vb_s.T @ Kinv_r)
            y = (Kinv_r + Kinv_VbT @ zb) / g_hat
        else:
            zb = np.zeros(0)
            y = Kinv_r / g_hat
        zx = -(Ainv_g + np.einsum("ndi,i->nd", Ainv_V, y))
        decrement = -(np.sum(grad_x * zx) + grad_b @ zb)
        self._last_y = y
        return zx, zb, decrement, chols, grad_x, grad_b

    def solve(self, x0, b0, *, gap_tol=1e-10, mu=20.0, max_newton=500, t0=None, obj_scale=None):
        """Run the barrier method from the strictly feasible point (x0, b0).

        ``gap_tol`` bounds the duality gap relative to ``max(|objective|,
        obj_scale)``. Raises :class:`ConvergenceError` after ``max_newton``
        Newton steps.
        """
        x = np.array(x0, dtype=float)
        b = np.array(b0, dtype=float)
        chols, _ = self._psd_chol(x)
        g0 = self.row_values(x, b)
        if chols is None or np.any(g0 <= 0):
            raise InputError("barrier start point is not strictly feasible")
        m_total = float(self.row_weights.sum()) + self.psd_degree
        obj = self.objective(x, b)
        scale = obj_scale if obj_scale is not None else max(abs(obj), 1e-12)
        t = t0 if t0 is not None else m_total / max(abs(obj), scale)
        steps = 0
        while True:
            # centering
            prev_dec = None
            while True:
                if steps >= max_newton:
                    raise ConvergenceError(
                        f"barrier method did not converge in {max_newton} Newton steps",
                        {"t": t, "gap": m_total / t, "objective": self.objective(x, b)},
                    )
                zx, zb, dec, chols, gx, gb = self._newton(t, x, b)
                steps += 1
                if dec / 2.0 <= 1e-11:
                    break
                if dec < QUADRATIC_REGION:
                    # quadratic convergence should shrink the decrement fast;
                    # once it stalls we are at the floating-point floor
                    if prev_dec is not None and prev_dec < QUADRATIC_REGION and dec > 0.1 * prev_dec:
                        break
                prev_dec = dec
                smax, psd_eigs = self._max_psd_step(x, zx, chols)
                s = min(1.0, 0.99 * smax)
                g = self.row_values(x, b)
                slope = gx.ravel() @ zx.ravel() + gb @ zb
                accepted = False
                for _ in range(60):
                    if self._barrier_change(t, g, zx, zb, s, psd_eigs) <= 0.01 * s * slope and np.all(
                        self.row_values(x + s * zx, b + s * zb) > 0
                    ):
                        accepted = True
                        break
                    s *= 0.5
                if not accepted:
                    break
                x = x + s * zx
                b = b + s * zb
            obj = self.objective(x, b)
            ref = max(abs(obj), scale if obj_scale is not None else 0.0, 1e-300)
            if m_total / t <= gap_tol * ref:
                break
            t *= mu
        g = self.row_values(x, b)
        duals, psd_duals = self._corrected_duals(t, x, b, g)
        kkt = self._kkt(t, x, b, g, duals, psd_duals, ref)
        return BarrierResult(x, b, duals, g, psd_duals, obj, t, m_total / t, steps, kkt)

    def _corrected_duals(self, t, x, b, g):
        """Multipliers linearized one Newton step ahead of the final iterate.

        Reading ``1 / (t g)`` directly inherits the centering error, which
        near the boundary is amplified by ``1 / g``; the Newton system gives
        the first-order correction ``w (1/g - (grad g . z) / g^2) / t``.
        """
        zx, _, _, _, _, _ = self._newton(t, x, b)
        y = self._last_y
        duals = np.maximum((self.row_weights / g - y) / t, 0.0)
        _, mats = self._psd_chol(x)
        dmats = self.layout.to_matrices(zx)
        psd_duals = []
        for R, dR in zip(mats, dmats):
            Rinv = np.linalg.inv(R)
            Z = (Rinv - Rinv @ dR @ Rinv) / t
            psd_duals.append(0.5 * (Z + np.swapaxes(Z, 1, 2).conj()))
        return duals, psd_duals

    def _kkt(self, t, x, b, g, duals, psd_duals, ref):
        """Normalized KKT residuals of the final iterate."""
        _, grads, _ = self.subset_values(x, derivs=True, hessians=False)
        Vx = self.lin.copy() if self.has_lin else np.zeros((self.num_rows, self.N, self.layout.size))
        for k, (index, gr) in enumerate(grads):
            Vx[:, :, index] += self.alpha[:, k, :, None] * gr[None]
        pull_x = np.einsum("i,ind->nd", duals, Vx)
        zx = self.layout.from_matrices(psd_duals)
        rx = self.cx - pull_x - zx
        pull_b = duals @ self.rcb
        rb = self.cb - pull_b
        # normalize by the largest individual term entering each equation
        terms_x = np.abs(duals[:, None, None] * Vx).max(axis=0) if self.num_rows else 0.0
        sx = max(np.abs(self.cx).max(initial=0.0), np.max(terms_x, initial=0.0), np.abs(zx).max(initial=0.0), 1e-300)
        sb = max(np.abs(self.cb).max(initial=0.0), np.abs(duals[:, None] * self.rcb).max(initial=0.0), 1e-300)
        comp = float(np.sum(duals * g) + sum(np.trace(Z @ R, axis1=1, axis2=2).real.sum()
                                             for Z, R in zip(psd_duals, self.layout.to_matrices(x))))
        out = {
            "stationarity_x": float(np.abs(rx).max() / sx),
            "stationarity_b": float(np.abs(rb).max(initial=0.0) / sb) if self.nb else 0.0,
            "complementarity": comp / ref,
            "primal_infeasibility": float(max(0.0, -g.min())),
        }
        out["residual"] = max(out.values())
        return out


def _chol_solve(L, B):
    """Solve (L L^T) X = B with batched or single Cholesky factors."""
    if L.ndim == 2:
        y = np.linalg.solve(L, B)
        return np.linalg.solve(L.T, y)
    y = np.linalg.solve(L, B)
    return np.linalg.solve(np.swapaxes(L, 1, 2), y)


def _floored_solve(S, rhs):
    """Solve a symmetric PSD system, flooring eigenvalues at 1e-15 of the largest.

    The floor only bites along directions the constraints leave (almost)
    free, e.g. splits of a sum rate along a face of the capacity region.
    """
    w, v = np.linalg.eigh(S)
    w = np.maximum(w, 1e-15 * max(w.max(), 1e-300))
    return v @ ((v.T @ rhs) / w)


def _robust_cholesky(K):
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        jitter = 1e-14 * max(np.abs(np.diag(K)).max(), 1e-300)
        for _ in range(20):
            try:
                return np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
            except np.linalg.LinAlgError:
                jitter *= 10.0
        raise
