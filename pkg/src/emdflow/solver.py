"""Canonical convex composite programs and the solvers behind every tracker.

A :class:`CompositeProgram` describes

    minimize   1/2 ||b - H v||^2 + c'v + sum_i w_i |v_i| + sum_g rho_g ||v_g||_2
    subject to E v = e,  G v <= h,  lb <= v <= ub.

Three backends are available:

``admm``
    Operator splitting (relaxed ADMM on the lifted constraint system, with
    adaptive penalty and infeasibility certificates). Written here.
``conic``
    Interior point through Clarabel, with l1 and group terms moved into
    epigraph variables and second-order cones.
``solve_lp_exact``
    HiGHS simplex for purely linear programs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_INACCURATE = "optimal_inaccurate"


class SolverError(RuntimeError):
    """Raised when a program cannot be solved to the requested status."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _as_sparse(M, ncols):
    if M is None:
        return sp.csr_matrix((0, ncols))
    M = sp.csr_matrix(M, dtype=float)
    if M.shape[1] != ncols:
        raise ValueError(f"matrix has {M.shape[1]} columns, expected {ncols}")
    return M


@dataclass
class CompositeProgram:
    n: int
    H: object = None
    b: np.ndarray | None = None
    c: np.ndarray | None = None
    l1: np.ndarray | None = None
    groups: list = field(default_factory=list)
    E: object = None
    e: np.ndarray | None = None
    G: object = None
    h: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        n = self.n = int(self.n)
        if self.H is not None:
            self.H = _as_sparse(self.H, n)
            self.b = np.zeros(self.H.shape[0]) if self.b is None else np.asarray(self.b, dtype=float).ravel()
            if self.b.shape[0] != self.H.shape[0]:
                raise ValueError("b length does not match H rows")
        self.c = np.zeros(n) if self.c is None else np.asarray(self.c, dtype=float).ravel()
        self.l1 = np.zeros(n) if self.l1 is None else np.broadcast_to(np.asarray(self.l1, dtype=float), (n,)).copy()
        self.E = _as_sparse(self.E, n)
        self.e = np.zeros(0) if self.e is None else np.asarray(self.e, dtype=float).ravel()
        self.G = _as_sparse(self.G, n)
        self.h = np.zeros(0) if self.h is None else np.asarray(self.h, dtype=float).ravel()
        self.lb = np.full(n, -np.inf) if self.lb is None else np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        self.groups = [(np.asarray(idx, dtype=int).ravel(), float(w)) for idx, w in self.groups]
        self.validate()

    def validate(self):
        if self.c.shape != (self.n,):
            raise ValueError("c has the wrong length")
        if np.any(self.l1 < 0):
            raise ValueError("l1 weights must be nonnegative")
        if self.E.shape[0] != self.e.shape[0] or self.G.shape[0] != self.h.shape[0]:
            raise ValueError("constraint right-hand sides do not match matrices")
        seen = np.zeros(self.n, dtype=bool)
        for idx, w in self.groups:
            if w < 0:
                raise ValueError("group weights must be nonnegative")
            if idx.size == 0 or np.any(seen[idx]) or len(np.unique(idx)) != idx.size:
                raise ValueError("groups must be nonempty and disjoint")
            if np.any(self.l1[idx] > 0) or np.any(np.isfinite(self.lb[idx])) or np.any(np.isfinite(self.ub[idx])):
                raise ValueError("grouped variables may not carry l1 weights or bounds")
            seen[idx] = True

    @property
    def is_linear(self) -> bool:
        return self.H is None and not self.groups

    def objective(self, v) -> float:
        v = np.asarray(v, dtype=float)
        val = float(self.c @ v + self.l1 @ np.abs(v))
        if self.H is not None:
            r = self.b - self.H @ v
            val += 0.5 * float(r @ r)
        for idx, w in self.groups:
            val += w * float(np.linalg.norm(v[idx]))
        return val

    def gradient(self, v) -> np.ndarray:
        """Gradient of the smooth part (quadratic plus linear)."""
        g = self.c.copy()
        if self.H is not None:
            g += self.H.T @ (self.H @ v - self.b)
        return g

    def infeasibility(self, v) -> float:
        """Largest violation of the constraint set at ``v``."""
        v = np.asarray(v, dtype=float)
        parts = [0.0]
        if self.E.shape[0]:
            parts.append(np.max(np.abs(self.E @ v - self.e)))
        if self.G.shape[0]:
            parts.append(np.max(self.G @ v - self.h))
        parts.append(np.max(self.lb - v, initial=0.0))
        parts.append(np.max(v - self.ub, initial=0.0))
        return float(max(0.0, *parts))


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    wall_time: float
    status: str
    method: str
    dual: np.ndarray | None = None
    merit: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == STATUS_OPTIMAL


def compile_report(report: SolveReport) -> dict:
    """Flat record of a solve, suitable for CSV/JSON output."""
    return {
        "status": report.status,
        "method": report.method,
        "objective": float(report.objective),
        "primal_residual": float(report.primal_residual),
        "dual_residual": float(report.dual_residual),
        "iterations": int(report.iterations),
        "wall_time": float(report.wall_time),
    }


# ---------------------------------------------------------------- ADMM backend


class _RowModel:
    """Constraint rows C v = z with z restricted by a separable function g.

    Row blocks, in order: equalities, inequalities, then identity rows for
    every variable that is bounded, l1-weighted or grouped.
    """

    def __init__(self, p: CompositeProgram):
        n = p.n
        in_group = np.zeros(n, dtype=bool)
        for idx, _ in p.groups:
            in_group[idx] = True
        boxed = (~in_group) & ((p.l1 > 0) | np.isfinite(p.lb) | np.isfinite(p.ub))
        self.box_vars = np.flatnonzero(boxed)
        self.group_vars = np.concatenate([idx for idx, _ in p.groups]) if p.groups else np.zeros(0, dtype=int)
        self.group_sizes = np.array([idx.size for idx, _ in p.groups], dtype=int)
        self.group_weights = np.array([w for _, w in p.groups], dtype=float)
        self.id_vars = np.concatenate([self.box_vars, self.group_vars]).astype(int)

        self.m_eq, self.m_in = p.E.shape[0], p.G.shape[0]
        self.m_box, self.m_grp = self.box_vars.size, self.group_vars.size
        sel = sp.csr_matrix((np.ones(self.id_vars.size), (np.arange(self.id_vars.size), self.id_vars)), shape=(self.id_vars.size, n))
        self.C = sp.vstack([p.E, p.G, sel]).tocsr()
        self.m = self.C.shape[0]

        o1 = self.m_eq
        o2 = o1 + self.m_in
        o3 = o2 + self.m_box
        self.s_eq, self.s_in, self.s_box, self.s_grp = slice(0, o1), slice(o1, o2), slice(o2, o3), slice(o3, self.m)

        self.e, self.h = p.e, p.h
        self.lb, self.ub = p.lb[self.box_vars], p.ub[self.box_vars]
        self.w = p.l1[self.box_vars]
        self.lower = np.concatenate([p.e, np.full(self.m_in, -np.inf), self.lb, np.full(self.m_grp, -np.inf)])
        self.upper = np.concatenate([p.e, p.h, self.ub, np.full(self.m_grp, np.inf)])
        self.fixed = np.concatenate([np.ones(self.m_eq, bool), np.zeros(self.m_in, bool), self.lb == self.ub, np.zeros(self.m_grp, bool)])
        if self.group_sizes.size:
            self.group_starts = np.concatenate([[0], np.cumsum(self.group_sizes)[:-1]])

    def prox(self, t, rho):
        """argmin_z g(z) + 1/2 sum_i rho_i (z_i - t_i)^2, row by row."""
        z = np.empty_like(t)
        z[self.s_eq] = self.e
        z[self.s_in] = np.minimum(t[self.s_in], self.h)
        tb = t[self.s_box]
        kappa = self.w / rho[self.s_box]
        z[self.s_box] = np.clip(np.sign(tb) * np.maximum(np.abs(tb) - kappa, 0.0), self.lb, self.ub)
        if self.m_grp:
            tg = t[self.s_grp]
            norms = np.sqrt(np.add.reduceat(tg * tg, self.group_starts))
            rg = rho[self.s_grp][self.group_starts]
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(norms > 0, np.maximum(1.0 - self.group_weights / (rg * norms), 0.0), 0.0)
            z[self.s_grp] = tg * np.repeat(scale, self.group_sizes)
        return z

    def unit_prox_residual(self, z, y):
        """|z - prox_g(z + y)| with unit penalty, per identity row.

        Zero exactly when y is a subgradient of the l1/group/box terms at z.
        """
        ones = np.ones(self.m)
        full = self.prox(z + y, ones)
        return np.abs(z - full)[self.s_box.start:]


def _kkt_factor(p: CompositeProgram, C, sigma, rho):
    n = p.n
    blocks = [[sp.identity(n, format="csc") * sigma]]
    if p.H is not None:
        mh = p.H.shape[0]
        blocks = [[sp.identity(n) * sigma, p.H.T, C.T], [p.H, -sp.identity(mh), None], [C, None, sp.diags(-1.0 / rho)]]
    else:
        blocks = [[sp.identity(n) * sigma, C.T], [C, sp.diags(-1.0 / rho)]]
    K = sp.bmat(blocks, format="csc")
    return spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})


def kkt_residuals(p: CompositeProgram, v, y) -> dict:
    """Optimality residuals of a primal/dual pair in the ADMM row layout.

    Returns the constraint violation, the stationarity residual of the
    smooth part, the complementarity residual of the inequality rows, the
    sign violation of their multipliers, and the prox fixed-point residual
    of the l1/group/box terms. All but ``primal`` are scaled by
    ``max(1, |grad|, |C'y|)``.
    """
    rows = _RowModel(p)
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    grad = p.gradient(v)
    cty = rows.C.T @ y
    scale = max(1.0, np.max(np.abs(grad), initial=0.0), np.max(np.abs(cty), initial=0.0))
    stationarity = np.max(np.abs(grad + cty), initial=0.0) / scale
    y_in = y[rows.s_in]
    slack = p.h - p.G @ v if rows.m_in else np.zeros(0)
    sign = np.max(-y_in, initial=0.0) / scale
    comp = np.max(np.abs(y_in * slack), initial=0.0) / scale
    z = rows.C @ v
    prox = np.max(rows.unit_prox_residual(z, y), initial=0.0) / scale
    return {
        "primal": p.infeasibility(v),
        "stationarity": float(stationarity),
        "complementarity": float(comp),
        "dual_sign": float(sign),
        "prox": float(prox),
    }


def _solve_admm(p, tol, max_iter, warm_start, sigma=1e-6, alpha=1.6, rho0=0.1, check_every=10, record_merit=False):
    rows = _RowModel(p)
    C = rows.C
    CT = C.T.tocsr()
    n, m = p.n, rows.m
    eps_inf = 1e-5

    def rho_vector(r):
        vec = np.full(m, r)
        vec[rows.fixed] = r * 1e3
        return vec

    rho = rho0
    rho_vec = rho_vector(rho)
    lu = _kkt_factor(p, C, sigma, rho_vec)
    mh = p.H.shape[0] if p.H is not None else 0

    v = np.zeros(n)
    y = np.zeros(m)
    if warm_start is not None:
        wv, wy = warm_start if isinstance(warm_start, tuple) else (warm_start, None)
        if wv is not None and np.shape(wv) == (n,):
            v = np.array(wv, dtype=float)
        if wy is not None and np.shape(wy) == (m,):
            y = np.array(wy, dtype=float)
    z = rows.prox(C @ v + y / rho_vec, rho_vec)

    c = p.c
    b = p.b if p.H is not None else None
    status = STATUS_MAX_ITER
    merit = []
    it = 0
    r_prim = r_dual = np.inf
    # the adaptation interval doubles after every update so rho cannot ping-pong forever
    adapt_every, next_adapt = 5 * check_every, 5 * check_every
    for it in range(1, max_iter + 1):
        rhs = [sigma * v - c]
        if mh:
            rhs.append(b)
        rhs.append(z - y / rho_vec)
        sol = lu.solve(np.concatenate(rhs))
        v_t = sol[:n]
        nu = sol[n + mh:]
        z_t = z + (nu - y) / rho_vec
        v_new = alpha * v_t + (1 - alpha) * v
        z_hat = alpha * z_t + (1 - alpha) * z
        z_new = rows.prox(z_hat + y / rho_vec, rho_vec)
        y_new = y + rho_vec * (z_hat - z_new)

        if record_merit:
            dxi = (z_new + y_new / rho_vec) - (z + y / rho_vec)
            dv = v_new - v
            merit.append((rho, float(np.sqrt(sigma * dv @ dv + dxi @ (rho_vec * dxi)))))

        dy = y_new - y
        dv = v_new - v
        v, z, y = v_new, z_new, y_new

        if it % check_every and it != max_iter:
            continue
        Cv = C @ v
        grad = p.gradient(v)
        cty = CT @ y
        r_prim = np.max(np.abs(Cv - z), initial=0.0)
        r_dual = np.max(np.abs(grad + cty), initial=0.0)
        s_prim = max(np.max(np.abs(Cv), initial=0.0), np.max(np.abs(z), initial=0.0))
        s_dual = max(np.max(np.abs(grad - c), initial=0.0), np.max(np.abs(cty), initial=0.0), np.max(np.abs(c), initial=0.0))
        eps_p = tol * (1.0 + s_prim)
        eps_d = tol * (1.0 + s_dual)
        if r_prim <= eps_p and r_dual <= eps_d:
            status = STATUS_OPTIMAL
            break

        if _primal_infeasible(rows, dy, CT, eps_inf):
            status = STATUS_INFEASIBLE
            break
        if _dual_infeasible(p, rows, dv, C, eps_inf):
            status = STATUS_UNBOUNDED
            break

        if it >= next_adapt:
            next_adapt = it + adapt_every
            ratio = np.sqrt((r_prim / (s_prim + 1e-12)) / (r_dual / (s_dual + 1e-12) + 1e-30))
            new_rho = float(np.clip(rho * ratio, 1e-6, 1e6))
            if new_rho > 5 * rho or new_rho < rho / 5:
                rho = new_rho
                rho_vec = rho_vector(rho)
                lu = _kkt_factor(p, C, sigma, rho_vec)
                adapt_every *= 2
                next_adapt = it + adapt_every
    return v, y, status, it, float(r_prim), float(r_dual), merit


def _primal_infeasible(rows, dy, CT, eps):
    ndy = np.max(np.abs(dy), initial=0.0)
    if ndy < 1e-12:
        return False
    if np.max(np.abs(CT @ dy), initial=0.0) > eps * ndy:
        return False
    pos = dy > eps * ndy
    neg = dy < -eps * ndy
    if np.any(~np.isfinite(rows.upper[pos])) or np.any(~np.isfinite(rows.lower[neg])):
        return False
    support = rows.upper[pos] @ dy[pos] + rows.lower[neg] @ dy[neg]
    return bool(support < -eps * ndy)


def _dual_infeasible(p, rows, dv, C, eps):
    ndv = np.max(np.abs(dv), initial=0.0)
    if ndv < 1e-12:
        return False
    if p.H is not None and np.max(np.abs(p.H @ dv), initial=0.0) > eps * ndv:
        return False
    slope = p.c @ dv + p.l1 @ np.abs(dv) + sum(w * np.linalg.norm(dv[idx]) for idx, w in p.groups)
    if slope > -eps * ndv:
        return False
    Cd = C @ dv
    tol = eps * ndv
    if np.any(np.abs(Cd[rows.s_eq]) > tol) or np.any(Cd[rows.s_in] > tol):
        return False
    cb = Cd[rows.s_box]
    if np.any(cb[np.isfinite(rows.ub)] > tol) or np.any(cb[np.isfinite(rows.lb)] < -tol):
        return False
    return True


# --------------------------------------------------------------- conic backend


def _solve_conic(p: CompositeProgram, tol):
    import clarabel

    n = p.n
    mh = p.H.shape[0] if p.H is not None else 0
    free_l1 = np.flatnonzero((p.l1 > 0) & (p.lb < 0) & (p.ub > 0))
    nt = free_l1.size
    ng = len(p.groups)
    nvar = n + mh + nt + ng

    q = np.zeros(nvar)
    q[:n] = p.c
    pos = (p.l1 > 0) & (p.lb >= 0)
    neg = (p.l1 > 0) & (p.ub <= 0) & ~pos
    q[:n][pos] += p.l1[pos]
    q[:n][neg] -= p.l1[neg]
    q[n + mh:n + mh + nt] = p.l1[free_l1]
    q[n + mh + nt:] = [w for _, w in p.groups]
    P = sp.csc_matrix((np.ones(mh), (np.arange(n, n + mh), np.arange(n, n + mh))), shape=(nvar, nvar))

    def pad(M):
        M = sp.csr_matrix(M)
        return sp.hstack([M, sp.csr_matrix((M.shape[0], nvar - M.shape[1]))]) if M.shape[1] < nvar else M

    zero_rows, zero_rhs = [], []
    if mh:
        zero_rows.append(sp.hstack([p.H, -sp.identity(mh), sp.csr_matrix((mh, nt + ng))]))
        zero_rhs.append(p.b)
    if p.E.shape[0]:
        zero_rows.append(pad(p.E))
        zero_rhs.append(p.e)
    fixed = np.flatnonzero(p.lb == p.ub)
    if fixed.size:
        zero_rows.append(sp.csr_matrix((np.ones(fixed.size), (np.arange(fixed.size), fixed)), shape=(fixed.size, nvar)))
        zero_rhs.append(p.lb[fixed])

    nn_rows, nn_rhs = [], []
    if p.G.shape[0]:
        nn_rows.append(pad(p.G))
        nn_rhs.append(p.h)
    up = np.flatnonzero(np.isfinite(p.ub) & (p.lb != p.ub))
    lo = np.flatnonzero(np.isfinite(p.lb) & (p.lb != p.ub))
    if up.size:
        nn_rows.append(sp.csr_matrix((np.ones(up.size), (np.arange(up.size), up)), shape=(up.size, nvar)))
        nn_rhs.append(p.ub[up])
    if lo.size:
        nn_rows.append(sp.csr_matrix((-np.ones(lo.size), (np.arange(lo.size), lo)), shape=(lo.size, nvar)))
        nn_rhs.append(-p.lb[lo])
    if nt:
        r = np.arange(nt)
        tcol = n + mh + r
        nn_rows.append(sp.csr_matrix((np.r_[np.ones(nt), -np.ones(nt)], (np.r_[r, r], np.r_[free_l1, tcol])), shape=(nt, nvar)))
        nn_rows.append(sp.csr_matrix((np.r_[-np.ones(nt), -np.ones(nt)], (np.r_[r, r], np.r_[free_l1, tcol])), shape=(nt, nvar)))
        nn_rhs += [np.zeros(nt), np.zeros(nt)]

    soc_rows, cones_soc = [], []
    if ng:
        cols = np.concatenate([np.r_[n + mh + nt + k, idx] for k, (idx, _) in enumerate(p.groups)])
        soc_rows.append(sp.csr_matrix((-np.ones(cols.size), (np.arange(cols.size), cols)), shape=(cols.size, nvar)))
        cones_soc = [clarabel.SecondOrderConeT(len(idx) + 1) for idx, _ in p.groups]

    A_parts, b_parts, cones = [], [], []
    if zero_rows:
        Z = sp.vstack(zero_rows)
        A_parts.append(Z)
        b_parts.append(np.concatenate(zero_rhs))
        cones.append(clarabel.ZeroConeT(Z.shape[0]))
    if nn_rows:
        Nn = sp.vstack(nn_rows)
        A_parts.append(Nn)
        b_parts.append(np.concatenate(nn_rhs))
        cones.append(clarabel.NonnegativeConeT(Nn.shape[0]))
    if soc_rows:
        A_parts.extend(soc_rows)
        b_parts.append(np.zeros(sum(r.shape[0] for r in soc_rows)))
        cones.extend(cones_soc)
    A = sp.vstack(A_parts).tocsc() if A_parts else sp.csc_matrix((0, nvar))
    bvec = np.concatenate(b_parts) if b_parts else np.zeros(0)

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    t = max(1e-10, min(1e-8, tol * 1e-2))
    settings.tol_gap_abs = settings.tol_gap_rel = settings.tol_feas = t
    settings.max_threads = 1
    solver = clarabel.DefaultSolver(sp.triu(P).tocsc(), q, A, bvec, cones, settings)
    sol = solver.solve()
    st = str(sol.status)
    if st.endswith("AlmostSolved"):
        status = STATUS_INACCURATE
    elif st.endswith("Solved"):
        status = STATUS_OPTIMAL
    elif "PrimalInfeasible" in st:
        status = STATUS_INFEASIBLE
    elif "DualInfeasible" in st:
        status = STATUS_UNBOUNDED
    elif "MaxIterations" in st:
        status = STATUS_MAX_ITER
    else:
        status = st
    x = np.asarray(sol.x)[:n] if len(sol.x) else np.full(n, np.nan)
    return x, status, int(sol.iterations), float(getattr(sol, "r_prim", np.nan)), float(getattr(sol, "r_dual", np.nan))


# ------------------------------------------------------------------ public API


def solve(p: CompositeProgram, tol: float = 1e-6, max_iter: int = 50_000, *, method: str = "admm", warm_start=None, record_merit=False) -> SolveReport:
    """Solve a composite program.

    Parameters
    ----------
    p : CompositeProgram
    tol : float
        Relative primal/dual residual tolerance.
    max_iter : int
        Iteration cap for the first-order method; on overrun the last
        iterate is returned with status ``"max_iter"``.
    method : {"admm", "conic"}
    warm_start : array or (v, y) tuple, optional
        Initial primal (and dual) iterate for ``admm``; ignored by ``conic``.
    """
    t0 = time.perf_counter()
    if np.any(p.lb > p.ub):
        return SolveReport(np.full(p.n, np.nan), np.nan, np.inf, np.nan, 0, time.perf_counter() - t0, STATUS_INFEASIBLE, method)
    if method == "admm":
        v, y, status, it, rp, rd, merit = _solve_admm(p, tol, max_iter, warm_start, record_merit=record_merit)
        obj = p.objective(v)
        return SolveReport(v, obj, rp, rd, it, time.perf_counter() - t0, status, method, dual=y, merit=merit)
    if method == "conic":
        v, status, it, rp, rd = _solve_conic(p, tol)
        obj = p.objective(v) if np.all(np.isfinite(v)) else np.nan
        return SolveReport(v, obj, rp, rd, it, time.perf_counter() - t0, status, method)
    if method == "exact":
        return solve_lp_exact(p)
    raise ValueError(f"unknown method {method!r}")


def solve_lp_exact(p: CompositeProgram) -> SolveReport:
    """Solve a linear program (no quadratic or group terms) with HiGHS."""
    from scipy.optimize import linprog

    if not p.is_linear:
        raise ValueError("solve_lp_exact only accepts programs without quadratic or group terms")
    t0 = time.perf_counter()
    n = p.n
    if np.any(p.lb > p.ub):
        return SolveReport(np.full(n, np.nan), np.nan, np.inf, np.nan, 0, time.perf_counter() - t0, STATUS_INFEASIBLE, "exact")
    free_l1 = np.flatnonzero((p.l1 > 0) & (p.lb < 0) & (p.ub > 0))
    nt = free_l1.size
    cost = np.zeros(n + nt)
    cost[:n] = p.c
    pos = (p.l1 > 0) & (p.lb >= 0)
    neg = (p.l1 > 0) & (p.ub <= 0) & ~pos
    cost[:n][pos] += p.l1[pos]
    cost[:n][neg] -= p.l1[neg]
    cost[n:] = p.l1[free_l1]

    ub_rows, ub_rhs = [], []
    if p.G.shape[0]:
        ub_rows.append(sp.hstack([p.G, sp.csr_matrix((p.G.shape[0], nt))]))
        ub_rhs.append(p.h)
    if nt:
        r = np.arange(nt)
        ub_rows.append(sp.csr_matrix((np.r_[np.ones(nt), -np.ones(nt)], (np.r_[r, r], np.r_[free_l1, n + r])), shape=(nt, n + nt)))
        ub_rows.append(sp.csr_matrix((np.r_[-np.ones(nt), -np.ones(nt)], (np.r_[r, r], np.r_[free_l1, n + r])), shape=(nt, n + nt)))
        ub_rhs += [np.zeros(nt), np.zeros(nt)]
    A_ub = sp.vstack(ub_rows).tocsr() if ub_rows else None
    b_ub = np.concatenate(ub_rhs) if ub_rhs else None
    A_eq = sp.hstack([p.E, sp.csr_matrix((p.E.shape[0], nt))]).tocsr() if p.E.shape[0] else None
    b_eq = p.e if p.E.shape[0] else None
    bounds = np.column_stack([np.r_[p.lb, np.zeros(nt)], np.r_[p.ub, np.full(nt, np.inf)]])
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi) for lo, hi in bounds]
    opts = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs", options=opts)
    if res.status == 2:
        # presolve can misjudge feasibility when right-hand sides span many decades
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs",
                      options=dict(opts, presolve=False))
    status = {0: STATUS_OPTIMAL, 1: STATUS_MAX_ITER, 2: STATUS_INFEASIBLE, 3: STATUS_UNBOUNDED}.get(res.status, "numerical_error")
    x = np.asarray(res.x[:n]) if res.x is not None else np.full(n, np.nan)
    obj = p.objective(x) if status == STATUS_OPTIMAL else np.nan
    rp = p.infeasibility(x) if status == STATUS_OPTIMAL else np.inf
    return SolveReport(x, obj, rp, 0.0, int(getattr(res, "nit", 0)), time.perf_counter() - t0, status, "exact")


def require_solution(report: SolveReport, what="program") -> np.ndarray:
    """Return the solution vector or raise :class:`SolverError`."""
    if report.status in (STATUS_OPTIMAL, STATUS_INACCURATE):
        return report.x
    if report.status == STATUS_MAX_ITER and np.all(np.isfinite(report.x)):
        return report.x
    raise SolverError(f"{what} failed with status {report.status!r}", report)
