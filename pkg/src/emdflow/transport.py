"""Earth mover's distance primitives.

Two formulations of the partial-transport EMD are provided: the flow linear
program over an N x K plan with arbitrary ground cost, and the Beckmann
minimal-flux program on a regular grid (Euclidean cost, O(N) variables).
Both let the operands carry different total mass; only the smaller mass is
transported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .core import GridGeometry, as_nonneg
from .solver import CompositeProgram, require_solution, solve, solve_lp_exact


@dataclass
class FlowPlan:
    """Transport plan ``F[i, j]`` from ``rows[i]`` of x to ``cols[j]`` of y."""

    F: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    total_flow: float

    def dense(self, n_x: int, n_y: int) -> np.ndarray:
        out = np.zeros((n_x, n_y))
        out[np.ix_(self.rows, self.cols)] = self.F
        return out


@dataclass
class FluxField:
    """Beckmann flux ``M`` (one D-vector per cell) with slack source/sink."""

    M: np.ndarray
    w: np.ndarray
    v: np.ndarray
    total_flow: float


def distance_matrix(grid: GridGeometry, support=None, metric: str = "euclidean", rows=None) -> np.ndarray:
    """Ground-cost matrix between grid cells.

    ``support`` selects the retained columns (the prediction's nonzeros);
    ``rows`` optionally restricts the rows. ``metric`` is ``"euclidean"``
    or ``"manhattan"``.
    """
    coords = grid.coordinates()
    cols = np.arange(grid.size) if support is None else np.asarray(support, dtype=int)
    if cols.size == 0:
        raise ValueError("distance matrix needs a nonempty support")
    if np.any((cols < 0) | (cols >= grid.size)):
        raise IndexError("support index out of range")
    rws = np.arange(grid.size) if rows is None else np.asarray(rows, dtype=int)
    name = {"euclidean": "euclidean", "manhattan": "cityblock"}.get(metric)
    if name is None:
        raise ValueError(f"unsupported metric {metric!r}")
    return cdist(coords[rws], coords[cols], metric=name)


def sparse_column_reduction(prediction, tol: float = 0.0) -> np.ndarray:
    """Indices of the prediction's nonzeros.

    Flow columns outside this set are forced to zero by the column-sum
    constraints, so dropping them leaves the optimum unchanged. ``tol`` is
    relative to the largest magnitude.
    """
    p = np.abs(np.asarray(prediction, dtype=float).ravel())
    return np.flatnonzero(p > tol * p.max(initial=0.0))


# ------------------------------------------------------------------ divergence


@dataclass(frozen=True)
class BeckmannLayout:
    """Flux unknowns of a grid with zero-flux boundaries.

    Only components pointing to an in-grid neighbour exist. Unknowns are
    flux times cell spacing, so the transport cost of a cell is the plain
    Euclidean norm of its group.
    """

    grid: GridGeometry
    cells: np.ndarray
    axes: np.ndarray
    div: sp.csr_matrix
    groups: list

    @property
    def n_flux(self) -> int:
        return self.cells.size

    def to_field(self, f) -> np.ndarray:
        M = np.zeros((self.grid.size, self.grid.ndim))
        h = np.asarray(self.grid.spacing)[self.axes]
        M[self.cells, self.axes] = np.asarray(f) / h
        return M


def beckmann_layout(grid: GridGeometry) -> BeckmannLayout:
    N, D = grid.size, grid.ndim
    multi = np.array(np.unravel_index(np.arange(N), grid.dims))
    strides = [int(np.prod(grid.dims[d + 1:])) for d in range(D)]
    cells, axes = [], []
    for d in range(D):
        inner = np.flatnonzero(multi[d] < grid.dims[d] - 1)
        cells.append(inner)
        axes.append(np.full(inner.size, d))
    cells = np.concatenate(cells)
    axes = np.concatenate(axes)
    # keep the flux unknowns of one cell adjacent so groups are contiguous
    order = np.lexsort((axes, cells))
    cells, axes = cells[order], axes[order]
    h = np.asarray(grid.spacing)[axes]
    k = np.arange(cells.size)
    nbr = cells + np.asarray(strides)[axes]
    div = sp.csr_matrix((np.r_[1.0 / h, -1.0 / h], (np.r_[cells, nbr], np.r_[k, k])), shape=(N, cells.size))
    bounds = np.flatnonzero(np.r_[True, cells[1:] != cells[:-1]])
    groups = np.split(k, bounds[1:])
    return BeckmannLayout(grid, cells, axes, div, groups)


def divergence(M, grid: GridGeometry) -> np.ndarray:
    """Backward-difference divergence of a flux field.

    ``M[i, d]`` is the flux leaving cell ``i`` towards its successor along
    axis ``d``; flux leaving the grid counts as outflow of its cell, so the
    entries sum to the net boundary flux.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 1 and grid.ndim == 1:
        M = M[:, None]
    if M.shape != (grid.size, grid.ndim):
        raise ValueError(f"flux shape {M.shape} does not match grid {(grid.size, grid.ndim)}")
    out = M.sum(axis=1).reshape(grid.dims).copy()
    for d in range(grid.ndim):
        comp = M[:, d].reshape(grid.dims)
        sl_dst = [slice(None)] * grid.ndim
        sl_src = [slice(None)] * grid.ndim
        sl_dst[d] = slice(1, None)
        sl_src[d] = slice(None, -1)
        out[tuple(sl_dst)] -= comp[tuple(sl_src)]
    return out.ravel()


# ------------------------------------------------------------------------ EMD


def flow_program_parts(R, row_cap, col_cap):
    """Constraint blocks of the partial-transport LP over a flattened plan.

    Returns ``(G_rows, G_cols, S)`` with ``G_rows @ F`` the row sums,
    ``G_cols @ F`` the column sums and ``S @ F`` the total flow.
    """
    n, k = R.shape
    idx = np.arange(n * k)
    G_rows = sp.csr_matrix((np.ones(n * k), (idx // k, idx)), shape=(n, n * k))
    G_cols = sp.csr_matrix((np.ones(n * k), (idx % k, idx)), shape=(k, n * k))
    S = sp.csr_matrix(np.ones((1, n * k)))
    return G_rows, G_cols, S


def emd_general(x, y, R, *, method: str = "exact", reduce: bool = True):
    """Partial-transport EMD with an explicit cost matrix.

    Parameters
    ----------
    x, y : array_like
        Nonnegative operands of lengths N and K.
    R : array_like, shape (N, K)
        Ground costs.
    method : {"exact", "admm", "conic"}
        LP backend.
    reduce : bool
        Drop rows and columns where the operand vanishes.

    Returns
    -------
    value : float
    plan : FlowPlan
    """
    x = as_nonneg(x, "x")
    y = as_nonneg(y, "y")
    R = np.asarray(R, dtype=float)
    if R.shape != (x.size, y.size):
        raise ValueError(f"cost matrix shape {R.shape} does not match operands ({x.size}, {y.size})")
    if min(x.sum(), y.sum()) <= 0:
        return 0.0, FlowPlan(np.zeros((0, 0)), np.zeros(0, int), np.zeros(0, int), 0.0)
    # entries below 1e-14 of the peak only upset LP presolve
    rows = sparse_column_reduction(x, 1e-14) if reduce else np.arange(x.size)
    cols = sparse_column_reduction(y, 1e-14) if reduce else np.arange(y.size)
    total = min(x[rows].sum(), y[cols].sum())
    Rs = R[np.ix_(rows, cols)]
    Gr, Gc, S = flow_program_parts(Rs, x[rows], y[cols])
    prog = CompositeProgram(
        Rs.size,
        c=Rs.ravel(),
        G=sp.vstack([Gr, Gc]),
        h=np.r_[x[rows], y[cols]],
        E=S,
        e=[total],
        lb=np.zeros(Rs.size),
    )
    report = solve_lp_exact(prog) if method == "exact" else solve(prog, method=method, tol=1e-9)
    F = np.maximum(require_solution(report, "EMD flow LP"), 0.0).reshape(Rs.shape)
    return float(Rs.ravel() @ F.ravel()), FlowPlan(F, rows, cols, float(F.sum()))


def emd_beckmann(x, y, grid: GridGeometry, *, method: str = "conic"):
    """Partial-transport EMD on a grid via the Beckmann flux program.

    Minimizes the summed per-cell Euclidean norm of the flux subject to
    ``div(M) = w - v`` with slack source ``0 <= w <= x`` and sink
    ``0 <= v <= y`` each carrying ``min(|x|_1, |y|_1)`` mass.
    """
    x = as_nonneg(x, "x")
    y = as_nonneg(y, "y")
    N = grid.size
    if x.size != N or y.size != N:
        raise ValueError("operands must match the grid size")
    total = min(x.sum(), y.sum())
    lay = beckmann_layout(grid)
    nf = lay.n_flux
    if total <= 0:
        return 0.0, FluxField(np.zeros((N, grid.ndim)), np.zeros(N), np.zeros(N), 0.0)
    sx = sparse_column_reduction(x)
    sy = sparse_column_reduction(y)
    nx, ny = sx.size, sy.size
    n = nf + nx + ny
    Wsel = sp.csr_matrix((np.ones(nx), (sx, np.arange(nx))), shape=(N, nx))
    Vsel = sp.csr_matrix((np.ones(ny), (sy, np.arange(ny))), shape=(N, ny))
    E = sp.vstack([
        sp.hstack([lay.div, -Wsel, Vsel]),
        sp.hstack([sp.csr_matrix((1, nf)), np.ones((1, nx)), sp.csr_matrix((1, ny))]),
        sp.hstack([sp.csr_matrix((1, nf + nx)), np.ones((1, ny))]),
    ])
    e = np.r_[np.zeros(N), total, total]
    lb = np.r_[np.full(nf, -np.inf), np.zeros(nx + ny)]
    ub = np.r_[np.full(nf, np.inf), x[sx], y[sy]]
    if grid.ndim == 1:
        prog = CompositeProgram(n, l1=np.r_[np.ones(nf), np.zeros(nx + ny)], E=E, e=e, lb=lb, ub=ub)
    else:
        prog = CompositeProgram(n, groups=[(g, 1.0) for g in lay.groups], E=E, e=e, lb=lb, ub=ub)
    if method == "exact" and prog.is_linear:
        report = solve_lp_exact(prog)
    else:
        report = solve(prog, method="conic" if method == "exact" else method, tol=1e-9)
    sol = require_solution(report, "Beckmann EMD")
    f = sol[:nf]
    w = np.zeros(N)
    v = np.zeros(N)
    w[sx] = sol[nf:nf + nx]
    v[sy] = sol[nf + nx:]
    value = float(sum(np.linalg.norm(f[g]) for g in lay.groups))
    return value, FluxField(lay.to_field(f), w, v, float(w.sum()))


def emd_1d_oracle(x, y, spacing: float = 1.0, rtol: float = 1e-9) -> float:
    """Closed-form 1-D EMD for equal-mass operands on a uniform line."""
    x = as_nonneg(x, "x")
    y = as_nonneg(y, "y")
    if x.size != y.size:
        raise ValueError("operands must have equal length")
    mx, my = x.sum(), y.sum()
    if abs(mx - my) > rtol * max(mx, my, 1.0):
        raise ValueError(f"operands must carry equal mass ({mx} vs {my})")
    return float(np.abs(np.cumsum(x) - np.cumsum(y)).sum() * spacing)
