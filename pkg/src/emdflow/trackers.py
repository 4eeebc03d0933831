"""Sparse recovery and causal tracking algorithms.

Static recoveries (``bpdn``, ``rwl1``), their dynamic-filtering variants
(``bpdn_df``, ``rwl1_df``) and EMD dynamic filtering for nonnegative and
complex states. Every algorithm compiles its objective into a
:class:`~emdflow.solver.CompositeProgram`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .core import ComplexSplit, GridGeometry, TrackerConfig, real_stack, realify_operator
from .solver import CompositeProgram, SolverError, compile_report, require_solution, solve
from .transport import beckmann_layout, distance_matrix, flow_program_parts, sparse_column_reduction

TRACKERS = ("bpdn", "rwl1", "bpdn-df", "rwl1-df", "emd-df", "emd-df-beckmann")


# -------------------------------------------------------------------- dynamics


@dataclass(frozen=True)
class DynamicsModel:
    """Prediction function g applied to the previous estimate.

    kind : {"identity", "top_q", "top_q_blur", "blur", "linear"}
    """

    kind: str = "identity"
    q: int = 1
    kernel: tuple = ()
    shape: tuple | None = None
    G: object = None
    conjugate: bool = False

    def __post_init__(self):
        if self.kind not in ("identity", "top_q", "top_q_blur", "blur", "linear"):
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        if self.q < 1:
            raise ValueError("q must be at least 1")
        if self.kind == "linear" and self.G is None:
            raise ValueError("linear dynamics need a matrix G")


def top_q(x, q: int, conjugate: bool = False) -> np.ndarray:
    """Keep the q largest-magnitude entries; ties go to the lowest index.

    With ``conjugate`` the entries n and N - n of a DFT-indexed vector count
    as one frequency: they are ranked by their summed magnitude and kept or
    dropped together.
    """
    x = np.asarray(x)
    out = np.zeros_like(x)
    if conjugate:
        N = x.size
        half = np.arange(N // 2 + 1)
        partner = (N - half) % N
        score = np.abs(x[half]) + np.where(partner != half, np.abs(x[partner]), 0.0)
        k = min(q, np.count_nonzero(score))
        keep = half[np.argsort(-score, kind="stable")[:k]]
        keep = np.union1d(keep, (N - keep) % N)
        out[keep] = x[keep]
        return out
    nz = np.count_nonzero(x)
    k = min(q, nz)
    if k:
        keep = np.argsort(-np.abs(x), kind="stable")[:k]
        out[keep] = x[keep]
    return out


def blur(x, shape=None, size: int = 3) -> np.ndarray:
    """Spread each cell's value evenly over its size^D box neighbourhood.

    The box is truncated at the boundary and renormalized by the number of
    in-grid cells, so total mass is preserved.
    """
    x = np.asarray(x, dtype=float)
    arr = x.reshape(shape) if shape is not None else x
    den = ndimage.uniform_filter(np.ones_like(arr), size=size, mode="constant", cval=0.0)
    return ndimage.uniform_filter(arr / den, size=size, mode="constant", cval=0.0).ravel()


def predict(estimate, model: DynamicsModel) -> np.ndarray:
    x = np.asarray(estimate)
    size = len(model.kernel) if model.kernel else 3
    if model.kind == "identity":
        return x.copy()
    if model.kind == "top_q":
        return top_q(x, model.q, model.conjugate)
    if model.kind == "blur":
        return blur(np.abs(x), model.shape, size)
    if model.kind == "top_q_blur":
        return blur(np.abs(top_q(x, model.q, model.conjugate)), model.shape, size)
    return np.asarray(model.G @ x)


# ------------------------------------------------------------ static programs


def _data_term(y, A):
    H, b = real_stack(A, y)
    return H, b, np.iscomplexobj(H) or np.iscomplexobj(A) or np.iscomplexobj(y)


def _weighted_program(y, A, weights, *, nonneg=False, center=None, gamma=0.0):
    """1/2||y - Ax||^2 + sum w_i |x_i| + gamma ||x - center||^2.

    Complex operators are handled on stacked (Re, Im) unknowns with the l1
    term applied to the real and imaginary parts separately, the same
    sparsity term as the complex EMD-DF relaxation.
    """
    A = np.atleast_2d(A)
    N = A.shape[1]
    is_complex = np.iscomplexobj(A) or np.iscomplexobj(y) or (center is not None and np.iscomplexobj(center))
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (N,))
    if not is_complex:
        H = np.asarray(A, dtype=float)
        b = np.asarray(y, dtype=float).ravel()
        if gamma > 0:
            s = np.sqrt(2 * gamma)
            H = np.vstack([H, s * np.eye(N)])
            b = np.r_[b, s * np.asarray(center, dtype=float)]
        lb = np.zeros(N) if nonneg else None
        return CompositeProgram(N, H=H, b=b, l1=weights, lb=lb), False
    if nonneg:
        raise ValueError("nonnegativity is undefined for complex unknowns")
    A = np.asarray(A, dtype=complex)
    y = np.asarray(y, dtype=complex).ravel()
    H = np.block([[A.real, -A.imag], [A.imag, A.real]])
    b = np.r_[y.real, y.imag]
    if gamma > 0:
        s = np.sqrt(2 * gamma)
        c = np.asarray(center, dtype=complex)
        H = np.vstack([H, s * np.eye(2 * N)])
        b = np.r_[b, s * c.real, s * c.imag]
    return CompositeProgram(2 * N, H=H, b=b, l1=np.r_[weights, weights]), True


def _run(prog, cfg: TrackerConfig, warm=None, what="program"):
    report = solve(prog, tol=cfg.tol, max_iter=cfg.max_iter, method=cfg.method, warm_start=warm)
    return require_solution(report, what), report


def _unstack(v, is_complex):
    if not is_complex:
        return v
    N = v.size // 2
    return v[:N] + 1j * v[N:]


def weighted_bpdn(y, A, weights, cfg: TrackerConfig | None = None, *, nonneg=False, center=None, gamma=0.0):
    cfg = cfg or TrackerConfig()
    prog, is_complex = _weighted_program(y, A, weights, nonneg=nonneg, center=center, gamma=gamma)
    v, report = _run(prog, cfg, what="weighted BPDN")
    return _unstack(v, is_complex), report


def bpdn(y, A, lam: float, cfg: TrackerConfig | None = None, *, nonneg: bool = False) -> np.ndarray:
    """Basis pursuit denoising: argmin 1/2||y - Ax||^2 + lam ||x||_1."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return weighted_bpdn(y, A, lam, cfg, nonneg=nonneg)[0]


def rwl1_weights(estimate, beta, eta):
    return beta / (np.abs(estimate) + eta)


def rwl1(y, A, lam0: float, beta: float, eta: float, iters: int = 3, cfg: TrackerConfig | None = None, *, nonneg=False) -> np.ndarray:
    """Iteratively reweighted l1.

    Starts from unit weights; after each weighted solve the weights become
    ``beta / (|x| + eta)``.
    """
    if not eta > 0 or iters < 1:
        raise ValueError("eta must be positive and iters at least 1")
    N = np.atleast_2d(A).shape[1]
    w = np.ones(N)
    x = None
    for _ in range(iters):
        x, _ = weighted_bpdn(y, A, lam0 * w, cfg, nonneg=nonneg)
        w = rwl1_weights(x, beta, eta)
    return x


def bpdn_df(y, A, lam: float, gamma: float, prediction, cfg: TrackerConfig | None = None, *, nonneg=False) -> np.ndarray:
    """BPDN with an l2 tracking term gamma ||x - prediction||^2."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return weighted_bpdn(y, A, lam, cfg, nonneg=nonneg, center=prediction, gamma=gamma)[0]


def rwl1_df_weights(estimate, prediction, xi, beta, eta):
    return xi / (beta * np.abs(estimate) + np.abs(prediction) + eta)


def rwl1_df(y, A, xi: float, beta: float, eta: float, iters: int, prediction, cfg: TrackerConfig | None = None, *, nonneg=False) -> np.ndarray:
    """Reweighted l1 with dynamics in the weights.

    Weights are ``xi / (beta |x^k| + |prediction| + eta)``; the first solve
    uses them with ``x^0 = 0``.
    """
    if not eta > 0 or iters < 1:
        raise ValueError("eta must be positive and iters at least 1")
    pred = np.asarray(prediction)
    x = np.zeros(pred.shape)
    for _ in range(iters):
        x, _ = weighted_bpdn(y, A, rwl1_df_weights(x, pred, xi, beta, eta), cfg, nonneg=nonneg)
    return x


# ------------------------------------------------------------------- EMD-DF


@dataclass
class EmdDfSolution:
    x: np.ndarray
    u: float
    report: object
    split: ComplexSplit | None = None
    prediction: np.ndarray | None = None
    n_flow_vars: int = 0
    raw: np.ndarray | None = field(default=None, repr=False)


def clean_prediction(prediction, tol: float) -> np.ndarray:
    """Zero prediction entries below ``tol`` times the largest magnitude."""
    p = np.abs(np.asarray(prediction)).astype(float)
    peak = p.max(initial=0.0)
    if peak <= 0:
        return np.zeros_like(p)
    return np.where(p > tol * peak, p, 0.0)


def _emd_block(n_sig, mass_rows, pred, grid, cost, metric, gamma, mu):
    """Flow unknowns, costs and constraints tying ``mass_rows @ s`` (the
    per-cell mass of the signal unknowns ``s``) to the prediction.

    Returns a dict with the extra unknown count and the constraint pieces to
    be appended to the signal block; the last unknown is always the slack u.
    """
    N = grid.size
    cols = sparse_column_reduction(pred)
    K = cols.size
    total_pred = float(pred.sum())
    ones_sig = np.asarray(mass_rows.sum(axis=0)).ravel()
    if cost == "general":
        R = distance_matrix(grid, cols, metric=metric)
        Gr, Gc, S = flow_program_parts(R, None, None)
        nf = N * K
        n_ext = nf + 1
        c = np.r_[gamma * R.ravel(), -mu]
        G = sp.vstack([
            sp.hstack([-mass_rows, Gr, sp.csr_matrix((N, 1))]),
            sp.hstack([sp.csr_matrix((K, n_sig)), Gc, sp.csr_matrix((K, 1))]),
            sp.hstack([sp.csr_matrix(-ones_sig[None, :]), sp.csr_matrix((1, nf)), sp.csr_matrix([[1.0]])]),
        ])
        h = np.r_[np.zeros(N), pred[cols], 0.0]
        E = sp.hstack([sp.csr_matrix((1, n_sig)), S, sp.csr_matrix([[-1.0]])])
        e = np.zeros(1)
        lb = np.r_[np.zeros(nf), 0.0]
        ub = np.r_[np.full(nf, np.inf), total_pred]
        return dict(n=n_ext, c=c, G=G, h=h, E=E, e=e, lb=lb, ub=ub, l1=np.zeros(n_ext), groups=[], nf=nf)
    if cost != "beckmann":
        raise ValueError(f"unknown cost {cost!r}")
    lay = beckmann_layout(grid)
    nf = lay.n_flux
    Vsel = sp.identity(N, format="csr")
    Psel = sp.csr_matrix((np.ones(K), (cols, np.arange(K))), shape=(N, K))
    n_ext = nf + N + K + 1
    z = lambda r, k: sp.csr_matrix((r, k))
    E = sp.vstack([
        sp.hstack([z(N, n_sig), lay.div, -Vsel, Psel, z(N, 1)]),
        sp.hstack([z(1, n_sig + nf), np.ones((1, N)), z(1, K), sp.csr_matrix([[-1.0]])]),
        sp.hstack([z(1, n_sig + nf + N), np.ones((1, K)), sp.csr_matrix([[-1.0]])]),
    ])
    e = np.zeros(N + 2)
    G = sp.vstack([
        sp.hstack([-mass_rows, z(N, nf), Vsel, z(N, K + 1)]),
        sp.hstack([sp.csr_matrix(-ones_sig[None, :]), z(1, nf + N + K), sp.csr_matrix([[1.0]])]),
    ])
    h = np.zeros(N + 1)
    lb = np.r_[np.full(nf, -np.inf), np.zeros(N + K), 0.0]
    ub = np.r_[np.full(nf, np.inf), np.full(N, np.inf), pred[cols], total_pred]
    c = np.r_[np.zeros(nf + N + K), -mu]
    l1 = np.zeros(n_ext)
    groups = []
    if grid.ndim == 1:
        l1[:nf] = gamma
    else:
        groups = [(g, gamma) for g in lay.groups]
    return dict(n=n_ext, c=c, G=G, h=h, E=E, e=e, lb=lb, ub=ub, l1=l1, groups=groups, nf=nf)


def _assemble(n_sig, H, b, l1_sig, lb_sig, blk):
    n = n_sig + blk["n"]
    groups = [(idx + n_sig, w) for idx, w in blk["groups"]]
    return CompositeProgram(
        n,
        H=sp.hstack([sp.csr_matrix(H), sp.csr_matrix((H.shape[0], blk["n"]))]),
        b=b,
        c=np.r_[np.zeros(n_sig), blk["c"]],
        l1=np.r_[l1_sig, blk["l1"]],
        groups=groups,
        E=blk["E"],
        e=blk["e"],
        G=blk["G"],
        h=blk["h"],
        lb=np.r_[lb_sig, blk["lb"]],
        ub=np.r_[np.full(n_sig, np.inf), blk["ub"]],
    )


def emd_df_nonneg(y, A, lam, gamma, mu, prediction, grid: GridGeometry, cost: str = "general", *,
                  metric: str = "euclidean", cfg: TrackerConfig | None = None, warm_start=None) -> EmdDfSolution:
    """EMD dynamic filtering for a nonnegative state.

    Solves the joint program over the state, the transport unknowns (flow
    plan for ``cost="general"``, Beckmann flux for ``cost="beckmann"``) and
    the slack u that stands in for ``min(|x|_1, |prediction|_1)``.
    """
    cfg = cfg or TrackerConfig()
    if mu < 0 or gamma < 0 or lam < 0:
        raise ValueError("lam, gamma and mu must be nonnegative")
    pred = clean_prediction(prediction, cfg.support_tol)
    if np.any(np.asarray(prediction, dtype=float) < -1e-12):
        raise ValueError("prediction must be nonnegative")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    N = A.shape[1]
    if N != grid.size:
        raise ValueError("operator width does not match the grid")
    y = np.asarray(y, dtype=float).ravel()
    if pred.sum() <= 0:
        prog = CompositeProgram(N, H=A, b=y, l1=np.full(N, lam), lb=np.zeros(N))
        v, report = _run(prog, cfg, warm_start, "EMD-DF (empty prediction)")
        return EmdDfSolution(np.maximum(v, 0.0), 0.0, report, prediction=pred, raw=v)
    blk = _emd_block(N, sp.identity(N, format="csr"), pred, grid, cost, metric, gamma, mu)
    prog = _assemble(N, A, y, np.full(N, lam), np.zeros(N), blk)
    v, report = _run(prog, cfg, warm_start, f"EMD-DF ({cost})")
    x = np.maximum(v[:N], 0.0)
    return EmdDfSolution(x, float(v[-1]), report, prediction=pred, n_flow_vars=blk["nf"], raw=v)


def emd_df_complex(y, A, lam, gamma, mu, prediction_magnitudes, grid: GridGeometry, cost: str = "general", *,
                   metric: str = "euclidean", cfg: TrackerConfig | None = None, warm_start=None) -> EmdDfSolution:
    """EMD dynamic filtering for a complex state through the split relaxation.

    The unknown is the stacked nonnegative split ``z' = (Re+, Re-, Im+, Im-)``
    observed through ``[A, -A, iA, -iA]``; the flow out of element i is
    bounded by the l1 magnitude proxy of z'. The returned split has its
    positive/negative overlap cancelled.
    """
    cfg = cfg or TrackerConfig()
    pm = np.asarray(prediction_magnitudes)
    if np.iscomplexobj(pm) or np.any(pm < -1e-12):
        raise ValueError("prediction magnitudes must be real and nonnegative")
    pred = clean_prediction(pm, cfg.support_tol)
    A = np.atleast_2d(A)
    N = A.shape[1]
    if N != grid.size:
        raise ValueError("operator width does not match the grid")
    H, b = real_stack(realify_operator(A), np.asarray(y))
    n_sig = 4 * N
    if pred.sum() <= 0:
        prog = CompositeProgram(n_sig, H=H, b=b, l1=np.full(n_sig, lam), lb=np.zeros(n_sig))
        v, report = _run(prog, cfg, warm_start, "complex EMD-DF (empty prediction)")
        u = 0.0
        nf = 0
    else:
        proxy_rows = sp.hstack([sp.identity(N)] * 4).tocsr()
        blk = _emd_block(n_sig, proxy_rows, pred, grid, cost, metric, gamma, mu)
        prog = _assemble(n_sig, H, b, np.full(n_sig, lam), np.zeros(n_sig), blk)
        v, report = _run(prog, cfg, warm_start, f"complex EMD-DF ({cost})")
        u = float(v[-1])
        nf = blk["nf"]
    split = ComplexSplit.from_stacked(np.maximum(v[:n_sig], 0.0)).cancel_overlap()
    return EmdDfSolution(split.recompose(), u, report, split=split, prediction=pred, n_flow_vars=nf, raw=v)


# --------------------------------------------------------------- causal loop


@dataclass
class TrackerState:
    """Mutable per-sequence state: last estimate, current prediction and the
    solver iterate reused as a warm start."""

    estimate: np.ndarray
    prediction: np.ndarray
    config: TrackerConfig
    warm: object = None


@dataclass
class StepRecord:
    index: int
    estimate: np.ndarray
    prediction: np.ndarray
    wall_time: float
    report: dict
    slack: float = float("nan")
    error: str = ""
    split: ComplexSplit | None = None


class TrackingError(RuntimeError):
    def __init__(self, step, cause):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


def tracker_step(name, y, A, prediction, cfg: TrackerConfig, grid: GridGeometry | None = None, *, metric="euclidean", warm=None):
    """One causal estimate; returns ``(estimate, report_dict, slack, warm, split)``."""
    A = np.atleast_2d(A)
    is_complex = np.iscomplexobj(A) or np.iscomplexobj(y)
    nn = cfg.nonneg and not is_complex
    if name == "bpdn":
        x, rep = weighted_bpdn(y, A, cfg.lam, cfg, nonneg=nn)
        return x, compile_report(rep), np.nan, None, None
    if name == "rwl1":
        return rwl1(y, A, cfg.lam, cfg.beta, cfg.eta, cfg.rwl1_iters, cfg, nonneg=nn), {}, np.nan, None, None
    if name == "bpdn-df":
        x, rep = weighted_bpdn(y, A, cfg.lam, cfg, nonneg=nn, center=prediction, gamma=cfg.gamma)
        return x, compile_report(rep), np.nan, None, None
    if name == "rwl1-df":
        return rwl1_df(y, A, cfg.xi, cfg.beta, cfg.eta, cfg.rwl1_iters, prediction, cfg, nonneg=nn), {}, np.nan, None, None
    if name in ("emd-df", "emd-df-beckmann"):
        if grid is None:
            raise ValueError("EMD trackers need a grid")
        cost = "beckmann" if name.endswith("beckmann") else "general"
        if is_complex:
            sol = emd_df_complex(y, A, cfg.lam, cfg.gamma, cfg.mu_value, np.abs(prediction), grid, cost, metric=metric, cfg=cfg, warm_start=warm)
        else:
            sol = emd_df_nonneg(y, A, cfg.lam, cfg.gamma, cfg.mu_value, np.abs(prediction), grid, cost, metric=metric, cfg=cfg, warm_start=warm)
        warm_next = (sol.raw, getattr(sol.report, "dual", None)) if sol.raw is not None else None
        return sol.x, compile_report(sol.report), sol.u, warm_next, sol.split
    raise ValueError(f"unknown tracker {name!r}; expected one of {TRACKERS}")


def track_sequence(measurements, operators, tracker: str, config: TrackerConfig, dynamics: DynamicsModel | None = None,
                   grid: GridGeometry | None = None, *, metric: str = "euclidean", on_error: str = "raise") -> list[StepRecord]:
    """Run a tracker causally over a measurement stream.

    ``operators`` is one matrix per step or a single matrix reused at every
    step. The first prediction is the zero vector. With ``on_error="record"``
    a failed step keeps its prediction as the estimate and the run goes on.
    """
    dynamics = dynamics or DynamicsModel()
    ys = list(measurements)
    if isinstance(operators, np.ndarray) and operators.ndim == 2:
        ops = [operators] * len(ys)
    else:
        ops = list(operators)
    if len(ops) != len(ys):
        raise ValueError("need one operator per measurement")
    N = np.atleast_2d(ops[0]).shape[1]
    is_complex = any(np.iscomplexobj(a) for a in ops[:1]) or any(np.iscomplexobj(y) for y in ys[:1])
    dtype = complex if is_complex else float
    state = TrackerState(np.zeros(N, dtype), np.zeros(N, dtype), config)
    out = []
    for n, (y, A) in enumerate(zip(ys, ops)):
        if n > 0:
            state.prediction = predict(state.estimate, dynamics)
        t0 = time.perf_counter()
        try:
            x, rep, u, warm, split = tracker_step(tracker, y, A, state.prediction, config, grid, metric=metric, warm=state.warm)
            err = ""
        except (SolverError, np.linalg.LinAlgError) as exc:
            if on_error == "raise":
                raise TrackingError(n, exc) from exc
            x, rep, u, warm, split = np.array(state.prediction, dtype=dtype), {"status": "error"}, np.nan, None, None
            err = str(exc)
        dt = time.perf_counter() - t0
        state.estimate = np.asarray(x, dtype=dtype)
        state.warm = warm
        out.append(StepRecord(n, state.estimate.copy(), np.array(state.prediction), dt, rep, u, err, split))
    return out
