import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emdflow.core import GridGeometry, TrackerConfig, l1_magnitude_proxy, realify_operator
from emdflow.metrics import solution_rmse
from emdflow.solver import SolverError
from emdflow.synth import target_scenario
from emdflow.trackers import (DynamicsModel, TrackingError, blur, bpdn, bpdn_df, emd_df_complex, emd_df_nonneg,
                              predict, rwl1, rwl1_df, top_q, track_sequence)
from oracles import complex_soft_threshold

TIGHT = TrackerConfig(tol=1e-9)


def _instance(seed, N=16, M=10, K=2):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(M, N)) / np.sqrt(M)
    x = np.zeros(N)
    x[rng.choice(N, K, replace=False)] = 1.0
    y = A @ x + 0.01 * rng.normal(size=M)
    return A, x, y, rng


# ------------------------------------------------------------------ dynamics


def test_predict_identity():
    assert np.array_equal(predict(np.array([1.0, 2.0]), DynamicsModel()), [1, 2])


def test_top_q_example():
    assert np.array_equal(top_q(np.array([3.0, 1.0, 2.0, 0.0]), 2), [3, 0, 2, 0])


def test_top_q_ties_keep_lowest_index():
    assert np.array_equal(top_q(np.array([1.0, 2.0, 2.0, 2.0]), 2), [0, 2, 2, 0])


def test_top_q_conjugate_pairs_kept_together():
    x = np.array([0.0, 3.0, 0.1, 0.0, 0.2, 2.9])
    out = top_q(x, 1, conjugate=True)
    assert np.array_equal(out, [0, 3, 0, 0, 0, 2.9])


def test_blur_single_pixel():
    x = np.zeros(25)
    x[12] = 1.0
    out = blur(x, (5, 5)).reshape(5, 5)
    assert np.allclose(out[1:4, 1:4], 1 / 9)
    assert out.sum() == pytest.approx(1.0)
    corner = np.zeros(25)
    corner[0] = 1.0
    # truncated at the boundary: four in-grid neighbours share the pixel
    assert np.allclose(blur(corner, (5, 5)).reshape(5, 5)[:2, :2], 1 / 4)
    assert blur(corner, (5, 5)).sum() == pytest.approx(1.0)


# ------------------------------------------------------- static recoveries


def test_bpdn_scalar_soft_threshold():
    assert bpdn([2.0], [[1.0]], 1.0, TIGHT) == pytest.approx([1.0], abs=1e-6)


def test_bpdn_df_scalar_stationarity():
    assert bpdn_df([1.0], [[1.0]], 0.0, 0.5, [0.0], TIGHT) == pytest.approx([0.5], abs=1e-6)


def test_bpdn_complex_matches_split_soft_threshold():
    rng = np.random.default_rng(1)
    y = rng.normal(size=5) + 1j * rng.normal(size=5)
    z = bpdn(y, np.eye(5, dtype=complex), 0.7, TIGHT)
    assert np.allclose(z, complex_soft_threshold(y, 0.7), atol=1e-6)


def test_complex_emd_df_without_transport_is_bpdn():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(5, 8)) + 1j * rng.normal(size=(5, 8))
    y = rng.normal(size=5) + 1j * rng.normal(size=5)
    sol = emd_df_complex(y, A, 0.2, 0.0, 0.0, rng.random(8), GridGeometry((8,)), cfg=TIGHT)
    assert np.allclose(sol.x, bpdn(y, A, 0.2, TIGHT), atol=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_bpdn_df_zero_gamma_is_bpdn(seed):
    A, _, y, rng = _instance(seed)
    pred = rng.random(A.shape[1])
    assert solution_rmse(bpdn_df(y, A, 0.05, 0.0, pred, TIGHT), bpdn(y, A, 0.05, TIGHT)) <= 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_rwl1_df_without_prediction_is_rescaled_rwl1(seed):
    A, _, y, _ = _instance(seed)
    xi, beta, eta = 0.02, 2.0, 0.5
    a = rwl1_df(y, A, xi, beta, eta, 3, np.zeros(A.shape[1]), TIGHT)
    b = rwl1(y, A, xi / eta, eta / beta, eta / beta, 3, TIGHT)
    assert solution_rmse(a, b) <= 1e-6


def test_rwl1_single_pass_is_bpdn():
    A, _, y, _ = _instance(4)
    assert solution_rmse(rwl1(y, A, 0.05, 1.0, 0.1, 1, TIGHT), bpdn(y, A, 0.05, TIGHT)) <= 1e-6


# -------------------------------------------------------------------- EMD-DF


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("cost", ["general", "beckmann"])
def test_emd_df_zero_gamma_mu_is_nonneg_bpdn(seed, cost):
    A, x, y, rng = _instance(seed)
    grid = GridGeometry((4, 4))
    pred = np.roll(x, 1) + 0.1 * rng.random(16)
    sol = emd_df_nonneg(y, A, 0.05, 0.0, 0.0, pred, grid, cost, cfg=TIGHT)
    assert solution_rmse(sol.x, bpdn(y, A, 0.05, TIGHT, nonneg=True)) <= 1e-6


def test_emd_df_empty_prediction_is_nonneg_bpdn():
    A, _, y, _ = _instance(7)
    sol = emd_df_nonneg(y, A, 0.05, 1.0, 0.1, np.zeros(16), GridGeometry((4, 4)), cfg=TIGHT)
    assert sol.u == 0.0
    assert solution_rmse(sol.x, bpdn(y, A, 0.05, TIGHT, nonneg=True)) <= 1e-6


def _grid_search_oracle(y, pred, lam, gamma, mu, step=0.02, top=1.2):
    """Brute-force minimizer on a lattice for a 3-cell line and a point-mass
    prediction: moving u units into the prediction cell costs the u cheapest
    units of x by distance."""
    vals = np.arange(0.0, top + 1e-12, step)
    X = np.stack(np.meshgrid(vals, vals, vals, indexing="ij"), -1).reshape(-1, 3)
    target = int(np.argmax(pred))
    dist = np.abs(np.arange(3) - target)
    order = np.argsort(dist, kind="stable")
    best = np.full(len(X), np.inf)
    cum_mass = np.cumsum(X[:, order], axis=1)
    cum_cost = np.cumsum(X[:, order] * dist[order], axis=1)
    umax = np.minimum(X.sum(1), pred.sum())
    # piecewise-linear transport cost in u: check every breakpoint and u_max
    cands = [np.zeros(len(X))] + [np.minimum(cum_mass[:, k], umax) for k in range(3)] + [umax]
    for u in cands:
        k = np.minimum((cum_mass < u[:, None] - 1e-15).sum(1), 2)
        prev_m = np.where(k > 0, cum_mass[np.arange(len(X)), k - 1], 0.0)
        prev_c = np.where(k > 0, cum_cost[np.arange(len(X)), k - 1], 0.0)
        cost = prev_c + (u - prev_m) * dist[order][k]
        best = np.minimum(best, gamma * cost - mu * u)
    f = 0.5 * ((y - X) ** 2).sum(1) + lam * X.sum(1) + best
    return X[np.argmin(f)]


def test_emd_df_support_follows_measurement():
    y = np.array([1.0, 0.0, 0.0])
    pred = np.array([0.0, 1.0, 0.0])
    lam, gamma, mu = 0.1, 0.1, 0.01
    oracle = _grid_search_oracle(y, pred, lam, gamma, mu)
    for cost in ("general", "beckmann"):
        sol = emd_df_nonneg(y, np.eye(3), lam, gamma, mu, pred, GridGeometry((3,)), cost, cfg=TIGHT)
        assert np.array_equal(sol.x > 1e-3, oracle > 1e-3)
        assert np.array_equal(np.flatnonzero(sol.x > 1e-3), [0])
        assert np.allclose(sol.x, oracle, atol=0.02)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_emd_df_nonneg_output(seed):
    A, x, y, rng = _instance(seed, N=9, M=6)
    sol = emd_df_nonneg(y, A, 0.02, 0.5, 0.01, rng.random(9), GridGeometry((3, 3)))
    assert np.all(sol.x >= -1e-8)


@pytest.mark.parametrize("mu_scale", [0.01, 0.1, 1.0])
def test_slack_law(mu_scale):
    A, x, y, rng = _instance(11)
    lam = 0.05
    gamma = 1e-4  # keeps mu >= gamma * grid diameter for every mu tested
    pred = np.roll(x, 5)
    sol = emd_df_nonneg(y, A, lam, gamma, mu_scale * lam, pred, GridGeometry((4, 4)), cfg=TIGHT)
    target = min(sol.x.sum(), pred.sum())
    assert abs(sol.u - target) <= 1e-4 * max(1.0, sol.u)


def test_slack_zero_when_transport_too_costly():
    A, x, y, _ = _instance(12)
    sol = emd_df_nonneg(y, A, 0.05, 10.0, 1e-3, np.roll(x, 5), GridGeometry((4, 4)), cfg=TIGHT)
    assert sol.u == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(2))
def test_general_and_beckmann_estimates_agree(seed):
    A, x, y, rng = _instance(seed, N=36, M=16, K=2)
    grid = GridGeometry((6, 6))
    pred = np.roll(x, 1)
    a = emd_df_nonneg(y, A, 0.02, 0.5, 0.01, pred, grid, "general", cfg=TIGHT).x
    b = emd_df_nonneg(y, A, 0.02, 0.5, 0.01, pred, grid, "beckmann", cfg=TIGHT).x
    assert solution_rmse(a, b) <= 5e-2


def test_realified_operator_example():
    assert np.allclose(realify_operator(np.array([[2.0]])), [[2, -2, 2j, -2j]])


def test_complex_emd_df_without_transport_is_split_soft_threshold():
    rng = np.random.default_rng(3)
    y = rng.normal(size=4) + 1j * rng.normal(size=4)
    sol = emd_df_complex(y, np.eye(4, dtype=complex), 0.3, 0.0, 0.0, rng.random(4), GridGeometry((4,)), cfg=TIGHT)
    assert np.allclose(sol.x, complex_soft_threshold(y, 0.3), atol=1e-6)


@pytest.mark.parametrize("cost", ["general", "beckmann"])
def test_complex_matches_nonneg_on_real_data(cost):
    # with A = I and y >= 0 no negative part can lower the objective
    rng = np.random.default_rng(5)
    A = np.eye(9)
    y = np.where(rng.random(9) < 0.3, 1.0, 0.0) + 0.05 * rng.random(9)
    grid = GridGeometry((3, 3))
    pred = np.roll(y, 1)
    a = emd_df_nonneg(y, A, 0.02, 0.3, 0.01, pred, grid, cost, cfg=TIGHT)
    b = emd_df_complex(y.astype(complex), A.astype(complex), 0.02, 0.3, 0.01, pred, grid, cost, cfg=TIGHT)
    assert solution_rmse(a.x, b.x.real) <= 1e-4
    assert np.abs(b.x.imag).max() <= 1e-4
    assert b.u == pytest.approx(a.u, abs=1e-4)


def test_complex_proxy_bound():
    rng = np.random.default_rng(9)
    N = 8
    A = (rng.normal(size=(5, N)) + 1j * rng.normal(size=(5, N))) / np.sqrt(10)
    z = np.zeros(N, complex)
    z[[1, 5]] = [1 + 1j, -0.5 + 2j]
    y = A @ z
    sol = emd_df_complex(y, A, 0.05, 0.2, 0.01, np.abs(np.roll(z, 1)), GridGeometry((N,)))
    proxy = l1_magnitude_proxy(sol.split)
    mag = np.abs(sol.split.recompose())
    assert np.all(proxy >= mag - 1e-12)
    assert np.all(proxy <= np.sqrt(2) * mag + 1e-8)


def test_emd_df_rejects_negative_prediction():
    with pytest.raises(ValueError):
        emd_df_nonneg([1.0], [[1.0]], 0.1, 0.1, 0.01, [-1.0], GridGeometry((1,)))


# -------------------------------------------------------------- causal loop


@pytest.mark.parametrize("tracker", ["bpdn", "emd-df", "emd-df-beckmann"])
def test_constant_signal_constant_after_first_step(tracker):
    x = np.array([0.0, 2.0, 0.0, 1.0])
    ys = [x.copy() for _ in range(4)]
    cfg = TIGHT.with_(lam=0.01, gamma=0.5, nonneg=True)
    recs = track_sequence(ys, np.eye(4), tracker, cfg, grid=GridGeometry((2, 2)))
    for r in recs[2:]:
        assert np.allclose(r.estimate, recs[1].estimate, atol=1e-6)
    assert np.all([r.wall_time >= 0 for r in recs])


def test_bpdn_ignores_dynamics():
    A, _, y, _ = _instance(2)
    ys = [y, 0.9 * y, 1.1 * y]
    a = track_sequence(ys, A, "bpdn", TrackerConfig(lam=0.05), DynamicsModel())
    b = track_sequence(ys, A, "bpdn", TrackerConfig(lam=0.05), DynamicsModel("top_q", q=1))
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.estimate, rb.estimate)


def test_first_prediction_is_zero():
    A, _, y, _ = _instance(2)
    recs = track_sequence([y, y], A, "bpdn-df", TrackerConfig(lam=0.05))
    assert not recs[0].prediction.any()
    assert np.array_equal(recs[1].prediction, recs[0].estimate)


@pytest.mark.parametrize("tracker", ["bpdn-df", "rwl1-df", "emd-df-beckmann"])
def test_causality(tracker):
    sc = target_scenario((6, 6), K=2, M=12, steps=5, seed=3)
    cfg = TrackerConfig(lam=0.02, gamma=0.5, xi=0.01, nonneg=True)
    base = track_sequence(sc.measurements, sc.operators, tracker, cfg, grid=sc.grid)
    ys = sc.measurements.copy()
    ys[3:] += 5.0
    pert = track_sequence(ys, sc.operators, tracker, cfg, grid=sc.grid)
    for n in range(3):
        assert np.array_equal(base[n].estimate, pert[n].estimate)
    assert not np.array_equal(base[3].estimate, pert[3].estimate)


def test_tracking_is_bitwise_reproducible():
    sc = target_scenario((12, 12), steps=4, seed=5)
    cfg = TrackerConfig(lam=0.02, gamma=0.5, nonneg=True)
    a = track_sequence(sc.measurements, sc.operators, "emd-df-beckmann", cfg, grid=sc.grid)
    b = track_sequence(sc.measurements, sc.operators, "emd-df-beckmann", cfg, grid=sc.grid)
    for ra, rb in zip(a, b):
        assert ra.estimate.tobytes() == rb.estimate.tobytes()


def test_failures_carry_step_index(monkeypatch):
    import emdflow.trackers as trk
    A, _, y, _ = _instance(2)
    real = trk.weighted_bpdn
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            raise SolverError("synthetic failure")
        return real(*args, **kwargs)

    monkeypatch.setattr(trk, "weighted_bpdn", flaky)
    with pytest.raises(TrackingError) as info:
        track_sequence([y, y, y], A, "bpdn", TrackerConfig(lam=0.05))
    assert info.value.step == 1
    calls.clear()
    recs = track_sequence([y, y, y], A, "bpdn", TrackerConfig(lam=0.05), on_error="record")
    assert [bool(r.error) for r in recs] == [False, True, False]


def test_unknown_tracker():
    with pytest.raises(ValueError):
        track_sequence([np.ones(2)], np.eye(2), "kalman", TrackerConfig())
