import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from emdflow.metrics import (SpectralErrorConfig, aggregate, detection_outcome, f1_score, rmse_relative,
                             solution_rmse, spectral_emd_error, spectral_slice_error)
from emdflow.spectral import TimeFrequencyEstimate
from emdflow.synth import FrequencyTrack

vec = arrays(np.float64, 8, elements=st.floats(-10, 10))


def test_rmse_relative_examples():
    assert rmse_relative([1.0, 2.0], [1.0, 2.0]) == 0
    assert rmse_relative([1.0, 0.0], [0.0, 1.0]) == 2
    assert rmse_relative([3.0, 4.0], [0.0, 0.0]) == 1
    with pytest.raises(ValueError):
        rmse_relative([0.0, 0.0], [1.0, 0.0])


def test_solution_rmse_examples():
    assert solution_rmse([1.0, 2.0], [1.0, 2.0]) == 0
    assert solution_rmse([1.0, 1.0], [0.0, 0.0]) == 1
    assert solution_rmse([1.0, 0.0], [0.0, 1.0]) == 1
    with pytest.raises(ValueError):
        solution_rmse([1.0], [1.0, 2.0])


@given(vec, vec, st.permutations(range(8)))
def test_errors_are_permutation_invariant(a, b, perm):
    assert solution_rmse(a, b) == pytest.approx(solution_rmse(a[perm], b[perm]))
    assert solution_rmse(a, b) == pytest.approx(solution_rmse(b, a))
    if np.any(a != 0):
        assert rmse_relative(a, b) == pytest.approx(rmse_relative(a[perm], b[perm]))


def test_f1_examples():
    assert f1_score([1, 0, 1], [1.0, 0.0, 1.0]) == 1
    assert detection_outcome([1, 1, 0], [1.0, 0.0, 1.0]).f1 == 0.5
    assert f1_score([1, 0, 1], np.zeros(3)) == 0
    assert f1_score([0, 0], [0.0, 0.0]) == 1
    assert f1_score([1], [0.1]) == 0  # detected only strictly above threshold
    with pytest.raises(ValueError):
        f1_score([1], [1.0], threshold=0)


@given(arrays(bool, 10), arrays(bool, 10), st.integers(0, 9))
def test_f1_monotone(truth, det, i):
    est = det.astype(float)
    base = f1_score(truth, est)
    flipped = est.copy()
    if truth[i] and not det[i]:
        flipped[i] = 1.0
        assert f1_score(truth, flipped) >= base
    if not truth[i] and not det[i]:
        flipped[i] = 1.0
        assert f1_score(truth, flipped) <= base
    assert 0 <= base <= 1


CFG = SpectralErrorConfig(band=(0.0, 128.0), n_fine=1025)


def test_slice_error_exact_spikes():
    assert spectral_slice_error([10.0, 50.0], [0.3, 0.7], [10.0, 50.0], [3.0, 7.0], CFG) == pytest.approx(0, abs=1e-12)


def test_slice_error_one_bin_off():
    df = CFG.step * 5
    assert spectral_slice_error([20.0], [1.0], [20.0 + df], [2.0], CFG) == pytest.approx(df)


def test_slice_error_empty_cases():
    assert spectral_slice_error([20.0], [1.0], [20.0], [0.0], CFG) == CFG.width
    assert spectral_slice_error([], [], [20.0], [0.0], CFG) == 0


def test_mask_removes_low_band():
    cfg = SpectralErrorConfig(mask_below=10.0)
    assert spectral_slice_error([5.0, 40.0], [1.0, 0.2], [6.0, 40.0], [0.5, 0.3], cfg) == pytest.approx(0, abs=1e-12)


def _nearest_bins(freqs, masses, spacing):
    grid = np.arange(0, 128 + 1e-9, spacing)
    est = np.zeros_like(grid)
    for f, m in zip(freqs, masses):
        est[np.argmin(np.abs(grid - f))] += m
    return grid, est


def test_finer_correct_estimate_scores_better():
    truth_f, truth_m = [10.3, 40.7, 77.9], [0.5, 0.3, 0.2]
    errs = {}
    for name, spacing in [("fine", 0.5), ("coarse", 4.0)]:
        grid, est = _nearest_bins(truth_f, truth_m, spacing)
        errs[name] = spectral_slice_error(truth_f, truth_m, grid, est, CFG)
    for name, spacing in [("fine_wrong", 0.5), ("coarse_wrong", 4.0)]:
        grid, est = _nearest_bins(np.add(truth_f, 15.0), truth_m, spacing)
        errs[name] = spectral_slice_error(truth_f, truth_m, grid, est, CFG)
    assert errs["fine"] < errs["coarse"] < min(errs["fine_wrong"], errs["coarse_wrong"])


def test_spectral_emd_error_sums_slices():
    T = 64
    lines = np.vstack([np.full(T, 20.0), np.full(T, 60.0)])
    track = FrequencyTrack(128.0, lines, np.array([0.5, 0.5]), np.zeros((2, T)), [[], []], lines,
                           np.array([0.5, 0.5]), (0.0, 64.0))
    freqs = np.arange(64) * 1.0
    mags = np.zeros((3, 64))
    mags[:, [20, 60]] = 1.0
    mags[2] = 0.0
    mags[2, [21, 60]] = 1.0
    tf = TimeFrequencyEstimate(mags, np.array([0, 16, 32]), freqs, 16, 128.0)
    cfg = SpectralErrorConfig(band=(0.0, 64.0), n_fine=65)
    assert spectral_emd_error(track, tf, cfg) == pytest.approx(0.5)
    # the metric reads only the estimate and the truth; never the tracker's predictions
    late = TimeFrequencyEstimate(mags, np.array([0, 16, 60]), freqs, 16, 128.0)
    with pytest.raises(ValueError):
        spectral_emd_error(track, late, cfg)


def test_aggregate_examples():
    s = aggregate([3.0])
    assert s.mean == s.median == 3.0
    assert aggregate([0.0, 2.0]).mean == 1.0
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_quartiles_and_ci():
    s = aggregate(np.arange(101.0), alpha=0.01)
    assert (s.q1, s.median, s.q3, s.min, s.max) == (25, 50, 75, 0, 100)
    assert s.ci_low < s.mean < s.ci_high


def test_ci_width_scales_as_inverse_sqrt_n():
    rng = np.random.default_rng(0)
    widths = {}
    for n in (25, 100, 400):
        w = [aggregate(rng.normal(size=n)) for _ in range(400)]
        widths[n] = np.mean([s.ci_high - s.ci_low for s in w])
    assert widths[25] / widths[100] == pytest.approx(2.0, rel=0.05)
    assert widths[100] / widths[400] == pytest.approx(2.0, rel=0.05)
