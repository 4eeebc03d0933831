"""Evaluation metrics for tracking runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


def rmse_relative(truth, estimate) -> float:
    """||truth - estimate||^2 / ||truth||^2."""
    t = np.asarray(truth)
    e = np.asarray(estimate)
    if t.shape != e.shape:
        raise ValueError("truth and estimate shapes differ")
    scale = np.max(np.abs(t), initial=0.0)
    if scale == 0:
        raise ValueError("relative error is undefined for an all-zero truth")
    # scaling by the peak keeps tiny truths from underflowing when squared
    return float(np.sum(np.abs((t - e) / scale) ** 2) / np.sum(np.abs(t / scale) ** 2))


def solution_rmse(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("solutions have different lengths")
    return float(np.sqrt(np.mean(np.abs(a - b) ** 2)))


@dataclass(frozen=True)
class DetectionOutcome:
    tp: int
    fp: int
    fn: int
    threshold: float

    @property
    def f1(self) -> float:
        den = 2 * self.tp + self.fp + self.fn
        return 1.0 if den == 0 else 2 * self.tp / den


def detection_outcome(truth_support, estimate, threshold: float = 0.1) -> DetectionOutcome:
    """Count detections; an element is detected when |estimate| > threshold.

    ``truth_support`` may be a boolean mask or the true signal (its nonzeros).
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    s = np.asarray(truth_support)
    s = s.astype(bool) if s.dtype == bool else s != 0
    d = np.abs(np.asarray(estimate)) > threshold
    if s.shape != d.shape:
        raise ValueError("support and estimate shapes differ")
    return DetectionOutcome(int(np.sum(s & d)), int(np.sum(~s & d)), int(np.sum(s & ~d)), threshold)


def f1_score(truth_support, estimate, threshold: float = 0.1) -> float:
    return detection_outcome(truth_support, estimate, threshold).f1


# ------------------------------------------------------------------ spectral


@dataclass(frozen=True)
class SpectralErrorConfig:
    """Common grid for spectral EMD comparisons.

    n_fine points span ``band`` (Hz) inclusive; bins at or below
    ``mask_below`` Hz are zeroed in both operands before normalization.
    """

    band: tuple = (0.0, 128.0)
    n_fine: int = 1024
    mask_below: float | None = None

    def __post_init__(self):
        lo, hi = self.band
        if not hi > lo or self.n_fine < 2:
            raise ValueError("need a nonempty band and at least two fine bins")

    @property
    def step(self) -> float:
        return (self.band[1] - self.band[0]) / (self.n_fine - 1)

    @property
    def width(self) -> float:
        return self.band[1] - self.band[0]

    def upsample(self, freqs, masses) -> np.ndarray:
        """Deposit each mass at the fine point nearest its frequency."""
        f = np.asarray(freqs, dtype=float).ravel()
        m = np.abs(np.asarray(masses, dtype=float).ravel())
        lo, hi = self.band
        keep = (f >= lo - 1e-9) & (f <= hi + 1e-9)
        idx = np.clip(np.rint((f[keep] - lo) / self.step).astype(int), 0, self.n_fine - 1)
        out = np.bincount(idx, weights=m[keep], minlength=self.n_fine)
        if self.mask_below is not None:
            out[lo + self.step * np.arange(self.n_fine) <= self.mask_below] = 0.0
        return out


def spectral_slice_error(truth_freqs, truth_masses, est_freqs, est_mags, cfg: SpectralErrorConfig) -> float:
    """1-D EMD in Hz between one normalized estimate slice and the truth lines."""
    t = cfg.upsample(truth_freqs, truth_masses)
    e = cfg.upsample(est_freqs, est_mags)
    st, se = t.sum(), e.sum()
    if st == 0 and se == 0:
        return 0.0
    if st == 0 or se == 0:
        return cfg.width
    return float(np.sum(np.abs(np.cumsum(t / st) - np.cumsum(e / se))) * cfg.step)


def spectral_emd_error(truth_track, tf_estimate, cfg: SpectralErrorConfig) -> float:
    """Sum over windows of the slice error, truth taken at each window centre."""
    total = 0.0
    T = truth_track.n_samples
    for w, c in enumerate(tf_estimate.centers):
        if c >= T:
            raise ValueError("estimate extends past the ground-truth track")
        tf, tm = truth_track.lines_at(int(c))
        total += spectral_slice_error(tf, tm, tf_estimate.freqs, tf_estimate.magnitudes[w], cfg)
    return total


# ----------------------------------------------------------------- summaries


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    min: float
    max: float
    ci_low: float
    ci_high: float
    alpha: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def aggregate(trials, alpha: float = 0.01) -> Summary:
    """Mean, spread, quartiles and a normal-approximation (1 - alpha) CI."""
    x = np.asarray(trials, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot summarize an empty set of trials")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    mean = float(x.mean())
    std = float(x.std(ddof=1)) if x.size > 1 else 0.0
    half = stats.norm.ppf(1 - alpha / 2) * std / np.sqrt(x.size)
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return Summary(x.size, mean, std, float(med), float(q1), float(q3), float(x.min()), float(x.max()),
                   mean - half, mean + half, alpha)
