"""Overcomplete DFT dictionaries, causal windowing and the STFT baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from .core import GridGeometry, TrackerConfig
from .trackers import DynamicsModel, TrackingError, track_sequence


@dataclass(frozen=True)
class OvercompleteDft:
    """M x N dictionary with atoms exp(i 2 pi m n / N), N = S M."""

    M: int
    N: int
    fs: float
    Phi: np.ndarray = field(repr=False)

    @property
    def S(self) -> float:
        return self.N / self.M

    @property
    def n_reported(self) -> int:
        return self.N // 2

    @property
    def freqs(self) -> np.ndarray:
        """Frequencies of the reported bins n < N/2."""
        return np.arange(self.n_reported) * self.fs / self.N

    @property
    def resolution(self) -> float:
        return self.fs / self.N


def build_dictionary(M: int, S: float = 1.0, fs: float = 1.0) -> OvercompleteDft:
    if M < 2:
        raise ValueError("window length M must be at least 2")
    if S < 1:
        raise ValueError("oversampling factor S must be >= 1")
    N = S * M
    if abs(N - round(N)) > 1e-9:
        raise ValueError(f"S*M = {N} is not an integer")
    N = int(round(N))
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    # reduce mn mod N first so large products keep full phase accuracy
    Phi = np.exp(2j * np.pi * ((m * n) % N) / N)
    return OvercompleteDft(M, N, float(fs), Phi)


def window_stream(samples, M: int, hop: int):
    """Causal windows ``samples[s:s+M]`` for s = 0, hop, 2 hop, ...

    Returns ``(starts, windows)`` where windows has shape (W, M).
    """
    x = np.asarray(samples)
    if hop < 1:
        raise ValueError("hop must be at least 1")
    if x.ndim != 1 or x.size < M:
        raise ValueError(f"signal of length {x.size} is shorter than the window ({M})")
    starts = np.arange(0, x.size - M + 1, hop)
    return starts, np.lib.stride_tricks.sliding_window_view(x, M)[starts].copy()


@dataclass
class TimeFrequencyEstimate:
    """Per-window magnitudes (W, B) over a monotone frequency axis."""

    magnitudes: np.ndarray
    starts: np.ndarray
    freqs: np.ndarray
    M: int
    fs: float
    coefficients: np.ndarray | None = field(default=None, repr=False)
    steps: list | None = field(default=None, repr=False)

    @property
    def centers(self) -> np.ndarray:
        """Sample index at the middle of each window."""
        return self.starts + self.M // 2

    @property
    def times(self) -> np.ndarray:
        return self.centers / self.fs


def track_spectrum(samples, dictionary: OvercompleteDft, tracker: str, dynamics: DynamicsModel | None,
                   config: TrackerConfig, hop: int | None = None, *, on_error: str = "raise") -> TimeFrequencyEstimate:
    """Causal sparse time-frequency estimate.

    Each window is modelled as ``Phi z`` with a complex coefficient vector z
    over all N atoms; only |z| on bins n < N/2 is reported.
    """
    M = dictionary.M
    hop = max(1, M // 2) if hop is None else hop
    starts, windows = window_stream(np.asarray(samples, dtype=float), M, hop)
    grid = GridGeometry((dictionary.N,))
    try:
        steps = track_sequence(windows, dictionary.Phi, tracker, config, dynamics, grid, on_error=on_error)
    except TrackingError as exc:
        raise TrackingError(exc.step, f"window starting at sample {starts[exc.step]}: {exc.cause}") from exc
    Z = np.array([s.estimate for s in steps])
    mags = np.abs(Z[:, : dictionary.n_reported])
    return TimeFrequencyEstimate(mags, starts, dictionary.freqs, M, dictionary.fs, Z, steps)


def stft_baseline(samples, M: int, hop: int | None = None, window: str = "hamming", fs: float = 1.0) -> TimeFrequencyEstimate:
    """Magnitude STFT with M native bins (unnormalized DFT of each tapered window)."""
    hop = max(1, M // 2) if hop is None else hop
    starts, windows = window_stream(np.asarray(samples, dtype=float), M, hop)
    w = np.ones(M) if window in ("rect", "boxcar", "rectangular") else get_window(window, M, fftbins=False)
    mags = np.abs(np.fft.fft(windows * w, axis=1))
    return TimeFrequencyEstimate(mags, starts, np.arange(M) * fs / M, M, fs)
