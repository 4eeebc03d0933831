"""Seeded scenario generators: moving targets under Gaussian sensing,
sums of drifting sinusoids, and the theta-gamma coupling model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import GridGeometry


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _streams(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


# ------------------------------------------------------------------ targets


@dataclass
class Scenario:
    """A ground-truth state sequence with its measurements.

    ``operators`` has shape (T, M, N); ``measurements`` is (T, M) and equals
    ``operators[n] @ states[n]`` plus the stored noise.
    """

    grid: GridGeometry
    states: np.ndarray
    operators: np.ndarray
    measurements: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        T = len(self.states)
        if self.operators.shape[0] != T or self.measurements.shape[0] != T:
            raise ValueError("states, operators and measurements must share the time axis")
        if self.states.shape[1] != self.grid.size or self.operators.shape[2] != self.grid.size:
            raise ValueError("state dimension does not match the grid")

    @property
    def steps(self) -> int:
        return len(self.states)

    def prefix(self, n: int) -> "Scenario":
        return Scenario(self.grid, self.states[:n], self.operators[:n], self.measurements[:n], self.seed, dict(self.meta))


def _moves(grid: GridGeometry):
    moves = []
    for ax, L in enumerate(grid.dims):
        if L > 1:
            for d in (-1, 1):
                step = np.zeros(grid.ndim, int)
                step[ax] = d
                moves.append(step)
    return np.array(moves).reshape(-1, grid.ndim)


def walk_positions(grid: GridGeometry, K: int, steps: int, speed: int, seed, start=None) -> np.ndarray:
    """Integer grid positions of K random walkers, shape (steps, K, D).

    Walkers start on distinct random cells (or on the linear indices in
    ``start``); each time step every walker makes
    ``speed`` moves to a uniformly chosen neighbour (4-neighbourhood in 2-D),
    reflecting at the boundary.
    """
    N = grid.size
    if K > N or K < 0:
        raise ValueError(f"K={K} targets do not fit on {N} cells")
    if speed < 0 or steps < 1:
        raise ValueError("speed must be >= 0 and steps >= 1")
    rng = _rng(seed)
    dims = np.array(grid.dims)
    if start is None:
        start = rng.choice(N, K, replace=False)
    elif len(start) != K:
        raise ValueError("start needs one cell per target")
    pos = np.array(np.unravel_index(np.asarray(start, int), grid.dims)).T.reshape(K, grid.ndim)
    moves = _moves(grid)
    out = np.empty((steps, K, grid.ndim), int)
    out[0] = pos
    for t in range(1, steps):
        for _ in range(speed):
            if not len(moves):
                break
            new = pos + moves[rng.integers(len(moves), size=K)]
            new = np.where(new < 0, -new, new)
            new = np.where(new >= dims, 2 * (dims - 1) - new, new)
            pos = new
        out[t] = pos
    return out


def gen_target_walk(grid: GridGeometry, K: int, steps: int, speed: int = 1, seed=0, amplitude: float = 1.0,
                    start=None) -> np.ndarray:
    """State sequence (steps, N) of K unit targets; stacked targets add."""
    pos = walk_positions(grid, K, steps, speed, seed, start)
    N = grid.size
    states = np.zeros((steps, N))
    for t in range(steps):
        lin = np.ravel_multi_index(tuple(pos[t].T), grid.dims)
        states[t] = amplitude * np.bincount(lin, minlength=N)
    return states


def gen_gaussian_sensing(M: int, N: int, seed=0) -> np.ndarray:
    """M x N matrix with i.i.d. N(0, 1/M) entries."""
    if M < 1 or N < 1:
        raise ValueError("M and N must be positive")
    return _rng(seed).standard_normal((M, N)) / np.sqrt(M)


def add_noise(samples, sigma: float, seed=0) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    x = np.asarray(samples, dtype=float)
    if sigma == 0:
        return x.copy()
    return x + sigma * _rng(seed).standard_normal(x.shape)


def target_scenario(dims=(32, 32), K=None, M=None, sigma2: float = 0.001, steps: int = 15, speed: int = 1,
                    seed: int = 0, sparsity: float = 0.05, ratio: float = 0.2, fixed_operator: bool = False) -> Scenario:
    """Moving targets under Gaussian compressive measurements.

    K and M default to ``sparsity * N`` and ``ratio * N``; each step gets a
    fresh sensing matrix unless ``fixed_operator``.
    """
    grid = GridGeometry(tuple(dims))
    N = grid.size
    K = max(1, int(round(sparsity * N))) if K is None else int(K)
    M = max(1, int(round(ratio * N))) if M is None else int(M)
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    s_walk, s_ops, s_noise = _streams(seed, 3)
    states = gen_target_walk(grid, K, steps, speed, s_walk)
    if fixed_operator:
        ops = np.broadcast_to(gen_gaussian_sensing(M, N, s_ops), (steps, M, N)).copy()
    else:
        ops = np.stack([gen_gaussian_sensing(M, N, s_ops) for _ in range(steps)])
    clean = np.einsum("tmn,tn->tm", ops, states)
    ys = add_noise(clean, np.sqrt(sigma2), s_noise)
    meta = dict(kind="targets", K=K, M=M, sigma2=sigma2, speed=speed, steps=steps)
    return Scenario(grid, states, ops, ys, seed, meta)


# -------------------------------------------------------------- frequencies


@dataclass
class FrequencyTrack:
    """Ground truth of a time series built from drifting sinusoids.

    ``freqs`` and ``phases`` are per-component, per-sample (K, T). The
    spectral lines the signal actually contains are ``line_freqs`` (L, T)
    with constant masses ``line_masses`` (L,).
    """

    fs: float
    freqs: np.ndarray
    amps: np.ndarray
    phases: np.ndarray
    change_points: list
    line_freqs: np.ndarray
    line_masses: np.ndarray
    band: tuple = (0.0, 0.0)
    params: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.freqs.shape[1]

    def lines_at(self, t: int):
        return self.line_freqs[:, t], self.line_masses


def unit_partition(K: int, rng) -> np.ndarray:
    """Lengths of K pieces of the unit interval cut at uniform points."""
    cuts = np.sort(rng.random(K - 1))
    return np.diff(np.r_[0.0, cuts, 1.0])


def _draw_in_band(f, sd, band, rng, max_tries=10_000):
    lo, hi = band
    if sd == 0:
        return f
    for _ in range(max_tries):
        g = f + sd * rng.standard_normal()
        if lo <= g <= hi:
            return g
    return f


def _drift_component(T, fs, f0, intervals, sd, band, rng):
    """Piecewise-constant frequency with continuous phase.

    At a change sample t_c the phase offset absorbs the jump so that
    2 pi f t + phi is continuous.
    """
    f = np.empty(T)
    phi = np.empty(T)
    cur_f, cur_phi = f0, rng.uniform(0, 2 * np.pi)
    changes = []
    t = 0
    while t < T:
        n = max(1, intervals())
        f[t:t + n] = cur_f
        phi[t:t + n] = cur_phi
        t += n
        if t < T:
            new_f = _draw_in_band(cur_f, sd, band, rng)
            cur_phi = cur_phi + 2 * np.pi * (cur_f - new_f) * t / fs
            cur_f = new_f
            changes.append(t)
    return f, phi, changes


def synthesize(track: FrequencyTrack) -> np.ndarray:
    t = np.arange(track.n_samples) / track.fs
    return np.sum(track.amps[:, None] * np.cos(2 * np.pi * track.freqs * t + track.phases), axis=0)


def gen_freq_signal(fs: float = 256.0, K: int = 3, mu_t: float = 40, sigma_t: float = 0, sigma_f: float = 4,
                    band=(0.0, 128.0), duration: float = 2.0, seed=0, sigma: float = 0.0):
    """Sum of K sinusoids whose frequencies jump every c_t samples.

    ``c_t = round(N(mu_t, sigma_t))`` (at least 1) and each jump adds
    ``N(0, sigma_f)`` Hz, redrawn until it lands inside ``band``.
    Amplitudes partition the unit interval. Returns ``(samples, track)``.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    lo, hi = map(float, band)
    if not (0 <= lo < hi <= fs / 2):
        raise ValueError(f"band {band} must lie within [0, fs/2]")
    if K < 1:
        raise ValueError("K must be at least 1")
    s_amp, s_freq, s_noise = _streams(seed, 3)
    T = int(round(duration * fs))
    amps = unit_partition(K, s_amp)
    freqs, phases, changes = [], [], []
    for _ in range(K):
        intervals = lambda: int(round(mu_t + sigma_t * s_freq.standard_normal()))
        f, p, c = _drift_component(T, fs, s_freq.uniform(lo, hi), intervals, sigma_f, (lo, hi), s_freq)
        freqs.append(f)
        phases.append(p)
        changes.append(c)
    freqs, phases = np.array(freqs), np.array(phases)
    track = FrequencyTrack(fs, freqs, amps, phases, changes, freqs, amps, (lo, hi),
                           dict(K=K, mu_t=mu_t, sigma_t=sigma_t, sigma_f=sigma_f, sigma=sigma))
    return add_noise(synthesize(track), sigma, s_noise), track


THETA_BAND = (4.0, 7.0)
GAMMA_BAND = (30.0, 80.0)


def gen_theta_gamma(fs: float = 256.0, a_theta: float = 1.0, a_gamma: float = 0.2, drift_theta: float = 0.5,
                    drift_gamma: float = 6.0, change_ms: float = 150.0, duration: float = 2.0, sigma: float = 0.0,
                    seed=0, theta_band=THETA_BAND, gamma_band=GAMMA_BAND):
    """Theta-modulated gamma: a_t cos(theta(t)) [1 + a_g cos(gamma(t))] + noise.

    Both frequencies take a bounded random-walk step every ``change_ms``.
    The track's spectral lines are f_theta (mass a_t) and the two sidebands
    f_gamma +- f_theta (mass a_t a_g / 2 each).
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    for name, (lo, hi) in (("theta", theta_band), ("gamma", gamma_band)):
        if not 0 < lo < hi:
            raise ValueError(f"{name} band {lo}-{hi} is not an interval of positive frequencies")
    if theta_band[1] + gamma_band[1] >= fs / 2:
        raise ValueError("upper sideband exceeds the Nyquist frequency")
    if theta_band[1] >= gamma_band[0] - theta_band[1]:
        raise ValueError("theta band overlaps the lower gamma sideband")
    s_th, s_ga, s_noise = _streams(seed, 3)
    T = int(round(duration * fs))
    step = max(1, int(round(change_ms * 1e-3 * fs)))
    f_t, p_t, c_t = _drift_component(T, fs, s_th.uniform(*theta_band), lambda: step, drift_theta, theta_band, s_th)
    f_g, p_g, c_g = _drift_component(T, fs, s_ga.uniform(*gamma_band), lambda: step, drift_gamma, gamma_band, s_ga)
    t = np.arange(T) / fs
    theta = a_theta * np.cos(2 * np.pi * f_t * t + p_t)
    y = theta * (1 + a_gamma * np.cos(2 * np.pi * f_g * t + p_g))
    lines = np.array([f_t, f_g - f_t, f_g + f_t])
    masses = np.array([a_theta, a_theta * a_gamma / 2, a_theta * a_gamma / 2])
    track = FrequencyTrack(fs, np.array([f_t, f_g]), np.array([a_theta, a_gamma]), np.array([p_t, p_g]), [c_t, c_g],
                           lines, masses, (0.0, fs / 2),
                           dict(a_theta=a_theta, a_gamma=a_gamma, drift_theta=drift_theta, drift_gamma=drift_gamma,
                                change_ms=change_ms, sigma=sigma))
    return add_noise(y, sigma, s_noise), track
