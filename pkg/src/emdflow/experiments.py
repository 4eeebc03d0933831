"""Trial runners, parameter search and the backend benchmark.

Every runner is a pure function of its arguments and seed, so trials can be
farmed out to worker processes and collected in a fixed order.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .core import GridGeometry, TrackerConfig
from .metrics import SpectralErrorConfig, f1_score, rmse_relative, solution_rmse, spectral_emd_error
from .spectral import build_dictionary, stft_baseline, track_spectrum
from .synth import gen_freq_signal, gen_theta_gamma, target_scenario
from .trackers import DynamicsModel, track_sequence


@dataclass(frozen=True)
class TrackerSpec:
    """A tracker name with its parameters, dynamics and the parameters a
    search may adjust."""

    name: str
    config: TrackerConfig = field(default_factory=TrackerConfig)
    dynamics: DynamicsModel | None = None
    tunable: tuple = ()

    def with_params(self, **params) -> "TrackerSpec":
        return replace(self, config=self.config.with_(**params))

    def params(self) -> dict:
        return {k: getattr(self.config, k) for k in self.tunable}


def map_ordered(fn, items, jobs: int = 1):
    """``[fn(i) for i in items]``, optionally over a process pool."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ------------------------------------------------------------------ targets


def target_specs(shape, lam=0.02, gamma=0.05) -> dict:
    blur3 = DynamicsModel("blur", shape=tuple(shape))
    return {
        "emd-df": TrackerSpec("emd-df-beckmann", TrackerConfig(lam=lam, gamma=gamma), DynamicsModel(), ("lam", "gamma", "mu")),
        "bpdn": TrackerSpec("bpdn", TrackerConfig(lam=lam), None, ("lam",)),
        "bpdn-df": TrackerSpec("bpdn-df", TrackerConfig(lam=lam, gamma=gamma), DynamicsModel(), ("lam", "gamma")),
        "rwl1": TrackerSpec("rwl1", TrackerConfig(lam=lam, beta=1.0, eta=0.1), None, ("lam", "beta")),
        "rwl1-df": TrackerSpec("rwl1-df", TrackerConfig(xi=lam, beta=1.0, eta=0.1), blur3, ("xi", "beta")),
    }


@dataclass
class TargetTrial:
    rmse: np.ndarray
    f1: np.ndarray
    wall_time: np.ndarray
    estimates: np.ndarray = field(repr=False)


def run_target_trial(scenario, spec: TrackerSpec, threshold: float = 0.1) -> TargetTrial:
    steps = track_sequence(scenario.measurements, scenario.operators, spec.name, spec.config, spec.dynamics, scenario.grid)
    est = np.array([s.estimate for s in steps])
    rm = np.array([rmse_relative(x, e) for x, e in zip(scenario.states, est)])
    f1 = np.array([f1_score(x, e, threshold) for x, e in zip(scenario.states, est)])
    return TargetTrial(rm, f1, np.array([s.wall_time for s in steps]), est)


def _target_job(args):
    setup, spec, seed = args
    return run_target_trial(target_scenario(seed=seed, **setup), spec)


def target_trials(setup: dict, spec: TrackerSpec, seeds, jobs: int = 1) -> list[TargetTrial]:
    return map_ordered(_target_job, [(setup, spec, s) for s in seeds], jobs)


# ----------------------------------------------------------------- spectral


def spectral_specs(K: int, lam=3.0, gamma=0.3) -> dict:
    tau = DynamicsModel("top_q", q=K, conjugate=True)
    return {
        "emd-df": TrackerSpec("emd-df", TrackerConfig(lam=lam, gamma=gamma), tau, ("lam", "gamma", "mu")),
        "bpdn": TrackerSpec("bpdn", TrackerConfig(lam=lam), None, ("lam",)),
        "rwl1-df": TrackerSpec("rwl1-df", TrackerConfig(xi=lam, beta=1.0, eta=0.1), DynamicsModel("blur"), ("xi", "beta")),
    }


def _spectral_errors(samples, track, specs, M, S, hop, cfg, with_stft=True, keep=False):
    fs = track.fs
    d = build_dictionary(M, S, fs)
    out, ests = {}, {}
    for key, spec in specs.items():
        est = track_spectrum(samples, d, spec.name, spec.dynamics, spec.config, hop)
        out[key] = spectral_emd_error(track, est, cfg)
        ests[key] = est
    if with_stft:
        est = stft_baseline(samples, M, hop, "hamming", fs)
        out["stft"] = spectral_emd_error(track, est, cfg)
        ests["stft"] = est
    return (out, ests) if keep else out


def freq_trial(setup: dict, specs: dict, seed: int, keep: bool = False):
    """Sum-of-sinusoids trial; returns spectral error per tracker (+ "stft")."""
    s = dict(fs=256.0, K=3, mu_t=40, sigma_t=0, sigma_f=4, duration=2.0, sigma=0.3, M=64, S=3, hop=None)
    s.update(setup)
    y, track = gen_freq_signal(s["fs"], s["K"], s["mu_t"], s["sigma_t"], s["sigma_f"], (0.0, s["fs"] / 2), s["duration"], seed, s["sigma"])
    cfg = SpectralErrorConfig((0.0, s["fs"] / 2))
    return _spectral_errors(y, track, specs, s["M"], s["S"], s["hop"], cfg, keep=keep)


def theta_gamma_trial(setup: dict, specs: dict, seed: int, keep: bool = False):
    """Theta-gamma trial scored with the theta band masked out."""
    s = dict(fs=256.0, a_theta=1.0, a_gamma=0.2, duration=2.0, sigma=0.05, M=48, S=3, hop=None, mask_below=10.0)
    s.update(setup)
    y, track = gen_theta_gamma(s["fs"], s["a_theta"], s["a_gamma"], duration=s["duration"], sigma=s["sigma"], seed=seed)
    cfg = SpectralErrorConfig((0.0, s["fs"] / 2), mask_below=s["mask_below"])
    return _spectral_errors(y, track, specs, s["M"], s["S"], s["hop"], cfg, keep=keep)


def _spectral_job(args):
    kind, setup, specs, seed = args
    return (freq_trial if kind == "freq" else theta_gamma_trial)(setup, specs, seed)


def spectral_trials(kind: str, setup: dict, specs: dict, seeds, jobs: int = 1) -> list[dict]:
    return map_ordered(_spectral_job, [(kind, setup, specs, s) for s in seeds], jobs)


# ------------------------------------------------------------------- search


# The dynamics weight stays away from zero: at gamma -> 0 a dynamic filter
# collapses onto its static counterpart and stops being a distinct tracker.
SEARCH_BOUNDS = {"gamma": (1e-2, 1e2)}
DEFAULT_BOUNDS = (1e-4, 1e3)


def tune(spec: TrackerSpec, score, budget: int = 30, bounds: dict | None = None) -> tuple[TrackerSpec, float]:
    """Direct (Nelder-Mead) search over the log10 of the tunable parameters.

    ``score(spec) -> float`` is minimized; failures score +inf. ``bounds``
    maps parameter names to (low, high) and defaults to ``SEARCH_BOUNDS``.
    """
    if not spec.tunable:
        return spec, float(score(spec))
    bounds = SEARCH_BOUNDS if bounds is None else bounds
    box = np.log10([bounds.get(k, DEFAULT_BOUNDS) for k in spec.tunable])
    lo, hi = box[:, 0], box[:, 1]
    start = [spec.config.mu_value if k == "mu" else getattr(spec.config, k) for k in spec.tunable]
    x0 = np.clip(np.log10(np.maximum(start, 1e-12)), lo, hi)
    cache = {}

    def f(logp):
        logp = np.clip(logp, lo, hi)
        key = tuple(np.round(logp, 6))
        if key not in cache:
            cand = spec.with_params(**dict(zip(spec.tunable, 10.0 ** logp)))
            try:
                cache[key] = float(score(cand))
            except Exception:
                cache[key] = np.inf
        return cache[key]

    d = len(x0)
    simplex = np.vstack([x0] + [x0 + 0.5 * np.eye(d)[i] for i in range(d)])
    res = minimize(f, x0, method="Nelder-Mead", options=dict(maxfev=budget, initial_simplex=simplex, xatol=0.02, fatol=1e-4))
    best = min(cache, key=cache.get)
    return spec.with_params(**dict(zip(spec.tunable, 10.0 ** np.array(best)))), cache[best]


# -------------------------------------------------------------------- bench


@dataclass
class BenchRow:
    side: int
    repeat: int
    time_general: float
    time_beckmann: float
    solution_rmse: float


def bench_trial(side: int, seed: int, sparsity: float = 0.05, ratio: float = 0.2, sigma2: float = 0.001,
                steps: int = 3, lam: float = 0.02, gamma: float = 0.05) -> BenchRow:
    """Time both EMD-DF backends on one scenario; steps after the first are
    timed (the first has no prediction and so no transport term)."""
    sc = target_scenario((side, side), sigma2=sigma2, steps=steps, seed=seed, sparsity=sparsity, ratio=ratio)
    cfg = TrackerConfig(lam=lam, gamma=gamma)
    runs = {}
    for name in ("emd-df", "emd-df-beckmann"):
        steps_out = track_sequence(sc.measurements, sc.operators, name, cfg, DynamicsModel(), sc.grid)
        runs[name] = steps_out
    tg = float(np.mean([s.wall_time for s in runs["emd-df"][1:]]))
    tb = float(np.mean([s.wall_time for s in runs["emd-df-beckmann"][1:]]))
    err = max(solution_rmse(a.estimate, b.estimate) for a, b in zip(runs["emd-df"], runs["emd-df-beckmann"]))
    return BenchRow(side, seed, tg, tb, err)


def _bench_job(args):
    side, seed, kw = args
    return bench_trial(side, seed, **kw)


def bench(sides=(12, 20, 28), repeats: int = 5, seed: int = 0, jobs: int = 1, **trial_kw) -> list[BenchRow]:
    """Backend comparison; timings are only comparable with ``jobs=1``.

    Extra keywords (sparsity, ratio, steps, lam, gamma) go to :func:`bench_trial`.
    """
    jobs_list = [(s, seed + r, trial_kw) for s in sides for r in range(repeats)]
    return map_ordered(_bench_job, jobs_list, jobs)
