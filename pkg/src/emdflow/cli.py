"""Command line entry point: ``emdflow {gen,track,eval,bench,tf}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .core import GridGeometry, TrackerConfig
from .experiments import TrackerSpec, bench, freq_trial, map_ordered, run_target_trial, theta_gamma_trial, tune
from .io import (ConfigError, config_hash, dumps, encode_array, load_config, load_scenario, read_signal_csv,
                 save_scenario, scenario_doc, signal_doc, write_csv, write_signal_csv)
from .metrics import SpectralErrorConfig, aggregate, f1_score, rmse_relative, solution_rmse, spectral_slice_error
from .solver import SolverError
from .spectral import build_dictionary, stft_baseline, track_spectrum
from .synth import Scenario, gen_freq_signal, gen_theta_gamma, target_scenario
from .trackers import DynamicsModel, TrackingError, track_sequence

log = logging.getLogger("emdflow")

TARGET_DEFAULTS = dict(dims=[32, 32], sparsity=0.05, ratio=0.2, sigma2=0.001, steps=15, speed=1)
FREQ_DEFAULTS = dict(fs=256.0, K=3, mu_t=40, sigma_t=0, sigma_f=4, duration=2.0, sigma=0.3, window=64, S=3)
THETA_GAMMA_DEFAULTS = dict(fs=256.0, a_theta=1.0, a_gamma=0.2, duration=2.0, sigma=0.05, window=48, S=3, mask_below=10.0)
TF_DEFAULTS = dict(M=72, S=5, q=2)


class RunError(RuntimeError):
    """Runtime failure mapped to exit code 2."""


# ------------------------------------------------------------- scenarios


def scenario_params(cfg: dict) -> dict:
    sc = cfg.get("scenario")
    if sc is None:
        raise ConfigError("config key scenario: required for this command")
    base = {"targets": TARGET_DEFAULTS, "freq": FREQ_DEFAULTS, "theta_gamma": THETA_GAMMA_DEFAULTS}[sc["type"]]
    return dict(base) | sc


def make_scenario(params: dict, seed: int):
    kind = params["type"]
    if kind == "targets":
        keys = ("K", "M", "sigma2", "steps", "speed", "sparsity", "ratio", "fixed_operator")
        return target_scenario(tuple(params["dims"]), seed=seed, **{k: params[k] for k in keys if k in params})
    if kind == "freq":
        fs = params["fs"]
        y, track = gen_freq_signal(fs, params["K"], params["mu_t"], params["sigma_t"], params["sigma_f"], (0.0, fs / 2),
                                   params["duration"], seed, params["sigma"])
    else:
        y, track = gen_theta_gamma(params["fs"], params["a_theta"], params["a_gamma"], duration=params["duration"],
                                   sigma=params["sigma"], seed=seed)
    return y, track


def tracker_specs(cfg: dict, params: dict | None, default_q: int = 1) -> list[tuple[str, TrackerSpec]]:
    entries = cfg.get("trackers") or ([cfg["tracker"]] if "tracker" in cfg else None)
    if not entries:
        raise ConfigError("config key tracker: no tracker given")
    out = []
    spatial = params is not None and params.get("type") == "targets"
    for i, e in enumerate(entries):
        try:
            tc = TrackerConfig(**e.get("params", {}))
        except ValueError as exc:
            raise ConfigError(f"config key trackers/{i}/params: {exc}") from None
        dyn = e.get("dynamics")
        if dyn is None:
            if spatial:
                dyn = {"kind": "blur" if e["name"] == "rwl1-df" else "identity"}
            else:
                dyn = {"kind": "blur"} if e["name"] == "rwl1-df" else {"kind": "top_q", "q": default_q, "conjugate": True}
        shape = tuple(params["dims"]) if spatial else None
        dm = DynamicsModel(dyn["kind"], q=dyn.get("q", default_q), shape=shape, conjugate=dyn.get("conjugate", not spatial))
        label = e.get("label", e["name"])
        out.append((label, TrackerSpec(e["name"], tc, dm, tuple(e.get("tune", ())))))
    labels = [l for l, _ in out]
    if len(set(labels)) != len(labels):
        raise ConfigError("config key trackers: labels must be unique (set 'label')")
    return out


# -------------------------------------------------------------- commands


def cmd_gen(cfg: dict, seed: int, out: Path) -> Path:
    params = scenario_params(cfg)
    chash = config_hash(cfg)
    if params["type"] == "targets":
        sc = make_scenario(params, seed)
        doc = scenario_doc(sc)
    else:
        y, track = make_scenario(params, seed)
        doc = signal_doc(y, track, seed, params["type"])
        write_signal_csv(out / "signal.csv", y, track.fs)
    doc["config_hash"] = chash
    path = out / "scenario.json"
    save_scenario(path, doc)
    log.info("wrote %s", path)
    return path


def _spectral_setup(params):
    return dict(M=params["window"], S=params["S"], hop=params.get("hop"))


def cmd_track(cfg: dict, scenario_path: Path, seed: int, out: Path) -> dict:
    loaded = load_scenario(scenario_path)
    params = scenario_params(cfg) if "scenario" in cfg else None
    chash = config_hash(cfg)
    summary = {}
    if isinstance(loaded, Scenario):
        sc = loaded
        params = params or {"type": "targets", "dims": list(sc.grid.dims)}
        estimates = {}
        for label, spec in tracker_specs(cfg, params | {"dims": list(sc.grid.dims)}):
            steps = track_sequence(sc.measurements, sc.operators, spec.name, spec.config, spec.dynamics, sc.grid,
                                   on_error="record")
            rows = []
            for s, x in zip(steps, sc.states):
                rows.append([s.index, rmse_relative(x, s.estimate), f1_score(x, s.estimate),
                             s.report.get("status", ""), s.slack, s.error])
            write_csv(out / f"track_{label}.csv", ["step", "rmse", "f1", "status", "slack", "error"], rows,
                      command="track", chash=chash, seed=sc.seed,
                      notes=["rmse: relative squared error; f1 at threshold 0.1"])
            _write_timing(out / f"timing_{label}.csv", steps, chash, sc.seed)
            est = np.array([s.estimate for s in steps])
            estimates[label] = est
            (out / f"estimates_{label}.json").write_text(dumps({"config_hash": chash, "seed": sc.seed,
                                                               "estimates": encode_array(est)}))
            summary[label] = {"mean_rmse": float(np.mean([r[1] for r in rows])), "failed_steps": sum(bool(r[5]) for r in rows)}
        labels = list(estimates)
        for i, a in enumerate(labels):
            for b in labels[i + 1:]:
                summary[f"solution_rmse:{a}:{b}"] = max(solution_rmse(p, q) for p, q in zip(estimates[a], estimates[b]))
    else:
        y, track, sseed = loaded
        params = params or dict(FREQ_DEFAULTS)
        st = _spectral_setup(params)
        d = build_dictionary(st["M"], st["S"], track.fs)
        mcfg = SpectralErrorConfig((0.0, track.fs / 2), mask_below=params.get("mask_below"))
        q = track.line_freqs.shape[0] if "K" not in params else params["K"]
        for label, spec in tracker_specs(cfg, params, default_q=q):
            est = track_spectrum(y, d, spec.name, spec.dynamics, spec.config, st["hop"], on_error="record")
            rows = []
            for w, (c, s) in enumerate(zip(est.centers, est.steps)):
                err = spectral_slice_error(*track.lines_at(int(c)), est.freqs, est.magnitudes[w], mcfg)
                rows.append([w, int(est.starts[w]), err, s.report.get("status", ""), s.error])
            write_csv(out / f"track_{label}.csv", ["window", "start", "spectral_error", "status", "error"], rows,
                      command="track", chash=chash, seed=sseed, notes=["spectral_error: EMD in Hz against the true lines"])
            _write_timing(out / f"timing_{label}.csv", est.steps, chash, sseed)
            _write_tf(out / f"tf_{label}.csv", est, chash, sseed)
            summary[label] = {"spectral_error": float(sum(r[2] for r in rows)), "failed_steps": sum(bool(r[4]) for r in rows)}
    (out / "track_summary.json").write_text(dumps({"config_hash": chash, "seed": seed, "summary": summary}))
    return summary


def _write_timing(path, steps, chash, seed):
    # wall times live apart from the metric files, which are bitwise reproducible
    write_csv(path, ["step", "wall_time"], [[s.index, s.wall_time] for s in steps], command="track", chash=chash,
              seed=seed, notes=["wall_time: seconds per step"])


def _write_tf(path, est, chash, seed):
    cols = ["start", "time"] + [f"{f:.6g}" for f in est.freqs]
    rows = [[int(s), float(t)] + list(map(float, m)) for s, t, m in zip(est.starts, est.times, est.magnitudes)]
    write_csv(path, cols, rows, command="tf", chash=chash, seed=seed,
              notes=["rows: windows; columns after time: magnitude per frequency (Hz)"])


def _trial_metrics(args):
    params, specs, seed = args
    kind = params["type"]
    if kind == "targets":
        sc = make_scenario(params, seed)
        res = {}
        for label, spec in specs:
            tr = run_target_trial(sc, spec)
            res[label] = {"rmse": float(tr.rmse.mean()), "f1": float(tr.f1.mean()), "wall_time": float(tr.wall_time.mean())}
        return res
    setup = _spectral_setup(params) | {k: params[k] for k in params if k not in ("type", "window", "S", "hop")}
    fn = freq_trial if kind == "freq" else theta_gamma_trial
    errs = fn(setup, dict(specs), seed)
    return {k: {"spectral_error": v} for k, v in errs.items()}


def _tuned(params, specs, cfg):
    tuning = cfg.get("tuning", {})
    seeds = tuning.get("seeds", [10_000, 10_001])
    budget = tuning.get("budget", 20)
    key = "rmse" if params["type"] == "targets" else "spectral_error"
    out = []
    for label, spec in specs:
        if spec.tunable:
            score = lambda s, label=label: np.mean([_trial_metrics((params, [(label, s)], sd))[label][key] for sd in seeds])
            spec, _ = tune(spec, score, budget)
        out.append((label, spec))
    return out


def cmd_eval(cfg: dict, seed: int, trials: int, jobs: int, out: Path) -> list:
    base = scenario_params(cfg)
    chash = config_hash(cfg)
    sweep = cfg.get("sweep", {"param": None, "values": [None]})
    q = base.get("K", 3) if base["type"] == "freq" else 2
    rows, timing_rows, summary_rows, tuned_doc = [], [], [], {}
    for value in sweep["values"]:
        params = dict(base) if value is None else base | {sweep["param"]: value}
        specs = _tuned(params, tracker_specs(cfg, params, default_q=q), cfg)
        tuned_doc[str(value)] = {l: {"name": s.name, **s.config.__dict__} for l, s in specs}
        seeds = [seed + t for t in range(trials)]
        results = map_ordered(_trial_metrics, [(params, specs, s) for s in seeds], jobs)
        per = {}
        for t, (sd, res) in enumerate(zip(seeds, results)):
            for label, metrics in res.items():
                for m, v in metrics.items():
                    (timing_rows if m == "wall_time" else rows).append([value if value is not None else "", t, sd, label, m, v])
                    per.setdefault((label, m), []).append(v)
        for (label, m), vals in per.items():
            s = aggregate(vals, cfg.get("alpha", 0.01))
            if m == "wall_time":
                continue
            summary_rows.append([value if value is not None else "", label, m, s.n, s.mean, s.std, s.median, s.q1, s.q3,
                                 s.min, s.max, s.ci_low, s.ci_high])
    write_csv(out / "eval.csv", ["sweep_value", "trial", "seed", "tracker", "metric", "value"], rows,
              command="eval", chash=chash, seed=seed, notes=[f"sweep parameter: {sweep['param']}"])
    if timing_rows:
        write_csv(out / "eval_timing.csv", ["sweep_value", "trial", "seed", "tracker", "metric", "value"], timing_rows,
                  command="eval", chash=chash, seed=seed, notes=["mean seconds per tracking step"])
    write_csv(out / "eval_summary.csv", ["sweep_value", "tracker", "metric", "n", "mean", "std", "median", "q1", "q3",
                                         "min", "max", "ci_low", "ci_high"], summary_rows,
              command="eval", chash=chash, seed=seed, notes=[f"confidence level {1 - cfg.get('alpha', 0.01):g}"])
    (out / "tuned.json").write_text(dumps({"config_hash": chash, "seed": seed, "tuned": tuned_doc}))
    return summary_rows


def cmd_bench(cfg: dict, seed: int, jobs: int, out: Path) -> list:
    b = cfg.get("bench", {})
    chash = config_hash(cfg)
    sides = b.get("sides", [12, 20, 28])
    repeats = b.get("repeats", 5)
    if jobs > 1:
        log.warning("bench timings run concurrently with --jobs %d; runtimes will not be comparable", jobs)
    extra = {k: b[k] for k in ("sparsity", "ratio", "lam", "gamma", "steps") if k in b}
    res = bench(sides, repeats, seed, jobs, **extra)
    write_csv(out / "bench.csv", ["side", "seed", "time_general", "time_beckmann", "solution_rmse"],
              [[r.side, r.repeat, r.time_general, r.time_beckmann, r.solution_rmse] for r in res],
              command="bench", chash=chash, seed=seed, notes=["times: mean seconds per tracking step"])
    rows = []
    for s in sides:
        sel = [r for r in res if r.side == s]
        tg = np.array([r.time_general for r in sel])
        tb = np.array([r.time_beckmann for r in sel])
        rows.append([s, s * s, tg.mean(), tg.std(ddof=1) if len(sel) > 1 else 0.0, tb.mean(),
                     tb.std(ddof=1) if len(sel) > 1 else 0.0, max(r.solution_rmse for r in sel)])
    write_csv(out / "bench_summary.csv", ["side", "N", "general_mean", "general_std", "beckmann_mean", "beckmann_std",
                                          "max_solution_rmse"], rows, command="bench", chash=chash, seed=seed,
              notes=["std: sample standard deviation over repeats"])
    return rows


def cmd_tf(cfg: dict, signal_path: Path, seed: int, out: Path) -> tuple:
    fs, y = read_signal_csv(signal_path)
    tf = TF_DEFAULTS | cfg.get("tf", {})
    chash = config_hash(cfg)
    M, S, q = tf["M"], tf["S"], tf["q"]
    if y.size < M:
        raise RunError(f"signal of {y.size} samples is shorter than the window length {M}")
    entry = tf.get("tracker", {"name": "emd-df", "params": {"lam": 1.0, "gamma": 0.1}})
    (label, spec), = tracker_specs({"tracker": entry}, None, default_q=q)
    d = build_dictionary(M, S, fs)
    est = track_spectrum(y, d, spec.name, spec.dynamics, spec.config, tf.get("hop"), on_error="record")
    base = stft_baseline(y, M, tf.get("hop"), "hamming", fs)
    _write_tf(out / f"tf_{label}.csv", est, chash, seed)
    _write_tf(out / "tf_stft.csv", base, chash, seed)
    return est, base


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emdflow", description="Sparse signal tracking with earth mover's distance dynamics.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", type=Path, required=config_required, help="JSON experiment config")
        sp.add_argument("--seed", type=int, default=None, help="base seed (overrides the config)")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")

    common(sub.add_parser("gen", help="generate a scenario file"))
    t = sub.add_parser("track", help="run trackers on a scenario file")
    common(t)
    t.add_argument("--scenario", type=Path, required=True)
    e = sub.add_parser("eval", help="multi-trial evaluation with optional sweep")
    common(e)
    e.add_argument("--trials", type=int, default=None)
    e.add_argument("--jobs", type=int, default=1)
    b = sub.add_parser("bench", help="compare EMD-DF backends across state sizes")
    common(b, config_required=False)
    b.add_argument("--jobs", type=int, default=1)
    f = sub.add_parser("tf", help="time-frequency analysis of a signal CSV")
    common(f, config_required=False)
    f.add_argument("--signal", type=Path, required=True)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("EMDFLOW_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {"version": 1}
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        if seed < 0:
            raise ConfigError("--seed must be nonnegative")
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "gen":
            cmd_gen(cfg, seed, args.out)
        elif args.command == "track":
            cmd_track(cfg, args.scenario, seed, args.out)
        elif args.command == "eval":
            trials = args.trials or cfg.get("trials", 10)
            if args.jobs < 1:
                raise ConfigError("--jobs must be at least 1")
            cmd_eval(cfg, seed, trials, args.jobs, args.out)
        elif args.command == "bench":
            cmd_bench(cfg, seed, args.jobs, args.out)
        else:
            cmd_tf(cfg, args.signal, seed, args.out)
    except ConfigError as exc:
        print(f"emdflow: config error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, TrackingError, RunError, ValueError, OSError) as exc:
        print(f"emdflow: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
