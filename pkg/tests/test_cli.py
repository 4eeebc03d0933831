import csv
import json

import numpy as np
import pytest

from emdflow.cli import main
from emdflow.core import GridGeometry
from emdflow.io import config_hash, load_scenario, save_scenario, scenario_doc, write_signal_csv
from emdflow.synth import Scenario, gen_theta_gamma, target_scenario

SMALL_TARGETS = {"type": "targets", "dims": [6, 6], "K": 2, "M": 14, "steps": 4}


def _config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps({"version": 1} | doc))
    return p


def _rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def _gen(tmp_path, scenario, seed=3, sub="gen"):
    out = tmp_path / sub
    assert main(["gen", "--config", str(_config(tmp_path, {"scenario": scenario})), "--seed", str(seed), "--out", str(out)]) == 0
    return out


def test_gen_is_byte_identical_per_seed(tmp_path):
    a = _gen(tmp_path, SMALL_TARGETS, 3, "a") / "scenario.json"
    b = _gen(tmp_path, SMALL_TARGETS, 3, "b") / "scenario.json"
    c = _gen(tmp_path, SMALL_TARGETS, 4, "c") / "scenario.json"
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_gen_target_defaults(tmp_path):
    out = _gen(tmp_path, {"type": "targets", "steps": 1})
    sc = load_scenario(out / "scenario.json")
    assert sc.grid.dims == (32, 32)
    assert sc.meta["K"] == 51 and sc.meta["M"] == 205 and sc.meta["sigma2"] == 0.001


def test_gen_frequency_defaults(tmp_path):
    out = _gen(tmp_path, {"type": "freq"})
    y, track, seed = load_scenario(out / "scenario.json")
    assert track.fs == 256 and track.line_freqs.shape[0] == 3
    assert track.params["mu_t"] == 40 and track.params["sigma_t"] == 0 and track.params["sigma_f"] == 4
    assert (out / "signal.csv").read_text().startswith("# fs=256")
    assert seed == 3


def test_unknown_key_is_config_error(tmp_path, capsys):
    cfg = _config(tmp_path, {"scenario": SMALL_TARGETS, "bogus": 1})
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "bogus" in capsys.readouterr().err
    cfg = _config(tmp_path, {"scenario": SMALL_TARGETS | {"sigma3": 0.1}})
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "sigma3" in capsys.readouterr().err


def test_bad_version_and_missing_file(tmp_path):
    p = tmp_path / "v.json"
    p.write_text(json.dumps({"version": 2}))
    assert main(["gen", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert main(["gen", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 1


def test_runtime_error_exit_code(tmp_path):
    sig = tmp_path / "short.csv"
    write_signal_csv(sig, np.zeros(10), 256.0)
    assert main(["tf", "--signal", str(sig), "--out", str(tmp_path)]) == 2


def _track(tmp_path, scen_path, trackers, sub):
    out = tmp_path / sub
    cfg = _config(tmp_path, {"trackers": trackers}, f"{sub}.json")
    assert main(["track", "--config", str(cfg), "--scenario", str(scen_path), "--out", str(out)]) == 0
    return out


def test_bpdn_on_noiseless_identity_scenario(tmp_path):
    sc = target_scenario((5, 5), K=2, steps=3, seed=1)
    eye = np.broadcast_to(np.eye(25), (3, 25, 25)).copy()
    clean = Scenario(sc.grid, sc.states, eye, sc.states.copy(), sc.seed, sc.meta)
    path = tmp_path / "identity.json"
    save_scenario(path, scenario_doc(clean))
    out = _track(tmp_path, path, [{"name": "bpdn", "params": {"lam": 1e-4}}], "id")
    rows = _rows(out / "track_bpdn.csv")
    assert len(rows) == 3
    assert all(float(r["rmse"]) < 1e-6 for r in rows)
    timing = _rows(out / "timing_bpdn.csv")
    assert len(timing) == 3 and all(float(r["wall_time"]) > 0 for r in timing)


def test_backends_agree_through_track(tmp_path):
    scen = _gen(tmp_path, SMALL_TARGETS) / "scenario.json"
    trackers = [{"name": n, "params": {"lam": 0.02, "gamma": 0.5}} for n in ("emd-df", "emd-df-beckmann")]
    out = _track(tmp_path, scen, trackers, "both")
    summary = json.loads((out / "track_summary.json").read_text())["summary"]
    assert summary["solution_rmse:emd-df:emd-df-beckmann"] <= 5e-2


def test_prefix_run_reproduces_prefix(tmp_path):
    scen = _gen(tmp_path, SMALL_TARGETS) / "scenario.json"
    sc = load_scenario(scen)
    short = tmp_path / "short.json"
    save_scenario(short, scenario_doc(sc.prefix(2)))
    trackers = [{"name": "emd-df-beckmann", "params": {"lam": 0.02, "gamma": 0.5}}]
    full = _rows(_track(tmp_path, scen, trackers, "full") / "track_emd-df-beckmann.csv")
    part = _rows(_track(tmp_path, short, trackers, "part") / "track_emd-df-beckmann.csv")
    assert part == full[:2]


def test_outputs_carry_provenance_and_are_deterministic(tmp_path):
    scen = _gen(tmp_path, SMALL_TARGETS) / "scenario.json"
    trackers = [{"name": "bpdn-df", "params": {"lam": 0.02, "gamma": 0.5}}]
    a = _track(tmp_path, scen, trackers, "r1")
    b = _track(tmp_path, scen, trackers, "r2")
    chash = config_hash({"version": 1, "trackers": trackers})
    for f in sorted(a.glob("*.csv")):
        first = f.read_text().splitlines()[0]
        assert first == f"# emdflow track config_hash={chash} seed=3"
        if not f.name.startswith("timing_"):
            assert f.read_bytes() == (b / f.name).read_bytes()


def test_config_hash_is_stable():
    assert config_hash({"b": 1, "a": [1, 2]}) == config_hash({"a": [1, 2], "b": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_eval_with_sweep(tmp_path):
    cfg = _config(tmp_path, {"scenario": SMALL_TARGETS, "trackers": [{"name": "bpdn", "params": {"lam": 0.02}}],
                             "sweep": {"param": "sigma2", "values": [0.001, 0.01]}})
    out = tmp_path / "eval"
    assert main(["eval", "--config", str(cfg), "--trials", "2", "--out", str(out)]) == 0
    rows = _rows(out / "eval_summary.csv")
    assert {r["sweep_value"] for r in rows} == {"0.001", "0.01"}
    assert all(r["metric"] in ("rmse", "f1") for r in rows)
    assert (out / "eval_timing.csv").exists()
    again = tmp_path / "eval2"
    assert main(["eval", "--config", str(cfg), "--trials", "2", "--jobs", "2", "--out", str(again)]) == 0
    assert (out / "eval.csv").read_bytes() == (again / "eval.csv").read_bytes()


def test_bench_reports_std(tmp_path):
    cfg = _config(tmp_path, {"bench": {"sides": [6], "repeats": 2, "steps": 2}})
    assert main(["bench", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "bench_summary.csv")
    assert {"general_std", "beckmann_std", "max_solution_rmse"} <= set(rows[0])
    assert float(rows[0]["max_solution_rmse"]) <= 5e-2


def test_tf_dimensions(tmp_path):
    y, _ = gen_theta_gamma(duration=1.0, sigma=0.05, seed=2)
    sig = tmp_path / "sig.csv"
    write_signal_csv(sig, y, 256.0)
    assert main(["tf", "--signal", str(sig), "--out", str(tmp_path)]) == 0
    est = _rows(tmp_path / "tf_emd-df.csv")
    base = _rows(tmp_path / "tf_stft.csv")
    assert len(est[0]) - 2 == 5 * 72 // 2
    assert len(base[0]) - 2 == 72
    assert len(est) == len(base)
