"""File formats: versioned JSON configs, scenario files with base64 arrays,
signal CSVs and provenance-stamped output CSVs."""

from __future__ import annotations

import base64
import csv
import hashlib
import io
import json
from pathlib import Path

import jsonschema
import numpy as np

from .core import GridGeometry
from .synth import FrequencyTrack, Scenario

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


# ------------------------------------------------------------------ arrays


def encode_array(a) -> dict:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return {"shape": list(a.shape), "complex": True,
                "data": base64.b64encode(np.stack([a.real, a.imag], -1).astype("<f8").tobytes()).decode("ascii")}
    return {"shape": list(a.shape), "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8")
    if d.get("complex"):
        raw = raw.reshape(-1, 2)
        return (raw[:, 0] + 1j * raw[:, 1]).reshape(d["shape"])
    return raw.reshape(d["shape"]).astype(float)


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- scenarios


def scenario_doc(sc: Scenario) -> dict:
    return {
        "version": CONFIG_VERSION,
        "kind": "targets",
        "grid": {"dims": list(sc.grid.dims), "spacing": list(sc.grid.spacing)},
        "seed": sc.seed,
        "meta": sc.meta,
        "states": encode_array(sc.states),
        "operators": encode_array(sc.operators),
        "measurements": encode_array(sc.measurements),
    }


def signal_doc(samples, track: FrequencyTrack, seed: int, kind: str) -> dict:
    return {
        "version": CONFIG_VERSION,
        "kind": kind,
        "fs": track.fs,
        "seed": seed,
        "meta": track.params,
        "samples": encode_array(samples),
        "freqs": encode_array(track.freqs),
        "amps": encode_array(track.amps),
        "phases": encode_array(track.phases),
        "line_freqs": encode_array(track.line_freqs),
        "line_masses": encode_array(track.line_masses),
        "band": list(track.band),
    }


def save_scenario(path, doc: dict):
    Path(path).write_text(dumps(doc))


def load_scenario(path):
    """Return a :class:`Scenario` or ``(samples, FrequencyTrack, seed)``."""
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    if d.get("version") != CONFIG_VERSION:
        raise ConfigError(f"scenario {path}: unsupported version {d.get('version')!r}")
    try:
        if d["kind"] == "targets":
            grid = GridGeometry(tuple(d["grid"]["dims"]), tuple(d["grid"]["spacing"]))
            return Scenario(grid, decode_array(d["states"]), decode_array(d["operators"]), decode_array(d["measurements"]),
                            d["seed"], d.get("meta", {}))
        track = FrequencyTrack(d["fs"], decode_array(d["freqs"]), decode_array(d["amps"]), decode_array(d["phases"]), [],
                               decode_array(d["line_freqs"]), decode_array(d["line_masses"]), tuple(d["band"]), d.get("meta", {}))
        return decode_array(d["samples"]), track, d["seed"]
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"scenario {path}: schema mismatch ({exc})") from exc


# ------------------------------------------------------------------ signals


def write_signal_csv(path, samples, fs: float):
    lines = [f"# fs={fs!r}", "# channels=1"] + [repr(float(v)) for v in np.asarray(samples, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_signal_csv(path):
    """Read ``(fs, samples)`` from a single-channel signal CSV."""
    try:
        text = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read signal {path}: {exc}") from exc
    header = {}
    body = []
    for line in text:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            header[k.strip()] = v.strip()
        else:
            body.append(line.split(",")[0])
    if "fs" not in header:
        raise ConfigError(f"signal {path}: missing '# fs=' header")
    if header.get("channels", "1") != "1":
        raise ConfigError(f"signal {path}: only single-channel signals are supported")
    try:
        return float(header["fs"]), np.array([float(v) for v in body])
    except ValueError as exc:
        raise ConfigError(f"signal {path}: {exc}") from exc


# ------------------------------------------------------------------ outputs


def write_csv(path, columns, rows, *, command: str, chash: str, seed, notes=()):
    """CSV with a comment header carrying provenance and column meanings."""
    buf = io.StringIO()
    buf.write(f"# emdflow {command} config_hash={chash} seed={seed}\n")
    for n in notes:
        buf.write(f"# {n}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    Path(path).write_text(buf.getvalue())


# ------------------------------------------------------------------- config

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}
_PARAMS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {k: _NUM for k in ("lam", "gamma", "mu", "xi", "beta", "eta", "tol", "support_tol")}
    | {"q": _POS_INT, "rwl1_iters": _POS_INT, "max_iter": _POS_INT, "nonneg": {"type": "boolean"},
       "method": {"enum": ["conic", "admm"]}},
}
_DYNAMICS = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {"kind": {"enum": ["identity", "top_q", "top_q_blur", "blur"]}, "q": _POS_INT,
                   "conjugate": {"type": "boolean"}},
}
_TRACKER = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {
        "name": {"enum": ["bpdn", "rwl1", "bpdn-df", "rwl1-df", "emd-df", "emd-df-beckmann"]},
        "label": {"type": "string"},
        "params": _PARAMS,
        "dynamics": _DYNAMICS,
        "tune": {"type": "array", "items": {"enum": ["lam", "gamma", "mu", "xi", "beta", "eta"]}},
    },
}
_SCENARIO = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type"],
    "properties": {
        "type": {"enum": ["targets", "freq", "theta_gamma"]},
        "dims": {"type": "array", "items": _POS_INT, "minItems": 1, "maxItems": 2},
        "K": _POS_INT, "M": _POS_INT, "sparsity": _NUM, "ratio": _NUM, "sigma2": _NUM, "steps": _POS_INT,
        "speed": {"type": "integer", "minimum": 0}, "fixed_operator": {"type": "boolean"},
        "fs": _NUM, "mu_t": _NUM, "sigma_t": _NUM, "sigma_f": _NUM, "duration": _NUM, "sigma": _NUM,
        "a_theta": _NUM, "a_gamma": _NUM, "window": _POS_INT, "S": _NUM, "hop": _POS_INT, "mask_below": _NUM,
    },
}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version"],
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "scenario": _SCENARIO,
        "tracker": _TRACKER,
        "trackers": {"type": "array", "items": _TRACKER, "minItems": 1},
        "trials": _POS_INT,
        "tuning": {"type": "object", "additionalProperties": False,
                   "properties": {"seeds": {"type": "array", "items": {"type": "integer"}}, "budget": _POS_INT}},
        "sweep": {"type": "object", "additionalProperties": False, "required": ["param", "values"],
                  "properties": {"param": {"type": "string"}, "values": {"type": "array", "items": _NUM, "minItems": 1}}},
        "bench": {"type": "object", "additionalProperties": False,
                  "properties": {"sides": {"type": "array", "items": _POS_INT, "minItems": 1}, "repeats": _POS_INT,
                                 "sparsity": _NUM, "ratio": _NUM, "lam": _NUM, "gamma": _NUM, "steps": _POS_INT}},
        "tf": {"type": "object", "additionalProperties": False,
               "properties": {"M": _POS_INT, "S": _NUM, "q": _POS_INT, "hop": _POS_INT, "tracker": _TRACKER}},
        "alpha": _NUM,
    },
}


def validate_config(doc) -> dict:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config key {where}: {exc.message}") from None
    if "sweep" in doc and doc["sweep"]["param"] not in _SCENARIO["properties"]:
        raise ConfigError(f"config key sweep/param: unknown scenario parameter {doc['sweep']['param']!r}")
    return doc


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(doc)
