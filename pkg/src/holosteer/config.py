"""Run configuration: one JSON document with code, gate, noise, run and output blocks."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import GateSpec
from .noise import decoherence_rate, match_strength, noise_from_dict
from .pauli import CodeError, PauliOperator, StabilizerCode, adapted_five_qubit_code, \
    bit_flip_code

NAMED_CODES = {"bit_flip": bit_flip_code, "adapted_five_qubit": adapted_five_qubit_code}
INITIAL_STATES = ("plus", "minus", "zero", "one")
TOP_KEYS = {"name", "description", "code", "gate", "noise", "run", "output", "variants",
            "sweep", "compare_steering", "prop1", "acceptance"}
GATE_KEYS = {"H", "X", "theta", "omega", "kappa"}
RUN_KEYS = {"dt", "trajectories", "seed", "steering", "estimator", "threshold", "hold",
            "initial_state", "record_every", "inject", "threads", "batch",
            "est_noise_every", "record_estimator", "export_estimator", "filter_gamma"}
OUTPUT_KEYS = {"dir", "events"}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass
class RunConfig:
    code: StabilizerCode
    gate: dict
    noise: dict
    run: dict
    output: dict
    raw: dict = field(default_factory=dict)

    @property
    def spec(self) -> GateSpec:
        g = self.gate
        return GateSpec(self.code, PauliOperator.from_string(g["H"]),
                        PauliOperator.from_string(g["X"]), float(g["theta"]),
                        float(g["omega"]), float(g.get("kappa", 1.0)))

    @property
    def noise_model(self):
        return build_noise(self.noise, self.spec.T, "noise")

    def initial_state(self) -> np.ndarray:
        L0 = self.spec.L0
        name = self.run.get("initial_state", "plus")
        vec = {"plus": [1, 1], "minus": [1, -1], "zero": [1, 0], "one": [0, 1]}[name]
        v = np.asarray(vec, dtype=complex)
        return L0 @ (v / np.linalg.norm(v))


def _check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def load_code(doc, base_dir: Path | None = None) -> StabilizerCode:
    if isinstance(doc, str):
        if doc in NAMED_CODES:
            return NAMED_CODES[doc]()
        raise ConfigError(f"code: unknown named code {doc!r}")
    if isinstance(doc, dict) and set(doc) == {"file"}:
        p = Path(doc["file"])
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        try:
            return StabilizerCode.from_json(p)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"code.file: {exc}") from exc
    if isinstance(doc, dict) and "correctable_only" in doc:
        doc = dict(doc)
        base = load_code(doc.pop("base"), base_dir)
        corr = tuple(doc.pop("correctable_only"))
        if doc:
            raise ConfigError(f"code: unknown keys {sorted(doc)}")
        return StabilizerCode(base.n, base.k, base.d, base.generators, base.logical_ops, corr)
    try:
        return StabilizerCode.from_dict(doc)
    except (CodeError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"code: {exc}") from exc


def build_noise(doc, T: float, where: str = "noise"):
    """Noise model; a ``matched_to`` block rescales the amplitude to the same rate over T."""
    doc = dict(doc or {})
    ref = doc.pop("matched_to", None)
    try:
        if ref is None:
            return noise_from_dict(doc)
        ref_model = noise_from_dict(ref)
        amp = "eps" if doc.get("type") in ("static", "one_over_f") else "gamma"
        doc.setdefault(amp, 1.0)
        return match_strength(decoherence_rate(ref_model, T), noise_from_dict(doc), T)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(doc: dict, base_dir: Path | None = None) -> RunConfig:
    _check_keys(doc, TOP_KEYS, "config")
    for key in ("code", "gate"):
        if key not in doc:
            raise ConfigError(f"{key}: missing")
    code = load_code(doc["code"], base_dir)
    gate = doc["gate"]
    _check_keys(gate, GATE_KEYS, "gate")
    for k in ("H", "X", "theta", "omega"):
        if k not in gate:
            raise ConfigError(f"gate.{k}: missing")
    for k in ("omega", "kappa"):
        if k in gate and not float(gate[k]) > 0:
            raise ConfigError(f"gate.{k}: must be positive")
    for k in ("H", "X"):
        try:
            p = PauliOperator.from_string(gate[k])
        except ValueError as exc:
            raise ConfigError(f"gate.{k}: {exc}") from exc
        if p.n != code.n:
            raise ConfigError(f"gate.{k}: expected {code.n} qubits")
    run = dict(doc.get("run", {}))
    _check_keys(run, RUN_KEYS, "run")
    if int(run.get("trajectories", 1)) < 1:
        raise ConfigError("run.trajectories: must be at least 1")
    if "dt" in run and not float(run["dt"]) > 0:
        raise ConfigError("run.dt: must be positive")
    thr = float(run.get("threshold", 0.8))
    if not 0 < thr < 1:
        raise ConfigError("run.threshold: must lie in (0, 1)")
    if run.get("initial_state", "plus") not in INITIAL_STATES:
        raise ConfigError(f"run.initial_state: one of {INITIAL_STATES}")
    for i, inj in enumerate(run.get("inject", [])):
        _check_keys(inj, {"t", "error"}, f"run.inject[{i}]")
    output = dict(doc.get("output", {}))
    _check_keys(output, OUTPUT_KEYS, "output")
    cfg = RunConfig(code, dict(gate), dict(doc.get("noise", {})), run, output, copy.deepcopy(doc))
    build_noise(cfg.noise, cfg.spec.T)
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc


def set_path(doc: dict, dotted: str, value) -> dict:
    """Copy of ``doc`` with ``a.b.c`` set to value."""
    out = copy.deepcopy(doc)
    cur = out
    keys = dotted.split(".")
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
    cur[keys[-1]] = value
    return out


def expand(doc: dict) -> list:
    """(label, single-run document) pairs for variants, sweeps and steering comparisons."""
    base = {k: v for k, v in doc.items() if k not in ("variants", "sweep", "compare_steering")}
    runs = [("", base)]
    if "variants" in doc:
        runs = []
        for i, var in enumerate(doc["variants"]):
            _check_keys(var, {"label", "set"}, f"variants[{i}]")
            d = base
            for path, val in var.get("set", {}).items():
                d = set_path(d, path, val)
            runs.append((str(var.get("label", i)), d))
    if "sweep" in doc:
        sw = doc["sweep"]
        _check_keys(sw, {"parameter", "values"}, "sweep")
        runs = [(_join(lab, f"{sw['parameter']}={v:g}"), set_path(d, sw["parameter"], v))
                for lab, d in runs for v in sw["values"]]
    if doc.get("compare_steering"):
        runs = [(_join(lab, f"steering={s}"), set_path(d, "run.steering", s))
                for lab, d in runs for s in (False, True)]
    return runs


def _join(a: str, b: str) -> str:
    return f"{a},{b}" if a else b
