"""Ensemble execution, reports, presets and the jump-probability sweep."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, expand, parse_config
from .engine import EngineError, RunOptions, build_model, run_ensemble as engine_run
from .filter import write_expectation_csv
from .linalg import NumericalHealthError
from .metrics import Welford, batch_target_fidelity, binomial_stderr, summarize, \
    write_curve_csv
from .pauli import PauliOperator
from .sde import confinement_probability
from .steer import build_decode_table

PRESETS = ("fig2", "fig3", "fig4a", "fig4b", "prop1")


@dataclass
class EnsembleReport:
    label: str
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: int
    summary: dict
    config: dict
    events: list = field(default_factory=list)
    raw: object = None

    def to_dict(self) -> dict:
        return {"label": self.label, "summary": self.summary, "config": self.config,
                "version": __version__}


def run_options(cfg: RunConfig) -> RunOptions:
    run = cfg.run
    steps = max(1, int(round(cfg.spec.T / float(run.get("dt", 1e-2)))))
    rec = int(run.get("record_every", max(1, steps // 100)))
    inj = tuple((float(i["t"]), PauliOperator.from_string(i["error"]))
                for i in run.get("inject", []))
    steering = bool(run.get("steering", False))
    return RunOptions(dt=float(run.get("dt", 1e-2)), steer=steering,
                      estimator=bool(run.get("estimator", steering)),
                      threshold=float(run.get("threshold", 0.8)),
                      hold=float(run.get("hold", 5.0)), rec_every=rec,
                      record_estimator=bool(run.get("record_estimator", False)),
                      est_noise_every=int(run.get("est_noise_every", 10)),
                      est_gamma=(None if run.get("filter_gamma") is None
                                 else float(run["filter_gamma"])),
                      batch=int(run.get("batch", 100)), threads=int(run.get("threads", 1)),
                      psi0=cfg.initial_state(), injections=inj)


def _syn(v: int, r: int) -> str:
    return format(int(v), f"0{r}b") if r else ""


def run_ensemble(cfg: RunConfig, label: str = "") -> EnsembleReport:
    """Run the configured trajectories and aggregate the gate-fidelity curve."""
    spec = cfg.spec
    opts = run_options(cfg)
    ntraj = int(cfg.run.get("trajectories", 100))
    seed = int(cfg.run.get("seed", 0))
    try:
        table = build_decode_table(spec.code, spec.H, spec.X)
    except ValueError:
        table = None
    if opts.steer and table is None:
        raise ConfigError("run.steering: the code has no valid decode table")
    try:
        model = build_model(spec, table, extra_ops=[p for _, p in opts.injections])
    except EngineError as exc:
        raise ConfigError(f"code: {exc}") from exc
    res = engine_run(model, cfg.noise_model, ntraj, seed, opts)
    if res.health.any() or not np.isfinite(res.final_psi).all():
        raise NumericalHealthError(f"{int((res.health != 0).sum())} trajectories lost "
                                   "normalization")
    psi_bar = opts.psi0
    t = np.concatenate([[0.0], res.t_rec])
    w = Welford(t.shape)
    for s in range(0, ntraj, opts.batch):
        f = res.fidelity[s:s + opts.batch]
        w.add_batch(np.concatenate([np.ones((f.shape[0], 1)), f], axis=1))
    target = batch_target_fidelity(res.final_psi, spec, psi_bar)
    r = spec.code.r
    jumped = res.code_pop[:, -1] < 0.5
    detected = res.events_n > 0
    summary = {
        "final_gate_fidelity": summarize(res.fidelity[:, -1]),
        "target_fidelity": summarize(target),
        "jump_fraction": float(jumped.mean()),
        "jump_fraction_stderr": binomial_stderr(float(jumped.mean()), ntraj),
        "detected_fraction": float(detected.mean()) if opts.estimator else None,
        "steered_fraction": float(np.isfinite(res.steer_theta).mean()),
        "first_syndromes": _count([_syn(res.events_syn[i, 0], r)
                                   for i in range(ntraj) if res.events_n[i] > 0]),
        "dt": spec.T / round(spec.T / opts.dt), "T": spec.T,
    }
    if table is not None:
        known = {e.syndrome for e in table}
        summary["unrecognized_detections"] = int(sum(
            _syn(res.events_syn[i, j], r) not in known
            for i in range(ntraj) for j in range(min(res.events_n[i], res.events_syn.shape[1]))))
    events = _event_log(res, table, r)
    return EnsembleReport(label, t, w.mean, w.stderr, ntraj, summary, cfg.raw, events, res)


def _count(items) -> dict:
    out = {}
    for s in items:
        out[s] = out.get(s, 0) + 1
    return dict(sorted(out.items()))


def _event_log(res, table, r) -> list:
    rows = []
    for i in range(len(res.events_n)):
        for t, op in res.injected[i]:
            rows.append({"trajectory": i, "t": t, "kind": "injected_jump", "error": op})
        for j in range(min(res.events_n[i], res.events_t.shape[1])):
            s = _syn(res.events_syn[i, j], r)
            entry = table.lookup(s) if table is not None else None
            row = {"trajectory": i, "t": float(res.events_t[i, j]), "syndrome": s}
            if entry is None:
                row["kind"] = "unrecognized_syndrome" if s.strip("0") else "detected_jump"
            else:
                row.update(kind="detected_jump", error=entry.label.label())
            rows.append(row)
        if np.isfinite(res.steer_t[i]):
            rows.append({"trajectory": i, "t": float(res.steer_t[i]), "kind": "path_switch",
                         "theta_tilde": float(res.steer_theta[i])})
    rows.sort(key=lambda e: (e["trajectory"], e["t"]))
    return rows


def write_report(rep: EnsembleReport, out_dir, name: str, events: bool = False) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_curve_csv(out / f"{name}_gate_fidelity.csv", rep.t, rep.mean, rep.stderr, rep.n)
    with open(out / f"{name}_summary.json", "w") as fh:
        json.dump(rep.to_dict(), fh, indent=1, sort_keys=True)
    if events:
        with open(out / f"{name}_events.jsonl", "w") as fh:
            for e in rep.events:
                fh.write(json.dumps(e, sort_keys=True) + "\n")
    k = int(rep.config.get("run", {}).get("export_estimator", 0))
    ex = rep.raw.est_expect if rep.raw is not None else None
    if k and ex is not None:
        for i in range(min(k, ex.shape[0])):
            write_expectation_csv(out / f"{name}_estimator_{i}.csv", rep.raw.t_rec, ex[i])


def _safe(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_=." else "_" for c in label) or "run"


def run_experiment(doc: dict, base_dir=None, overrides: dict | None = None) -> list:
    """Expand variants/sweeps/steering comparisons and run each; returns reports."""
    reports = []
    for label, d in expand(doc):
        if overrides:
            d = _apply_overrides(d, overrides)
        cfg = parse_config(d, base_dir)
        reports.append(run_ensemble(cfg, label))
    return reports


def _apply_overrides(doc: dict, ov: dict) -> dict:
    doc = json.loads(json.dumps(doc))
    run = doc.setdefault("run", {})
    for k in ("seed", "trajectories", "threads"):
        if ov.get(k) is not None:
            run[k] = ov[k]
    return doc


def write_experiment(reports: list, doc: dict, out_dir, events: bool = False) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = {"name": doc.get("name", "run"), "version": __version__, "config": doc,
             "runs": []}
    for rep in reports:
        name = _safe(f"{doc.get('name', 'run')}_{rep.label}" if rep.label else
                     doc.get("name", "run"))
        write_report(rep, out, name, events)
        index["runs"].append({"label": rep.label, "files": name, "summary": rep.summary})
    with open(out / "report.json", "w") as fh:
        json.dump(index, fh, indent=1, sort_keys=True)
    return index


def prop1_sweep(doc: dict, base_dir=None, overrides: dict | None = None) -> list:
    """Monte Carlo jump fraction versus the closed form at each omega/kappa."""
    p1 = doc.get("prop1", {})
    values = p1.get("omega_over_kappa", [0.01, 0.03, 0.1])
    base = {k: v for k, v in doc.items() if k != "prop1"}
    if overrides:
        base = _apply_overrides(base, overrides)
    noise = base.get("noise") or {}
    if noise.get("type", "none") != "none" and float(noise.get("gamma", 0) or 0) != 0:
        raise ConfigError("noise: the jump-probability sweep requires gamma = 0")
    rows = []
    for v in values:
        d = json.loads(json.dumps(base))
        kappa = float(d["gate"].get("kappa", 1.0))
        d["gate"]["omega"] = float(v) * kappa
        d.setdefault("run", {})["estimator"] = False
        cfg = parse_config(d, base_dir)
        rep = run_ensemble(cfg, f"omega/kappa={v:g}")
        p = rep.summary["jump_fraction"]
        formula = 1 - confinement_probability(cfg.spec)
        rows.append({"omega_over_kappa": float(v), "mc_jump_fraction": p,
                     "analytic_p_jump": float(formula),
                     "binomial_stderr": binomial_stderr(formula, rep.n), "n": rep.n})
    return rows


def write_prop1(rows: list, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "prop1.csv", "w") as fh:
        fh.write("omega_over_kappa,mc_jump_fraction,analytic_p_jump,binomial_stderr,n\n")
        for r in rows:
            fh.write(f"{r['omega_over_kappa']:.6g},{r['mc_jump_fraction']:.6g},"
                     f"{r['analytic_p_jump']:.6g},{r['binomial_stderr']:.6g},{r['n']}\n")
    with open(out / "prop1.json", "w") as fh:
        json.dump({"rows": rows, "version": __version__}, fh, indent=1)


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("holosteer.presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)
