"""Command-line entry point: run, preset, check-code, decode-table, prop1."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_code, load_config, parse_config
from .experiments import (PRESETS, load_preset, prop1_sweep, run_experiment,
                          write_experiment, write_prop1)
from .linalg import NumericalHealthError
from .pauli import (CodeError, PauliOperator, check_rotation_operator, effective_distance,
                    search_rotation_operator)
from .steer import build_decode_table

EXIT_OK, EXIT_CONFIG, EXIT_HEALTH = 0, 2, 3


def _overrides(args) -> dict:
    return {"seed": args.seed, "trajectories": args.trajectories, "threads": args.threads}


def _out_dir(args, doc) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    return Path(doc.get("output", {}).get("dir", "out"))


def _run_doc(doc, args, base_dir) -> None:
    if "prop1" in doc:
        rows = prop1_sweep(doc, base_dir, _overrides(args))
        write_prop1(rows, _out_dir(args, doc))
        for r in rows:
            print(f"omega/kappa={r['omega_over_kappa']:g} mc={r['mc_jump_fraction']:.4f} "
                  f"formula={r['analytic_p_jump']:.4f} se={r['binomial_stderr']:.4f}")
        return
    reports = run_experiment(doc, base_dir, _overrides(args))
    events = bool(args.events or doc.get("output", {}).get("events", False))
    write_experiment(reports, doc, _out_dir(args, doc), events)
    for rep in reports:
        s = rep.summary
        print(f"{rep.label or 'run'}: gate={s['final_gate_fidelity']['mean']:.4f}"
              f"+-{s['final_gate_fidelity']['stderr']:.4f} "
              f"target={s['target_fidelity']['mean']:.4f}"
              f"+-{s['target_fidelity']['stderr']:.4f} jumps={s['jump_fraction']:.3f}")


def cmd_run(args) -> None:
    doc = load_config(args.config)
    _run_doc(doc, args, Path(args.config).parent)


def cmd_preset(args) -> None:
    _run_doc(load_preset(args.name), args, None)


def cmd_prop1(args) -> None:
    doc = load_config(args.config)
    doc.setdefault("prop1", {})
    _run_doc(doc, args, Path(args.config).parent)


def cmd_check_code(args) -> None:
    doc = load_config(args.code)
    try:
        code = load_code(doc, Path(args.code).parent)
    except CodeError as exc:
        raise ConfigError(f"code: {exc}") from exc
    out = {"code": code.to_dict(), "effective_distance": effective_distance(code)}
    if args.H:
        H = PauliOperator.from_string(args.H)
        if args.X:
            out["check"] = check_rotation_operator(code, PauliOperator.from_string(args.X), H)
        found = search_rotation_operator(code, H)
        out["search"] = None if found is None else str(found)
    print(json.dumps(out, indent=1))


def cmd_decode_table(args) -> None:
    cfg = parse_config(load_config(args.config), Path(args.config).parent)
    try:
        table = build_decode_table(cfg.code, cfg.spec.H, cfg.spec.X)
    except CodeError as exc:
        raise ConfigError(f"code: {exc}") from exc
    print(table.to_json())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holosteer", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trajectories", type=int)
        sp.add_argument("--out-dir")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--events", action="store_true", help="write per-trajectory event logs")

    sp = sub.add_parser("run", help="run a configuration file")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("preset", help="run a bundled experiment")
    sp.add_argument("name", choices=PRESETS)
    common(sp)
    sp.set_defaults(func=cmd_preset)
    sp = sub.add_parser("prop1", help="jump fraction versus the closed form")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(func=cmd_prop1)
    sp = sub.add_parser("check-code", help="code summary and rotation-operator checks")
    sp.add_argument("code")
    sp.add_argument("--H")
    sp.add_argument("--X")
    sp.set_defaults(func=cmd_check_code)
    sp = sub.add_parser("decode-table", help="print the path decoding table")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_decode_table)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalHealthError as exc:
        print(f"numerical health failure: {exc}", file=sys.stderr)
        return EXIT_HEALTH
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
