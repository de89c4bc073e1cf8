"""Error classes, the path decoding table, and correction angles for steering."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .geometry import (BASE, GateSpec, PathState, beta_X, commutation_case, error_angles,
                       gate_unitary, horizontal_lift, lift_unitary, path_unitary)
from .linalg import frame_fidelity, pauli_to_matrix
from .pauli import (CodeError, PauliOperator, StabilizerCode, as_pauli, commutes,
                    syndrome)

LATE_JUMP_TOL = 1e-6


class ErrorClass(IntEnum):
    CLASS0 = 0
    CLASS1 = 1
    CLASS2 = 2


class LateJumpError(ArithmeticError):
    pass


def classify(E: PauliOperator, subspace: str, H: PauliOperator, X: PauliOperator) -> ErrorClass:
    """Class 0: no logical error; class 1: Pauli logical error; class 2: analog error."""
    cH, cX = commutes(E, H), commutes(E, X)
    if subspace == "E" and cH:
        return ErrorClass.CLASS0
    if subspace == "EX" and not cH and not cX:
        return ErrorClass.CLASS0
    if subspace == "EX" and not cH and cX:
        return ErrorClass.CLASS1
    return ErrorClass.CLASS2


@dataclass(frozen=True)
class DecodeEntry:
    syndrome: str
    error: PauliOperator      # the correctable error E
    subspace: str             # "E", "EX", or "X" (measurement-induced, E = I)
    label: PauliOperator      # Pauli frame E or E X
    cls: ErrorClass
    case: int                 # commutation case of E with (H, X)

    def to_dict(self) -> dict:
        return {"syndrome": self.syndrome, "error": self.label.unsigned().label(),
                "class": int(self.cls)}


@dataclass(frozen=True)
class DecodeTable:
    entries: tuple

    def lookup(self, syn: str):
        for e in self.entries:
            if e.syndrome == syn:
                return e
        return None

    def to_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.entries], indent=1)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


def build_decode_table(code: StabilizerCode, H, X) -> DecodeTable:
    H = as_pauli(H, code.n)
    X = as_pauli(X, code.n)
    rows = []
    for E in code.correctable:
        sub = "E"
        rows.append((E, sub, E))
    for E in code.correctable:
        if E.weight == 0:
            continue
        rows.append((E, "EX", E * X))
    rows.append((PauliOperator.identity(code.n), "X", X))
    entries, seen = [], {}
    for E, sub, lab in rows:
        s = str(syndrome(code, lab))
        key = (lab.xmask, lab.zmask)
        if s in seen and seen[s] != key:
            raise CodeError(f"syndrome collision on {s}: code unsuitable for decoding")
        seen[s] = key
        entries.append(DecodeEntry(s, E, sub, lab.unsigned(), classify(E, sub, H, X),
                                   commutation_case(E, H, X)))
    return DecodeTable(tuple(entries))


def sinc(x: float) -> float:
    return 1.0 if x == 0 else float(np.sin(x) / x)


def denominator(spec: GateSpec, tau: float) -> float:
    """1 - (tau / T)(1 - sinc(2 w tau))."""
    return 1.0 - tau / spec.T * (1.0 - sinc(2 * spec.omega * tau))


def entry_beta(spec: GateSpec, entry: DecodeEntry, tau: float) -> float:
    """Erroneous rotation angle of the instantaneous error state of ``entry``."""
    _, bE, bEX = error_angles(spec, entry.case, tau)
    if entry.subspace == "E":
        return bE
    if entry.subspace == "X" or bEX is None:
        # reached through a measurement-induced X jump out of the E space
        return beta_X(spec, tau)
    return bEX


def correction_angle(cls: ErrorClass, spec: GateSpec, tau: float, beta: float) -> float:
    """Class formulas: 0; (pi/2)/D; -(beta + 2 theta)/D."""
    if cls == ErrorClass.CLASS0:
        return 0.0
    D = denominator(spec, tau)
    if abs(D) < LATE_JUMP_TOL:
        raise LateJumpError(f"correction denominator {D:.2e} at tau={tau}")
    if cls == ErrorClass.CLASS1:
        return (np.pi / 2) / D
    return -(beta + 2 * spec.theta) / D


def case_angle(spec: GateSpec, entry: DecodeEntry, tau: float) -> float:
    """Case-by-case new rotation angle (the updated-angle table).

    The E X column of the fully commuting case is empty in the table; that
    space is only reached by a measurement-induced jump, which anticommutes
    with H, so the class-2 form with beta_X is used.
    """
    beta = entry_beta(spec, entry, tau)
    D = denominator(spec, tau)
    case, sub = entry.case, entry.subspace
    if sub == "E" and case in (1, 2):
        return 0.0
    if sub == "EX" and case == 4:
        return 0.0
    if abs(D) < LATE_JUMP_TOL:
        raise LateJumpError(f"correction denominator {D:.2e} at tau={tau}")
    if sub == "EX" and case == 3:
        return beta / D
    return -(beta + 2 * spec.theta) / D


@dataclass(frozen=True)
class SteeringDecision:
    tau: float
    theta_tilde: float
    new_path: PathState
    entry: DecodeEntry


def steer(syn: str, tau: float, spec: GateSpec, table: DecodeTable):
    """Decision for a detected syndrome at ``tau``; None for unknown syndromes.

    Late jumps (vanishing denominator) keep the current path.
    """
    entry = table.lookup(syn)
    if entry is None:
        return None
    try:
        tt = case_angle(spec, entry, tau)
    except LateJumpError:
        return SteeringDecision(tau, 0.0, BASE, entry)
    path = BASE if tt == 0.0 else PathState(tau, tt)
    return SteeringDecision(tau, tt, path, entry)


def post_jump_frame(spec: GateSpec, entry: DecodeEntry, tau: float) -> np.ndarray:
    """U(tau) exp(i beta H) E' L(0): the error frame right after the jump."""
    Ep = pauli_to_matrix(entry.label)
    beta = entry_beta(spec, entry, tau)
    rot = np.cos(beta) * np.eye(spec.dim) + 1j * np.sin(beta) * spec.Hm
    return lift_unitary(spec, tau) @ rot @ Ep @ spec.L0


def emulated_final_frame_check(spec: GateSpec, entry: DecodeEntry, tau: float,
                               decision: SteeringDecision | None = None,
                               dt: float | None = None) -> float:
    """Fidelity of the transported error frame at T with E' G L(0)."""
    if decision is None:
        decision = steer(entry.syndrome, tau, spec, build_decode_table(
            spec.code, spec.H, spec.X))
    Lt = post_jump_frame(spec, entry, tau)
    path = decision.new_path
    LT, _ = horizontal_lift(spec, path, Lt, tau, spec.T, dt)
    target = pauli_to_matrix(entry.label) @ gate_unitary(spec) @ spec.L0
    return frame_fidelity(target, LT)
