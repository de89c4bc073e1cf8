"""Syndrome tracking from measurement currents with a twin-model estimator.

The estimator density matrix follows the noisy stochastic master equation
driven by the innovation Q_j - <g_j>; its generator expectations are read out
with a threshold, a hold window and hysteresis.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .geometry import GateSpec, PathState
from .linalg import code_basis
from .pauli import PauliOperator, StabilizerCode, Syndrome
from .sde import D_super, H_super, clamp_positivity, rotated_generators
from .steer import DecodeTable, steer

DEFAULT_THRESHOLD = 0.8
DEFAULT_HOLD = 5.0


@dataclass
class EstimatorState:
    rho_hat: np.ndarray
    expectations: np.ndarray
    syndrome: tuple
    last_change: float = 0.0
    counters: np.ndarray | None = None
    bits: list | None = None

    def __post_init__(self):
        if self.counters is None:
            self.counters = np.zeros(len(self.syndrome))
        if self.bits is None:
            self.bits = list(self.syndrome)


@dataclass(frozen=True)
class JumpEvent:
    detect_time: float
    syndrome: str
    decoded_error: PauliOperator | None

    @property
    def recognized(self) -> bool:
        return self.decoded_error is not None

    def to_dict(self) -> dict:
        kind = "detected_jump" if self.recognized else "unrecognized_syndrome"
        out = {"t": self.detect_time, "kind": kind, "syndrome": self.syndrome}
        if self.recognized:
            out["error"] = self.decoded_error.unsigned().label()
        return out


def estimator_init(code: StabilizerCode) -> EstimatorState:
    """Maximally mixed code state with the trivial syndrome."""
    B = code_basis(code)
    rho = B @ B.conj().T / B.shape[1]
    return EstimatorState(rho, np.ones(code.r), (0,) * code.r)


def estimator_step(est: EstimatorState, Q, gens: list, dissipators: list, kappa: float,
                   dt: float) -> EstimatorState:
    """Euler step of d rho = L_N dt + k sum D[g] dt + 2k sum H[g] (Q - <g>) dt."""
    rho = est.rho_hat
    ex = np.array([np.trace(g @ rho).real for g in gens])
    drho = np.zeros_like(rho)
    for rate, A in dissipators:
        drho += rate * D_super(A, rho) * dt
    for g, q, e in zip(gens, Q, ex):
        drho += kappa * D_super(g, rho) * dt + 2 * kappa * H_super(g, rho) * (q - e) * dt
    out = rho + drho
    out = 0.5 * (out + out.conj().T)
    out /= np.trace(out).real
    out = clamp_positivity(out)
    new_ex = np.array([np.trace(g @ out).real for g in gens])
    return EstimatorState(out, new_ex, est.syndrome, est.last_change, est.counters.copy(),
                          list(est.bits))


def syndrome_readout(est: EstimatorState, threshold: float = DEFAULT_THRESHOLD,
                     hold: float = DEFAULT_HOLD, dt: float = 0.0, t: float = 0.0):
    """Advance the hold counters by dt and return the published syndrome bits.

    A bit switches to 1 after its expectation stays below -threshold for the
    hold window, and back to 0 after staying above +threshold; anything in
    between keeps the previous value. The syndrome is published only while no
    bit is part-way through a transition, so bits that flip together (a
    weight-two syndrome) are reported together.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    bits = est.bits
    for j, e in enumerate(est.expectations):
        cond = e < -threshold if bits[j] == 0 else e > threshold
        if cond:
            est.counters[j] += dt
            if est.counters[j] >= hold - 1e-12:
                bits[j] = 1 - bits[j]
                est.counters[j] = 0.0
        else:
            est.counters[j] = 0.0
    if not np.any(est.counters > 0):
        new = tuple(int(b) for b in bits)
        if new != est.syndrome:
            est.last_change = t
        est.syndrome = new
    return est.syndrome


def _syn_str(bits) -> str:
    return "".join(str(int(b)) for b in bits)


def detect_jump(previous, current, t: float, table: DecodeTable | None = None):
    """JumpEvent when the syndrome changed, else None."""
    if tuple(previous) == tuple(current):
        return None
    s = _syn_str(current)
    entry = table.lookup(s) if table is not None else None
    return JumpEvent(t, s, entry.label if entry is not None else None)


@dataclass
class EstimatorController:
    """Twin-model filter plus single-jump steering, usable as a run_trajectory hook."""
    spec: GateSpec
    table: DecodeTable | None = None
    dissipators: list = field(default_factory=list)
    threshold: float = DEFAULT_THRESHOLD
    hold: float = DEFAULT_HOLD
    steering: bool = True
    dt: float = 1e-3
    rho0: np.ndarray | None = None
    state: EstimatorState = None
    events: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    decision: object = None

    def __post_init__(self):
        self.state = estimator_init(self.spec.code)
        if self.rho0 is not None:
            self.state.rho_hat = np.asarray(self.rho0, dtype=complex)

    def __call__(self, t: float, Q, path: PathState):
        gens = rotated_generators(self.spec, path, t)
        prev = self.state.syndrome
        self.state = estimator_step(self.state, Q, gens, self.dissipators, self.spec.kappa,
                                    self.dt)
        cur = syndrome_readout(self.state, self.threshold, self.hold, self.dt, t)
        self.trace.append((t, self.state.expectations.copy()))
        ev = detect_jump(prev, cur, t, self.table)
        if ev is None:
            return None
        self.events.append(ev)
        if not (self.steering and ev.recognized and self.decision is None):
            return None
        dec = steer(ev.syndrome, t, self.spec, self.table)
        if dec is None or dec.theta_tilde == 0.0:
            return None
        self.decision = dec
        return dec.new_path


def write_expectation_csv(path, times, expectations) -> None:
    """CSV with columns t, generator_index, expectation."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "generator_index", "expectation"])
        for t, row in zip(times, expectations):
            for j, v in enumerate(row):
                w.writerow([f"{t:.10g}", j, f"{v:.10g}"])


def syndrome_of_bits(bits) -> Syndrome:
    return Syndrome(tuple(int(b) for b in bits))
