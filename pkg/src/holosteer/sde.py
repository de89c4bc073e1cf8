"""Reference (dense, lab-frame) stochastic integrators for continuous stabilizer
measurement.

These follow the Ito equations term by term with Euler-Maruyama steps. The
ensemble runner in :mod:`holosteer.engine` uses an equivalent positivity-
preserving scheme in the rotating frame; this module is its oracle.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import BASE, GateSpec, PathState, path_unitary
from .linalg import NumericalHealthError, pauli_to_matrix
from .pauli import PauliOperator
from .noise import (BitFlipJumps, OneOverFNoise, StaticNoise, WhiteNoise,
                    sample_realization)


class StepSizeError(ArithmeticError):
    pass


class PositivityWarning(UserWarning):
    pass


def D_super(A: np.ndarray, rho: np.ndarray) -> np.ndarray:
    AdA = A.conj().T @ A
    return A @ rho @ A.conj().T - 0.5 * (AdA @ rho + rho @ AdA)


def H_super(A: np.ndarray, rho: np.ndarray) -> np.ndarray:
    ex = np.trace(A @ rho)
    return A @ rho + rho @ A.conj().T - 2 * ex.real * rho


def rotated_generators(spec: GateSpec, path: PathState, t: float) -> list:
    V = path_unitary(spec, path, t)
    return [V @ pauli_to_matrix(g) @ V.conj().T for g in spec.code.generators]


def measurement_current(expectations, dW, kappa: float, dt: float) -> np.ndarray:
    """Q_j = <g_j> + dW_j / (2 sqrt(kappa) dt)."""
    return np.asarray(expectations) + np.asarray(dW) / (2 * np.sqrt(kappa) * dt)


def sse_step(psi: np.ndarray, gens: list, kappa: float, dt: float, rng=None,
             dW=None) -> tuple:
    """One Euler-Maruyama step of the SSE; returns (psi, dW, expectations)."""
    if dW is None:
        dW = rng.normal(0.0, np.sqrt(dt), size=len(gens))
    psi = np.asarray(psi, dtype=complex)
    ex = np.array([np.vdot(psi, g @ psi).real for g in gens])
    dpsi = np.zeros_like(psi)
    for g, e, w in zip(gens, ex, dW):
        a = g @ psi - e * psi
        dpsi += -0.5 * kappa * (g @ a - e * a) * dt + np.sqrt(kappa) * a * w
    out = psi + dpsi
    nrm = np.linalg.norm(out)
    if nrm < 1e-6:
        raise StepSizeError("state norm collapsed during SSE step")
    return out / nrm, np.asarray(dW), ex


def sme_step(rho: np.ndarray, gens: list, diss: list, kappa: float, dt: float,
             rng=None, dW=None, check_positivity: bool = False) -> tuple:
    """One Euler-Maruyama step of the noisy SME; returns (rho, Q, dW)."""
    if dW is None:
        dW = rng.normal(0.0, np.sqrt(dt), size=len(gens))
    ex = np.array([np.trace(g @ rho).real for g in gens])
    drho = np.zeros_like(rho)
    for rate, A in diss:
        drho += rate * D_super(A, rho) * dt
    for g, w in zip(gens, dW):
        drho += kappa * D_super(g, rho) * dt + np.sqrt(kappa) * H_super(g, rho) * w
    out = rho + drho
    out = 0.5 * (out + out.conj().T)
    out /= np.trace(out).real
    if check_positivity:
        out = clamp_positivity(out)
    return out, measurement_current(ex, dW, kappa, dt), np.asarray(dW)


def clamp_positivity(rho: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(rho)
    if vals.min() >= 0:
        return rho
    if vals.min() < -1e-6:
        warnings.warn(f"density matrix eigenvalue {vals.min():.2e}", PositivityWarning)
    vals = np.clip(vals, 0, None)
    out = (vecs * vals) @ vecs.conj().T
    return out / np.trace(out).real


def confinement_probability(spec: GateSpec) -> float:
    """No-jump probability 1/2 [1 + (1 - w theta^2 / 2 pi kappa) exp(-4 pi w / kappa)]."""
    r = spec.omega / spec.kappa
    return 0.5 * (1 + (1 - r * spec.theta ** 2 / (2 * np.pi)) * np.exp(-4 * np.pi * r))


def jump_probability(spec: GateSpec) -> float:
    return 1.0 - confinement_probability(spec)


# --- reference trajectory -----------------------------------------------------------

@dataclass
class MeasurementRecord:
    dt: float
    t: list = field(default_factory=list)
    Q: list = field(default_factory=list)

    def append(self, t, Q):
        self.t.append(t)
        self.Q.append(np.asarray(Q, dtype=float).copy())

    def rows(self):
        for t, q in zip(self.t, self.Q):
            for j, v in enumerate(q):
                yield t, j, float(v)


@dataclass
class TrajectoryState:
    psi: np.ndarray
    t: float
    record: MeasurementRecord
    events: list
    path: PathState = BASE


def _steps_for(T: float, dt: float):
    """Step count and the nearest step size that divides T exactly."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = max(1, int(round(T / dt)))
    return steps, T / steps


def run_trajectory(spec: GateSpec, noise, dt: float, rng, psi0=None, controller=None,
                   injected=()) -> TrajectoryState:
    """Dense lab-frame SSE trajectory over [0, T].

    ``controller`` (optional) is called as controller(t, Q, path) after every
    step and may return a new PathState. ``injected`` lists (time, Pauli) pairs
    applied as instantaneous errors.
    """
    n = spec.code.n
    steps, dt = _steps_for(spec.T, dt)
    psi = spec.L0 @ (np.array([1, 1]) / np.sqrt(2)) if psi0 is None else np.asarray(psi0, complex)
    psi = psi.astype(complex)
    record = MeasurementRecord(dt)
    events = []
    path = BASE
    real = sample_realization(noise, n, spec.T, dt, rng)
    sx = [pauli_to_matrix(_sx(n, j)) for j in range(n)]
    flips = []
    if isinstance(noise, BitFlipJumps):
        count = rng.poisson(noise.gamma * spec.T * n)
        flips = sorted(zip(rng.random(count) * spec.T, rng.integers(0, n, count)))
    inj = sorted(((float(t), pauli_to_matrix(p), str(p)) for t, p in injected),
                 key=lambda e: e[0])
    for k in range(steps):
        t = k * dt
        gens = rotated_generators(spec, path, t + dt)
        psi, dW, ex = sse_step(psi, gens, spec.kappa, dt, rng)
        if isinstance(noise, (StaticNoise, OneOverFNoise)):
            lam = real.values([t])[0]
            Herr = sum(l * m for l, m in zip(lam, sx))
            psi = psi - 1j * dt * (Herr @ psi)
            psi /= np.linalg.norm(psi)
        elif isinstance(noise, WhiteNoise):
            w = rng.normal(0.0, np.sqrt(noise.gamma * dt), size=n)
            for wj, m in zip(w, sx):
                psi = np.cos(wj) * psi - 1j * np.sin(wj) * (m @ psi)
        while flips and flips[0][0] < t + dt:
            tf, q = flips.pop(0)
            psi = sx[q] @ psi
            events.append({"t": tf, "kind": "injected_jump", "error": str(_sx(n, q))})
        while inj and inj[0][0] < t + dt:
            tf, m, label = inj.pop(0)
            psi = m @ psi
            events.append({"t": tf, "kind": "injected_jump", "error": label})
        Q = measurement_current(ex, dW, spec.kappa, dt)
        record.append(t + dt, Q)
        if controller is not None:
            new = controller(t + dt, Q, path)
            if new is not None and new != path:
                path = new
                events.append({"t": t + dt, "kind": "path_switch",
                               "theta_tilde": path.theta_tilde})
        if not np.isfinite(psi).all():
            raise NumericalHealthError("non-finite state")
    return TrajectoryState(psi, spec.T, record, events, path)


def write_record_csv(record: MeasurementRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "generator_index", "Q"])
        for t, j, q in record.rows():
            w.writerow([f"{t:.10g}", j, repr(q)])


def write_events_jsonl(events, path) -> None:
    """One JSON object per line, each with at least ``t`` and ``kind``."""
    with open(path, "w") as fh:
        for e in events:
            fh.write(json.dumps(e, sort_keys=True) + "\n")


def _sx(n, j):
    return PauliOperator.single(n, j + 1, "X")
