"""Gate and target-state fidelities, streaming statistics, and curve CSV output."""
from __future__ import annotations

import csv

import numpy as np

from .geometry import GateSpec, gate_unitary, instantaneous_code_state
from .linalg import pauli_to_matrix


def _overlap(state: np.ndarray, ref: np.ndarray) -> float:
    state = np.asarray(state)
    if state.ndim == 1:
        return float(abs(np.vdot(ref, state)) ** 2)
    return float(np.vdot(ref, state @ ref).real)


def gate_fidelity(state: np.ndarray, spec: GateSpec, t: float, psi_bar: np.ndarray) -> float:
    """<psi_bar(t)| rho |psi_bar(t)> against the instantaneous code state."""
    ref = instantaneous_code_state(spec, psi_bar, t)
    return float(np.clip(_overlap(state, ref), 0.0, 1.0))


def frame_operators(spec: GateSpec) -> list:
    """The Pauli frames E in the correctable set, X, and E X (E not identity)."""
    corr = list(spec.code.correctable)
    return corr + [spec.X] + [E * spec.X for E in corr if E.weight > 0]


def target_states(spec: GateSpec, psi_bar: np.ndarray) -> np.ndarray:
    G = gate_unitary(spec)
    return np.array([pauli_to_matrix(E) @ G @ psi_bar for E in frame_operators(spec)])


def target_state_fidelity(state: np.ndarray, spec: GateSpec, psi_bar: np.ndarray) -> float:
    """max over Pauli frames E of <psi_bar| G^dag E^dag rho E G |psi_bar>."""
    return max(_overlap(state, ref) for ref in target_states(spec, psi_bar))


def batch_target_fidelity(psis: np.ndarray, spec: GateSpec, psi_bar: np.ndarray) -> np.ndarray:
    """Vectorized target-state fidelity for an array of pure final states."""
    tg = target_states(spec, psi_bar)
    return (np.abs(np.asarray(psis).conj() @ tg.T) ** 2).max(axis=1)


class Welford:
    """Per-bin running mean and variance; partial results merge in a fixed order."""

    def __init__(self, shape=()):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add_batch(self, x: np.ndarray) -> "Welford":
        x = np.asarray(x, dtype=float)
        other = Welford(self.mean.shape)
        other.n = x.shape[0]
        if other.n:
            other.mean = x.mean(axis=0)
            other.m2 = ((x - other.mean) ** 2).sum(axis=0)
        return self.merge(other)

    def merge(self, other: "Welford") -> "Welford":
        n = self.n + other.n
        if n == 0:
            return self
        delta = other.mean - self.mean
        self.mean = self.mean + delta * other.n / n
        self.m2 = self.m2 + other.m2 + delta ** 2 * self.n * other.n / n
        self.n = n
        return self

    @property
    def std(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.n - 1))

    @property
    def stderr(self) -> np.ndarray:
        return self.std / np.sqrt(max(self.n, 1))


def summarize(x: np.ndarray) -> dict:
    w = Welford().add_batch(np.asarray(x, dtype=float))
    return {"mean": float(w.mean), "stderr": float(w.stderr), "n": int(w.n)}


def binomial_stderr(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1 - p), 0.0) / n))


def write_curve_csv(path, t, mean, stderr, n) -> None:
    """Curve CSV with columns t, mean, stderr, n."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean", "stderr", "n"])
        for row in zip(t, mean, stderr):
            w.writerow([f"{row[0]:.10g}", f"{row[1]:.12g}", f"{row[2]:.12g}", n])
