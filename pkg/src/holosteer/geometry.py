"""Evolution paths, Zeno-limit transport, horizontal lifts and error-state angles.

The path is V(t) = exp(i w_H t H) exp(i w t X) with w_H = theta w / 2pi. After a
steering switch at tau it becomes exp(i w~ (t - tau) H) V(t) with
w~ = theta~ w / 2pi. All exponentials are of involutory Paulis and are
evaluated with the two-term formula.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import (code_projector, logical_basis, pauli_to_matrix, polar_unitary,
                     sector_projector)
from .pauli import PauliOperator, StabilizerCode, as_pauli, commutes


class RangeError(ValueError):
    pass


class AccuracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GateSpec:
    code: StabilizerCode
    H: PauliOperator
    X: PauliOperator
    theta: float
    omega: float
    kappa: float = 1.0
    _mats: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "H", as_pauli(self.H, self.code.n))
        object.__setattr__(self, "X", as_pauli(self.X, self.code.n))
        if self.omega <= 0 or self.kappa <= 0:
            raise ValueError("omega and kappa must be positive")

    @property
    def omega_H(self) -> float:
        return self.theta * self.omega / (2 * np.pi)

    @property
    def T(self) -> float:
        return 2 * np.pi / self.omega

    def _mat(self, name):
        if name not in self._mats:
            if name == "H":
                self._mats[name] = pauli_to_matrix(self.H)
            elif name == "X":
                self._mats[name] = pauli_to_matrix(self.X)
            elif name == "P0":
                self._mats[name] = code_projector(self.code)
            elif name == "L0":
                self._mats[name] = logical_basis(self.code)
        return self._mats[name]

    @property
    def Hm(self) -> np.ndarray:
        return self._mat("H")

    @property
    def Xm(self) -> np.ndarray:
        return self._mat("X")

    @property
    def P0(self) -> np.ndarray:
        return self._mat("P0")

    @property
    def L0(self) -> np.ndarray:
        return self._mat("L0")

    @property
    def dim(self) -> int:
        return 1 << self.code.n


@dataclass(frozen=True)
class PathState:
    """Base path when ``tau`` is None, otherwise steered at ``tau`` by ``theta_tilde``."""
    tau: float | None = None
    theta_tilde: float = 0.0

    @property
    def steered(self) -> bool:
        return self.tau is not None

    def rate_and_offset(self, spec: GateSpec, t: float):
        """H-angle alpha(t) = rate * t + offset for the active segment."""
        if self.tau is None or t < self.tau:
            return spec.omega_H, 0.0
        wt = self.theta_tilde * spec.omega / (2 * np.pi)
        return spec.omega_H + wt, -wt * self.tau


BASE = PathState()


def _rot(P: np.ndarray, a: float) -> np.ndarray:
    return np.cos(a) * np.eye(P.shape[0]) + 1j * np.sin(a) * P


def _check_t(spec: GateSpec, t: float):
    if t < -1e-12 or t > spec.T * (1 + 1e-12):
        raise RangeError(f"t={t} outside [0, T={spec.T}]")


def path_angles(spec: GateSpec, path: PathState, t: float):
    rate, off = path.rate_and_offset(spec, t)
    return rate * t + off, spec.omega * t


def path_unitary(spec: GateSpec, path: PathState, t: float) -> np.ndarray:
    _check_t(spec, t)
    a, b = path_angles(spec, path, t)
    return _rot(spec.Hm, a) @ _rot(spec.Xm, b)


def path_generator(spec: GateSpec, path: PathState, t: float) -> np.ndarray:
    """V^dagger dV/dt = i (rate H exp(2i w t X) + w X)."""
    rate, _ = path.rate_and_offset(spec, t)
    return 1j * (rate * spec.Hm @ _rot(spec.Xm, 2 * spec.omega * t) + spec.omega * spec.Xm)


def partial_angle(spec: GateSpec, t) -> float:
    """theta_bar(t) = (theta / 4pi) sin(2 w t)."""
    return spec.theta / (4 * np.pi) * np.sin(2 * spec.omega * np.asarray(t))


def lift_unitary(spec: GateSpec, t: float) -> np.ndarray:
    """U(t) = V(t) exp(-i theta_bar(t) H) on the base path."""
    return path_unitary(spec, BASE, t) @ _rot(spec.Hm, -partial_angle(spec, t))


def gate_unitary(spec: GateSpec) -> np.ndarray:
    return _rot(spec.Hm, spec.theta)


def _require_code_state(spec: GateSpec, psi0: np.ndarray):
    if np.linalg.norm(spec.P0 @ psi0 - psi0) > 1e-8:
        raise ValueError("initial state is not in the code space")


def instantaneous_code_state(spec: GateSpec, psi0: np.ndarray, t: float) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=complex)
    _require_code_state(spec, psi0)
    return lift_unitary(spec, t) @ psi0


# --- Zeno-limit transport ---------------------------------------------------

def _v_apply(spec, path, t, psi):
    a, b = path_angles(spec, path, t)
    v = np.cos(b) * psi + 1j * np.sin(b) * (spec.Xm @ psi)
    return np.cos(a) * v + 1j * np.sin(a) * (spec.Hm @ v)


def _vdag_apply(spec, path, t, psi):
    a, b = path_angles(spec, path, t)
    v = np.cos(a) * psi - 1j * np.sin(a) * (spec.Hm @ psi)
    return np.cos(b) * v - 1j * np.sin(b) * (spec.Xm @ v)


def zeno_rhs(spec: GateSpec, path: PathState, t: float, psi: np.ndarray,
             P0: np.ndarray | None = None) -> np.ndarray:
    """[Omega, P(t)] psi with Omega = V' V^dagger and P(t) = V P0 V^dagger."""
    P0 = spec.P0 if P0 is None else P0
    gen = path_generator(spec, path, t)

    def proj(v):
        return _v_apply(spec, path, t, P0 @ _vdag_apply(spec, path, t, v))

    def omega(v):
        return _v_apply(spec, path, t, gen @ _vdag_apply(spec, path, t, v))

    return omega(proj(psi)) - proj(omega(psi))


def zeno_propagate(spec: GateSpec, psi0: np.ndarray, dt: float, steps: int,
                   path: PathState = BASE, t0: float = 0.0,
                   P0: np.ndarray | None = None) -> np.ndarray:
    """RK4 integration of the Zeno-limit equation with per-step renormalization.

    ``P0`` selects the syndrome space being transported (code space by default).
    """
    psi = np.asarray(psi0, dtype=complex).copy()
    if steps * dt > spec.T * (1 + 1e-9) - t0 + 1e-12:
        raise RangeError("propagation extends beyond T")
    warned = False
    for k in range(steps):
        t = t0 + k * dt
        k1 = zeno_rhs(spec, path, t, psi, P0)
        k2 = zeno_rhs(spec, path, t + dt / 2, psi + dt / 2 * k1, P0)
        k3 = zeno_rhs(spec, path, t + dt / 2, psi + dt / 2 * k2, P0)
        k4 = zeno_rhs(spec, path, t + dt, psi + dt * k3, P0)
        psi = psi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        nrm = np.linalg.norm(psi)
        if abs(nrm - 1) > 1e-3 and not warned:
            warnings.warn(f"renormalization correction {abs(nrm - 1):.2e} at t={t:.4g}",
                          AccuracyWarning)
            warned = True
        psi /= nrm
    return psi


# --- horizontal lift ------------------------------------------------------------

def horizontal_lift(spec: GateSpec, path: PathState, L0: np.ndarray, t0: float,
                    t1: float, dt: float | None = None, base_frame: np.ndarray | None = None):
    """Integrate dh/dt = -F^dagger V^dagger V' F h from h(t0) = I.

    ``F`` is the rest frame V(t0)^dagger L0 so that L(t0) = L0. Returns
    (L(t1), h(t1)) with L(t1) = V(t1) F h(t1).
    """
    L0 = np.asarray(L0, dtype=complex)
    if np.linalg.norm(L0.conj().T @ L0 - np.eye(L0.shape[1])) > 1e-10:
        raise ValueError("frame columns are not orthonormal")
    F = path_unitary(spec, path, t0).conj().T @ L0 if base_frame is None else base_frame
    K = F.shape[1]
    span = t1 - t0
    if span == 0:
        return L0.copy(), np.eye(K, dtype=complex)
    steps = max(100, int(np.ceil(abs(span) / dt))) if dt else 2000
    h_dt = span / steps

    def rhs(t, h):
        return -(F.conj().T @ path_generator(spec, path, t) @ F) @ h

    h = np.eye(K, dtype=complex)
    for k in range(steps):
        t = t0 + k * h_dt
        k1 = rhs(t, h)
        k2 = rhs(t + h_dt / 2, h + h_dt / 2 * k1)
        k3 = rhs(t + h_dt / 2, h + h_dt / 2 * k2)
        k4 = rhs(t + h_dt, h + h_dt * k3)
        h = h + h_dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.linalg.norm(h.conj().T @ h - np.eye(K)) > 1e-6:
            raise ArithmeticError("lift lost unitarity")
        h = polar_unitary(h)
    return path_unitary(spec, path, t1) @ F @ h, h


def connection_residual(spec: GateSpec, path: PathState, L0: np.ndarray, t: float,
                        dt: float) -> float:
    """|| L^dagger dL/dt || estimated by a central difference around t."""
    La, _ = horizontal_lift(spec, path, L0, 0.0, t - dt, dt / 4)
    Lb, _ = horizontal_lift(spec, path, L0, 0.0, t + dt, dt / 4)
    Lm, _ = horizontal_lift(spec, path, L0, 0.0, t, dt / 4)
    return float(np.linalg.norm(Lm.conj().T @ (Lb - La) / (2 * dt)))


def holonomy(spec: GateSpec, path: PathState = BASE, L0: np.ndarray | None = None,
             dt: float | None = None) -> np.ndarray:
    L0 = spec.L0 if L0 is None else L0
    VT = path_unitary(spec, path, spec.T)
    P = L0 @ L0.conj().T
    if np.linalg.norm(VT @ P @ VT.conj().T - P) > 1e-8:
        raise ArithmeticError("path does not close the loop")
    LT, _ = horizontal_lift(spec, path, L0, 0.0, spec.T, dt)
    return L0.conj().T @ LT


# --- error states -----------------------------------------------------------------

@dataclass(frozen=True)
class ErrorStateSpec:
    error: PauliOperator
    subspace: str  # "E", "EX" or "X"
    beta: float
    probability: float


def commutation_case(E: PauliOperator, H: PauliOperator, X: PauliOperator) -> int:
    """Row index 1..4: [E,H]=[E,X]=0; [E,H]={E,X}=0; {E,H}=[E,X]=0; {E,H}={E,X}=0."""
    cH, cX = commutes(E, H), commutes(E, X)
    return {(True, True): 1, (True, False): 2, (False, True): 3, (False, False): 4}[(cH, cX)]


def beta_X(spec: GateSpec, tau: float) -> float:
    tb = partial_angle(spec, tau)
    return float(2 * tb + np.arctan(2 * tb))


def error_angles(spec: GateSpec, case: int, t: float):
    """(p_EX, beta_E, beta_EX) for a commutation case; beta_EX is None for case 1."""
    w2 = 2 * spec.omega * t
    h2 = 2 * spec.omega_H * t
    tb2 = 2 * partial_angle(spec, t)
    if case == 1:
        return 0.0, 0.0, None
    if case == 2:
        return float(np.sin(w2) ** 2), 0.0, float(tb2)
    if case == 3:
        p = np.sin(w2) ** 2 * np.sin(h2) ** 2
        bE = tb2 - np.arctan2(np.sin(h2) * np.cos(w2), np.cos(h2))
        return float(p), float(bE), float(np.pi / 2)
    # both anticommute: published entries fail the projection oracle; these are
    # the values obtained from P_E E(t) P_0 directly
    p = np.sin(w2) ** 2 * np.cos(h2) ** 2
    bE = tb2 - np.arctan2(np.sin(h2), np.cos(h2) * np.cos(w2))
    return float(p), float(bE), 0.0


def error_state_spec(spec: GateSpec, E: PauliOperator, t: float) -> list:
    E = as_pauli(E, spec.code.n)
    case = commutation_case(E, spec.H, spec.X)
    p_ex, bE, bEX = error_angles(spec, case, t)
    out = [ErrorStateSpec(E, "E", bE, 1.0 - p_ex)]
    if case != 1:
        out.append(ErrorStateSpec(E, "EX", bEX, p_ex))
    return out


def error_state(spec: GateSpec, E: PauliOperator, subspace: str, beta: float,
                psi0: np.ndarray, t: float) -> np.ndarray:
    """U(t) exp(i beta H) E' psi0 with E' = E or E X."""
    Em = pauli_to_matrix(E)
    if subspace in ("EX", "X"):
        Em = Em @ spec.Xm
    return lift_unitary(spec, t) @ _rot(spec.Hm, beta) @ Em @ psi0


def measurement_induced_error_state(spec: GateSpec, tau: float, psi0: np.ndarray) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=complex)
    _require_code_state(spec, psi0)
    v = error_state(spec, PauliOperator.identity(spec.code.n), "X", beta_X(spec, tau),
                    psi0, tau)
    return v / np.linalg.norm(v)


def jump_direction(spec: GateSpec, psi: np.ndarray, target: PauliOperator, t: float,
                   path: PathState = BASE) -> np.ndarray:
    """Leading-order state reached by a jump into the rotated space of ``target``.

    For psi in a rotated syndrome space orthogonal to P_target(t), the projection
    P_target(t + h) psi is h P_target(t) Omega(t) psi + O(h^2).
    """
    V = path_unitary(spec, path, t)
    Pt = V @ sector_projector(spec.code, target) @ V.conj().T
    Omega = V @ path_generator(spec, path, t) @ V.conj().T
    v = Pt @ Omega @ psi
    return v / np.linalg.norm(v)


def rotated_measurement_equivalence_check(spec: GateSpec, E: PauliOperator, t: float,
                                          psi0: np.ndarray | None = None,
                                          tol: float = 1e-8) -> bool:
    """Rotated projectors on E psi_bar(t) versus fixed projectors on E(t) psi_bar."""
    E = as_pauli(E, spec.code.n)
    if psi0 is None:
        psi0 = spec.L0 @ np.array([0.6, 0.8j])
    U = lift_unitary(spec, t)
    V = path_unitary(spec, BASE, t)
    Em = pauli_to_matrix(E)
    Et = U.conj().T @ Em @ U
    psi_t = U @ psi0
    for target in (E, E * spec.X):
        Pfix = sector_projector(spec.code, target)
        Prot = V @ Pfix @ V.conj().T
        a = Prot @ Em @ psi_t
        b = U @ Pfix @ Et @ psi0
        pa, pb = np.vdot(a, a).real, np.vdot(b, b).real
        if abs(pa - pb) > tol:
            return False
        if pa > tol and np.linalg.norm(a - b) > tol * max(1.0, np.sqrt(pa)):
            return False
    return True
