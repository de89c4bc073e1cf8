"""Dense linear algebra for small Pauli systems (dimension <= 2**6)."""
from __future__ import annotations

from functools import reduce

import numpy as np

from .pauli import PauliOperator, StabilizerCode, as_pauli

MAX_QUBITS = 6

_SINGLE = {
    (0, 0): np.eye(2, dtype=complex),
    (1, 0): np.array([[0, 1], [1, 0]], dtype=complex),
    (0, 1): np.array([[1, 0], [0, -1]], dtype=complex),
    (1, 1): np.array([[0, -1j], [1j, 0]], dtype=complex),
}


class NumericalHealthError(RuntimeError):
    pass


def _check_n(n: int):
    if n > MAX_QUBITS:
        raise ValueError(f"dense realization limited to {MAX_QUBITS} qubits, got {n}")


def pauli_to_matrix(p) -> np.ndarray:
    p = as_pauli(p)
    _check_n(p.n)
    mats = [_SINGLE[(x, z)] for x, z in zip(p.xbits, p.zbits)]
    return p.phase * reduce(np.kron, mats)


def pauli_rotation(p, angle: float) -> np.ndarray:
    """exp(i*angle*P) for Hermitian involutory P."""
    p = as_pauli(p)
    if not p.is_hermitian:
        raise ValueError(f"{p} is not involutory")
    P = pauli_to_matrix(p)
    return np.cos(angle) * np.eye(P.shape[0]) + 1j * np.sin(angle) * P


def rotation_from_matrix(P: np.ndarray, angle: float) -> np.ndarray:
    return np.cos(angle) * np.eye(P.shape[0]) + 1j * np.sin(angle) * P


def code_projector(code: StabilizerCode) -> np.ndarray:
    _check_n(code.n)
    d = 1 << code.n
    P = np.eye(d, dtype=complex)
    for g in code.generators:
        P = P @ (np.eye(d) + pauli_to_matrix(g)) / 2
    return P


def sector_projector(code: StabilizerCode, E: PauliOperator) -> np.ndarray:
    """Projector E P0 E^dagger onto the syndrome space of E."""
    M = pauli_to_matrix(E)
    return M @ code_projector(code) @ M.conj().T


def code_basis(code: StabilizerCode) -> np.ndarray:
    """Orthonormal columns spanning the code space (d x 2**k)."""
    P = code_projector(code)
    vals, vecs = np.linalg.eigh(P)
    return vecs[:, vals > 0.5]


def logical_basis(code: StabilizerCode) -> np.ndarray:
    """Code-space frame whose first column is the logical-Z +1 state when a
    logical Z representative is known; falls back to an eigh basis."""
    P = code_projector(code)
    d = P.shape[0]
    zlog = [g for g in code.logical_ops if g.xmask == 0 and g.weight > 0]
    xlog = [g for g in code.logical_ops if g.zmask == 0 and g.weight > 0]
    if code.k == 1 and zlog:
        Z = pauli_to_matrix(zlog[0])
        Pz = P @ (np.eye(d) + Z) / 2
        vals, vecs = np.linalg.eigh(Pz)
        v0 = vecs[:, -1]
        v0 = v0 * np.exp(-1j * np.angle(v0[np.argmax(np.abs(v0))]))
        if xlog:
            v1 = pauli_to_matrix(xlog[0]) @ v0
        else:
            vals, vecs = np.linalg.eigh(P @ (np.eye(d) - Z) / 2)
            v1 = vecs[:, -1]
        return np.stack([v0, v1], axis=1)
    return code_basis(code)


def expectation(state: np.ndarray, op: np.ndarray) -> float:
    state = np.asarray(state)
    if state.ndim == 1:
        val = np.vdot(state, op @ state)
    else:
        val = np.trace(state @ op)
    if abs(val.imag) > 1e-8:
        raise NumericalHealthError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """|<a|b>|^2 for unit vectors, or <a|rho|a> when b is a density matrix."""
    a = np.asarray(a)
    b = np.asarray(b)
    if b.ndim == 2:
        return float(np.real(np.vdot(a, b @ a)))
    return float(abs(np.vdot(a, b)) ** 2)


def frame_fidelity(A: np.ndarray, B: np.ndarray) -> float:
    """Phase-insensitive overlap |tr(A^dagger B)|^2 / K^2 of two K-column frames."""
    K = A.shape[1]
    return float(abs(np.trace(A.conj().T @ B)) ** 2 / K ** 2)


def trace_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(r1 - r2))))


def is_density_matrix(rho: np.ndarray, tol: float = 1e-8) -> bool:
    herm = np.allclose(rho, rho.conj().T, atol=1e-10)
    tr = abs(np.trace(rho) - 1) < 1e-9
    pos = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() > -tol
    return bool(herm and tr and pos)


def polar_unitary(M: np.ndarray) -> np.ndarray:
    """Closest unitary to M (polar factor)."""
    u, _, vh = np.linalg.svd(M)
    return u @ vh
