"""Noise models: static, single-fluctuator 1/f, white, and Markovian bit flips.

Hamiltonian models add H_err(t) = sum_j lambda_j(t) sigma^x_j. White noise and
bit flips are Markovian and come with dissipators gamma D[sigma^x_j].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import PauliOperator

NOISE_TYPES = ("none", "static", "one_over_f", "white", "bitflip_jumps")


@dataclass(frozen=True)
class NoNoise:
    kind: str = "none"


@dataclass(frozen=True)
class StaticNoise:
    eps: float
    kind: str = "static"


@dataclass(frozen=True)
class OneOverFNoise:
    eps: float
    pulse_rate: float
    pulse_lifetime: float
    stationary: bool = True
    kind: str = "one_over_f"


@dataclass(frozen=True)
class WhiteNoise:
    gamma: float
    kind: str = "white"


@dataclass(frozen=True)
class BitFlipJumps:
    gamma: float
    kind: str = "bitflip_jumps"


class UnmatchedModelError(ValueError):
    pass


def noise_from_dict(doc: dict | None):
    if not doc:
        return NoNoise()
    doc = dict(doc)
    kind = doc.pop("type", None)
    builders = {
        "none": (NoNoise, ()),
        "static": (StaticNoise, ("eps",)),
        "one_over_f": (OneOverFNoise, ("eps", "pulse_rate", "pulse_lifetime")),
        "white": (WhiteNoise, ("gamma",)),
        "bitflip_jumps": (BitFlipJumps, ("gamma",)),
    }
    if kind not in builders:
        raise ValueError(f"noise.type must be one of {NOISE_TYPES}, got {kind!r}")
    cls, required = builders[kind]
    allowed = set(required) | ({"stationary"} if kind == "one_over_f" else set())
    extra = set(doc) - allowed
    if extra:
        raise ValueError(f"unknown noise keys for {kind}: {sorted(extra)}")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ValueError(f"missing noise keys for {kind}: {missing}")
    for k in required:
        if float(doc[k]) < 0:
            raise ValueError(f"noise.{k} must be non-negative")
    return cls(**{k: (float(v) if k != "stationary" else bool(v)) for k, v in doc.items()})


def noise_to_dict(model) -> dict:
    out = {"type": model.kind}
    for k, v in model.__dict__.items():
        if k != "kind":
            out[k] = v
    return out


# --- realizations -------------------------------------------------------------

@dataclass(frozen=True)
class NoiseRealization:
    """Static amplitudes (``lam``) or 1/f pulses (``times``, ``amps``, ``qubits``)."""
    n: int
    lam: np.ndarray | None = None
    times: np.ndarray | None = None
    amps: np.ndarray | None = None
    qubits: np.ndarray | None = None
    lifetime: float = 0.0

    def values(self, t) -> np.ndarray:
        """lambda_j(t) for an array of times, shape (len(t), n)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((t.size, self.n))
        if self.lam is not None:
            out[:] = self.lam
        elif self.times is not None and self.times.size:
            for q in range(self.n):
                sel = self.qubits == q
                tk, ak = self.times[sel], self.amps[sel]
                lag = t[:, None] - tk[None, :]
                on = lag >= 0
                out[:, q] = np.sum(np.where(on, ak * np.exp(-np.where(on, lag, 0) / self.lifetime),
                                            0.0), axis=1)
        return out


def sample_realization(model, n: int, T: float, grid_dt: float, rng) -> NoiseRealization:
    if grid_dt <= 0:
        raise ValueError("grid_dt must be positive")
    if isinstance(model, StaticNoise):
        return NoiseRealization(n, lam=rng.uniform(-model.eps, model.eps, size=n))
    if isinstance(model, OneOverFNoise):
        tau = model.pulse_lifetime
        start = -10 * tau if model.stationary else 0.0
        span = T - start
        counts = rng.poisson(model.pulse_rate * span, size=n)
        total = int(counts.sum())
        times = start + span * rng.random(total)
        amps = rng.uniform(-model.eps, model.eps, size=total)
        qubits = np.repeat(np.arange(n), counts)
        order = np.argsort(times, kind="stable")
        return NoiseRealization(n, times=times[order], amps=amps[order],
                                qubits=qubits[order], lifetime=tau)
    return NoiseRealization(n)


def step_integrals(real: NoiseRealization, dt: float, steps: int) -> np.ndarray:
    """Exact integrals of lambda_j over each grid step, shape (steps, n)."""
    out = np.zeros((steps, real.n))
    if real.lam is not None:
        out[:] = real.lam * dt
        return out
    if real.times is None or real.times.size == 0:
        return out
    tau = real.lifetime
    edges = np.arange(steps + 1) * dt
    for tk, ak, q in zip(real.times, real.amps, real.qubits):
        # integral of a exp(-(s - tk)/tau) over [max(a_k, tk), b_k]
        lo = np.maximum(edges[:-1], tk)
        hi = edges[1:]
        ok = hi > lo
        if not np.any(ok):
            continue
        val = ak * tau * (np.exp(-(lo - tk) / tau) - np.exp(-(hi - tk) / tau))
        out[ok, q] += val[ok]
    return out


# --- correlation functions and matching ------------------------------------------

def correlation(model, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if isinstance(model, StaticNoise):
        return np.full_like(s, model.eps ** 2 / 3)
    if isinstance(model, OneOverFNoise):
        g, tau = model.pulse_rate, model.pulse_lifetime
        return g * tau * model.eps ** 2 / 6 * np.exp(-np.abs(s) / tau)
    return np.zeros_like(s)


def spectral_density(model, Omega) -> np.ndarray:
    """Fourier transform of the correlation function (Lorentzian for 1/f)."""
    Omega = np.asarray(Omega, dtype=float)
    if isinstance(model, OneOverFNoise):
        g, tau = model.pulse_rate, model.pulse_lifetime
        return g * tau ** 2 * model.eps ** 2 / 3 / (1 + (Omega * tau) ** 2)
    if isinstance(model, WhiteNoise):
        return np.full_like(Omega, model.gamma)
    return np.zeros_like(Omega)


def decoherence_rate(model, T: float) -> float:
    """Gamma = integral of the bath correlation function over [0, T]."""
    if isinstance(model, StaticNoise):
        return model.eps ** 2 * T / 3
    if isinstance(model, OneOverFNoise):
        g, tau = model.pulse_rate, model.pulse_lifetime
        return model.eps ** 2 / 3 * g * tau ** 2 / 2 * (1 - np.exp(-T / tau))
    if isinstance(model, (WhiteNoise, BitFlipJumps)):
        return model.gamma
    return 0.0


def match_strength(reference: float, target, T: float):
    """Rescale ``target`` so its decoherence rate over T equals ``reference``."""
    if reference <= 0:
        raise ValueError("reference rate must be positive")
    if isinstance(target, StaticNoise):
        return StaticNoise(float(np.sqrt(3 * reference / T)))
    if isinstance(target, OneOverFNoise):
        g, tau = target.pulse_rate, target.pulse_lifetime
        if g <= 0 or tau <= 0:
            raise UnmatchedModelError("1/f matching needs positive pulse rate and lifetime")
        eps = np.sqrt(3 * reference / (g * tau ** 2 / 2 * (1 - np.exp(-T / tau))))
        return OneOverFNoise(float(eps), g, tau, target.stationary)
    if isinstance(target, WhiteNoise):
        return WhiteNoise(float(reference))
    if isinstance(target, BitFlipJumps):
        return BitFlipJumps(float(reference))
    raise UnmatchedModelError(f"cannot match {target!r}")


def one_over_f_amplitude(eps_static: float, T: float, pulse_rate: float,
                         pulse_lifetime: float) -> float:
    """Large-T matching, eps_1f = eps_static sqrt(2T / (gamma tau^2))."""
    return eps_static * np.sqrt(2 * T / (pulse_rate * pulse_lifetime ** 2))


def static_coherence(eps: float, T: float) -> float:
    """Ensemble <Z>(T) of |0> under exp(-i lambda T X), lambda ~ U(-eps, eps)."""
    x = 2 * eps * T
    return float(np.sinc(x / np.pi))


def lindblad_coherence(gamma: float, T: float) -> float:
    """<Z>(T) of |0> under gamma D[X]."""
    return float(np.exp(-2 * gamma * T))


# --- generators -------------------------------------------------------------------

def noise_generator(model, realization: NoiseRealization | None, t: float, n: int):
    """('hamiltonian', lambda_j(t)) or ('lindblad', [(rate, sigma^x_j), ...])."""
    if isinstance(model, (StaticNoise, OneOverFNoise)):
        return "hamiltonian", realization.values([t])[0]
    if isinstance(model, (WhiteNoise, BitFlipJumps)):
        return "lindblad", [(model.gamma, PauliOperator.single(n, j, "X"))
                            for j in range(1, n + 1)]
    return "hamiltonian", np.zeros(n)


def dissipators(model, n: int) -> list:
    if isinstance(model, (WhiteNoise, BitFlipJumps)):
        return noise_generator(model, None, 0.0, n)[1]
    return []


def lindblad_oracle_step(rho: np.ndarray, dissipators: list, dt: float) -> np.ndarray:
    """rho + sum gamma (A rho A^dagger - {A^dagger A, rho}/2) dt for dense A."""
    out = rho.copy()
    for rate, A in dissipators:
        if rate * dt > 1e-2:
            raise ValueError("step too large for the Lindblad oracle")
        AdA = A.conj().T @ A
        out = out + rate * dt * (A @ rho @ A.conj().T - 0.5 * (AdA @ rho + rho @ AdA))
    if abs(np.trace(out) - np.trace(rho)) > 1e-10:
        raise ArithmeticError("Lindblad step lost trace")
    return out


def lindblad_evolve(rho: np.ndarray, dissipators: list, t: float, dt: float) -> np.ndarray:
    steps = int(np.ceil(t / dt))
    h = t / steps
    for _ in range(steps):
        rho = lindblad_oracle_step(rho, dissipators, h)
    return rho


def white_noise_ensemble(psi0: np.ndarray, sigma2: float, t: float, dt: float,
                         ntraj: int, rng) -> np.ndarray:
    """Single-qubit states U_t psi0 under H = lambda(t) X with white lambda.

    Each step applies exp(-i X dW) with dW ~ N(0, sigma2 dt), the exact solution
    of dU = -(sigma2/2) U dt - i X U dW over the step. Returns (ntraj, 2).
    """
    steps = int(round(t / dt))
    w = rng.normal(0.0, np.sqrt(sigma2 * dt), size=(ntraj, steps)).sum(axis=1)
    # single-qubit propagators commute, so the product is exp(-i X W_t)
    c, s = np.cos(w), np.sin(w)
    a, b = psi0
    return np.stack([c * a - 1j * s * b, c * b - 1j * s * a], axis=1)
