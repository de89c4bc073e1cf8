"""Batched trajectory engine in the rotating frame of the evolution path.

With phi = V~(t)^dagger psi the rotated generators become the fixed g_j, so the
measurement back-action is diagonal for codes with Z-type generators. One step
is

    phi <- W_k phi,  W_k = V~(t_{k+1})^dagger V~(t_k)      (path motion)
    phi <- V~^dagger N_k V~ phi                             (lab-frame noise)
    phi <- exp(2 kappa dt sum_j Q_j g_j) phi / norm         (measurement)

The last line is the Kraus form of the continuous measurement (exact for a
fixed observable over the step, first-order equivalent to the Ito SSE) and
keeps states and estimator density matrices positive by construction. Every
operator involved is a combination of at most four Pauli monomials, so each
application costs O(d) for vectors and O(d^2) for density matrices.

Random numbers are drawn per trajectory from independent streams in fixed
order, so results do not depend on batching or threading.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .geometry import GateSpec, partial_angle
from .noise import BitFlipJumps, NoNoise, OneOverFNoise, StaticNoise, WhiteNoise
from .pauli import PauliOperator, as_pauli
from .steer import DecodeTable, build_decode_table, denominator

NOISE_CODE = {"none": 0, "static": 1, "one_over_f": 2, "white": 3, "bitflip_jumps": 4}
MAX_EVENTS = 16
LATE_TOL = 1e-6


class EngineError(ValueError):
    pass


# --- model arrays -------------------------------------------------------------------

def _merge_terms(ops):
    """Group Pauli monomials by permutation: returns slot perms, per-term slot and phases."""
    perms, slot_of, phases = [], [], []
    for p in ops:
        perm, ph = p.monomial()
        for s, q in enumerate(perms):
            if np.array_equal(q, perm):
                slot_of.append(s)
                break
        else:
            perms.append(perm)
            slot_of.append(len(perms) - 1)
        phases.append(ph)
    return (np.array(perms, dtype=np.int64), np.array(slot_of, dtype=np.int64),
            np.array(phases, dtype=np.complex128))


@dataclass
class EngineModel:
    spec: GateSpec
    sgn: np.ndarray
    syn_id: np.ndarray
    perms: np.ndarray
    slot_of: np.ndarray
    phases: np.ndarray
    noise_perm: np.ndarray
    noise_phase: np.ndarray
    table_mode: np.ndarray
    table_beta: np.ndarray
    table: DecodeTable | None = None
    extra_ops: list = field(default_factory=list)


def _syn_int(s: str) -> int:
    return int(s, 2) if s else 0


def build_model(spec: GateSpec, table: DecodeTable | None = None,
                extra_ops=()) -> EngineModel:
    code = spec.code
    for g in code.generators:
        if g.xmask != 0 or not g.is_hermitian:
            raise EngineError("fast engine needs Hermitian Z-type generators")
    d = 1 << code.n
    sgn = np.empty((code.r, d))
    for j, g in enumerate(code.generators):
        perm, ph = g.monomial()
        sgn[j] = ph.real
    syn_id = np.zeros(d, dtype=np.int64)
    for j in range(code.r):
        syn_id = (syn_id << 1) | (sgn[j] < 0).astype(np.int64)
    X, H = spec.X, spec.H
    perms, slot_of, phases = _merge_terms([PauliOperator.identity(code.n), X, H, X * H])
    ops = [PauliOperator.single(code.n, j, "X") for j in range(1, code.n + 1)]
    ops += [as_pauli(p, code.n) for p in extra_ops]
    mono = [p.monomial() for p in ops]
    noise_perm = np.array([m[0] for m in mono], dtype=np.int64)
    noise_phase = np.array([m[1] for m in mono], dtype=np.complex128)
    if table is None:
        try:
            table = build_decode_table(code, H, X)
        except ValueError:
            table = None
    mode = np.zeros(1 << code.r, dtype=np.int64) - 1
    bkind = np.zeros(1 << code.r, dtype=np.int64)
    if table is not None:
        for e in table:
            mode[_syn_int(e.syndrome)], bkind[_syn_int(e.syndrome)] = _entry_codes(e)
    return EngineModel(spec, sgn, syn_id, perms, slot_of, phases, noise_perm, noise_phase,
                       mode, bkind, table, list(ops[code.n:]))


def _entry_codes(entry):
    """(mode, beta kind) mirroring steer.case_angle.

    mode 0: no change; 1: -(beta + 2 theta)/D; 2: beta/D.
    beta kind 0: 0; 1: case-3 beta_E; 2: case-4 beta_E; 3: 2 theta_bar; 4: pi/2; 5: beta_X.
    """
    case, sub = entry.case, entry.subspace
    if sub == "E":
        if case in (1, 2):
            return 0, 0
        return 1, (1 if case == 3 else 2)
    if sub == "X" or case == 1:
        return 1, 5
    if case == 2:
        return 1, 3
    if case == 3:
        return 2, 4
    return 0, 0


# --- numba kernels ----------------------------------------------------------------

@nb.njit(cache=True, nogil=True)
def _coef_arrays(c, slot_of, phases, nslot, out):
    d = phases.shape[1]
    for s in range(nslot):
        for i in range(d):
            out[s, i] = 0.0
    for t in range(4):
        s = slot_of[t]
        ct = c[t]
        for i in range(d):
            out[s, i] += ct * phases[t, i]


@nb.njit(cache=True, nogil=True)
def _vec_apply(C, perms, nslot, v, out):
    d = v.shape[0]
    for i in range(d):
        acc = 0j
        for s in range(nslot):
            acc += C[s, i] * v[perms[s, i]]
        out[i] = acc


@nb.njit(cache=True, nogil=True)
def _left_mul(C, perms, nslot, A, out):
    d = A.shape[0]
    for i in range(d):
        for j in range(d):
            out[i, j] = 0j
        for s in range(nslot):
            c = C[s, i]
            r = perms[s, i]
            for j in range(d):
                out[i, j] += c * A[r, j]


@nb.njit(cache=True, nogil=True)
def _rho_conj(C, perms, nslot, rho, tmp):
    """rho <- W rho W^dagger, using W rho W^dagger = W (W rho)^dagger for Hermitian rho."""
    d = rho.shape[0]
    _left_mul(C, perms, nslot, rho, tmp)
    for i in range(d):
        for j in range(d):
            rho[i, j] = np.conj(tmp[j, i])
    _left_mul(C, perms, nslot, rho, tmp)
    for i in range(d):
        for j in range(d):
            rho[i, j] = tmp[i, j]


@nb.njit(cache=True, nogil=True)
def _path_coeffs(alpha, beta, dag, c):
    ca, sa, cb, sb = np.cos(alpha), np.sin(alpha), np.cos(beta), np.sin(beta)
    if not dag:
        c[0] = ca * cb
        c[1] = 1j * ca * sb
        c[2] = 1j * sa * cb
        c[3] = sa * sb
    else:
        c[0] = ca * cb
        c[1] = -1j * ca * sb
        c[2] = -1j * sa * cb
        c[3] = -sa * sb


@nb.njit(cache=True, nogil=True)
def _step_coeffs(eta, delta, sigma, c):
    ce, se = np.cos(eta), np.sin(eta)
    c[0] = ce * np.cos(delta)
    c[1] = -1j * ce * np.sin(delta)
    c[2] = -1j * se * np.cos(sigma)
    c[3] = -se * np.sin(sigma)


@nb.njit(cache=True, nogil=True)
def _beta_value(kind, tau, theta, omega, omega_h):
    tb2 = theta / (2 * np.pi) * np.sin(2 * omega * tau)
    w2 = 2 * omega * tau
    h2 = 2 * omega_h * tau
    if kind == 1:
        return tb2 - np.arctan2(np.sin(h2) * np.cos(w2), np.cos(h2))
    if kind == 2:
        return tb2 - np.arctan2(np.sin(h2), np.cos(h2) * np.cos(w2))
    if kind == 3:
        return tb2
    if kind == 4:
        return np.pi / 2
    if kind == 5:
        return tb2 + np.arctan(tb2)
    return 0.0


@nb.njit(cache=True, nogil=True)
def _apply_lab_op(phi, alpha, beta, perms, slot_of, phases, nslot, Cbuf, cbuf, vbuf,
                  wbuf, op_perm, op_phase):
    # phi <- V~^dagger P V~ phi
    d = phi.shape[0]
    _path_coeffs(alpha, beta, False, cbuf)
    _coef_arrays(cbuf, slot_of, phases, nslot, Cbuf)
    _vec_apply(Cbuf, perms, nslot, phi, vbuf)
    for i in range(d):
        wbuf[i] = op_phase[i] * vbuf[op_perm[i]]
    _path_coeffs(alpha, beta, True, cbuf)
    _coef_arrays(cbuf, slot_of, phases, nslot, Cbuf)
    _vec_apply(Cbuf, perms, nslot, wbuf, phi)


@nb.njit(cache=True, nogil=True)
def _run_chunk(k0, k1, n_steps, dt, omega, omega_h, kappa, theta, T,
               perms, slot_of, phases, nslot, sgn, syn_id,
               noise_perm, noise_phase, nq,
               phi, rho, use_est, rate, off,
               noise_kind, lam, lam_now, lifetime, p_t, p_a, p_q, p_n, p_ptr,
               j_step, j_op, j_n, j_ptr, dW, wW,
               est_gamma, est_every,
               steer_on, thr, hold, t_mode, t_bkind,
               bits, cnt, syn, budget, steer_t, steer_theta,
               ev_t, ev_syn, ev_n,
               rec_every, rec_f, rec_e, rec_code, rec_est, psi_bar, hpsi_bar,
               health):
    B, d = phi.shape
    r = sgn.shape[0]
    C = np.empty((4, d), np.complex128)
    c = np.empty(4, np.complex128)
    vb = np.empty(d, np.complex128)
    wb = np.empty(d, np.complex128)
    tmp = np.empty((d, d), np.complex128)
    rl = np.empty((d, d), np.complex128)
    m = np.empty(d)
    ex = np.empty(r)
    Lam = np.empty(nq)
    decay = np.exp(-dt / lifetime) if lifetime > 0 else 0.0
    for b in range(B):
        ph = phi[b]
        for k in range(k0, k1):
            t = k * dt
            t1 = t + dt
            kk = k - k0
            # path motion
            eta = rate[b] * dt
            _step_coeffs(eta, omega * dt, omega * (2 * t + dt), c)
            _coef_arrays(c, slot_of, phases, nslot, C)
            _vec_apply(C, perms, nslot, ph, vb)
            ph[:] = vb
            if use_est:
                _rho_conj(C, perms, nslot, rho[b], tmp)
            alpha = rate[b] * t1 + off[b]
            beta = omega * t1
            # Hamiltonian or white noise: product of exp(-i Lam_j sigma_j)
            active = False
            if noise_kind == 1:
                for q in range(nq):
                    Lam[q] = lam[b, q] * dt
                active = True
            elif noise_kind == 2:
                g = lifetime * (1 - decay)
                for q in range(nq):
                    Lam[q] = lam_now[b, q] * g
                    lam_now[b, q] *= decay
                while p_ptr[b] < p_n[b] and p_t[b, p_ptr[b]] < t1:
                    i = p_ptr[b]
                    q = p_q[b, i]
                    e = np.exp(-(t1 - max(p_t[b, i], t)) / lifetime)
                    Lam[q] += p_a[b, i] * lifetime * (1 - e)
                    lam_now[b, q] += p_a[b, i] * e
                    p_ptr[b] += 1
                active = True
            elif noise_kind == 3:
                for q in range(nq):
                    Lam[q] = wW[b, kk, q]
                active = True
            if active:
                _path_coeffs(alpha, beta, False, c)
                _coef_arrays(c, slot_of, phases, nslot, C)
                _vec_apply(C, perms, nslot, ph, vb)
                for q in range(nq):
                    if Lam[q] != 0.0:
                        cs, sn = np.cos(Lam[q]), np.sin(Lam[q])
                        for i in range(d):
                            wb[i] = cs * vb[i] - 1j * sn * noise_phase[q, i] * vb[noise_perm[q, i]]
                        vb[:] = wb
                _path_coeffs(alpha, beta, True, c)
                _coef_arrays(c, slot_of, phases, nslot, C)
                _vec_apply(C, perms, nslot, vb, ph)
            # discrete jumps (noise-drawn and injected)
            while j_ptr[b] < j_n[b] and j_step[b, j_ptr[b]] <= k:
                o = j_op[b, j_ptr[b]]
                _apply_lab_op(ph, alpha, beta, perms, slot_of, phases, nslot, C, c, vb, wb,
                              noise_perm[o], noise_phase[o])
                j_ptr[b] += 1
            # estimator noise channel, lumped every est_every steps
            if use_est and est_gamma > 0 and (k + 1) % est_every == 0:
                p = 0.5 * (1 - np.exp(-2 * est_gamma * dt * est_every))
                R = rho[b]
                _path_coeffs(alpha, beta, False, c)
                _coef_arrays(c, slot_of, phases, nslot, C)
                _rho_conj(C, perms, nslot, R, tmp)
                for q in range(nq):
                    for i in range(d):
                        pi_ = noise_perm[q, i]
                        fi = noise_phase[q, i]
                        for j in range(d):
                            rl[i, j] = fi * np.conj(noise_phase[q, j]) * R[pi_, noise_perm[q, j]]
                    for i in range(d):
                        for j in range(d):
                            R[i, j] = (1 - p) * R[i, j] + p * rl[i, j]
                _path_coeffs(alpha, beta, True, c)
                _coef_arrays(c, slot_of, phases, nslot, C)
                _rho_conj(C, perms, nslot, R, tmp)
            # measurement
            for j in range(r):
                ex[j] = 0.0
            for i in range(d):
                pr = ph[i].real ** 2 + ph[i].imag ** 2
                for j in range(r):
                    ex[j] += pr * sgn[j, i]
            for i in range(d):
                m[i] = 0.0
            for j in range(r):
                Qj = ex[j] + dW[b, kk, j] / (2 * np.sqrt(kappa) * dt)
                for i in range(d):
                    m[i] += 2 * kappa * dt * Qj * sgn[j, i]
            mmax = m.max()
            nrm = 0.0
            for i in range(d):
                m[i] = np.exp(m[i] - mmax)
                ph[i] *= m[i]
                nrm += ph[i].real ** 2 + ph[i].imag ** 2
            if not (nrm > 0 and np.isfinite(nrm)):
                health[b] = 1
                nrm = 1.0
            s = 1 / np.sqrt(nrm)
            for i in range(d):
                ph[i] *= s
            if use_est:
                R = rho[b]
                tr = 0.0
                for i in range(d):
                    tr += R[i, i].real * m[i] * m[i]
                if not (tr > 0 and np.isfinite(tr)):
                    health[b] = 2
                    tr = 1.0
                sc = 1 / np.sqrt(tr)
                for i in range(d):
                    m[i] *= sc
                for i in range(d):
                    mi = m[i]
                    for j in range(d):
                        R[i, j] *= mi * m[j]
                # filter readout with hysteresis and hold
                for j in range(r):
                    e = 0.0
                    for i in range(d):
                        e += R[i, i].real * sgn[j, i]
                    ex[j] = e
                    if bits[b, j] == 0:
                        cond = e < -thr
                    else:
                        cond = e > thr
                    if cond:
                        cnt[b, j] += dt
                        if cnt[b, j] >= hold - 1e-12:
                            bits[b, j] = 1 - bits[b, j]
                            cnt[b, j] = 0.0
                    else:
                        cnt[b, j] = 0.0
                # publish only when no bit is part-way through a transition
                pending = False
                s_new = 0
                for j in range(r):
                    s_new = (s_new << 1) | bits[b, j]
                    if cnt[b, j] > 0:
                        pending = True
                if not pending and s_new != syn[b]:
                    syn[b] = s_new
                    if ev_n[b] < ev_t.shape[1]:
                        ev_t[b, ev_n[b]] = t1
                        ev_syn[b, ev_n[b]] = s_new
                    ev_n[b] += 1
                    if steer_on and budget[b] == 0 and s_new != 0 and t_mode[s_new] > 0:
                        D = 1 - t1 / T * (1 - np.sin(2 * omega * t1) / (2 * omega * t1))
                        if abs(D) < LATE_TOL:
                            budget[b] = 2
                        else:
                            bv = _beta_value(t_bkind[s_new], t1, theta, omega, omega_h)
                            if t_mode[s_new] == 1:
                                tt = -(bv + 2 * theta) / D
                            else:
                                tt = bv / D
                            wt = tt * omega / (2 * np.pi)
                            rate[b] = omega_h + wt
                            off[b] = -wt * t1
                            budget[b] = 1
                            steer_t[b] = t1
                            steer_theta[b] = tt
            # recording
            if (k + 1) % rec_every == 0 or k + 1 == n_steps:
                ir = (k + rec_every) // rec_every - 1
                # gate fidelity against V(t) exp(-i theta_bar H) psi_bar
                dlt = (rate[b] - omega_h) * t1 + off[b]
                if dlt != 0.0:
                    # V^dagger V~ = cos(dlt) + i sin(dlt) H exp(2 i w t X)
                    c[0] = np.cos(dlt)
                    c[1] = 0.0
                    c[2] = 1j * np.sin(dlt) * np.cos(2 * omega * t1)
                    c[3] = -np.sin(dlt) * np.sin(2 * omega * t1)
                    _coef_arrays(c, slot_of, phases, nslot, C)
                    _vec_apply(C, perms, nslot, ph, vb)
                else:
                    vb[:] = ph
                tb = theta / (4 * np.pi) * np.sin(2 * omega * t1)
                ct, st = np.cos(tb), np.sin(tb)
                ov = 0j
                cpop = 0.0
                for i in range(d):
                    ref = ct * psi_bar[i] - 1j * st * hpsi_bar[i]
                    ov += np.conj(ref) * vb[i]
                    if syn_id[i] == 0:
                        cpop += ph[i].real ** 2 + ph[i].imag ** 2
                rec_f[b, ir] = ov.real ** 2 + ov.imag ** 2
                rec_code[b, ir] = cpop
                if rec_est and use_est:
                    for j in range(r):
                        rec_e[b, ir, j] = ex[j]


# --- driver ------------------------------------------------------------------------

@dataclass
class RunOptions:
    dt: float = 1e-2
    steer: bool = False
    estimator: bool = True
    threshold: float = 0.8
    hold: float = 5.0
    rec_every: int = 100
    record_estimator: bool = False
    est_noise_every: int = 10
    est_gamma: float | None = None  # flip rate assumed by the filter; None follows the noise
    chunk: int = 2000
    batch: int = 100
    threads: int = 1
    psi0: np.ndarray | None = None
    rho0: np.ndarray | None = None
    injections: tuple = ()      # (time, Pauli) applied to every trajectory


def grid(T: float, dt: float):
    """Step count and the nearest step size that divides T exactly."""
    if dt <= 0:
        raise EngineError("dt must be positive")
    steps = max(1, int(round(T / dt)))
    return steps, T / steps


def _trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _draw_noise(model, noise, rng, T, dt, steps, n):
    """Initial per-trajectory draws, in a fixed order."""
    lam = np.zeros(n)
    pulses = (np.zeros(0), np.zeros(0), np.zeros(0, np.int64))
    lam0 = np.zeros(n)
    jumps = []
    if isinstance(noise, StaticNoise):
        lam = rng.uniform(-noise.eps, noise.eps, size=n)
    elif isinstance(noise, OneOverFNoise):
        tau = noise.pulse_lifetime
        start = -10 * tau if noise.stationary else 0.0
        span = T - start
        counts = rng.poisson(noise.pulse_rate * span, size=n)
        tot = int(counts.sum())
        times = start + span * rng.random(tot)
        amps = rng.uniform(-noise.eps, noise.eps, size=tot)
        qub = np.repeat(np.arange(n), counts)
        order = np.argsort(times, kind="stable")
        times, amps, qub = times[order], amps[order], qub[order]
        past = times < 0
        for q in range(n):
            sel = past & (qub == q)
            lam0[q] = np.sum(amps[sel] * np.exp(times[sel] / tau))
        pulses = (times[~past], amps[~past], qub[~past])
    elif isinstance(noise, BitFlipJumps):
        cnt = rng.poisson(noise.gamma * T * n)
        tj = rng.random(cnt) * T
        qj = rng.integers(0, n, cnt)
        jumps = sorted(zip(np.minimum((tj / dt).astype(np.int64), steps - 1), qj))
    return lam, lam0, pulses, jumps


@dataclass
class EnsembleResult:
    t_rec: np.ndarray
    fidelity: np.ndarray           # (N, nrec) gate fidelity
    code_pop: np.ndarray           # (N, nrec) truth weight in the code space
    final_psi: np.ndarray          # (N, d) lab-frame state at T
    est_expect: np.ndarray | None  # (N, nrec, r)
    events_t: np.ndarray
    events_syn: np.ndarray
    events_n: np.ndarray
    steer_t: np.ndarray
    steer_theta: np.ndarray
    budget: np.ndarray
    injected: list
    health: np.ndarray
    final_syndrome: np.ndarray


def _extra_index(model: EngineModel, p) -> int:
    p = as_pauli(p, model.spec.code.n)
    for i, q in enumerate(model.extra_ops):
        if (q.xmask, q.zmask, q.k) == (p.xmask, p.zmask, p.k):
            return i
    raise EngineError(f"injected operator {p} was not registered with build_model")


def _op_label(model: EngineModel, o: int) -> str:
    n = model.spec.code.n
    p = PauliOperator.single(n, o + 1, "X") if o < n else model.extra_ops[o - n]
    return p.unsigned().label()


def _noise_kind(noise) -> int:
    return NOISE_CODE[noise.kind]


def run_batch(model: EngineModel, noise, indices, seed: int, opts: RunOptions):
    spec = model.spec
    steps, dt = grid(spec.T, opts.dt)
    n, d, r = spec.code.n, spec.dim, spec.code.r
    B = len(indices)
    rngs = [_trajectory_rng(seed, int(i)) for i in indices]
    psi0 = opts.psi0 if opts.psi0 is not None else spec.L0 @ np.array([1, 1]) / np.sqrt(2)
    psi0 = np.asarray(psi0, np.complex128)
    phi = np.tile(psi0, (B, 1))
    use_est = bool(opts.estimator)
    if use_est:
        rho0 = opts.rho0 if opts.rho0 is not None else spec.P0 / np.trace(spec.P0).real
        rho = np.tile(np.asarray(rho0, np.complex128), (B, 1, 1))
    else:
        rho = np.zeros((B, 1, 1), np.complex128)
    lam = np.zeros((B, n))
    lam_now = np.zeros((B, n))
    draws = [_draw_noise(model, noise, g, spec.T, dt, steps, n) for g in rngs]
    maxp = max([len(dr[2][0]) for dr in draws] + [1])
    p_t = np.full((B, maxp), np.inf)
    p_a = np.zeros((B, maxp))
    p_q = np.zeros((B, maxp), np.int64)
    p_n = np.zeros(B, np.int64)
    inj = [(min(int(t / dt), steps - 1), n + _extra_index(model, p)) for t, p in opts.injections]
    injected = []
    jlists = []
    for b, (lm, l0, pul, jumps) in enumerate(draws):
        lam[b] = lm
        lam_now[b] = l0
        p_n[b] = len(pul[0])
        p_t[b, :p_n[b]] = pul[0]
        p_a[b, :p_n[b]] = pul[1]
        p_q[b, :p_n[b]] = pul[2]
        jl = sorted(list(jumps) + inj)
        jlists.append(jl)
        injected.append([((s + 1) * dt, _op_label(model, o)) for s, o in jl])
    maxj = max([len(j) for j in jlists] + [1])
    j_step = np.full((B, maxj), np.iinfo(np.int64).max, np.int64)
    j_op = np.zeros((B, maxj), np.int64)
    j_n = np.array([len(j) for j in jlists], np.int64)
    for b, jl in enumerate(jlists):
        for i, (s, o) in enumerate(jl):
            j_step[b, i], j_op[b, i] = s, o
    p_ptr = np.zeros(B, np.int64)
    j_ptr = np.zeros(B, np.int64)
    rate = np.full(B, spec.omega_H)
    off = np.zeros(B)
    bits = np.zeros((B, r), np.int64)
    cnt = np.zeros((B, r))
    syn = np.zeros(B, np.int64)
    budget = np.zeros(B, np.int64)
    steer_t = np.full(B, np.nan)
    steer_theta = np.full(B, np.nan)
    ev_t = np.zeros((B, MAX_EVENTS))
    ev_syn = np.zeros((B, MAX_EVENTS), np.int64)
    ev_n = np.zeros(B, np.int64)
    nrec = -(-steps // opts.rec_every)
    rec_f = np.zeros((B, nrec))
    rec_code = np.zeros((B, nrec))
    rec_e = np.zeros((B, nrec if opts.record_estimator else 1, r))
    health = np.zeros(B, np.int64)
    hpsi = model.phases[2] * psi0[model.perms[model.slot_of[2]]]
    kind = _noise_kind(noise)
    est_gamma = noise.gamma if isinstance(noise, (WhiteNoise, BitFlipJumps)) else 0.0
    if opts.est_gamma is not None:
        est_gamma = float(opts.est_gamma)
    lifetime = noise.pulse_lifetime if isinstance(noise, OneOverFNoise) else 0.0
    white_sd = np.sqrt(noise.gamma * dt) if isinstance(noise, WhiteNoise) else 0.0
    nslot = model.perms.shape[0]
    for k0 in range(0, steps, opts.chunk):
        k1 = min(steps, k0 + opts.chunk)
        nk = k1 - k0
        dW = np.empty((B, nk, r))
        wW = np.zeros((B, nk if kind == 3 else 1, n))
        for b, g in enumerate(rngs):
            dW[b] = g.standard_normal((nk, r)) * np.sqrt(dt)
            if kind == 3:
                wW[b] = g.standard_normal((nk, n)) * white_sd
        _run_chunk(k0, k1, steps, dt, spec.omega, spec.omega_H, spec.kappa, spec.theta, spec.T,
                   model.perms, model.slot_of, model.phases, nslot, model.sgn, model.syn_id,
                   model.noise_perm, model.noise_phase, n,
                   phi, rho, use_est, rate, off,
                   kind, lam, lam_now, lifetime, p_t, p_a, p_q, p_n, p_ptr,
                   j_step, j_op, j_n, j_ptr, dW, wW,
                   est_gamma, opts.est_noise_every,
                   bool(opts.steer and use_est), opts.threshold, opts.hold,
                   model.table_mode, model.table_beta,
                   bits, cnt, syn, budget, steer_t, steer_theta,
                   ev_t, ev_syn, ev_n,
                   opts.rec_every, rec_f, rec_e, rec_code, bool(opts.record_estimator),
                   psi0, hpsi, health)
    final = np.empty((B, d), np.complex128)
    c = np.empty(4, np.complex128)
    C = np.empty((4, d), np.complex128)
    for b in range(B):
        _path_coeffs(rate[b] * spec.T + off[b], spec.omega * spec.T, False, c)
        _coef_arrays(c, model.slot_of, model.phases, nslot, C)
        _vec_apply(C, model.perms, nslot, phi[b], final[b])
    t_rec = np.minimum((np.arange(nrec) + 1) * opts.rec_every, steps) * dt
    return EnsembleResult(t_rec, rec_f, rec_code, final,
                          rec_e if opts.record_estimator else None,
                          ev_t, ev_syn, ev_n, steer_t, steer_theta, budget, injected,
                          health, syn.copy())


def run_ensemble(model: EngineModel, noise, ntraj: int, seed: int,
                 opts: RunOptions) -> EnsembleResult:
    """Run ``ntraj`` trajectories; batches may run on worker threads."""
    batches = [np.arange(s, min(ntraj, s + opts.batch)) for s in range(0, ntraj, opts.batch)]
    if opts.threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(opts.threads) as pool:
            parts = list(pool.map(lambda ix: run_batch(model, noise, ix, seed, opts), batches))
    else:
        parts = [run_batch(model, noise, ix, seed, opts) for ix in batches]
    return _concat(parts)


def _concat(parts):
    first = parts[0]

    def cat(name):
        vals = [getattr(p, name) for p in parts]
        if vals[0] is None:
            return None
        return np.concatenate(vals, axis=0)

    injected = []
    for p in parts:
        injected.extend(p.injected)
    return EnsembleResult(first.t_rec, cat("fidelity"), cat("code_pop"), cat("final_psi"),
                          cat("est_expect"), cat("events_t"), cat("events_syn"),
                          cat("events_n"), cat("steer_t"), cat("steer_theta"), cat("budget"),
                          injected, cat("health"), cat("final_syndrome"))


def lab_state_from_frame(spec: GateSpec, phi: np.ndarray, alpha: float, t: float) -> np.ndarray:
    """V~(t) phi for H-angle alpha; helper for tests."""
    from .geometry import path_angles  # noqa: F401  (documentation pointer)
    Hm, Xm = spec.Hm, spec.Xm
    v = np.cos(spec.omega * t) * phi + 1j * np.sin(spec.omega * t) * (Xm @ phi)
    return np.cos(alpha) * v + 1j * np.sin(alpha) * (Hm @ v)
