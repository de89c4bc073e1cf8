"""Symplectic n-qubit Pauli algebra and stabilizer code definitions.

A Pauli operator is stored as bit vectors ``xbits``/``zbits`` plus a phase
exponent ``k`` so that the operator equals ``i**k`` times the Hermitian
Pauli string (Y = iXZ on each qubit with both bits set). Qubit 1 is the
leftmost character of a Pauli string and the most significant bit of a
computational basis index.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_PHASE_STR = {0: "+", 1: "+i", 2: "-", 3: "-i"}
_CHAR_BITS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_BITS_CHAR = {v: k for k, v in _CHAR_BITS.items()}

SEARCH_MAX_QUBITS = 12


class DimensionError(ValueError):
    pass


class CodeError(ValueError):
    pass


class SearchSpaceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class PauliOperator:
    xbits: tuple
    zbits: tuple
    k: int = 0  # phase i**k

    def __post_init__(self):
        if len(self.xbits) != len(self.zbits):
            raise DimensionError("xbits and zbits differ in length")
        object.__setattr__(self, "xbits", tuple(int(b) & 1 for b in self.xbits))
        object.__setattr__(self, "zbits", tuple(int(b) & 1 for b in self.zbits))
        object.__setattr__(self, "k", int(self.k) % 4)

    @property
    def n(self) -> int:
        return len(self.xbits)

    @property
    def phase(self) -> complex:
        return 1j ** self.k

    @property
    def weight(self) -> int:
        return sum(1 for a, b in zip(self.xbits, self.zbits) if a or b)

    @property
    def n_y(self) -> int:
        return sum(a & b for a, b in zip(self.xbits, self.zbits))

    @property
    def xmask(self) -> int:
        return _bits_to_int(self.xbits)

    @property
    def zmask(self) -> int:
        return _bits_to_int(self.zbits)

    @property
    def is_hermitian(self) -> bool:
        return self.k % 2 == 0

    @classmethod
    def identity(cls, n: int) -> "PauliOperator":
        return cls((0,) * n, (0,) * n, 0)

    @classmethod
    def from_string(cls, s: str) -> "PauliOperator":
        s = s.strip()
        k = 0
        for prefix, kk in (("+i", 1), ("-i", 3), ("i", 1), ("+", 0), ("-", 2)):
            if s.startswith(prefix) and len(s) > len(prefix):
                k, s = kk, s[len(prefix):]
                break
        try:
            bits = [_CHAR_BITS[c] for c in s.upper()]
        except KeyError as exc:
            raise ValueError(f"bad Pauli character in {s!r}") from exc
        if not bits:
            raise ValueError("empty Pauli string")
        return cls(tuple(b[0] for b in bits), tuple(b[1] for b in bits), k)

    @classmethod
    def single(cls, n: int, qubit: int, axis: str) -> "PauliOperator":
        """Single-qubit Pauli on 1-based ``qubit``."""
        chars = ["I"] * n
        chars[qubit - 1] = axis
        return cls.from_string("".join(chars))

    def label(self) -> str:
        return "".join(_BITS_CHAR[(a, b)] for a, b in zip(self.xbits, self.zbits))

    def __str__(self):
        return ("" if self.k == 0 else _PHASE_STR[self.k]) + self.label()

    def __repr__(self):
        return f"PauliOperator({str(self)!r})"

    def unsigned(self) -> "PauliOperator":
        return PauliOperator(self.xbits, self.zbits, 0)

    def __mul__(self, other: "PauliOperator") -> "PauliOperator":
        _check_sizes(self, other)
        # work in the X^x Z^z form: P = i^(k + nY) X^x Z^z
        e = self.k + self.n_y + other.k + other.n_y
        e += 2 * sum(b & c for b, c in zip(self.zbits, other.xbits))
        xs = tuple(a ^ c for a, c in zip(self.xbits, other.xbits))
        zs = tuple(b ^ d for b, d in zip(self.zbits, other.zbits))
        ny = sum(a & b for a, b in zip(xs, zs))
        return PauliOperator(xs, zs, e - ny)

    def dagger(self) -> "PauliOperator":
        return PauliOperator(self.xbits, self.zbits, -self.k)

    def tensor(self, other: "PauliOperator") -> "PauliOperator":
        return PauliOperator(self.xbits + other.xbits, self.zbits + other.zbits,
                             self.k + other.k)

    def monomial(self):
        """Return (perm, phase) with (P psi)[i] = phase[i] * psi[perm[i]]."""
        d = 1 << self.n
        idx = np.arange(d)
        src = idx ^ self.xmask
        par = _popcount(src & self.zmask) & 1
        e = (self.k + self.n_y + 2 * par) % 4
        return src.astype(np.int64), (1j ** e).astype(np.complex128)


def _bits_to_int(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def _popcount(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    c = np.zeros_like(a)
    while np.any(a):
        c += a & 1
        a = a >> 1
    return c


def _check_sizes(a: PauliOperator, b: PauliOperator):
    if a.n != b.n:
        raise DimensionError(f"Pauli sizes differ: {a.n} vs {b.n}")


def commutes(a: PauliOperator, b: PauliOperator) -> bool:
    _check_sizes(a, b)
    s = sum((x1 & z2) ^ (z1 & x2) for x1, z1, x2, z2 in
            zip(a.xbits, a.zbits, b.xbits, b.zbits))
    return s % 2 == 0


def as_pauli(p, n: int | None = None) -> PauliOperator:
    if isinstance(p, PauliOperator):
        out = p
    else:
        out = PauliOperator.from_string(str(p))
    if n is not None and out.n != n:
        raise DimensionError(f"expected {n} qubits, got {out.n} for {out}")
    return out


@dataclass(frozen=True)
class Syndrome:
    bits: tuple

    def __str__(self):
        return "".join(str(b) for b in self.bits)

    def __xor__(self, other: "Syndrome") -> "Syndrome":
        return Syndrome(tuple(a ^ b for a, b in zip(self.bits, other.bits)))

    @property
    def trivial(self) -> bool:
        return not any(self.bits)

    def as_int(self) -> int:
        return _bits_to_int(self.bits)

    @classmethod
    def from_string(cls, s: str) -> "Syndrome":
        return cls(tuple(int(c) for c in s))


@dataclass(frozen=True)
class StabilizerCode:
    n: int
    k: int
    d: int
    generators: tuple
    logical_ops: tuple = ()
    correctable: tuple = field(default=())

    def __post_init__(self):
        gens = tuple(as_pauli(g, self.n) for g in self.generators)
        logs = tuple(as_pauli(g, self.n) for g in self.logical_ops)
        corr = tuple(as_pauli(g, self.n) for g in self.correctable)
        if not corr:
            corr = (PauliOperator.identity(self.n),) + tuple(
                PauliOperator.single(self.n, q, "X") for q in range(1, self.n + 1))
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "logical_ops", logs)
        object.__setattr__(self, "correctable", corr)
        if len(gens) != self.n - self.k:
            raise CodeError(f"expected {self.n - self.k} generators, got {len(gens)}")
        for a, b in itertools.combinations(gens, 2):
            if not commutes(a, b):
                raise CodeError(f"generators {a} and {b} anticommute")
        for lg in logs:
            if not all(commutes(lg, g) for g in gens):
                raise CodeError(f"logical {lg} does not commute with the generators")

    @property
    def r(self) -> int:
        return self.n - self.k

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "d": self.d,
                "generators": [str(g) for g in self.generators],
                "logicals": [str(g) for g in self.logical_ops],
                "correctable": [str(g) for g in self.correctable]}

    @classmethod
    def from_dict(cls, doc: dict) -> "StabilizerCode":
        known = {"n", "k", "d", "generators", "logicals", "correctable"}
        extra = set(doc) - known
        if extra:
            raise CodeError(f"unknown code keys: {sorted(extra)}")
        return cls(int(doc["n"]), int(doc["k"]), int(doc["d"]),
                   tuple(doc["generators"]), tuple(doc.get("logicals", ())),
                   tuple(doc.get("correctable", ())))

    @classmethod
    def from_json(cls, path) -> "StabilizerCode":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def syndrome(code: StabilizerCode, e: PauliOperator) -> Syndrome:
    if e.n != code.n:
        raise DimensionError(f"operator has {e.n} qubits, code has {code.n}")
    return Syndrome(tuple(0 if commutes(e, g) else 1 for g in code.generators))


def bit_flip_code() -> StabilizerCode:
    return StabilizerCode(3, 1, 3, ("ZZI", "IZZ"), ("XXX", "ZZZ"))


def append_ancillas(code: StabilizerCode, m: int) -> StabilizerCode:
    if m < 0:
        raise ValueError("ancilla count must be non-negative")
    if m == 0:
        return code
    pad = PauliOperator.identity(m)
    n = code.n + m
    gens = [g.tensor(pad) for g in code.generators]
    gens += [PauliOperator.single(n, code.n + a, "Z") for a in range(1, m + 1)]
    logs = [g.tensor(pad) for g in code.logical_ops]
    corr = [g.tensor(pad) for g in code.correctable]
    corr += [PauliOperator.single(n, code.n + a, "X") for a in range(1, m + 1)]
    return StabilizerCode(n, code.k, code.d, tuple(gens), tuple(logs), tuple(corr))


def adapted_five_qubit_code() -> StabilizerCode:
    """Bit-flip code with two ancillas, the running error-correction example."""
    return append_ancillas(bit_flip_code(), 2)


def stabilizer_group(code: StabilizerCode) -> list:
    """All 2^(n-k) stabilizer group elements (including identity)."""
    out = []
    for sel in itertools.product((0, 1), repeat=code.r):
        p = PauliOperator.identity(code.n)
        for s, g in zip(sel, code.generators):
            if s:
                p = p * g
        out.append(p)
    return out


def all_paulis(n: int, include_identity: bool = False) -> Iterable[PauliOperator]:
    """Hermitian Paulis in canonical order: weight ascending, then (xbits, zbits)."""
    if include_identity:
        yield PauliOperator.identity(n)
    for w in range(1, n + 1):
        batch = []
        for support in itertools.combinations(range(n), w):
            for chars in itertools.product("XYZ", repeat=w):
                s = ["I"] * n
                for q, c in zip(support, chars):
                    s[q] = c
                p = PauliOperator.from_string("".join(s))
                batch.append((p.xbits + p.zbits, p))
        batch.sort(key=lambda t: t[0])
        for _, p in batch:
            yield p


def logical_group(code: StabilizerCode) -> list:
    """Nontrivial logical operators (normalizer minus stabilizer, phases dropped)."""
    stab = stabilizer_group(code)
    stab_set = {(s.xmask, s.zmask) for s in stab}
    if len(code.logical_ops) >= 2 * code.k and code.logical_ops:
        reps = []
        for sel in itertools.product((0, 1), repeat=len(code.logical_ops)):
            p = PauliOperator.identity(code.n)
            for s, g in zip(sel, code.logical_ops):
                if s:
                    p = p * g
            reps.append(p)
        seen, out = set(), []
        for L in reps:
            for s in stab:
                q = (L * s).unsigned()
                key = (q.xmask, q.zmask)
                if key not in stab_set and key not in seen:
                    seen.add(key)
                    out.append(q)
        return out
    out = []
    for p in all_paulis(code.n):
        key = (p.xmask, p.zmask)
        if key not in stab_set and all(commutes(p, g) for g in code.generators):
            out.append(p)
    return out


# --- rotation-operator suitability -----------------------------------------

def _pmasks(ops):
    x = np.array([p.xmask for p in ops], dtype=np.int64)
    z = np.array([p.zmask for p in ops], dtype=np.int64)
    return x, z


def _anticomm(x1, z1, x2, z2):
    return (_popcount((x1 & z2) ^ (z1 & x2)) & 1).astype(bool)


def effective_distance(code: StabilizerCode) -> int:
    """Distance implied by the correctable set, capped by the code distance."""
    t = max((e.weight for e in code.correctable), default=0)
    return min(code.d, 2 * t + 1)


def _distance_bound(code: StabilizerCode) -> int:
    d = effective_distance(code)
    return d - 2 if d % 2 == 0 else d - 1


class _SuitabilityContext:
    """Precomputed stabilizer group and nontrivial logicals for repeated checks."""

    def __init__(self, code: StabilizerCode):
        self.code = code
        stab = stabilizer_group(code)
        self.sx, self.sz = _pmasks([s for s in stab if s.weight > 0])
        gx, gz = _pmasks(code.generators)
        self.gx, self.gz = gx, gz
        self.lx, self.lz = _pmasks(logical_group(code))
        self.bound = _distance_bound(code)

    def check(self, X: PauliOperator, H: PauliOperator) -> dict:
        xm, zm = X.xmask, X.zmask
        hm_x, hm_z = H.xmask, H.zmask
        d_eff = effective_distance(self.code)
        weight_ok = X.weight > d_eff - 1
        dist_s = _popcount((self.sx ^ xm) | (self.sz ^ zm))
        near = dist_s <= self.bound
        stab_ok = bool(np.all(_anticomm(self.sx[near], self.sz[near], xm, zm)))
        dist_l = _popcount((self.lx ^ xm) | (self.lz ^ zm))
        near = dist_l <= self.bound
        lx, lz = self.lx[near], self.lz[near]
        logical_ok = bool(np.all(~_anticomm(lx, lz, xm, zm))
                          and np.all(_anticomm(lx, lz, hm_x, hm_z)))
        some_g = bool(np.any(_anticomm(self.gx, self.gz, xm, zm)))
        basic_ok = (X.weight > 0 and X.is_hermitian and some_g
                    and not commutes(X, H))
        return {"weight_ok": bool(weight_ok), "stabilizer_ok": stab_ok,
                "logical_ok": logical_ok, "basic_ok": bool(basic_ok)}


def check_rotation_operator(code: StabilizerCode, X: PauliOperator,
                            H: PauliOperator) -> dict:
    """Sufficient conditions for every rotated code to correct the correctable set."""
    X = as_pauli(X, code.n)
    H = as_pauli(H, code.n)
    return _SuitabilityContext(code).check(X, H)


def search_rotation_operator(code: StabilizerCode, H: PauliOperator):
    """First passing X in canonical order (weight, then xbits, zbits), or None."""
    if code.n > SEARCH_MAX_QUBITS:
        raise SearchSpaceTooLarge(f"exhaustive search limited to n <= {SEARCH_MAX_QUBITS}")
    H = as_pauli(H, code.n)
    ctx = _SuitabilityContext(code)
    for X in all_paulis(code.n):
        if X.weight <= effective_distance(code) - 1 or commutes(X, H):
            continue
        if all(ctx.check(X, H).values()):
            return X
    return None


def knill_laflamme_ok(code: StabilizerCode) -> bool:
    """Distinct correctable errors must differ in syndrome or act identically."""
    stab = {(s.xmask, s.zmask) for s in stabilizer_group(code)}
    for a, b in itertools.combinations(code.correctable, 2):
        if syndrome(code, a) == syndrome(code, b):
            ab = a * b
            if (ab.xmask, ab.zmask) not in stab:
                return False
    return True
