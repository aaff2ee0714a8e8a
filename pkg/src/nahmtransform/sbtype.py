"""Symmetry breaking types, their derived invariants and framings.

Levels are indexed ``0..n-1`` and interval ``i`` joins level ``i`` to
level ``i+1``; its bundle rank is ``m[i]``.  A framing carries, for each
interval, the pole subspace ``V_plus[i]`` at its left end and
``V_minus[i]`` at its right end, and for every internal level ``l`` a
partial isometry ``C[l]`` from ``V_minus[l-1]^perp`` onto
``V_plus[l]^perp`` stored as a full ``m[l] x m[l-1]`` matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

from .errors import (
    BoundViolated,
    DimensionMismatch,
    EndSignViolated,
    NonzeroTerminal,
    NotSorted,
    NotTraceFree,
    NotUnitary,
)

UNITARY_TOL = 1e-12


@dataclass(frozen=True)
class SymmetryBreakingType:
    """Combinatorial record ``(lambda, r, k)``."""

    lam: tuple
    ranks: tuple
    chern: tuple

    def __init__(self, lam: Sequence[float], ranks: Sequence[int], chern: Sequence[Sequence[int]]):
        object.__setattr__(self, "lam", tuple(float(v) for v in lam))
        object.__setattr__(self, "ranks", tuple(int(v) for v in ranks))
        object.__setattr__(self, "chern", tuple(tuple(int(c) for c in row) for row in chern))

    @property
    def n(self) -> int:
        return len(self.lam)

    @property
    def N(self) -> int:
        return int(sum(self.ranks))

    def to_dict(self) -> dict:
        return {"lambda": list(self.lam), "ranks": list(self.ranks), "chern": [list(r) for r in self.chern]}

    @classmethod
    def from_dict(cls, d: dict) -> "SymmetryBreakingType":
        return cls(d["lambda"], d["ranks"], d["chern"])


@dataclass(frozen=True)
class LevelInvariants:
    r_plus: int
    r_minus: int
    r_zero: int
    k_plus: int
    k_minus: int
    k: int
    m: int
    blocks_plus: tuple
    blocks_minus: tuple


@dataclass(frozen=True)
class DerivedInvariants:
    """Per-level invariants; ``m[l]`` is the rank on the interval right of level ``l``."""

    levels: tuple
    N: int
    n: int

    @property
    def m(self) -> tuple:
        return tuple(lv.m for lv in self.levels)

    @property
    def k_plus(self) -> tuple:
        return tuple(lv.k_plus for lv in self.levels)

    @property
    def k_minus(self) -> tuple:
        return tuple(lv.k_minus for lv in self.levels)

    @property
    def r_zero(self) -> tuple:
        return tuple(lv.r_zero for lv in self.levels)

    @property
    def r_plus(self) -> tuple:
        return tuple(lv.r_plus for lv in self.levels)

    @property
    def r_minus(self) -> tuple:
        return tuple(lv.r_minus for lv in self.levels)

    def interval_ranks(self) -> tuple:
        return self.m[:-1]


def _derive(t: SymmetryBreakingType) -> DerivedInvariants:
    levels = []
    m = 0
    for row in t.chern:
        pos = tuple(c for c in row if c > 0)
        neg = tuple(-c for c in row if c < 0)
        zero = sum(1 for c in row if c == 0)
        k = sum(row)
        m += k
        levels.append(
            LevelInvariants(
                r_plus=len(pos), r_minus=len(neg), r_zero=zero,
                k_plus=sum(pos), k_minus=sum(neg), k=k, m=m,
                blocks_plus=pos, blocks_minus=neg,
            )
        )
    return DerivedInvariants(levels=tuple(levels), N=t.N, n=t.n)


def validate_type(t: SymmetryBreakingType) -> DerivedInvariants:
    """Check every defining condition and return the derived invariants.

    Raises the subclass of :class:`TypeValidationError` naming the first
    violated condition.
    """
    n = t.n
    if n < 2 or len(t.ranks) != n or len(t.chern) != n:
        raise DimensionMismatch("lambda, ranks and chern must be nonempty lists of equal length >= 2")
    for a, (r, row) in enumerate(zip(t.ranks, t.chern)):
        if r < 1 or len(row) != r:
            raise DimensionMismatch(f"level {a}: chern tuple length {len(row)} != rank {r}")
    lam = np.asarray(t.lam)
    if np.any(np.diff(lam) <= 0):
        raise NotSorted("lambda must be strictly increasing")
    for a, row in enumerate(t.chern):
        if any(row[i] < row[i + 1] for i in range(len(row) - 1)):
            raise NotSorted(f"chern tuple at level {a} must be sorted descending")
    trace = sum(Fraction(lv).limit_denominator(10**9) * r for lv, r in zip(t.lam, t.ranks))
    if abs(float(trace)) > 1e-12 * max(1.0, float(np.abs(lam).max())):
        raise NotTraceFree(f"sum lambda_a r_a = {float(trace):.3e} != 0")
    if any(c <= 0 for c in t.chern[0]) or any(c >= 0 for c in t.chern[-1]):
        raise EndSignViolated("first tuple must be all positive and last tuple all negative")
    inv = _derive(t)
    if inv.levels[-1].m != 0:
        raise NonzeroTerminal(f"m_n = {inv.levels[-1].m} != 0")
    for i in range(n - 1):
        lo, hi = inv.levels[i], inv.levels[i + 1]
        bound = max(lo.r_zero + lo.k_plus, hi.r_zero + hi.k_minus)
        if lo.m < bound:
            raise BoundViolated(f"m[{i}] = {lo.m} < {bound}")
    return inv


def energy_forms(t: SymmetryBreakingType) -> tuple[float, float]:
    """``(sum m_a dlambda_a, sum lambda_a k_a)`` for a valid type."""
    inv = validate_type(t)
    m = np.array(inv.m[:-1], dtype=float)
    dl = np.diff(np.asarray(t.lam))
    k = np.array([lv.k for lv in inv.levels], dtype=float)
    return float(m @ dl), float(np.asarray(t.lam) @ k)


@dataclass(frozen=True)
class Framing:
    V_plus: tuple
    V_minus: tuple
    C: tuple = field(default=())

    def copy_with(self, V_plus=None, V_minus=None, C=None) -> "Framing":
        return Framing(
            tuple(V_plus if V_plus is not None else self.V_plus),
            tuple(V_minus if V_minus is not None else self.V_minus),
            tuple(C if C is not None else self.C),
        )


def orth_complement(V: np.ndarray, m: int | None = None) -> np.ndarray:
    """Orthonormal basis of the complement of the column span of ``V``."""
    m = V.shape[0] if m is None else m
    if V.shape[1] == 0:
        return np.eye(m, dtype=complex)
    if V.shape[1] >= m:
        return np.zeros((m, 0), dtype=complex)
    q, _ = np.linalg.qr(V, mode="complete")
    return q[:, V.shape[1]:]


@dataclass
class FramingReport:
    ok: bool
    failures: list
    max_defect: float


def validate_framing(t: SymmetryBreakingType, f: Framing, tol: float = UNITARY_TOL,
                     raise_on_error: bool = False) -> FramingReport:
    """Dimension and unitarity checks for a framing.

    Returns a report listing per-index failures; with ``raise_on_error``
    the first failure is raised as :class:`DimensionMismatch` or
    :class:`NotUnitary`.
    """
    inv = validate_type(t)
    n = t.n
    failures = []
    defect = 0.0

    def fail(exc, msg):
        failures.append((exc.__name__, msg))
        if raise_on_error:
            raise exc(msg)

    if len(f.V_plus) != n - 1 or len(f.V_minus) != n - 1 or len(f.C) != max(n - 2, 0):
        fail(DimensionMismatch, "framing has the wrong number of entries")
        return FramingReport(False, failures, np.inf)
    for i in range(n - 1):
        m = inv.m[i]
        for name, V, k in (("V_plus", f.V_plus[i], inv.levels[i].k_plus),
                           ("V_minus", f.V_minus[i], inv.levels[i + 1].k_minus)):
            V = np.asarray(V)
            if V.shape != (m, k):
                fail(DimensionMismatch, f"{name}[{i}] has shape {V.shape}, expected {(m, k)}")
                continue
            d = float(np.abs(V.conj().T @ V - np.eye(k)).max()) if k else 0.0
            defect = max(defect, d)
            if d > tol:
                fail(NotUnitary, f"{name}[{i}] columns not orthonormal (defect {d:.2e})")
    for l in range(1, n - 1):
        C = np.asarray(f.C[l - 1])
        if C.shape != (inv.m[l], inv.m[l - 1]):
            fail(DimensionMismatch, f"C[{l}] has shape {C.shape}")
            continue
        Vm = np.asarray(f.V_minus[l - 1])
        Vp = np.asarray(f.V_plus[l])
        dom = orth_complement(Vm, inv.m[l - 1])
        cod = orth_complement(Vp, inv.m[l])
        if dom.shape[1] != cod.shape[1]:
            fail(DimensionMismatch, f"C[{l}]: domain/codomain dimensions differ")
            continue
        Cr = cod.conj().T @ C @ dom
        leak = np.linalg.norm(C @ Vm) if Vm.shape[1] else 0.0
        outside = np.linalg.norm(C - cod @ cod.conj().T @ C)
        d = max(float(np.abs(Cr.conj().T @ Cr - np.eye(dom.shape[1])).max()) if dom.shape[1] else 0.0,
                float(leak), float(outside))
        defect = max(defect, d)
        if d > tol:
            fail(NotUnitary, f"C[{l}] is not a partial isometry onto V_plus^perp (defect {d:.2e})")
    return FramingReport(not failures, failures, defect)


def standard_framing(t: SymmetryBreakingType) -> Framing:
    """Coordinate framing: pole subspaces are leading coordinate vectors, ``C`` is the identity."""
    inv = validate_type(t)
    n = t.n
    Vp, Vm, C = [], [], []
    for i in range(n - 1):
        m = inv.m[i]
        Vp.append(np.eye(m, dtype=complex)[:, : inv.levels[i].k_plus])
        Vm.append(np.eye(m, dtype=complex)[:, : inv.levels[i + 1].k_minus])
    for l in range(1, n - 1):
        dom = orth_complement(Vm[l - 1], inv.m[l - 1])
        cod = orth_complement(Vp[l], inv.m[l])
        C.append(cod @ dom.conj().T)
    return Framing(tuple(Vp), tuple(Vm), tuple(C))


def random_framing(t: SymmetryBreakingType, seed: int) -> Framing:
    """Pseudo-random framing, deterministic in ``seed``."""
    inv = validate_type(t)
    rng = np.random.default_rng(seed)
    base = standard_framing(t)
    Vp, Vm, C = [], [], []

    def rotate(V):
        m, k = V.shape
        if k in (0, m):
            return V
        return np.asarray(unitary_group.rvs(m, random_state=rng) @ V)

    for i in range(t.n - 1):
        Vp.append(rotate(base.V_plus[i]))
        Vm.append(rotate(base.V_minus[i]))
    for l in range(1, t.n - 1):
        dom = orth_complement(Vm[l - 1], inv.m[l - 1])
        cod = orth_complement(Vp[l], inv.m[l])
        d = dom.shape[1]
        R = unitary_group.rvs(d, random_state=rng) if d > 1 else np.ones((d, d), dtype=complex)
        C.append(cod @ R @ dom.conj().T)
    return Framing(tuple(Vp), tuple(Vm), tuple(C))
