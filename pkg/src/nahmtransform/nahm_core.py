"""Nahm data: interval matrix functions, pole and jump structure, gauge action.

Every interval exposes ``T(t)`` with shape ``(len(t), 3, m, m)``,
``T0(t)`` with shape ``(len(t), m, m)`` and their derivatives.  Near a
pole end the data behave as ``T = -res/(t - lo) + O(1)`` on the left and
``T = +res/(hi - t) + O(1)`` on the right, where ``res`` is the full
``m x m`` residue returned by :meth:`NahmInterval.residue`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .errors import (
    BlowupDetected,
    ChernMismatch,
    DimensionMismatch,
    FamilyInapplicable,
    RankDeficient,
    SampleOutOfRange,
)
from .grids import DEFAULT_COLLAR, ChebPanels, half_breaks
from .quaternion import (
    SIGMA,
    block_generators,
    bracket_defect,
    casimir,
    spinor_bloch,
    spinor_from_bloch,
)
from .report import CheckRecord, Report
from .sbtype import (
    Framing,
    SymmetryBreakingType,
    orth_complement,
    validate_framing,
    validate_type,
)


def skew(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - np.swapaxes(a, -1, -2).conj())


def _vec(t) -> np.ndarray:
    return np.atleast_1d(np.asarray(t, dtype=float))


# ---------------------------------------------------------------- intervals
class NahmInterval:
    """Base class; subclasses implement ``T``, ``dT`` and optionally ``T0``."""

    kind = "base"

    def __init__(self, lo: float, hi: float, m: int):
        self.lo = float(lo)
        self.hi = float(hi)
        self.m = int(m)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def T(self, t) -> np.ndarray:
        raise NotImplementedError

    def dT(self, t) -> np.ndarray:
        raise NotImplementedError

    def T0(self, t) -> np.ndarray:
        t = _vec(t)
        return np.zeros((len(t), self.m, self.m), dtype=complex)

    def dT0(self, t) -> np.ndarray:
        return self.T0(t) * 0.0

    def has_connection(self) -> bool:
        return False

    def residue(self, side: str) -> np.ndarray:
        return np.zeros((3, self.m, self.m), dtype=complex)

    def is_pole(self, side: str) -> bool:
        return bool(np.abs(self.residue(side)).max() > 0) if self.m else False

    def laurent(self, t) -> np.ndarray:
        """Singular part ``-res_L/(t-lo) + res_R/(hi-t)``."""
        t = _vec(t)
        out = np.zeros((len(t), 3, self.m, self.m), dtype=complex)
        if self.is_pole("left"):
            out -= self.residue("left")[None] / (t - self.lo)[:, None, None, None]
        if self.is_pole("right"):
            out += self.residue("right")[None] / (self.hi - t)[:, None, None, None]
        return out

    def finite_part(self, side: str) -> np.ndarray:
        """Limit of ``T - laurent`` at the chosen end."""
        eps = 1e-7 * self.length
        ts = np.array([1.0, 2.0, 3.0]) * eps
        t = self.lo + ts if side == "left" else self.hi - ts
        reg = self.T(t) - self.laurent(t)
        # quadratic extrapolation to eps = 0
        return 3.0 * reg[0] - 3.0 * reg[1] + reg[2]

    def to_dict(self) -> dict:
        raise NotImplementedError


class ConstantInterval(NahmInterval):
    """Constant ``T`` (commuting for a solution); the zero family is a special case."""

    kind = "constant"

    def __init__(self, lo, hi, Tc, T0c=None):
        Tc = np.asarray(Tc, dtype=complex)
        super().__init__(lo, hi, Tc.shape[-1])
        self.Tc = Tc
        self.T0c = None if T0c is None else np.asarray(T0c, dtype=complex)

    @classmethod
    def zero(cls, lo, hi, m):
        return cls(lo, hi, np.zeros((3, m, m), dtype=complex))

    def T(self, t):
        t = _vec(t)
        return np.broadcast_to(self.Tc, (len(t),) + self.Tc.shape).copy()

    def dT(self, t):
        t = _vec(t)
        return np.zeros((len(t),) + self.Tc.shape, dtype=complex)

    def T0(self, t):
        t = _vec(t)
        if self.T0c is None:
            return np.zeros((len(t), self.m, self.m), dtype=complex)
        return np.broadcast_to(self.T0c, (len(t), self.m, self.m)).copy()

    def has_connection(self):
        return self.T0c is not None and bool(np.abs(self.T0c).max() > 0)

    def finite_part(self, side):
        return self.Tc.copy()

    def to_dict(self):
        d = {"kind": "constant", "lo": self.lo, "hi": self.hi, "T": _cpx(self.Tc)}
        if self.T0c is not None:
            d["T0"] = _cpx(self.T0c)
        return d


class PurePoleInterval(NahmInterval):
    """``T = -rho/(t-lo)`` (left) or ``T = +rho/(hi-t)`` (right)."""

    kind = "pure_pole"

    def __init__(self, lo, hi, rho_full, side: str = "left"):
        rho_full = np.asarray(rho_full, dtype=complex)
        super().__init__(lo, hi, rho_full.shape[-1])
        self.rho = rho_full
        self.side = side

    def _den(self, t):
        return (t - self.lo) if self.side == "left" else (self.hi - t)

    def T(self, t):
        t = _vec(t)
        sgn = -1.0 if self.side == "left" else 1.0
        return sgn * self.rho[None] / self._den(t)[:, None, None, None]

    def dT(self, t):
        t = _vec(t)
        return self.rho[None] / (self._den(t) ** 2)[:, None, None, None]

    def residue(self, side):
        if side == self.side:
            return self.rho.copy()
        return np.zeros_like(self.rho)

    def finite_part(self, side):
        if side == self.side:
            return np.zeros_like(self.rho)
        return self.T(self.hi if side == "right" else self.lo)[0]

    def to_dict(self):
        return {"kind": "pure_pole", "lo": self.lo, "hi": self.hi, "side": self.side, "rho": _cpx(self.rho)}


class SampledInterval(NahmInterval):
    """Smooth part sampled on Chebyshev panels plus analytic Laurent terms."""

    kind = "sampled"

    def __init__(self, lo, hi, smooth: ChebPanels, res_left=None, res_right=None, conn: ChebPanels | None = None):
        m = smooth.coeffs.shape[-1]
        super().__init__(lo, hi, m)
        self.smooth = smooth
        z = np.zeros((3, m, m), dtype=complex)
        self.res_left = z if res_left is None else np.asarray(res_left, dtype=complex)
        self.res_right = z if res_right is None else np.asarray(res_right, dtype=complex)
        self.conn = conn

    def residue(self, side):
        return (self.res_left if side == "left" else self.res_right).copy()

    def T(self, t):
        t = _vec(t)
        return skew(self.smooth(t) + self.laurent(t))

    def dT(self, t):
        t = _vec(t)
        d = self.smooth.derivative(t)
        if self.is_pole("left"):
            d = d + self.res_left[None] / ((t - self.lo) ** 2)[:, None, None, None]
        if self.is_pole("right"):
            d = d + self.res_right[None] / ((self.hi - t) ** 2)[:, None, None, None]
        return d

    def T0(self, t):
        t = _vec(t)
        if self.conn is None:
            return np.zeros((len(t), self.m, self.m), dtype=complex)
        return self.conn(t)

    def has_connection(self):
        return self.conn is not None

    def finite_part(self, side):
        return self.smooth(self.lo if side == "left" else self.hi)[0]

    def to_dict(self):
        d = {
            "kind": "sampled", "lo": self.lo, "hi": self.hi,
            "breaks": self.smooth.breaks.tolist(), "values": _cpx(self.smooth.samples()),
            "res_left": _cpx(self.res_left), "res_right": _cpx(self.res_right),
        }
        if self.conn is not None:
            d["conn_breaks"] = self.conn.breaks.tolist()
            d["conn_values"] = _cpx(self.conn.samples())
        return d


class GaugedInterval(NahmInterval):
    """``T' = g T g^-1`` and ``T0' = g T0 g^-1 - g' g^-1``."""

    kind = "gauged"

    def __init__(self, base: NahmInterval, gauge: "GaugeFunction"):
        super().__init__(base.lo, base.hi, base.m)
        self.base = base
        self.gauge = gauge

    def T(self, t):
        t = _vec(t)
        g = self.gauge.g(t)
        gi = np.linalg.inv(g)
        return np.einsum("nij,najk,nkl->nail", g, self.base.T(t), gi)

    def dT(self, t):
        t = _vec(t)
        g = self.gauge.g(t)
        dg = self.gauge.dg(t)
        gi = np.linalg.inv(g)
        Tb = self.base.T(t)
        dTb = self.base.dT(t)
        A = np.einsum("nij,njk->nik", dg, gi)
        core = np.einsum("nij,najk,nkl->nail", g, dTb, gi)
        Tg = np.einsum("nij,najk,nkl->nail", g, Tb, gi)
        return core + np.einsum("nij,najk->naik", A, Tg) - np.einsum("naij,njk->naik", Tg, A)

    def T0(self, t):
        t = _vec(t)
        g = self.gauge.g(t)
        gi = np.linalg.inv(g)
        out = -np.einsum("nij,njk->nik", self.gauge.dg(t), gi)
        if self.base.has_connection():
            out = out + np.einsum("nij,njk,nkl->nil", g, self.base.T0(t), gi)
        return out

    def has_connection(self):
        return True

    def residue(self, side):
        end = self.lo if side == "left" else self.hi
        g = self.gauge.g(end)[0]
        return np.einsum("ij,ajk,kl->ail", g, self.base.residue(side), np.linalg.inv(g))

    def to_dict(self):
        return {"kind": "gauged", "base": self.base.to_dict(), "gauge": self.gauge.to_dict()}


class RescaledInterval(NahmInterval):
    """Pullback along the affine map onto the base interval, scaled by ``s``."""

    kind = "rescaled"

    def __init__(self, base: NahmInterval, lo: float, hi: float):
        super().__init__(lo, hi, base.m)
        self.base = base
        self.s = base.length / (hi - lo)

    def f(self, t):
        return self.base.lo + (np.asarray(t) - self.lo) * self.s

    def T(self, t):
        return self.s * self.base.T(self.f(_vec(t)))

    def dT(self, t):
        return self.s * self.s * self.base.dT(self.f(_vec(t)))

    def T0(self, t):
        return self.s * self.base.T0(self.f(_vec(t)))

    def has_connection(self):
        return self.base.has_connection()

    def residue(self, side):
        return self.base.residue(side)

    def finite_part(self, side):
        return self.s * self.base.finite_part(side)

    def to_dict(self):
        return {"kind": "rescaled", "lo": self.lo, "hi": self.hi, "base": self.base.to_dict()}


# ------------------------------------------------------------- gauge maps
class GaugeFunction:
    kind = "base"

    def g(self, t) -> np.ndarray:
        raise NotImplementedError

    def dg(self, t) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class ConstantGauge(GaugeFunction):
    kind = "constant"

    def __init__(self, U):
        self.U = np.asarray(U, dtype=complex)

    def g(self, t):
        t = _vec(t)
        return np.broadcast_to(self.U, (len(t),) + self.U.shape).copy()

    def dg(self, t):
        t = _vec(t)
        return np.zeros((len(t),) + self.U.shape, dtype=complex)

    def to_dict(self):
        return {"kind": "constant", "U": _cpx(self.U)}


class ExpPolyGauge(GaugeFunction):
    """``g(t) = U0 prod_j exp(phi_j(t) X_j)`` with polynomial ``phi_j``.

    ``coeffs[j]`` are the power-series coefficients of ``phi_j`` in
    ``t - center`` (lowest order first); every ``X_j`` is skew-Hermitian.
    """

    kind = "exppoly"

    def __init__(self, U0, X, coeffs, center: float = 0.0):
        self.U0 = np.asarray(U0, dtype=complex)
        self.X = np.asarray(X, dtype=complex)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.center = float(center)
        self._eig = [np.linalg.eigh(1j * x) for x in self.X]

    def _phi(self, t):
        s = _vec(t) - self.center
        ph = np.stack([np.polynomial.polynomial.polyval(s, c) for c in self.coeffs])
        dph = np.stack([np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(c))
                        for c in self.coeffs])
        return ph, dph

    def _factors(self, t):
        ph, _ = self._phi(t)
        out = []
        for (w, v), p in zip(self._eig, ph):
            # exp(p X) with X = -i H, H = v diag(w) v^*
            e = np.exp(-1j * p[:, None] * w[None, :])
            out.append(np.einsum("ij,nj,kj->nik", v, e, v.conj()))
        return out

    def g(self, t):
        t = _vec(t)
        out = np.broadcast_to(self.U0, (len(t),) + self.U0.shape).copy()
        for f in self._factors(t):
            out = out @ f
        return out

    def dg(self, t):
        t = _vec(t)
        facs = self._factors(t)
        _, dph = self._phi(t)
        total = np.zeros((len(t),) + self.U0.shape, dtype=complex)
        for j in range(len(facs)):
            term = np.broadcast_to(self.U0, total.shape).copy()
            for i, f in enumerate(facs):
                if i == j:
                    term = term @ (dph[j][:, None, None] * self.X[j][None]) @ f
                else:
                    term = term @ f
            total += term
        return total

    def to_dict(self):
        return {"kind": "exppoly", "U0": _cpx(self.U0), "X": _cpx(self.X),
                "coeffs": self.coeffs.tolist(), "center": self.center}


class PathOrderedGauge(GaugeFunction):
    """Solution of ``g' = g T0`` with ``g(t_ref) = 1`` on Chebyshev panels.

    The derivative is evaluated from the defining equation, so the gauged
    connection ``g T0 g^-1 - g' g^-1`` vanishes identically.
    """

    kind = "path_ordered"

    def __init__(self, panels: ChebPanels, source: NahmInterval, t_ref: float):
        self.panels = panels
        self.source = source
        self.t_ref = t_ref

    @classmethod
    def solve(cls, interval: NahmInterval, t_ref: float | None = None, n_panels: int = 8, deg: int = 20):
        lo, hi = interval.lo, interval.hi
        t_ref = 0.5 * (lo + hi) if t_ref is None else t_ref
        m = interval.m
        breaks = np.linspace(lo, hi, n_panels + 1)
        pts = ChebPanels(breaks, np.zeros((n_panels, deg + 1, m, m))).sample_points().ravel()

        def rhs(t, y):
            g = y.reshape(m, m)
            return (g @ interval.T0(t)[0]).ravel()

        vals = np.empty((len(pts), m, m), dtype=complex)
        y0 = np.eye(m, dtype=complex).ravel()
        for sel, tend in ((pts >= t_ref, hi), (pts < t_ref, lo)):
            tt = pts[sel]
            if len(tt) == 0:
                continue
            order = np.argsort(np.abs(tt - t_ref))
            sol = solve_ivp(rhs, (t_ref, tend), y0, method="DOP853", t_eval=tt[order],
                            rtol=1e-13, atol=1e-14)
            got = np.empty((len(tt), m, m), dtype=complex)
            got[order] = sol.y.T.reshape(-1, m, m)
            vals[sel] = got
        # re-unitarize by polar projection
        u, _, vh = np.linalg.svd(vals)
        vals = u @ vh
        panels = ChebPanels.from_samples(breaks, vals.reshape(n_panels, deg + 1, m, m))
        return cls(panels, interval, t_ref)

    def g(self, t):
        return self.panels(_vec(t))

    def dg(self, t):
        t = _vec(t)
        return self.g(t) @ self.source.T0(t)

    def to_dict(self):
        return {"kind": "path_ordered", "breaks": self.panels.breaks.tolist(),
                "values": _cpx(self.panels.samples()), "t_ref": self.t_ref}


# ------------------------------------------------------------ structures
@dataclass
class PoleStructure:
    side: str
    blocks: tuple
    rho: np.ndarray
    tau: np.ndarray
    V: np.ndarray
    W: np.ndarray

    @property
    def remainder_decay(self) -> list:
        return [(k - 1) / 2 for k in self.blocks]


@dataclass
class JumpData:
    """Jump vectors ``x`` (columns, ``m x r0``) and spinors ``q`` (``r0 x 2``)."""

    x: np.ndarray
    q: np.ndarray

    @classmethod
    def empty(cls, m: int) -> "JumpData":
        return cls(np.zeros((m, 0), dtype=complex), np.zeros((0, 2), dtype=complex))

    @property
    def r0(self) -> int:
        return self.x.shape[1]

    def operator(self) -> np.ndarray:
        """``sum_rho c_a(q_rho) x_rho x_rho^*`` stacked over ``a`` (shape ``(3, m, m)``)."""
        m = self.x.shape[0]
        out = np.zeros((3, m, m), dtype=complex)
        for r in range(self.r0):
            c = spinor_bloch(self.q[r])
            out += c[:, None, None] * np.outer(self.x[:, r], self.x[:, r].conj())[None]
        return out

    def y_vectors(self, tol: float = 1e-14) -> np.ndarray:
        cols = [np.kron(self.x[:, r], self.q[r]) for r in range(self.r0)
                if np.linalg.norm(self.q[r]) > tol]
        if not cols:
            return np.zeros((2 * self.x.shape[0], 0), dtype=complex)
        return np.stack(cols, axis=1)


@dataclass
class SubspaceTriple:
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray

    def proj(self, name: str) -> np.ndarray:
        B = getattr(self, name)
        return B @ B.conj().T


def _orth(A: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    if A.shape[1] == 0:
        return A
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    return u[:, s > tol * max(1.0, s.max())]


@dataclass(frozen=True)
class NahmData:
    sbt: SymmetryBreakingType
    framing: Framing
    intervals: tuple
    jumps: tuple
    family: str = "custom"
    collar_rel: float = DEFAULT_COLLAR
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def inv(self):
        return validate_type(self.sbt)

    @property
    def N(self) -> int:
        return self.sbt.N

    @property
    def ranks(self) -> tuple:
        return tuple(iv.m for iv in self.intervals)

    def is_internal(self, level: int) -> bool:
        return 0 < level < self.sbt.n - 1

    def C(self, level: int) -> np.ndarray:
        return np.asarray(self.framing.C[level - 1])

    def V(self, i: int, side: str) -> np.ndarray:
        return np.asarray(self.framing.V_plus[i] if side == "left" else self.framing.V_minus[i])

    def level_of(self, i: int, side: str) -> int:
        return i if side == "left" else i + 1

    def pole(self, i: int, side: str) -> PoleStructure:
        inv = self.inv
        lv = inv.levels[self.level_of(i, side)]
        blocks = lv.blocks_plus if side == "left" else lv.blocks_minus
        V = self.V(i, side)
        W = orth_complement(V, self.intervals[i].m)
        res = self.intervals[i].residue(side)
        rho = np.einsum("ij,ajk,kl->ail", V.conj().T, res, V)
        fin = self.intervals[i].finite_part(side)
        tau = np.einsum("ij,ajk,kl->ail", W.conj().T, fin, W)
        return PoleStructure(side, tuple(blocks), rho, tau, V, W)

    def subspaces(self, i: int, side: str) -> SubspaceTriple:
        m = self.intervals[i].m
        V = self.V(i, side)
        X = np.kron(V, np.eye(2))
        level = self.level_of(i, side)
        if self.is_internal(level):
            Yp = self.jumps[level].y_vectors()
            if side == "left":
                Y = _orth(Yp)
            else:
                Y = _orth(np.kron(self.C(level).conj().T, np.eye(2)) @ Yp)
        else:
            Y = np.zeros((2 * m, 0), dtype=complex)
        Z = orth_complement(np.concatenate([X, Y], axis=1), 2 * m) if m else np.zeros((0, 0), complex)
        return SubspaceTriple(X, Y, Z)

    def locate(self, t: float, allow_collar: bool = False) -> int:
        for i, iv in enumerate(self.intervals):
            c = 0.0 if allow_collar else self.collar_rel * iv.length
            if iv.lo + c <= t <= iv.hi - c:
                return i
        raise SampleOutOfRange(f"t = {t} is not inside an interval outside its collars")


# ------------------------------------------------------------- families
FAMILIES = ("flat_zero", "pure_pole", "flat_jump")


def _default_spinors(r0: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(r0, 2)) + 1j * rng.normal(size=(r0, 2))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def builtin_family(name: str, t: SymmetryBreakingType, f: Framing, *, spinors=None,
                   seed: int = 0, collar_rel: float = DEFAULT_COLLAR) -> NahmData:
    """Exact Nahm data of a named family.

    ``flat_zero``
        ``T = 0``; needs every Chern entry to be ``+-1``.
    ``pure_pole``
        Single interval with an irreducible pole filling ``C^m`` at one
        end and trivial blocks at the other.
    ``flat_jump``
        ``T = 0`` on the first interval, then constant commuting data
        obtained by adding the jump operators at each internal level.
        Needs every Chern entry in ``{-1, 0, 1}``.
    """
    inv = validate_type(t)
    validate_framing(t, f, raise_on_error=True)
    lam = t.lam
    ranks = inv.m[:-1]
    n = t.n
    empty_jumps = tuple(JumpData.empty(inv.m[l] if l < n - 1 else 0) for l in range(n))
    if name == "flat_zero":
        if any(abs(c) != 1 for row in t.chern for c in row):
            raise FamilyInapplicable("flat_zero needs every |k_ab| = 1")
        ivs = tuple(ConstantInterval.zero(lam[i], lam[i + 1], ranks[i]) for i in range(n - 1))
        return NahmData(t, f, ivs, empty_jumps, "flat_zero", collar_rel)
    if name == "pure_pole":
        if n != 2:
            raise FamilyInapplicable("pure_pole is defined for a single interval")
        m = ranks[0]
        left, right = inv.levels[0], inv.levels[1]
        if len(left.blocks_plus) == 1 and left.k_plus == m and all(k == 1 for k in right.blocks_minus):
            side, k, V = "left", left.k_plus, f.V_plus[0]
        elif len(right.blocks_minus) == 1 and right.k_minus == m and all(k == 1 for k in left.blocks_plus):
            side, k, V = "right", right.k_minus, f.V_minus[0]
        else:
            raise FamilyInapplicable("pure_pole needs one irreducible pole filling C^m and trivial blocks opposite")
        if k < 2:
            raise FamilyInapplicable("pure_pole needs a nontrivial irreducible")
        rho = block_generators((k,))
        rho_full = np.einsum("ij,ajk,lk->ail", V, rho, V.conj())
        iv = PurePoleInterval(lam[0], lam[1], rho_full, side)
        return NahmData(t, f, (iv,), empty_jumps, "pure_pole", collar_rel)
    if name == "flat_jump":
        if any(abs(c) > 1 for row in t.chern for c in row):
            raise FamilyInapplicable("flat_jump needs every |k_ab| <= 1")
        ivs = [ConstantInterval.zero(lam[0], lam[1], ranks[0])]
        jumps = [JumpData.empty(ranks[0])]
        for l in range(1, n - 1):
            r0 = inv.levels[l].r_zero
            Vm = np.asarray(f.V_minus[l - 1])
            Vp = np.asarray(f.V_plus[l])
            C = np.asarray(f.C[l - 1])
            Wm = orth_complement(Vm, ranks[l - 1])
            Wp = orth_complement(Vp, ranks[l])
            prev = ivs[-1].Tc
            tau_minus = np.einsum("ij,ajk,kl->ail", Wm @ Wm.conj().T, prev, Wm @ Wm.conj().T)
            x = Wp[:, :r0]
            if spinors is not None and l - 1 < len(spinors):
                q = np.asarray(spinors[l - 1], dtype=complex).reshape(r0, 2)
            else:
                q = _default_spinors(r0, seed + l)
            jd = JumpData(x, q)
            Tnew = np.einsum("ij,ajk,lk->ail", C, tau_minus, C.conj()) + jd.operator()
            for a in range(3):
                b, c = (a + 1) % 3, (a + 2) % 3
                if np.linalg.norm(Tnew[b] @ Tnew[c] - Tnew[c] @ Tnew[b]) > 1e-12:
                    raise FamilyInapplicable(f"propagated data at level {l} do not commute")
            ivs.append(ConstantInterval(lam[l], lam[l + 1], Tnew))
            jumps.append(jd)
        jumps.append(JumpData.empty(0))
        return NahmData(t, f, tuple(ivs), tuple(jumps), "flat_jump", collar_rel)
    raise FamilyInapplicable(f"unknown family {name!r}")


def zero_jump_data(t: SymmetryBreakingType, f: Framing) -> NahmData:
    """``T = 0`` everywhere with zero spinors at internal levels (trivial ``Y``)."""
    inv = validate_type(t)
    n = t.n
    ivs = tuple(ConstantInterval.zero(t.lam[i], t.lam[i + 1], inv.m[i]) for i in range(n - 1))
    jumps = [JumpData.empty(inv.m[0])]
    for l in range(1, n - 1):
        Wp = orth_complement(np.asarray(f.V_plus[l]), inv.m[l])
        r0 = inv.levels[l].r_zero
        jumps.append(JumpData(Wp[:, :r0], np.zeros((r0, 2), dtype=complex)))
    jumps.append(JumpData.empty(0))
    return NahmData(t, f, ivs, tuple(jumps), "zero_jump")


# ------------------------------------------------------------- residuals
def _sample_T(nd: NahmData, samples):
    groups = {}
    for j, s in enumerate(np.atleast_1d(samples)):
        groups.setdefault(nd.locate(float(s)), []).append(j)
    return groups


def nahm_residual(nd: NahmData, samples) -> float:
    """Max over samples and ``a`` of ``||T_a' + [T0, T_a] - [T_b, T_c]||``."""
    samples = np.atleast_1d(np.asarray(samples, dtype=float))
    out = 0.0
    for i, idx in _sample_T(nd, samples).items():
        iv = nd.intervals[i]
        t = samples[idx]
        T = iv.T(t)
        dT = iv.dT(t)
        T0 = iv.T0(t)
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            r = dT[:, a] + T0 @ T[:, a] - T[:, a] @ T0 - (T[:, b] @ T[:, c] - T[:, c] @ T[:, b])
            out = max(out, float(np.linalg.norm(r, axis=(1, 2)).max()))
    return out


def charpoly(A: np.ndarray) -> np.ndarray:
    """Characteristic polynomial coefficients (Faddeev-LeVerrier), highest first."""
    n = A.shape[-1]
    c = np.zeros(A.shape[:-2] + (n + 1,), dtype=complex)
    c[..., 0] = 1.0
    I = np.eye(n)
    Mk = np.zeros_like(A)
    for k in range(1, n + 1):
        Mk = A @ Mk + c[..., k - 1, None, None] * I
        c[..., k] = -np.trace(A @ Mk, axis1=-2, axis2=-1) / k
    return c


@dataclass
class LaxResult:
    zeta: np.ndarray
    samples: np.ndarray
    eigenvalues: np.ndarray
    charpoly: np.ndarray

    @property
    def eig_drift(self) -> float:
        ev = np.sort_complex(self.eigenvalues)
        return float(np.abs(ev - ev[:, :1]).max())

    @property
    def coeff_drift(self) -> float:
        c = self.charpoly
        return float(np.abs(c - c[:, :1]).max())


def lax_invariants(nd: NahmData, zeta, samples) -> LaxResult:
    """Spectrum and characteristic polynomial of ``A(zeta)`` along the samples."""
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    samples = np.atleast_1d(np.asarray(samples, dtype=float))
    groups = _sample_T(nd, samples)
    ms = {nd.intervals[i].m for i in groups}
    if len(ms) != 1:
        raise SampleOutOfRange("lax_invariants needs samples from intervals of equal rank")
    m = ms.pop()
    A = np.zeros((len(zeta), len(samples), m, m), dtype=complex)
    for i, idx in groups.items():
        T = nd.intervals[i].T(samples[idx])
        for z, zz in enumerate(zeta):
            A[z, idx] = (T[:, 0] + 1j * T[:, 1]) - 2j * T[:, 2] * zz + (T[:, 0] - 1j * T[:, 1]) * zz ** 2
    return LaxResult(zeta, samples, np.linalg.eigvals(A), charpoly(A))


# --------------------------------------------------------------- checks
def check_pole_structure(nd: NahmData, tol: float = 1e-10) -> Report:
    rep = Report("pole_structure")
    for i, iv in enumerate(nd.intervals):
        for side in ("left", "right"):
            ps = nd.pole(i, side)
            tag = f"interval{i}.{side}"
            nontrivial = [k for k in ps.blocks if k > 1]
            if not nontrivial:
                res = float(np.abs(iv.residue(side)).max()) if iv.m else 0.0
                rep.add(CheckRecord(f"{tag}.trivial_residue", res <= tol, res, tol))
                continue
            full = iv.residue(side)
            P = ps.V @ ps.V.conj().T
            leak = float(np.abs(full - np.einsum("ij,ajk,kl->ail", P, full, P)).max())
            rep.add(CheckRecord(f"{tag}.residue_in_V", leak <= tol, leak, tol))
            d = bracket_defect(ps.rho)
            rep.add(CheckRecord(f"{tag}.commutators", d <= tol, d, tol,
                                details="[rho_2, rho_3] = rho_1 cyclic"))
            cas = np.linalg.eigvalsh(casimir(ps.rho))
            found = sorted(int(round(np.sqrt(4 * c + 1))) for c in cas)
            expect = sorted(k for k in ps.blocks for _ in range(k))
            casdev = float(np.abs(np.sort(cas) - np.sort([(k * k - 1) / 4 for k in expect])).max())
            rep.add(CheckRecord(f"{tag}.casimir", found == expect and casdev <= 1e-8, casdev, 1e-8,
                                details={"casimir": np.sort(cas).tolist(), "blocks": list(ps.blocks)}))
            if ps.W.shape[1]:
                slope = _remainder_slope(nd, i, side, ps)
                need = min((k - 1) / 2 for k in nontrivial)
                ok = slope is None or slope >= need - 0.1
                rep.add(CheckRecord(f"{tag}.remainder_decay", ok, slope, need,
                                    details="log-log slope of pole rows of the off-diagonal block"))
    return rep


def _remainder_slope(nd, i, side, ps):
    iv = nd.intervals[i]
    eps = iv.length * nd.collar_rel * np.logspace(0, 1, 6)
    t = iv.lo + eps if side == "left" else iv.hi - eps
    T = iv.T(t)
    R = np.einsum("ij,najk,kl->nail", ps.V.conj().T, T, ps.W)
    norms = np.linalg.norm(R, axis=(1, 2, 3))
    if norms.max() < 1e-13:
        return None
    return float(np.polyfit(np.log(eps), np.log(norms + 1e-300), 1)[0])


@dataclass
class JumpExtraction:
    x: np.ndarray
    q: np.ndarray
    residual: float


def extract_jump(H: np.ndarray, r0: int, basis: np.ndarray, seed: int = 0) -> JumpExtraction:
    """Fit ``H_a ~ sum_rho v_rho,a x_rho x_rho^*`` with ``r0`` terms.

    ``H`` holds three Hermitian ``m x m`` matrices supported on the span of
    ``basis``; ``x_rho`` are unit vectors and ``v_rho`` real 3-vectors.
    """
    m = H.shape[-1]
    if r0 == 0:
        return JumpExtraction(np.zeros((m, 0), complex), np.zeros((0, 2), complex), float(np.abs(H).max()))
    scale = float(np.abs(H).max())
    if scale < 1e-14:
        return JumpExtraction(basis[:, :r0].copy(), np.zeros((r0, 2), complex), scale)
    S = np.einsum("aij,ajk->ik", H, H)
    w, U = np.linalg.eigh(S)
    U = U[:, np.argsort(w)[::-1][:r0]]
    h = np.einsum("ij,ajk,kl->ail", U.conj().T, H, U)
    rng = np.random.default_rng(seed)
    for _ in range(8):
        wa, wb = rng.normal(size=3), rng.normal(size=3)
        A = np.einsum("a,aij->ij", wa, h)
        B = np.einsum("a,aij->ij", wb, h)
        if np.linalg.cond(A) < 1e8:
            break
    _, Y = np.linalg.eig(np.linalg.solve(A, B))
    Xr = np.linalg.inv(Y).conj().T
    X = U @ Xr
    X = X / np.linalg.norm(X, axis=0, keepdims=True)
    sv = np.linalg.svd(X, compute_uv=False)
    if sv.min() < 1e-8 * sv.max():
        raise RankDeficient("extracted jump vectors are not linearly independent")
    P = np.stack([np.outer(X[:, r], X[:, r].conj()) for r in range(r0)])
    G = np.einsum("rij,sij->rs", P.conj(), P).real
    rhs = np.einsum("rij,aij->ra", P.conj(), H).real
    v = np.linalg.solve(G, rhs)
    fit = np.einsum("ra,rij->aij", v, P)
    q = np.stack([spinor_from_bloch(v[r]) for r in range(r0)])
    return JumpExtraction(X, q, float(np.abs(H - fit).max()))


def jump_operator_parts(nd: NahmData, level: int):
    """``(tau_plus, tau_minus, C)`` with the taus as full matrices on the complements."""
    i = level
    Vp = nd.V(i, "left")
    Vm = nd.V(i - 1, "right")
    Wp = orth_complement(Vp, nd.intervals[i].m)
    Wm = orth_complement(Vm, nd.intervals[i - 1].m)
    Pp = Wp @ Wp.conj().T
    Pm = Wm @ Wm.conj().T
    tp = np.einsum("ij,ajk,kl->ail", Pp, nd.intervals[i].finite_part("left"), Pp)
    tm = np.einsum("ij,ajk,kl->ail", Pm, nd.intervals[i - 1].finite_part("right"), Pm)
    return tp, tm, nd.C(level), Wp


def check_jump_data(nd: NahmData, tol: float = 1e-9) -> Report:
    rep = Report("jump_data")
    n = nd.sbt.n
    for l in range(1, n - 1):
        tp, tm, C, Wp = jump_operator_parts(nd, l)
        conn = np.einsum("aij,jk->aik", tp, C) - np.einsum("ij,ajk->aik", C, tm)
        stored = np.einsum("aij,jk->aik", nd.jumps[l].operator(), C)
        res = float(np.abs(conn - stored).max())
        rep.add(CheckRecord(f"level{l}.stored_form", res <= tol, res, tol,
                            details="assembled jump operator vs stored (x, q)"))
        H = -1j * np.einsum("aij,kj->aik", conn, C.conj())
        H = 0.5 * (H + np.swapaxes(H, -1, -2).conj())
        r0 = nd.inv.levels[l].r_zero
        ext = extract_jump(H, r0, Wp)
        rep.add(CheckRecord(f"level{l}.structured_fit", ext.residual <= tol, ext.residual, tol,
                            details={"x": _cpx(ext.x), "q": _cpx(ext.q)}))
        sub = nd.subspaces(l, "left")
        dims = (sub.X.shape[1], sub.Y.shape[1], sub.Z.shape[1])
        ok = sum(dims) == 2 * nd.intervals[l].m
        rep.add(CheckRecord(f"level{l}.decomposition", ok, list(dims), 2 * nd.intervals[l].m))
    return rep


# ----------------------------------------------------------------- gauge
def apply_gauge(g, nd: NahmData) -> NahmData:
    """Act with a gauge transformation (one :class:`GaugeFunction` per interval)."""
    g = tuple(g)
    if len(g) != len(nd.intervals):
        raise DimensionMismatch("one gauge function per interval is required")
    for gi, iv in zip(g, nd.intervals):
        if gi.g(iv.lo).shape[-1] != iv.m:
            raise DimensionMismatch("gauge function size does not match interval rank")
    ends = [(gi.g(iv.lo)[0], gi.g(iv.hi)[0]) for gi, iv in zip(g, nd.intervals)]
    Vp = [ends[i][0] @ np.asarray(nd.framing.V_plus[i]) for i in range(len(g))]
    Vm = [ends[i][1] @ np.asarray(nd.framing.V_minus[i]) for i in range(len(g))]
    C = [ends[l][0] @ nd.C(l) @ ends[l - 1][1].conj().T for l in range(1, nd.sbt.n - 1)]
    jumps = list(nd.jumps)
    for l in range(1, nd.sbt.n - 1):
        jumps[l] = JumpData(ends[l][0] @ nd.jumps[l].x, nd.jumps[l].q.copy())
    ivs = tuple(GaugedInterval(iv, gi) for iv, gi in zip(nd.intervals, g))
    return replace(nd, framing=Framing(tuple(Vp), tuple(Vm), tuple(C)), intervals=ivs, jumps=tuple(jumps))


def random_gauge(nd: NahmData, seed: int, degree: int = 3, amplitude: float = 1.0):
    """Smooth random gauge transformation of :class:`ExpPolyGauge` type."""
    from scipy.stats import unitary_group

    rng = np.random.default_rng(seed)
    out = []
    for iv in nd.intervals:
        m = iv.m
        U0 = unitary_group.rvs(m, random_state=rng) if m > 1 else np.exp(2j * np.pi * rng.random()) * np.eye(1)
        X = []
        for _ in range(2):
            a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
            X.append(skew(a) / max(1.0, np.linalg.norm(a)))
        coeffs = amplitude * rng.normal(size=(2, degree + 1)) / iv.length ** np.arange(degree + 1)
        out.append(ExpPolyGauge(U0, np.array(X), coeffs, center=0.5 * (iv.lo + iv.hi)))
    return tuple(out)


def to_temporal_gauge(nd: NahmData) -> NahmData:
    """Gauge-equivalent data with vanishing ``T0``; already temporal data are returned as is."""
    if not any(iv.has_connection() for iv in nd.intervals):
        return nd
    gs = []
    for iv in nd.intervals:
        if iv.has_connection():
            gs.append(PathOrderedGauge.solve(iv))
        else:
            gs.append(ConstantGauge(np.eye(iv.m)))
    return apply_gauge(gs, nd)


# --------------------------------------------------------------- rescale
def rescale(t_from: SymmetryBreakingType, t_to: SymmetryBreakingType, nd: NahmData) -> NahmData:
    """Pull back along the piecewise affine maps between the two level sets."""
    if t_from.chern != t_to.chern:
        raise ChernMismatch("rescaling needs identical Chern data")
    validate_type(t_to)
    if t_from == t_to:
        return nd
    ivs = []
    scales = []
    for i, iv in enumerate(nd.intervals):
        lo, hi = t_to.lam[i], t_to.lam[i + 1]
        s = iv.length / (hi - lo)
        scales.append(s)
        if isinstance(iv, PurePoleInterval):
            ivs.append(PurePoleInterval(lo, hi, iv.rho, iv.side))
        elif isinstance(iv, ConstantInterval):
            ivs.append(ConstantInterval(lo, hi, s * iv.Tc, None if iv.T0c is None else s * iv.T0c))
        elif isinstance(iv, RescaledInterval):
            inner = iv.base
            if abs(inner.lo - lo) < 1e-15 and abs(inner.hi - hi) < 1e-15:
                ivs.append(inner)
            else:
                ivs.append(RescaledInterval(inner, lo, hi))
        else:
            ivs.append(RescaledInterval(iv, lo, hi))
    out = replace(nd, sbt=t_to, intervals=tuple(ivs), jumps=tuple(nd.jumps))
    jumps = list(nd.jumps)
    for l in range(1, t_to.n - 1):
        tp, tm, C, Wp = jump_operator_parts(out, l)
        if np.abs(tm).max() < 1e-14 or abs(scales[l] - scales[l - 1]) < 1e-14:
            jumps[l] = JumpData(nd.jumps[l].x.copy(), np.sqrt(scales[l]) * nd.jumps[l].q)
        else:
            conn = np.einsum("aij,jk->aik", tp, C) - np.einsum("ij,ajk->aik", C, tm)
            H = -1j * np.einsum("aij,kj->aik", conn, C.conj())
            ext = extract_jump(0.5 * (H + np.swapaxes(H, -1, -2).conj()), nd.jumps[l].r0, Wp)
            jumps[l] = JumpData(ext.x, ext.q)
    return replace(out, jumps=tuple(jumps))


# ------------------------------------------------------------------ IVP
def solve_nahm_ivp(t0: float, T_init, interval, steps: int = 12, *, m_check: bool = True,
                   residues=(None, None), cap: float = 1e8, collar_rel: float = DEFAULT_COLLAR,
                   deg: int = 16, rtol: float = 1e-13) -> SampledInterval:
    """Continue a solution of Nahm's equation from ``t0`` across ``interval``.

    The solution is integrated with an explicit 8th-order Runge-Kutta
    scheme in both directions up to the collars, sampled on ``steps``
    graded Chebyshev panels per half interval and stored as the smooth part
    after subtracting the optional pole ``residues`` (left, right).
    Every right-hand side evaluation first projects onto skew-Hermitian
    matrices.
    """
    lo, hi = map(float, interval)
    T_init = np.asarray(T_init, dtype=complex)
    m = T_init.shape[-1]
    if not lo < t0 < hi:
        raise SampleOutOfRange("t0 must lie inside the interval")
    if m_check and np.abs(T_init + np.swapaxes(T_init, -1, -2).conj()).max() > 1e-10 * max(1.0, np.abs(T_init).max()):
        raise ValueError("initial matrices must be skew-Hermitian")
    L = hi - lo
    collar = collar_rel * L
    rl = np.zeros((3, m, m), complex) if residues[0] is None else np.asarray(residues[0], dtype=complex)
    rr = np.zeros((3, m, m), complex) if residues[1] is None else np.asarray(residues[1], dtype=complex)

    def rhs(_t, y):
        T = skew(y.reshape(3, m, m))
        out = np.empty_like(T)
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            out[a] = T[b] @ T[c] - T[c] @ T[b]
        return out.ravel()

    def blowup(_t, y):
        return cap - np.abs(y).max()

    blowup.terminal = True

    pl = bool(np.abs(rl).max() > 0)
    pr = bool(np.abs(rr).max() > 0)
    w_max = L / max(steps, 1)
    left = half_breaks(t0 - lo, pl, w_max, collar, collar)
    right = half_breaks(hi - t0, pr, w_max, collar, collar)
    if pl:
        left = left[1:]
    if pr:
        right = right[1:]
    breaks = np.unique(np.concatenate((lo + left, hi - right[::-1])))
    tmp = ChebPanels(breaks, np.zeros((len(breaks) - 1, deg + 1, 1)))
    pts = tmp.sample_points().ravel()
    vals = np.empty((len(pts), 3, m, m), dtype=complex)
    y0 = T_init.ravel()
    for sel, tend in ((pts >= t0, breaks[-1]), (pts < t0, breaks[0])):
        tt = pts[sel]
        if not len(tt):
            continue
        order = np.argsort(np.abs(tt - t0))
        sol = solve_ivp(rhs, (t0, tend), y0, method="DOP853", t_eval=tt[order], rtol=rtol,
                        atol=rtol * max(1.0, float(np.abs(T_init).max())), events=blowup)
        if sol.status == 1 or sol.y.shape[1] < len(tt):
            raise BlowupDetected(f"solution norm exceeded {cap:g} before reaching the collar")
        got = np.empty((len(tt), 3, m, m), dtype=complex)
        got[order] = skew(sol.y.T.reshape(-1, 3, m, m))
        vals[sel] = got
    probe = SampledInterval(lo, hi, ChebPanels(breaks, np.zeros((len(breaks) - 1, deg + 1, 3, m, m))), rl, rr)
    smooth_vals = vals - probe.laurent(pts)
    panels = ChebPanels.from_samples(breaks, smooth_vals.reshape(len(breaks) - 1, deg + 1, 3, m, m))
    return SampledInterval(lo, hi, panels, rl, rr)


# ------------------------------------------------------------- helpers
def _cpx(a) -> list:
    a = np.asarray(a)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _uncpx(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def expm_skew(X: np.ndarray) -> np.ndarray:
    return expm(X)


__all__ = [
    "NahmInterval", "ConstantInterval", "PurePoleInterval", "SampledInterval", "GaugedInterval",
    "RescaledInterval", "GaugeFunction", "ConstantGauge", "ExpPolyGauge", "PathOrderedGauge",
    "PoleStructure", "JumpData", "SubspaceTriple", "NahmData", "builtin_family", "zero_jump_data",
    "nahm_residual", "lax_invariants", "charpoly", "check_pole_structure", "check_jump_data",
    "extract_jump", "apply_gauge", "random_gauge", "to_temporal_gauge", "rescale", "solve_nahm_ivp",
    "FAMILIES", "SIGMA",
]
