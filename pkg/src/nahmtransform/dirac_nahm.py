"""Cokernel of the Dirac-Nahm operator by shooting and finite matching.

For a point ``x`` the adjoint equation ``D_x^* psi = 0`` reads

    psi' = M(t) psi,   M = sum_a (T_a - i x_a) (x) sigma_a - T0 (x) 1,

on every interval.  Admissible local solutions are built at each end
(Frobenius series at a pole, the identity at a regular end) and marched
to the interval midpoint with a sixth-order Magnus integrator and QR
re-orthonormalisation at every node.  Local spaces are glued at the
internal levels by the jump rule ``P_Z(psi^+ - C psi^-) = 0`` and the
midpoint mismatches form the matching matrix whose kernel is the fiber.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, solve_triangular

from .errors import (
    ConditioningOverflow,
    CountMismatch,
    DegenerateLeadingMatrix,
    GridMismatch,
    StepFailure,
    SurjectivityFailure,
    WrongFiberDimension,
)
from .grids import DEFAULT_NODES, QuadGrid, build_grid, gauss_diff, gauss_endpoint_rows
from .nahm_core import NahmData, PoleStructure
from .quaternion import SIGMA, lift
from .report import CheckRecord, Report

KERNEL_RTOL = 1e-8
GAP_MIN = 1e3
FROBENIUS_TERMS = 6
MAX_HM = 0.25
STEP_TOL = 1e-10


# ------------------------------------------------------------ exponents
@dataclass
class ExponentTable:
    """Eigen-decomposition of the leading matrix ``A = -sum rho_a (x) sigma_a``."""

    values: np.ndarray
    vectors: np.ndarray
    admissible: np.ndarray
    families: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return int(self.admissible.sum())


def leading_matrix(res_full: np.ndarray) -> np.ndarray:
    return -lift(res_full)


def local_exponents(pole: PoleStructure, x=None) -> ExponentTable:
    """Frobenius exponents at a pole end (independent of ``x``).

    Each irreducible block ``R_k`` contributes ``k + 1`` decaying solutions
    with exponent ``(k - 1)/2`` and ``k - 1`` non-square-integrable ones
    with exponent ``-(k + 1)/2``; the complement of the pole subspace and
    trivial blocks give exponent 0.
    """
    V = pole.V
    full = np.einsum("ij,ajk,lk->ail", V, pole.rho, V.conj()) if V.shape[1] else \
        np.zeros((3, V.shape[0], V.shape[0]), dtype=complex)
    table = exponents_from_residue(full)
    table.families = [
        {"block": k, "decaying": ((k - 1) / 2, k + 1), "non_l2": (-(k + 1) / 2, k - 1)}
        for k in pole.blocks if k > 1
    ]
    return table


def exponents_from_residue(res_full: np.ndarray) -> ExponentTable:
    A = leading_matrix(res_full)
    try:
        w, U = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise DegenerateLeadingMatrix(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise DegenerateLeadingMatrix("non-finite eigenvalues of the leading matrix")
    half = np.round(2 * w) / 2
    w = np.where(np.abs(w - half) < 1e-8, half, w)
    return ExponentTable(w, U, w >= -1e-9)


@dataclass
class FrobeniusSeries:
    """``psi(eps) = sum_j c_j eps^(s + j)`` for each admissible column."""

    s: np.ndarray
    coeffs: np.ndarray  # (terms, 2m, a)

    def __call__(self, eps) -> np.ndarray:
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        j = np.arange(self.coeffs.shape[0])
        pw = eps[:, None, None] ** (self.s[None, None, :] + j[None, :, None])  # (n, terms, a)
        return np.einsum("jia,nja->nia", self.coeffs, pw)

    def limit(self) -> np.ndarray:
        out = self.coeffs[0].copy()
        out[:, self.s > 1e-9] = 0.0
        return out


def frobenius_series(A: np.ndarray, B: list, table: ExponentTable, terms: int) -> FrobeniusSeries:
    """Recursive coefficients ``(s + j - A) c_j = sum_l B_l c_{j-1-l}``.

    Resonant modes are dropped from the solve (least-squares inverse).
    """
    idx = np.flatnonzero(table.admissible)
    s = table.values[idx]
    c0 = table.vectors[:, idx]
    w, U = table.values, table.vectors
    coeffs = [c0]
    for j in range(1, terms):
        rhs = np.zeros_like(c0)
        for l in range(min(j, len(B))):
            rhs += B[l] @ coeffs[j - 1 - l]
        proj = U.conj().T @ rhs
        den = (s[None, :] + j) - w[:, None]
        inv = np.where(np.abs(den) > 1e-9, 1.0 / np.where(np.abs(den) > 1e-9, den, 1.0), 0.0)
        coeffs.append(U @ (proj * inv))
    return FrobeniusSeries(s, np.stack(coeffs))


# ------------------------------------------------------------ operators
def _x_term(x, m):
    x = np.asarray(x, dtype=float)
    return -1j * np.kron(np.eye(m), np.einsum("a,aij->ij", x, SIGMA))


def ode_matrix(iv, x, t) -> np.ndarray:
    """``M(t)`` of the adjoint equation at the times ``t`` (shape ``(n, 2m, 2m)``)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    m = iv.m
    M = lift(iv.T(t)) + _x_term(x, m)[None]
    if iv.has_connection():
        M = M - np.einsum("nij,st->nisjt", iv.T0(t), np.eye(2)).reshape(len(t), 2 * m, 2 * m)
    return M


def _comm(a, b):
    return a @ b - b @ a


def magnus_propagators(Mfun, ta: np.ndarray, tb: np.ndarray, max_hm: float = MAX_HM,
                       tol: float = STEP_TOL, max_refine: int = 6) -> np.ndarray:
    """Propagators from ``ta[j]`` to ``tb[j]`` for ``psi' = M psi``.

    Sixth-order Magnus scheme on three Gauss points per substep.  The
    number of substeps starts from ``|h| ||M|| <= max_hm`` and is doubled
    on gaps whose embedded fourth-order difference exceeds ``tol``.
    """
    ta = np.asarray(ta, float)
    tb = np.asarray(tb, float)
    h = tb - ta
    nrm = np.linalg.norm(Mfun(0.5 * (ta + tb)), axis=(1, 2))
    nsub = np.maximum(1, np.ceil(np.abs(h) * nrm / max_hm)).astype(int)
    c = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])
    for _ in range(max_refine + 1):
        gap = np.repeat(np.arange(len(h)), nsub)
        k = np.concatenate([np.arange(n) for n in nsub])
        hs = h[gap] / nsub[gap]
        t0 = ta[gap] + k * hs
        pts = (t0[:, None] + c[None, :] * hs[:, None]).ravel()
        Ms = Mfun(pts).reshape(len(hs), 3, *Mfun(pts[:1]).shape[1:])
        A1, A2, A3 = Ms[:, 0], Ms[:, 1], Ms[:, 2]
        hh = hs[:, None, None]
        a1 = hh * A2
        a2 = (np.sqrt(15) / 3) * hh * (A3 - A1)
        a3 = (10 / 3) * hh * (A3 - 2 * A2 + A1)
        C1 = _comm(a1, a2)
        C2 = -(1 / 60) * _comm(a1, 2 * a3 + C1)
        om = a1 + a3 / 12 + (1 / 240) * _comm(-20 * a1 - a3 + C1, a2 + C2)
        om4 = a1 + a3 / 12 - _comm(a1, a2) / 12
        est = np.linalg.norm(om - om4, axis=(1, 2))
        worst = np.zeros(len(h))
        np.maximum.at(worst, gap, est)
        bad = worst > tol
        if not bad.any():
            break
        if _ == max_refine:
            raise StepFailure(f"Magnus step error {worst.max():.2e} above {tol:.1e} after refinement")
        nsub = np.where(bad, nsub * 2, nsub)
    E = expm(om)
    out = np.empty((len(h),) + E.shape[1:], dtype=complex)
    pos = 0
    for j, n in enumerate(nsub):
        P = E[pos]
        for q in range(1, n):
            P = E[pos + q] @ P
        out[j] = P
        pos += n
    return out


# --------------------------------------------------------- local spaces
@dataclass
class ShootingBasis:
    """Admissible solutions on one half interval in scaled midpoint coordinates.

    ``values`` holds node values (``(n_half, 2m, a)``) ordered like the grid
    nodes, ``mid`` the midpoint values, ``limit`` the end limits (zero for
    columns that vanish at a pole) and ``exponents`` the Frobenius class of
    the original columns (``None`` at a regular end).
    """

    interval: int
    side: str
    values: np.ndarray
    mid: np.ndarray
    limit: np.ndarray
    exponents: np.ndarray | None
    r_factors: list

    @property
    def count(self) -> int:
        return self.mid.shape[1]


def _fit_regular_part(iv, x, side, A, eps0, terms):
    """Taylor coefficients ``B_l`` of ``M_end(eps) - A/eps`` near the end."""
    deg = terms - 1
    n = 2 * deg + 4
    z = np.cos(np.pi * (np.arange(n) + 0.5) / n)
    eps = 2.0 * eps0 * (1 + z)  # (0, 4 eps0)
    t = iv.lo + eps if side == "left" else iv.hi - eps
    M = ode_matrix(iv, x, t)
    if side == "right":
        M = -M
    Breg = M - A[None] / eps[:, None, None]
    V = np.vander(eps, deg + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, Breg.reshape(n, -1), rcond=None)
    return [coef[l].reshape(A.shape) for l in range(deg + 1)]


def shoot_solutions(nd: NahmData, x, interval: int, end: str, grid: QuadGrid | None = None,
                    terms: int = FROBENIUS_TERMS) -> ShootingBasis:
    """March the admissible solutions of one end to the interval midpoint."""
    x = np.asarray(x, dtype=float)
    grid = grid if grid is not None else fiber_grid(nd, x)
    ig = grid.intervals[interval]
    iv = nd.intervals[interval]
    m2 = 2 * iv.m
    half = slice(0, ig.n_left) if end == "left" else slice(ig.n_left, len(ig.nodes))
    nodes = ig.nodes[half]
    dist = nodes - iv.lo if end == "left" else iv.hi - nodes
    order = np.argsort(dist)
    pole = ig.pole_left if end == "left" else ig.pole_right
    Mfun = lambda t: ode_matrix(iv, x, t)  # noqa: E731

    if pole:
        res = iv.residue(end)
        table = exponents_from_residue(res)
        A = leading_matrix(res)
        B = _fit_regular_part(iv, x, end, A, ig.collar, terms)
        series = frobenius_series(A, B, table, terms)
        start_d = ig.collar
        S0 = series(start_d)[0]
        lim_c = series.limit()
        expo = series.s
    else:
        start_d = 0.0
        S0 = np.eye(m2, dtype=complex)
        lim_c = S0.copy()
        expo = None
        series = None
    a = S0.shape[1]
    inner = order[dist[order] <= start_d] if pole else np.array([], dtype=int)
    outer = order[dist[order] > start_d]
    d_path = np.concatenate(([start_d], dist[outer], [0.5 * iv.length]))
    t_path = iv.lo + d_path if end == "left" else iv.hi - d_path
    props = magnus_propagators(Mfun, t_path[:-1], t_path[1:])

    Q, R = np.linalg.qr(S0)
    Qs, Rs = [Q], [R]
    for P in props:
        Q, R = np.linalg.qr(P @ Q)
        Qs.append(Q)
        Rs.append(R)
    # backward sweep: P_k = R_{k+1}^{-1} P_{k+1} with unit midpoint coordinates
    Pk = np.eye(a, dtype=complex)
    coords = [None] * len(Qs)
    coords[-1] = Pk
    for k in range(len(Qs) - 1, 0, -1):
        Pk = solve_triangular(Rs[k], Pk)
        coords[k - 1] = Pk
    if not all(np.all(np.isfinite(c)) for c in coords):
        raise ConditioningOverflow("triangular factor chain overflowed")
    to_c = solve_triangular(Rs[0], coords[0])  # start coefficients
    vals = np.empty((len(nodes), m2, a), dtype=complex)
    for j, node in enumerate(outer):
        vals[node] = Qs[j + 1] @ coords[j + 1]
    if len(inner):
        vals[inner] = series(dist[inner]) @ to_c
    mid = Qs[-1] @ coords[-1]
    limit = lim_c @ to_c
    # column scaling by sup-norm over the half interval
    sup = np.maximum(np.linalg.norm(vals, axis=1).max(axis=0), np.linalg.norm(mid, axis=0))
    sup = np.maximum(sup, np.linalg.norm(limit, axis=0))
    if not np.all(np.isfinite(sup)) or np.any(sup == 0):
        raise ConditioningOverflow("degenerate column scaling")
    scale = 1.0 / sup
    return ShootingBasis(interval, end, vals * scale, mid * scale, limit * scale, expo, Rs)


# ------------------------------------------------------------ matching
@dataclass
class LevelSpace:
    level: int
    left: ShootingBasis | None  # right end of interval level-1 (psi^-)
    right: ShootingBasis | None  # left end of interval level (psi^+)
    basis: np.ndarray  # (a_minus + a_plus, dim U)
    expected: int

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass
class MatchingSystem:
    x: np.ndarray
    levels: list
    matrix: np.ndarray
    dim_U: tuple
    dim_V: tuple
    grid: QuadGrid

    @property
    def index(self) -> int:
        return int(sum(self.dim_U) - sum(self.dim_V))


def fiber_grid(nd: NahmData, x, p: int = DEFAULT_NODES, collar_rel: float | None = None) -> QuadGrid:
    ends = [(iv.lo, iv.hi) for iv in nd.intervals]
    poles = [(iv.is_pole("left"), iv.is_pole("right")) for iv in nd.intervals]
    return build_grid(ends, poles, float(np.linalg.norm(x)), p,
                      nd.collar_rel if collar_rel is None else collar_rel)


def expected_dims(nd: NahmData):
    inv = nd.inv
    m = [0] + list(inv.m)
    dU = tuple(m[l] + m[l + 1] + nd.sbt.ranks[l] for l in range(nd.sbt.n))
    dV = tuple(2 * iv.m for iv in nd.intervals)
    return dU, dV


def _null(A: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    if A.shape[0] == 0:
        return np.eye(A.shape[1], dtype=complex)
    u, s, vh = np.linalg.svd(A)
    tol = rtol * max(1.0, s.max() if len(s) else 0.0)
    rank = int((s > tol).sum())
    return vh[rank:].conj().T


def assemble_matching(nd: NahmData, x, grid: QuadGrid | None = None) -> MatchingSystem:
    """Local solution spaces per level and the midpoint-mismatch matrix."""
    x = np.asarray(x, dtype=float)
    grid = grid if grid is not None else fiber_grid(nd, x)
    n = nd.sbt.n
    dU_exp, dV = expected_dims(nd)
    shots_l = [shoot_solutions(nd, x, i, "left", grid) for i in range(n - 1)]
    shots_r = [shoot_solutions(nd, x, i, "right", grid) for i in range(n - 1)]
    levels = []
    for l in range(n):
        left = shots_r[l - 1] if l > 0 else None
        right = shots_l[l] if l < n - 1 else None
        if left is None:
            basis = np.eye(right.count, dtype=complex)
        elif right is None:
            basis = np.eye(left.count, dtype=complex)
        else:
            Zb = nd.subspaces(l, "left").Z
            C2 = np.kron(nd.C(l), np.eye(2))
            con = Zb.conj().T @ np.concatenate([-C2 @ left.limit, right.limit], axis=1)
            basis = _null(con)
        lv = LevelSpace(l, left, right, basis, dU_exp[l])
        if lv.dim != lv.expected:
            raise CountMismatch(f"level {l}: assembled dim U = {lv.dim}, expected {lv.expected}")
        levels.append(lv)
    cols = np.cumsum([0] + [lv.dim for lv in levels])
    rows = np.cumsum([0] + list(dV))
    D = np.zeros((rows[-1], cols[-1]), dtype=complex)
    for i in range(n - 1):
        lp, lm = levels[i], levels[i + 1]
        # psi^+ part of level i lives after its psi^- block
        off = lp.left.count if lp.left is not None else 0
        D[rows[i]:rows[i + 1], cols[i]:cols[i + 1]] = lp.right.mid @ lp.basis[off:]
        D[rows[i]:rows[i + 1], cols[i + 1]:cols[i + 2]] = -lm.left.mid @ lm.basis[: lm.left.count]
    return MatchingSystem(x, levels, D, tuple(lv.dim for lv in levels), dV, grid)


# ------------------------------------------------------------ fibers
@dataclass
class SpinorFunction:
    """Node values of a spinor per interval, ``values[i]`` shaped ``(n_i, 2 m_i, ...)``.

    ``extra`` maps an internal level with jump data to the coefficients
    ``s`` of the discrepancy ``psi^+ - C psi^- = W s`` there; they count
    towards the L2 norm.
    """

    grid: QuadGrid
    values: list
    limits: dict | None = None
    extra: dict | None = None

    def check_grid(self, other: "SpinorFunction") -> None:
        if not self.grid.same_as(other.grid):
            raise GridMismatch("spinor functions live on different grids")

    def flat(self, weighted: bool = True) -> np.ndarray:
        parts = []
        for g, v in zip(self.grid.intervals, self.values):
            w = np.sqrt(g.weights) if weighted else np.ones(len(g.weights))
            parts.append((w.reshape((-1,) + (1,) * (v.ndim - 1)) * v).reshape((-1,) + v.shape[2:]))
        for l in sorted(self.extra or {}):
            parts.append(self.extra[l])
        return np.concatenate(parts, axis=0)

    def map(self, fn) -> "SpinorFunction":
        return SpinorFunction(self.grid, [fn(i, v) for i, v in enumerate(self.values)], None)

    @classmethod
    def zeros(cls, grid: QuadGrid, ranks) -> "SpinorFunction":
        return cls(grid, [np.zeros((len(g.nodes), 2 * m), dtype=complex) for g, m in zip(grid.intervals, ranks)])


@dataclass
class Fiber:
    """Orthonormal basis of the cokernel at ``x``.

    ``values[i]`` has shape ``(n_i, 2 m_i, N)``; ``limits[i]`` maps
    ``"left"``/``"right"`` to ``(2 m_i, N)`` end limits.  ``extra[l]`` holds
    the ``(r0_l, N)`` jump coefficients at level ``l`` (see ``SpinorFunction``)
    and ``extra_lam[l]`` the level position they sit at.
    """

    x: np.ndarray
    grid: QuadGrid
    values: list
    limits: list
    gram_residual: float
    singular_values: np.ndarray
    gap: float
    dim_U: tuple
    dim_V: tuple
    extra: dict = field(default_factory=dict)
    extra_lam: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.values[0].shape[-1]

    @property
    def dim(self) -> int:
        return self.N

    def as_spinor(self) -> SpinorFunction:
        lims = {(i, s): self.limits[i][s] for i in range(len(self.limits)) for s in ("left", "right")}
        return SpinorFunction(self.grid, self.values, lims, dict(self.extra))

    def element(self, j: int) -> SpinorFunction:
        lims = {(i, s): self.limits[i][s][:, j] for i in range(len(self.limits)) for s in ("left", "right")}
        ext = {l: e[:, j] for l, e in self.extra.items()}
        return SpinorFunction(self.grid, [v[..., j] for v in self.values], lims, ext)

    def flat(self) -> np.ndarray:
        """Weighted node values stacked into an ``(L, N)`` matrix (Euclidean = L2)."""
        return self.as_spinor().flat(weighted=True)


def _kernel(D: np.ndarray, N: int):
    u, s, vh = np.linalg.svd(D, full_matrices=True)
    smax = s.max() if len(s) else 1.0
    rank = int((s >= KERNEL_RTOL * smax).sum())
    K = vh[rank:].conj().T
    kdim = K.shape[1]
    below = s[rank:]
    noise = max(float(below.max()) if len(below) else 0.0,
                float(np.linalg.norm(D @ K, 2)) if kdim else 0.0, 1e-16 * smax)
    above = float(s[rank - 1]) if rank else 0.0
    gap = above / noise
    if rank < D.shape[0]:
        raise SurjectivityFailure(f"matching map has rank {rank} < {D.shape[0]} (kernel {kdim}, expected {N})")
    if kdim != N:
        raise WrongFiberDimension(f"kernel dimension {kdim} != N = {N}")
    if gap < GAP_MIN:
        raise WrongFiberDimension(f"singular value gap {gap:.2e} below {GAP_MIN:.0e}")
    return K, s, gap


def compute_fiber(nd: NahmData, x, grid: QuadGrid | None = None, p: int = DEFAULT_NODES) -> Fiber:
    """Orthonormal fiber basis at ``x`` (Loewdin orthonormalisation in L2)."""
    x = np.asarray(x, dtype=float)
    grid = grid if grid is not None else fiber_grid(nd, x, p)
    ms = assemble_matching(nd, x, grid)
    N = nd.N
    K, s, gap = _kernel(ms.matrix, N)
    cols = np.cumsum([0] + [lv.dim for lv in ms.levels])
    values, limits = [], []
    for i, (g, iv) in enumerate(zip(grid.intervals, nd.intervals)):
        lp, lm = ms.levels[i], ms.levels[i + 1]
        off = lp.left.count if lp.left is not None else 0
        cp = lp.basis[off:] @ K[cols[i]:cols[i + 1]]
        cm = lm.basis[: lm.left.count] @ K[cols[i + 1]:cols[i + 2]]
        v = np.empty((len(g.nodes), 2 * iv.m, N), dtype=complex)
        v[: g.n_left] = lp.right.values @ cp
        v[g.n_left:] = lm.left.values @ cm
        values.append(v)
        limits.append({"left": lp.right.limit @ cp, "right": lm.left.limit @ cm})
    extra, extra_lam = {}, {}
    for l in range(1, nd.sbt.n - 1):
        Wl = nd.jumps[l].y_vectors()
        if Wl.shape[1] == 0:
            continue
        disc = limits[l]["left"] - np.kron(nd.C(l), np.eye(2)) @ limits[l - 1]["right"]
        extra[l] = np.linalg.lstsq(Wl, disc, rcond=None)[0]
        extra_lam[l] = float(nd.sbt.lam[l])
    sp = SpinorFunction(grid, values, None, extra)
    F = sp.flat()
    G = F.conj().T @ F
    w, U = np.linalg.eigh(G)
    if w.min() <= 0:
        raise WrongFiberDimension("fiber Gram matrix is singular")
    T = U @ np.diag(w ** -0.5) @ U.conj().T
    values = [v @ T for v in values]
    limits = [{k: l @ T for k, l in d.items()} for d in limits]
    extra = {l: e @ T for l, e in extra.items()}
    F2 = SpinorFunction(grid, values, None, extra).flat()
    gres = float(np.abs(F2.conj().T @ F2 - np.eye(N)).max())
    return Fiber(x, grid, values, limits, gres, s, gap, ms.dim_U, ms.dim_V, extra, extra_lam)


# ------------------------------------------------------------ operators
def _node_diff(t: np.ndarray) -> np.ndarray:
    """Differentiation matrix on the stored (rounded) node positions of one panel."""
    c = 0.5 * (t[0] + t[-1])
    h = 0.5 * (t[-1] - t[0])
    s = (t - c) / h
    V = np.polynomial.legendre.legvander(s, len(t) - 1)
    dV = np.zeros_like(V)
    for j in range(len(t)):
        e = np.zeros(len(t))
        e[j] = 1.0
        dV[:, j] = np.polynomial.legendre.legval(s, np.polynomial.legendre.legder(e))
    return dV @ np.linalg.inv(V) / h


def _derivative(g, v):
    Dg = gauss_diff(g.p)
    npan = g.n_panels
    width = np.diff(g.breaks)
    vv = v.reshape((npan, g.p) + v.shape[1:])
    d = np.einsum("ij,pj...->pi...", Dg, vv)
    d = d * (2.0 / width).reshape((npan, 1) + (1,) * (v.ndim - 1))
    # panels far narrower than |t| suffer from rounded node positions
    tiny = np.flatnonzero(width < 1e-5 * np.maximum(1.0, np.abs(g.breaks[:-1])))
    tt = g.nodes.reshape(npan, g.p)
    for k in tiny:
        d[k] = np.einsum("ij,j...->i...", _node_diff(tt[k]), vv[k])
    return d.reshape(v.shape)


def apply_dirac(nd: NahmData, x, psi: SpinorFunction, adjoint: bool = False) -> SpinorFunction:
    """``i(psi' + T0 psi) +/- sum (i T_a + x_a) sigma_a psi`` at the nodes.

    The plus sign gives ``D_x``; ``adjoint=True`` gives ``D_x^*``.
    """
    x = np.asarray(x, dtype=float)
    if len(psi.values) != len(nd.intervals):
        raise GridMismatch("spinor does not match the interval structure")
    out = []
    sgn = -1.0 if adjoint else 1.0
    for g, iv, v in zip(psi.grid.intervals, nd.intervals, psi.values):
        if v.shape[0] != len(g.nodes) or v.shape[1] != 2 * iv.m:
            raise GridMismatch("spinor values do not match the grid")
        dv = _derivative(g, v)
        m = iv.m
        Q = 1j * lift(iv.T(g.nodes)) + np.kron(np.eye(m), np.einsum("a,aij->ij", x, SIGMA))[None]
        T0 = np.einsum("nij,st->nisjt", iv.T0(g.nodes), np.eye(2)).reshape(len(g.nodes), 2 * m, 2 * m)
        out.append(1j * (dv + np.einsum("nij,nj...->ni...", T0, v))
                   + sgn * np.einsum("nij,nj...->ni...", Q, v))
    return SpinorFunction(psi.grid, out)


def adjoint_residual(nd: NahmData, fiber: Fiber) -> float:
    """Max node norm of ``D_x^* Psi`` over the fiber basis, pole collars excluded."""
    r = apply_dirac(nd, fiber.x, fiber.as_spinor(), adjoint=True)
    out = 0.0
    for g, v in zip(fiber.grid.intervals, r.values):
        keep = ~(g.collar_mask("left") | g.collar_mask("right"))
        if keep.any():
            out = max(out, float(np.linalg.norm(v[keep], axis=1).max()))
    return out


def h0_inner(psi: SpinorFunction, phi: SpinorFunction):
    """``sum_i int <psi_i, phi_i> dt`` (matrix of pairings for stacked bases)."""
    psi.check_grid(phi)
    a = psi.flat()
    b = phi.flat()
    return a.conj().T @ b if a.ndim == 2 else np.vdot(a, b)


def h1_norm(psi: SpinorFunction) -> float:
    tot = 0.0
    for g, v in zip(psi.grid.intervals, psi.values):
        d = _derivative(g, v)
        tot += float(np.einsum("n,n...->", g.weights, np.abs(d) ** 2))
    return float(np.sqrt(tot))


def end_limits(psi: SpinorFunction) -> dict:
    if psi.limits is not None:
        return psi.limits
    rows = gauss_endpoint_rows(psi.grid.p)
    out = {}
    for i, (g, v) in enumerate(zip(psi.grid.intervals, psi.values)):
        out[(i, "left")] = np.tensordot(rows[0], v[: g.p], axes=(0, 0))
        out[(i, "right")] = np.tensordot(rows[1], v[-g.p:], axes=(0, 0))
    return out


def check_boundary_conditions(nd: NahmData, psi: SpinorFunction, mode: str = "h1",
                              tol: float = 1e-8) -> Report:
    """Limit conditions at every end.

    ``mode="h1"`` checks the domain conditions (no ``X`` part at any end,
    the rest matched through ``C``; the ``Y`` part is penalised in the
    quadratic form rather than removed).  ``mode="coker"`` checks the
    cokernel rule that the discrepancy ``psi^+ - C psi^-`` at each
    internal level has no ``Z^+`` component.
    """
    lims = end_limits(psi)
    rep = Report(f"boundary_conditions[{mode}]")
    n = nd.sbt.n
    for i in range(n - 1):
        for side in ("left", "right"):
            lim = lims[(i, side)]
            level = nd.level_of(i, side)
            if mode == "h1":
                sub = nd.subspaces(i, side)
                val = float(np.linalg.norm(sub.X.conj().T @ lim)) if sub.X.shape[1] else 0.0
                rep.add(CheckRecord(f"interval{i}.{side}.X_limit", val <= tol, val, tol))
            elif not nd.is_internal(level):
                rep.add(CheckRecord(f"interval{i}.{side}.terminal", True, 0.0, tol,
                                    details="no condition at a terminal end"))
    for l in range(1, n - 1):
        lp = lims[(l, "left")]
        lm = lims[(l - 1, "right")]
        disc = lp - np.kron(nd.C(l), np.eye(2)) @ lm
        Z = nd.subspaces(l, "left").Z
        if mode == "h1":
            val = float(np.linalg.norm(disc))
            rep.add(CheckRecord(f"level{l}.C_matching", val <= tol, val, tol))
        else:
            val = float(np.linalg.norm(Z.conj().T @ disc))
            rep.add(CheckRecord(f"level{l}.discrepancy_in_XY", val <= tol, val, tol))
    return rep


__all__ = [
    "ExponentTable", "FrobeniusSeries", "ShootingBasis", "MatchingSystem", "SpinorFunction", "Fiber",
    "local_exponents", "exponents_from_residue", "frobenius_series", "magnus_propagators",
    "shoot_solutions", "assemble_matching", "compute_fiber", "apply_dirac", "adjoint_residual",
    "h0_inner", "h1_norm", "check_boundary_conditions", "fiber_grid", "expected_dims", "ode_matrix",
]
