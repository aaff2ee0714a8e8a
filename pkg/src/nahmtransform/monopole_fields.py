"""Monopole fields reconstructed from cokernel fibers.

Two independent routes are provided for the covariant derivative of the
Higgs field and the curvature: pairings with the Green operator of
``D^* D`` and finite differences of projection-aligned fiber frames.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import polar
from scipy.sparse.linalg import splu

from .dirac_nahm import Fiber, SpinorFunction, compute_fiber, fiber_grid
from .errors import AlignmentDegenerate, GridMismatch, SolveFailure
from .grids import DEFAULT_NODES, QuadGrid, lgl_to_gauss
from .nahm_core import NahmData
from .quaternion import EPS, SIGMA, lift
from .sbtype import orth_complement

SOLVE_RTOL = 1e-8
FD_REL_STEP = 1e-3
ALIGN_MIN = 0.5
PAIRS = ((0, 1), (0, 2), (1, 2))


# ------------------------------------------------------------ Higgs field
def _weighted_pairing(grid: QuadGrid, a: list, b: list, fn=None) -> np.ndarray:
    """``sum_i int <a_i, f(t) b_i> dt`` for stacked bases ``(n, 2m, K)``."""
    out = 0.0
    for g, u, v in zip(grid.intervals, a, b):
        w = g.weights if fn is None else g.weights * fn(g.nodes)
        out = out + np.einsum("n,nia,nib->ab", w, u.conj(), v)
    return out


def higgs(nd: NahmData, fiber: Fiber) -> np.ndarray:
    """Higgs matrix ``<Psi_a, -i t Psi_b>`` on an orthonormal fiber.

    Jump coefficients sit at their level position and contribute
    ``-i lambda_l s^* s``.
    """
    phi = _weighted_pairing(fiber.grid, fiber.values, fiber.values, lambda t: -1j * t)
    for l, s in fiber.extra.items():
        phi = phi - 1j * fiber.extra_lam[l] * (s.conj().T @ s)
    return 0.5 * (phi - phi.conj().T)


def traceless_higgs(phi) -> np.ndarray:
    """Remove ``tr(phi)/N`` from a Higgs matrix (or a ``FieldSample``)."""
    phi = np.asarray(getattr(phi, "phi", phi))
    N = phi.shape[0]
    return phi - np.trace(phi) / N * np.eye(N)


def higgs_eigenvalues(phi: np.ndarray) -> np.ndarray:
    """Imaginary parts of the spectrum, ascending."""
    return np.sort(np.linalg.eigvalsh(-1j * phi))


# ------------------------------------------------------------ Green operator
@dataclass
class GreenSolve:
    """Solution of ``H_x u = rhs``; ``residual`` is the relative algebraic residual."""

    rhs: SpinorFunction
    solution: SpinorFunction
    residual: float
    n_dof: int
    diagnostics: dict = field(default_factory=dict)


def _block_diag(mats: np.ndarray) -> sp.csr_matrix:
    n, d, _ = mats.shape
    rows = np.repeat(np.arange(n * d).reshape(n, d, 1), d, axis=2)
    cols = np.repeat(np.arange(n * d).reshape(n, 1, d), d, axis=1)
    return sp.csr_matrix((mats.ravel(), (rows.ravel(), cols.ravel())), shape=(n * d, n * d))


class GreenOperator:
    """Galerkin inverse of ``H_x = D~^* D~`` on the fiber grid.

    ``D~ u = (D_x u, W_l^* u^+(lambda_l))`` adds the jump penalty at levels
    carrying jump data.  Trial functions are continuous piecewise
    polynomials on the LGL points of each panel; the quadratic form is
    integrated with the Gauss rule of the fiber grid, so right-hand sides
    are consumed and solutions returned at the fiber quadrature nodes.
    """

    def __init__(self, nd: NahmData, x, grid: QuadGrid | None = None, p: int = DEFAULT_NODES):
        self.nd = nd
        self.x = np.asarray(x, dtype=float)
        self.grid = grid if grid is not None else fiber_grid(nd, self.x, p)
        self._assemble()

    def _assemble(self) -> None:
        nd, grid = self.nd, self.grid
        n = nd.sbt.n
        p = grid.p
        Ig, Dg = lgl_to_gauss(p)
        # global unknowns: interval interiors, then one block per internal level
        self._iv = []
        offset = 0
        for g, iv in zip(grid.intervals, nd.intervals):
            K = g.n_panels
            d = 2 * iv.m
            n_int = K * (p - 1) - 1
            self._iv.append((offset, n_int, d, K))
            offset += n_int * d
        self._lev = {}
        for l in range(1, n - 1):
            X = nd.subspaces(l, "left").X
            S = orth_complement(X, X.shape[0]) if X.shape[1] else np.eye(X.shape[0], dtype=complex)
            self._lev[l] = (offset, S)
            offset += S.shape[1]
        ndof = offset
        blocks, Ps, loads = [], [], []
        for i, (g, iv) in enumerate(zip(grid.intervals, nd.intervals)):
            off, n_int, d, K = self._iv[i]
            nl = K * (p - 1) + 1
            # interval LGL values from global unknowns
            P = sp.lil_matrix((nl * d, ndof), dtype=complex)
            for j in range(1, nl - 1):
                for c in range(d):
                    P[j * d + c, off + (j - 1) * d + c] = 1.0
            if i > 0:
                lo, S = self._lev[i]
                P[0:d, lo:lo + S.shape[1]] = S
            if i + 1 < n - 1:
                lo, S = self._lev[i + 1]
                C2 = np.kron(nd.C(i + 1), np.eye(2))
                P[(nl - 1) * d:nl * d, lo:lo + S.shape[1]] = C2.conj().T @ S
            P = P.tocsr()
            # panel-local copies of the shared LGL values
            rows = np.arange(K * p)
            cols = (rows // p) * (p - 1) + rows % p
            R = sp.kron(sp.csr_matrix((np.ones(K * p), (rows, cols)), shape=(K * p, nl)), sp.identity(d))
            t = g.nodes
            width = np.diff(g.breaks)
            Iblk = sp.kron(sp.identity(K), sp.kron(sp.csr_matrix(Ig), sp.identity(d)))
            Dblk = sp.kron(sp.diags(2.0 / width), sp.kron(sp.csr_matrix(Dg), sp.identity(d)))
            T0 = np.einsum("nij,st->nisjt", iv.T0(t), np.eye(2)).reshape(len(t), d, d)
            Q = 1j * lift(iv.T(t)) + np.kron(np.eye(iv.m), np.einsum("a,aij->ij", self.x, SIGMA))[None]
            B = 1j * (Dblk + _block_diag(T0) @ Iblk) + _block_diag(Q) @ Iblk
            Wq = sp.diags(np.repeat(g.weights, d))
            E = (Iblk @ R @ P).tocsr()
            BRP = (B @ R @ P).tocsr()
            blocks.append(BRP.conj().T @ Wq @ BRP)
            Ps.append(E)
            loads.append(Wq)
        A = sum(blocks[1:], blocks[0])
        pen = np.zeros((ndof, ndof), dtype=complex)
        for l, (lo, S) in self._lev.items():
            W = nd.jumps[l].y_vectors()
            if W.shape[1]:
                M = W.conj().T @ S
                pen[lo:lo + S.shape[1], lo:lo + S.shape[1]] += M.conj().T @ M
        A = (A + sp.csr_matrix(pen)).tocsc()
        self.A = A
        self._E = Ps
        self._Wq = loads
        self.n_dof = ndof
        try:
            self._lu = splu(A)
        except RuntimeError as exc:
            raise SolveFailure(f"factorisation failed: {exc}") from exc

    def solve_values(self, values: list) -> tuple[list, float]:
        """Apply ``G_x`` to node values ``values[i]`` of shape ``(n_i, 2m_i, ...)``."""
        if len(values) != len(self._E):
            raise GridMismatch("right-hand side does not match the interval structure")
        tail = values[0].shape[2:]
        K = int(np.prod(tail)) if tail else 1
        b = np.zeros((self.n_dof, K), dtype=complex)
        for E, Wq, v, g in zip(self._E, self._Wq, values, self.grid.intervals):
            if v.shape[0] != len(g.nodes):
                raise GridMismatch("right-hand side is not sampled on the Green grid")
            b += E.conj().T @ (Wq @ v.reshape(-1, K))
        c = self._lu.solve(b)
        if not np.all(np.isfinite(c)):
            raise SolveFailure("non-finite Green solution")
        bn = np.linalg.norm(b)
        res = float(np.linalg.norm(self.A @ c - b) / bn) if bn > 0 else 0.0
        if res > SOLVE_RTOL:
            raise SolveFailure(f"relative residual {res:.2e} exceeds {SOLVE_RTOL:.0e}")
        out = [(E @ c).reshape(v.shape) for E, v in zip(self._E, values)]
        return out, res

    def solve(self, rhs: SpinorFunction) -> GreenSolve:
        if not rhs.grid.same_as(self.grid):
            raise GridMismatch("right-hand side lives on a different grid")
        vals, res = self.solve_values(rhs.values)
        return GreenSolve(rhs, SpinorFunction(self.grid, vals), res, self.n_dof,
                          {"method": "galerkin-lgl", "panels": sum(g.n_panels for g in self.grid.intervals)})


def green_apply(nd: NahmData, x, rhs: SpinorFunction) -> GreenSolve:
    """Solve ``H_x u = rhs`` with the Green operator on the grid of ``rhs``."""
    return GreenOperator(nd, x, rhs.grid).solve(rhs)


def sigma_apply(values: list, alpha: int) -> list:
    """Action of the quaternion unit ``sigma_alpha`` on the spinor index."""
    out = []
    for v in values:
        w = v.reshape(v.shape[0], -1, 2, int(np.prod(v.shape[2:], dtype=int)))
        out.append(np.einsum("st,nitk->nisk", SIGMA[alpha], w).reshape(v.shape))
    return out


@dataclass
class GreenPairings:
    """``U_b = G Psi_b`` and ``V_ab = G sigma_a Psi_b`` on a fiber."""

    fiber: Fiber
    U: list
    V: list
    residual: float


def green_pairings(nd: NahmData, fiber: Fiber, green: GreenOperator | None = None) -> GreenPairings:
    green = green if green is not None else GreenOperator(nd, fiber.x, fiber.grid)
    N = fiber.N
    stacked = [np.concatenate([v] + [sa for sa in s], axis=-1)
               for v, s in zip(fiber.values, zip(*[sigma_apply(fiber.values, a) for a in range(3)]))]
    sol, res = green.solve_values(stacked)
    U = [s[..., :N] for s in sol]
    V = [[s[..., (a + 1) * N:(a + 2) * N] for s in sol] for a in range(3)]
    return GreenPairings(fiber, U, V, res)


def dphi_green(nd: NahmData, x, fiber: Fiber, alpha: int, pairings: GreenPairings | None = None) -> np.ndarray:
    """``nabla_alpha Phi = -<Psi, (sigma_alpha G + G sigma_alpha) Psi>``."""
    gp = pairings if pairings is not None else green_pairings(nd, fiber)
    sa = sigma_apply(fiber.values, alpha)
    a = -_weighted_pairing(fiber.grid, sa, gp.U)
    b = _weighted_pairing(fiber.grid, fiber.values, gp.V[alpha])
    m = -(a + b)
    return 0.5 * (m - m.conj().T)


def curvature_green(nd: NahmData, x, fiber: Fiber, alpha: int, beta: int,
                    pairings: GreenPairings | None = None) -> np.ndarray:
    """``F_ab = -<Psi, (sigma_a G sigma_b - sigma_b G sigma_a) Psi>``."""
    if alpha == beta:
        return np.zeros((fiber.N, fiber.N), dtype=complex)
    gp = pairings if pairings is not None else green_pairings(nd, fiber)
    sa = sigma_apply(fiber.values, alpha)
    sb = sigma_apply(fiber.values, beta)
    m = _weighted_pairing(fiber.grid, sa, gp.V[beta]) - _weighted_pairing(fiber.grid, sb, gp.V[alpha])
    return 0.5 * (m - m.conj().T)


# ------------------------------------------------------------ finite differences
def fd_step(x, rule: str | float | None = None) -> float:
    """Step from a rule ``"rel:c"`` (``c max(1,|x|)``), ``"abs:h"`` or a number."""
    r = np.linalg.norm(x)
    if rule is None:
        return FD_REL_STEP * max(1.0, r)
    if isinstance(rule, (int, float)):
        return float(rule)
    kind, _, val = str(rule).partition(":")
    if kind == "rel":
        return float(val) * max(1.0, r)
    if kind == "abs":
        return float(val)
    raise ValueError(f"unknown step rule {rule!r}")


def align(base: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Unitary ``S`` with ``other @ S`` closest to ``base`` (polar factor of the overlap)."""
    M = other.conj().T @ base
    smin = np.linalg.svd(M, compute_uv=False).min()
    if smin < ALIGN_MIN:
        raise AlignmentDegenerate(f"frame overlap singular value {smin:.2e} below {ALIGN_MIN}")
    U, _ = polar(M)
    return U


@dataclass
class FDConnection:
    """Finite-difference fields in the frame aligned to the base fiber."""

    x: np.ndarray
    h: float
    connection: np.ndarray
    dphi: np.ndarray
    curvature: np.ndarray
    fiber: Fiber
    frames: dict


def connection_fd(nd: NahmData, x, h=None, fiber: Fiber | None = None) -> FDConnection:
    """Aligned central differences at ``x``; ``h`` is a number or a step rule."""
    x = np.asarray(x, dtype=float)
    fiber = fiber if fiber is not None else compute_fiber(nd, x)
    h = fd_step(x, h)
    B0 = fiber.flat()
    P0 = B0 @ B0.conj().T
    frames = {}
    dB, dphi, A = [], [], []
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        Bs, phis = [], []
        for sgn in (1, -1):
            fy = compute_fiber(nd, x + sgn * e, grid=fiber.grid)
            By = fy.flat()
            S = align(B0, By)
            Bs.append(By @ S)
            phis.append(S.conj().T @ higgs(nd, fy) @ S)
            frames[(a, sgn)] = Bs[-1]
        d = (Bs[0] - Bs[1]) / (2 * h)
        dB.append(d)
        m = B0.conj().T @ d
        A.append(0.5 * (m - m.conj().T))
        dphi.append((phis[0] - phis[1]) / (2 * h))
    Q = [d - P0 @ d for d in dB]
    F = []
    for a, b in PAIRS:
        m = dB[a].conj().T @ Q[b] - dB[b].conj().T @ Q[a]
        F.append(0.5 * (m - m.conj().T))
    return FDConnection(x, h, np.array(A), np.array(dphi), np.array(F), fiber, frames)


def transport_loop(nd: NahmData, points, grid: QuadGrid | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Discrete parallel transport around a closed polygon.

    Returns the holonomy and the Higgs matrices at the start and after
    transport back to it.
    """
    pts = [np.asarray(p, dtype=float) for p in points]
    f0 = compute_fiber(nd, pts[0], grid=grid)
    grid = f0.grid
    B = f0.flat()
    for y in pts[1:] + [pts[0]]:
        fy = compute_fiber(nd, y, grid=grid)
        By = fy.flat()
        B = By @ align(B, By)
    Bend = B
    fend = compute_fiber(nd, pts[0], grid=grid)
    # Bend spans the base fiber; express in the base basis
    Hol = f0.flat().conj().T @ Bend
    phi0 = higgs(nd, f0)
    S = fend.flat().conj().T @ Bend
    phi1 = S.conj().T @ higgs(nd, fend) @ S
    return Hol, phi0, phi1


# ------------------------------------------------------------ Bogomolny
@dataclass
class BogomolnyResult:
    """``F_ab - eps_abc nabla_c Phi`` on both paths and the cross differences."""

    residual: float
    green: float
    fd: float
    cross_dphi: float
    cross_curvature: float
    h: float


def _bogo(F: np.ndarray, dphi: np.ndarray) -> float:
    out = 0.0
    for k, (a, b) in enumerate(PAIRS):
        rhs = sum(EPS[a, b, c] * dphi[c] for c in range(3))
        out = max(out, float(np.linalg.norm(F[k] - rhs)))
    return out


def green_fields(nd: NahmData, x, fiber: Fiber) -> tuple[np.ndarray, np.ndarray]:
    gp = green_pairings(nd, fiber)
    dphi = np.array([dphi_green(nd, x, fiber, a, gp) for a in range(3)])
    F = np.array([curvature_green(nd, x, fiber, a, b, gp) for a, b in PAIRS])
    return dphi, F


def bogomolny_residual(nd: NahmData, x, h=None, fiber: Fiber | None = None) -> BogomolnyResult:
    x = np.asarray(x, dtype=float)
    fiber = fiber if fiber is not None else compute_fiber(nd, x)
    dG, FG = green_fields(nd, x, fiber)
    fd = connection_fd(nd, x, h, fiber)
    rG = _bogo(FG, dG)
    rF = _bogo(fd.curvature, fd.dphi)
    cd = float(max(np.linalg.norm(dG[a] - fd.dphi[a]) for a in range(3)))
    cf = float(max(np.linalg.norm(FG[k] - fd.curvature[k]) for k in range(3)))
    return BogomolnyResult(max(rG, rF), rG, rF, cd, cf, fd.h)


# ------------------------------------------------------------ samples
@dataclass
class FieldSample:
    x: np.ndarray
    phi: np.ndarray
    connection: np.ndarray
    curvature: np.ndarray
    dphi: np.ndarray
    bogomolny_residual: float
    frame_id: str
    dphi_fd: np.ndarray | None = None
    curvature_fd: np.ndarray | None = None
    cross_dphi: float = float("nan")

    @property
    def eigenvalues(self) -> np.ndarray:
        return higgs_eigenvalues(self.phi)


def field_sample(nd: NahmData, x, h=None, p: int = DEFAULT_NODES, collar_rel: float | None = None) -> FieldSample:
    """Higgs field, both derivative paths and the Bogomolny residual at ``x``."""
    x = np.asarray(x, dtype=float)
    fiber = compute_fiber(nd, x, grid=fiber_grid(nd, x, p, collar_rel))
    phi = higgs(nd, fiber)
    dG, FG = green_fields(nd, x, fiber)
    fd = connection_fd(nd, x, h, fiber)
    rG = _bogo(FG, dG)
    rF = _bogo(fd.curvature, fd.dphi)
    cd = float(max(np.linalg.norm(dG[a] - fd.dphi[a]) for a in range(3)))
    return FieldSample(x, phi, fd.connection, FG, dG, max(rG, rF), "polar-aligned@" + ",".join(f"{v:.6g}" for v in x),
                       fd.dphi, fd.curvature, cd)


__all__ = [
    "GreenSolve", "GreenOperator", "GreenPairings", "FDConnection", "BogomolnyResult", "FieldSample",
    "higgs", "traceless_higgs", "higgs_eigenvalues", "green_apply", "green_pairings", "dphi_green",
    "curvature_green", "connection_fd", "bogomolny_residual", "field_sample", "fd_step", "align",
    "transport_loop", "sigma_apply", "green_fields",
]
