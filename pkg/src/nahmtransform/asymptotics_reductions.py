"""Large-distance behaviour of the Higgs field and real/quaternionic reductions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .dirac_nahm import Fiber, SpinorFunction, compute_fiber
from .errors import FitIllConditioned, OddRank, TypeNotSymmetric
from .monopole_fields import align, green_fields, higgs
from .nahm_core import NahmData
from .quaternion import SIGMA
from .report import CheckRecord, Report
from .sbtype import SymmetryBreakingType, energy_forms, validate_type

CLUSTER_TOL = 0.05
K_ROUND_TOL = 0.1
SYM_TOL = 1e-8
ALGEBRA_TOL = 1e-10


# ------------------------------------------------------------ ray profiles
@dataclass
class RayProfile:
    direction: np.ndarray
    radii: np.ndarray
    spectra: np.ndarray  # (n_radii, N), imaginary parts, continuation-matched

    def branch(self, j: int) -> np.ndarray:
        return self.spectra[:, j]


def ray_profile(nd: NahmData, direction, radii, workers: int = 1) -> RayProfile:
    """Higgs spectra along ``r * direction``.

    Branches are matched across radii in ascending order; for scalar
    values that is the optimal nearest-neighbour assignment, and the
    branches of one level differ only at order ``1/r^2``.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    radii = np.sort(np.asarray(radii, dtype=float))

    def one(r):
        return np.sort(np.linalg.eigvalsh(-1j * higgs(nd, compute_fiber(nd, r * d))))

    if workers > 1:
        raw = Parallel(n_jobs=workers)(delayed(one)(r) for r in radii)
    else:
        raw = [one(r) for r in radii]
    return RayProfile(d, radii, np.array(raw))


# ------------------------------------------------------------ fits
@dataclass
class BreakingFit:
    """Per-branch fit ``Im = -lambda - k/(2r) + c/r^2`` grouped into levels."""

    lam_branch: np.ndarray
    k_branch: np.ndarray
    c_branch: np.ndarray
    residuals: np.ndarray
    lam: tuple
    mult: tuple
    k: tuple

    def matches(self, t: SymmetryBreakingType, lam_tol: float = 1e-3, k_tol: float = K_ROUND_TOL) -> Report:
        rep = Report("breaking_fit")
        ok_len = len(self.lam) == t.n
        rep.add(CheckRecord("level_count", ok_len, len(self.lam), t.n))
        if not ok_len:
            return rep
        dl = float(np.max(np.abs(np.asarray(self.lam) - np.asarray(t.lam))))
        rep.add(CheckRecord("lambda", dl <= lam_tol, dl, lam_tol))
        rep.add(CheckRecord("multiplicities", tuple(self.mult) == tuple(t.ranks), list(self.mult), list(t.ranks)))
        if tuple(self.mult) == tuple(t.ranks):
            kk = [np.sort(np.asarray(k))[::-1] for k in self.k]
            err = max(float(np.max(np.abs(a - np.asarray(b)))) for a, b in zip(kk, t.chern))
            rnd = max(float(np.max(np.abs(a - np.round(a)))) for a in kk)
            rep.add(CheckRecord("chern_integers", err < k_tol, err, k_tol,
                                details={"rounding_error": rnd, "k": [list(a) for a in kk]}))
        return rep

    def to_dict(self) -> dict:
        return {
            "lambda": list(self.lam), "multiplicities": list(self.mult),
            "chern": [list(map(float, k)) for k in self.k],
            "branches": {"lambda": self.lam_branch.tolist(), "k": self.k_branch.tolist(),
                         "c": self.c_branch.tolist(), "residual": self.residuals.tolist()},
        }


def fit_mu_kappa(profile: RayProfile, cluster_tol: float = CLUSTER_TOL) -> BreakingFit:
    r = profile.radii
    if len(r) < 3 or r.max() / r.min() < 4.0:
        raise FitIllConditioned("need at least 3 radii spanning a factor of 4")
    M = np.stack([np.ones_like(r), -0.5 / r, 1.0 / r ** 2], axis=1)
    if np.linalg.cond(M) > 1e10:
        raise FitIllConditioned("design matrix is ill conditioned")
    coef, *_ = np.linalg.lstsq(M, profile.spectra, rcond=None)
    res = np.abs(M @ coef - profile.spectra).max(axis=0)
    lam_b, k_b, c_b = -coef[0], coef[1], coef[2]
    order = np.argsort(lam_b, kind="stable")
    groups = [[order[0]]]
    for j in order[1:]:
        if lam_b[j] - lam_b[groups[-1][-1]] <= cluster_tol:
            groups[-1].append(j)
        else:
            groups.append([j])
    lam = tuple(float(np.mean(lam_b[g])) for g in groups)
    mult = tuple(len(g) for g in groups)
    k = tuple(tuple(float(v) for v in np.sort(k_b[g])[::-1]) for g in groups)
    return BreakingFit(lam_b, k_b, c_b, res, lam, mult, k)


# ------------------------------------------------------------ energy
@dataclass
class EnergyReport:
    energy: float
    lambda_k: float
    note: str = "energy = sum m_a (lambda_{a+1} - lambda_a) = -sum lambda_a k_a"


def energy(t: SymmetryBreakingType) -> EnergyReport:
    e, lk = energy_forms(t)
    return EnergyReport(e, lk)


def ymh_density(nd: NahmData, x) -> float:
    """``sum_{a<b} |F_ab|^2 + sum_a |nabla_a Phi|^2`` (Frobenius norms)."""
    fiber = compute_fiber(nd, x)
    dphi, F = green_fields(nd, x, fiber)
    return float(np.sum(np.abs(dphi) ** 2) + np.sum(np.abs(F) ** 2))


def ymh_energy_ball(nd: NahmData, radius: float = 20.0, n_radial: int = 10, n_theta: int = 3,
                    n_phi: int = 4, workers: int = 1) -> float:
    """``(1/4pi) int_{|x|<R}`` of :func:`ymh_density` by a product rule.

    Gauss-Legendre on three radial panels, Gauss in ``cos(theta)`` and the
    midpoint rule in ``phi``.
    """
    # radial panels concentrate nodes near the core
    edges = np.array([0.0, min(2.0, radius), min(6.0, radius), radius])
    edges = np.unique(edges)
    xr, wr = np.polynomial.legendre.leggauss(n_radial)
    rs, rw = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        rs.append(0.5 * (b - a) * xr + 0.5 * (a + b))
        rw.append(0.5 * (b - a) * wr)
    rs, rw = np.concatenate(rs), np.concatenate(rw)
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    ph = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    wp = np.full(n_phi, 2 * np.pi / n_phi)
    pts, wts = [], []
    for r, w in zip(rs, rw):
        for c, wc in zip(ct, wt):
            s = np.sqrt(1 - c * c)
            for p, wph in zip(ph, wp):
                pts.append(r * np.array([s * np.cos(p), s * np.sin(p), c]))
                wts.append(w * r * r * wc * wph)
    if workers > 1:
        dens = Parallel(n_jobs=workers)(delayed(ymh_density)(nd, x) for x in pts)
    else:
        dens = [ymh_density(nd, x) for x in pts]
    return float(np.dot(wts, dens) / (4 * np.pi))


# ------------------------------------------------------------ reductions
@dataclass
class StructureMap:
    """Antilinear map ``psi(t) -> c conj(psi(-t))`` on mirrored intervals."""

    kind: str
    spinor: np.ndarray
    square: float

    def apply_values(self, values: list) -> list:
        out = []
        n = len(values)
        for i in range(n):
            v = values[n - 1 - i][::-1]
            w = v.reshape(v.shape[0], -1, 2, *v.shape[2:])
            out.append(np.einsum("st,nit...->nis...", self.spinor, w.conj()).reshape(v.shape))
        return out

    def apply_extra(self, extra: dict, n_levels: int) -> dict:
        return {n_levels - 1 - l: e.conj() for l, e in extra.items()}


def _require_mirror(t: SymmetryBreakingType) -> None:
    validate_type(t)
    n = t.n
    lam = np.asarray(t.lam)
    if np.max(np.abs(lam + lam[::-1])) > 1e-12:
        raise TypeNotSymmetric("lambda is not symmetric about zero")
    for a in range(n):
        b = n - 1 - a
        if t.ranks[a] != t.ranks[b] or sorted(t.chern[a]) != sorted(-c for c in t.chern[b]):
            raise TypeNotSymmetric(f"levels {a} and {b} are not mirror images")


def data_symmetry_defect(nd: NahmData, sign: float, samples: int = 7) -> float:
    """``max |T(t) - sign conj T(-t)|`` on the mirrored interval at interior samples."""
    n = len(nd.intervals)
    out = 0.0
    for i, iv in enumerate(nd.intervals):
        jv = nd.intervals[n - 1 - i]
        if iv.m != jv.m or abs(iv.lo + jv.hi) > 1e-12 or abs(iv.hi + jv.lo) > 1e-12:
            return np.inf
        t = iv.lo + (iv.hi - iv.lo) * (np.arange(1, samples + 1) / (samples + 1))
        d = iv.T(t) - sign * np.conj(jv.T(-t))
        out = max(out, float(np.abs(d).max()))
    return out


def structure_map(kind: str) -> StructureMap:
    if kind == "so":
        c = np.eye(2, dtype=complex)
    elif kind == "sp":
        c = SIGMA[1]
    else:
        raise ValueError(f"unknown structure {kind!r}")
    sq = c @ c.conj()
    return StructureMap(kind, c, float(np.real(sq[0, 0])))


def _map_matrix(nd: NahmData, fiber: Fiber, smap: StructureMap) -> tuple[np.ndarray, float]:
    """``M_ab = <Psi_a, S Psi_b>`` and the part of ``S Psi`` outside the fiber."""
    imgs = smap.apply_values(fiber.values)
    F = fiber.flat()
    G = SpinorFunction(fiber.grid, imgs, None, smap.apply_extra(fiber.extra, nd.sbt.n)).flat()
    M = F.conj().T @ G
    out = float(np.linalg.norm(G - F @ M, 2))
    return M, out


def _reduction_report(nd: NahmData, kind: str, x, tol: float, h: float) -> Report:
    t = nd.sbt
    _require_mirror(t)
    if kind == "sp" and t.N % 2:
        raise OddRank(f"N = {t.N} is odd")
    rep = Report(f"{kind}_symmetry")
    sign = 1.0 if kind == "so" else -1.0
    d = data_symmetry_defect(nd, sign)
    rep.add(CheckRecord("data_symmetry", d <= tol, d, tol))
    smap = structure_map(kind)
    target = 1.0 if kind == "so" else -1.0
    sq = abs(smap.square - target)
    rep.add(CheckRecord("square", sq <= ALGEBRA_TOL, smap.square, target))
    x = np.asarray(x, dtype=float)
    fiber = compute_fiber(nd, x)
    M, out = _map_matrix(nd, fiber, smap)
    rep.add(CheckRecord("fiber_preserved", out <= tol, out, tol))
    # square on the fiber basis: S(S Psi) = Psi M conj(M)
    sq_f = float(np.abs(M @ M.conj() - target * np.eye(fiber.N)).max())
    rep.add(CheckRecord("square_on_fiber", sq_f <= ALGEBRA_TOL, sq_f, ALGEBRA_TOL))
    P = higgs(nd, fiber)
    com = float(np.abs(M @ P.conj() - P @ M).max())
    anti = float(np.abs(M @ P.conj() + P @ M).max())
    if kind == "so":
        rep.add(CheckRecord("commutes_with_phi", com <= tol, com, tol))
    else:
        rep.add(CheckRecord("anticommutes_with_phi", anti <= tol, anti, tol, details={"commutator": com}))
    ev = np.linalg.eigvalsh(-1j * P)
    mirror = -ev[::-1] if kind == "sp" else ev
    mirror_gap = float(np.abs(np.sort(ev) - np.sort(mirror)).max())
    rep.add(CheckRecord("spectrum_symmetry", mirror_gap <= tol, mirror_gap, tol))
    # covariant constancy along one aligned step
    y = x + h * np.array([1.0, 0.0, 0.0])
    fy = compute_fiber(nd, y, grid=fiber.grid)
    S = align(fiber.flat(), fy.flat())
    My, _ = _map_matrix(nd, fy, smap)
    drift = float(np.abs(S.conj().T @ My @ S.conj() - M).max() / h)
    rep.add(CheckRecord("covariantly_constant", drift <= 1e-3, drift, 1e-3,
                        details="aligned-frame derivative of the map matrix"))
    return rep


def check_so_symmetry(nd: NahmData, x=(0.3, -0.5, 0.8), tol: float = SYM_TOL, h: float = 1e-3) -> Report:
    """Real structure: conjugate, reflect ``t`` and the interval order."""
    return _reduction_report(nd, "so", x, tol, h)


def check_sp_symmetry(nd: NahmData, x=(0.3, -0.5, 0.8), tol: float = SYM_TOL, h: float = 1e-3) -> Report:
    """Quaternionic structure: as the real one, followed by ``sigma_2``."""
    return _reduction_report(nd, "sp", x, tol, h)


__all__ = [
    "RayProfile", "BreakingFit", "EnergyReport", "StructureMap", "ray_profile", "fit_mu_kappa", "energy",
    "ymh_density", "ymh_energy_ball", "check_so_symmetry", "check_sp_symmetry", "structure_map",
    "data_symmetry_defect",
]
