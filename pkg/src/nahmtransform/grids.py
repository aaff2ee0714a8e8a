"""Graded panel grids, Gauss quadrature and piecewise Chebyshev interpolants."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import legendre as npleg

DEFAULT_NODES = 16
DEFAULT_COLLAR = 1e-3
EPS_MIN_REL = 1e-10
GRADING = 2.0


@lru_cache(maxsize=None)
def gauss_legendre(p: int):
    x, w = npleg.leggauss(p)
    return x, w


@lru_cache(maxsize=None)
def lgl_nodes(p: int) -> np.ndarray:
    """Legendre-Gauss-Lobatto points on [-1, 1] (``p`` points, degree ``p-1``)."""
    inner = npleg.Legendre.basis(p - 1).deriv().roots().real
    return np.concatenate(([-1.0], np.sort(inner), [1.0]))


@lru_cache(maxsize=None)
def lgl_to_gauss(p: int):
    """Interpolation and differentiation matrices from LGL values to Gauss nodes.

    Both act on the reference panel [-1, 1]; derivatives still need the
    factor ``2 / width``.
    """
    xg, _ = gauss_legendre(p)
    xl = lgl_nodes(p)
    Vl = npleg.legvander(xl, p - 1)
    Vg = npleg.legvander(xg, p - 1)
    dVg = np.zeros_like(Vg)
    for j in range(p):
        c = np.zeros(p)
        c[j] = 1.0
        dVg[:, j] = npleg.legval(xg, npleg.legder(c))
    inv = np.linalg.inv(Vl)
    return Vg @ inv, dVg @ inv


@lru_cache(maxsize=None)
def gauss_diff(p: int):
    """Differentiation matrix on Gauss nodes (reference panel)."""
    xg, _ = gauss_legendre(p)
    V = npleg.legvander(xg, p - 1)
    dV = np.zeros_like(V)
    for j in range(p):
        c = np.zeros(p)
        c[j] = 1.0
        dV[:, j] = npleg.legval(xg, npleg.legder(c))
    return dV @ np.linalg.inv(V)


@lru_cache(maxsize=None)
def gauss_endpoint_rows(p: int):
    """Rows that extrapolate Gauss-node values to the panel ends ``-1`` and ``+1``."""
    xg, _ = gauss_legendre(p)
    V = npleg.legvander(xg, p - 1)
    ends = npleg.legvander(np.array([-1.0, 1.0]), p - 1)
    return ends @ np.linalg.inv(V)


def half_breaks(H: float, pole: bool, w_max: float, collar: float, eps_min: float,
                ratio: float = GRADING) -> np.ndarray:
    """Increasing breakpoints in the distance ``eps`` from an end, ``0 .. H``."""
    if not pole:
        n = max(1, int(np.ceil(H / w_max - 1e-9)))
        return np.linspace(0.0, H, n + 1)
    inner = [collar]
    while inner[-1] / ratio > eps_min:
        inner.append(inner[-1] / ratio)
    b = [0.0] + inner[::-1]
    cur = collar
    while cur * ratio < H and cur * (ratio - 1.0) < w_max:
        cur *= ratio
        b.append(cur)
    rest = H - cur
    if rest > 1e-12 * H:
        n = max(1, int(np.ceil(rest / w_max - 1e-9)))
        b.extend(cur + rest * np.arange(1, n + 1) / n)
    b[-1] = H
    return np.asarray(b)


def interval_breaks(lo: float, hi: float, pole_left: bool, pole_right: bool, w_max: float,
                    collar_rel: float = DEFAULT_COLLAR) -> np.ndarray:
    L = hi - lo
    H = 0.5 * L
    collar = collar_rel * L
    eps_min = EPS_MIN_REL * L
    left = half_breaks(H, pole_left, w_max, collar, eps_min)
    right = half_breaks(H, pole_right, w_max, collar, eps_min)
    mid = lo + H
    b = np.concatenate((lo + left[:-1], [mid], (hi - right[::-1])[1:]))
    b[0], b[-1] = lo, hi
    return b


@dataclass
class IntervalGrid:
    lo: float
    hi: float
    breaks: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    p: int
    n_left: int
    pole_left: bool
    pole_right: bool
    collar: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def n_panels(self) -> int:
        return len(self.breaks) - 1

    def collar_mask(self, side: str) -> np.ndarray:
        if side == "left":
            return (self.nodes - self.lo <= self.collar) if self.pole_left else np.zeros(len(self.nodes), bool)
        return (self.hi - self.nodes <= self.collar) if self.pole_right else np.zeros(len(self.nodes), bool)

    def tip_mask(self) -> np.ndarray:
        """Nodes on the innermost panel of a pole end."""
        mask = np.zeros(len(self.nodes), bool)
        if self.pole_left:
            mask[: self.p] = True
        if self.pole_right:
            mask[-self.p:] = True
        return mask


@dataclass
class QuadGrid:
    intervals: tuple
    p: int
    w_max: float
    collar_rel: float

    def signature(self) -> tuple:
        return tuple((g.lo, g.hi, len(g.nodes)) for g in self.intervals)

    def same_as(self, other: "QuadGrid") -> bool:
        if len(self.intervals) != len(other.intervals):
            return False
        return all(
            a.nodes.shape == b.nodes.shape and np.array_equal(a.nodes, b.nodes)
            for a, b in zip(self.intervals, other.intervals)
        )


def build_grid(endpoints, poles, scale: float, p: int = DEFAULT_NODES,
               collar_rel: float = DEFAULT_COLLAR) -> QuadGrid:
    """Panel grid over all intervals.

    ``endpoints`` is a list of ``(lo, hi)``; ``poles`` a list of
    ``(pole_left, pole_right)`` flags; ``scale`` bounds the panel width by
    roughly ``2/scale`` so that exponentials of rate ``scale`` are resolved.
    """
    xg, wg = gauss_legendre(p)
    out = []
    w_max_all = []
    for (lo, hi), (pl, pr) in zip(endpoints, poles):
        L = hi - lo
        w_max = min(L / 8.0, 2.0 / (1.0 + scale))
        w_max_all.append(w_max)
        b = interval_breaks(lo, hi, pl, pr, w_max, collar_rel)
        a0, a1 = b[:-1], b[1:]
        half = 0.5 * (a1 - a0)
        nodes = (0.5 * (a0 + a1))[:, None] + half[:, None] * xg[None, :]
        weights = half[:, None] * wg[None, :]
        nodes = nodes.ravel()
        n_left = int(np.searchsorted(b, lo + 0.5 * L) * p)
        out.append(IntervalGrid(lo, hi, b, nodes, weights.ravel(), p, n_left, pl, pr, collar_rel * L))
    return QuadGrid(tuple(out), p, float(min(w_max_all)), collar_rel)


class ChebPanels:
    """Piecewise Chebyshev interpolant of an array-valued function of ``t``."""

    def __init__(self, breaks: np.ndarray, coeffs: np.ndarray):
        self.breaks = np.asarray(breaks, dtype=float)
        self.coeffs = np.asarray(coeffs)
        self.deg = self.coeffs.shape[1] - 1
        self.dcoeffs = None

    @classmethod
    def from_function(cls, fn, breaks, deg: int = 16) -> "ChebPanels":
        breaks = np.asarray(breaks, dtype=float)
        x = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        a0, a1 = breaks[:-1], breaks[1:]
        t = (0.5 * (a0 + a1))[:, None] + 0.5 * (a1 - a0)[:, None] * x[None, :]
        vals = np.asarray(fn(t.ravel()))
        shape = vals.shape[1:]
        vals = vals.reshape((len(a0), deg + 1) + shape)
        V = npcheb.chebvander(x, deg)
        Vinv = np.linalg.inv(V)
        coeffs = np.einsum("kj,pj...->pk...", Vinv, vals)
        return cls(breaks, coeffs)

    @classmethod
    def from_samples(cls, breaks, values) -> "ChebPanels":
        """Build from values at the first-kind Chebyshev points of every panel."""
        breaks = np.asarray(breaks, dtype=float)
        values = np.asarray(values)
        deg = values.shape[1] - 1
        x = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        Vinv = np.linalg.inv(npcheb.chebvander(x, deg))
        return cls(breaks, np.einsum("kj,pj...->pk...", Vinv, values))

    def sample_points(self) -> np.ndarray:
        x = np.cos(np.pi * (np.arange(self.deg + 1) + 0.5) / (self.deg + 1))
        a0, a1 = self.breaks[:-1], self.breaks[1:]
        return (0.5 * (a0 + a1))[:, None] + 0.5 * (a1 - a0)[:, None] * x[None, :]

    def samples(self) -> np.ndarray:
        x = np.cos(np.pi * (np.arange(self.deg + 1) + 0.5) / (self.deg + 1))
        V = npcheb.chebvander(x, self.deg)
        return np.einsum("jk,pk...->pj...", V, self.coeffs)

    def _locate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, len(self.breaks) - 2)
        a0, a1 = self.breaks[idx], self.breaks[idx + 1]
        s = (2.0 * t - a0 - a1) / (a1 - a0)
        return idx, s, a1 - a0

    def __call__(self, t) -> np.ndarray:
        idx, s, _ = self._locate(t)
        V = npcheb.chebvander(s, self.deg)
        return np.einsum("nk,nk...->n...", V, self.coeffs[idx])

    def derivative(self, t) -> np.ndarray:
        if self.dcoeffs is None:
            self.dcoeffs = npcheb.chebder(self.coeffs, axis=1)
        idx, s, w = self._locate(t)
        V = npcheb.chebvander(s, self.deg - 1)
        d = np.einsum("nk,nk...->n...", V, self.dcoeffs[idx])
        return d * (2.0 / w).reshape((-1,) + (1,) * (d.ndim - 1))
