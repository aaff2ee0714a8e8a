import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import FROZEN_CHARGE_ONE
from nahmtransform.dirac_nahm import compute_fiber
from nahmtransform.errors import AlignmentDegenerate
from nahmtransform.monopole_fields import (
    align, bogomolny_residual, connection_fd, curvature_green, dphi_green, fd_step, field_sample,
    green_apply, higgs, higgs_eigenvalues, sigma_apply, traceless_higgs, transport_loop,
)
from nahmtransform.quaternion import SIGMA


def test_higgs_vanishes_at_origin(cfg_a):
    assert np.abs(higgs(cfg_a, compute_fiber(cfg_a, np.zeros(3)))).max() <= 1e-12


def test_charge_one_value(cfg_a):
    ev = higgs_eigenvalues(higgs(cfg_a, compute_fiber(cfg_a, (0.0, 0.0, 1.0))))
    assert ev == pytest.approx([-FROZEN_CHARGE_ONE[1.0], FROZEN_CHARGE_ONE[1.0]], rel=1e-8)


@pytest.mark.parametrize("name", ["A", "B", "C"])
def test_higgs_skew_and_trace_constant(configs, name):
    nd = configs[name]
    x = np.array([0.3, -0.6, 0.5])
    p1 = higgs(nd, compute_fiber(nd, x))
    p2 = higgs(nd, compute_fiber(nd, 2 * x))
    assert np.abs(p1 + p1.conj().T).max() <= 1e-12
    assert abs(np.trace(p1) - np.trace(p2)) <= 1e-6


@pytest.mark.parametrize("phi, expect", [(1j * np.eye(2), np.zeros((2, 2))),
                                         (1j * np.diag([2.0, 0.0]), 1j * np.diag([1.0, -1.0]))])
def test_traceless(phi, expect):
    assert np.allclose(traceless_higgs(phi), expect)


def test_traceless_sample(cfg_b):
    s = field_sample(cfg_b, (0.4, 0.1, -0.3))
    assert abs(np.trace(traceless_higgs(s))) <= 1e-8


def test_green_zero_and_equivariance(cfg_b):
    x = np.array([0.5, -0.2, 0.3])
    f = compute_fiber(cfg_b, x)
    psi = f.as_spinor()
    zero = green_apply(cfg_b, x, psi.map(lambda i, v: 0 * v))
    assert max(np.abs(v).max() for v in zero.solution.values) == 0
    base = green_apply(cfg_b, x, psi)
    for a in range(3):
        rot = green_apply(cfg_b, x, psi.map(lambda i, v: sigma_apply_one(v, a)))
        expect = [sigma_apply_one(v, a) for v in base.solution.values]
        for u, w in zip(rot.solution.values, expect):
            assert np.abs(u - w).max() <= 1e-8


def sigma_apply_one(v, a):
    return sigma_apply([v], a)[0]


@pytest.mark.parametrize("s", [5.0, 10.0, 20.0])
def test_green_norm_bound(cfg_a, s):
    x = np.array([0.0, 0.0, s])
    f = compute_fiber(cfg_a, x)
    sol = green_apply(cfg_a, x, f.as_spinor())
    w = [np.sqrt(g.weights)[:, None, None] * u for g, u in zip(f.grid.intervals, sol.solution.values)]
    assert np.linalg.norm(np.concatenate(w)) <= 2 / s**2


def test_radial_derivative(cfg_a):
    x = np.array([0.0, 0.0, 1.0])
    d = dphi_green(cfg_a, x, compute_fiber(cfg_a, x), 2)
    expect = -2 / np.sinh(2.0) ** 2 + 0.5
    assert np.sort(np.linalg.eigvalsh(-1j * d)) == pytest.approx([-expect, expect], abs=1e-5)


def test_transverse_decay(cfg_a):
    norms = []
    for r in (5.0, 10.0, 20.0):
        x = np.array([0.0, 0.0, r])
        norms.append(np.linalg.norm(dphi_green(cfg_a, x, compute_fiber(cfg_a, x), 0)) * r**3)
    # faster than r^-3: the scaled norms fall
    assert norms[0] <= 0.1 and np.all(np.diff(norms) < 0)


def test_isotropic_at_origin(cfg_a):
    f = compute_fiber(cfg_a, np.zeros(3))
    n = [np.linalg.norm(dphi_green(cfg_a, np.zeros(3), f, a)) for a in range(3)]
    assert max(n) - min(n) <= 1e-6


def test_curvature_identities(cfg_a):
    x = np.array([0.0, 0.0, 5.0])
    f = compute_fiber(cfg_a, x)
    assert np.abs(curvature_green(cfg_a, x, f, 1, 1)).max() == 0
    F12 = curvature_green(cfg_a, x, f, 0, 1)
    assert np.abs(F12 - dphi_green(cfg_a, x, f, 2)).max() <= 1e-6
    assert np.linalg.norm(F12) == pytest.approx(np.sqrt(2) / (2 * 25), rel=1e-3)


def test_fd_connection(cfg_a):
    x = np.array([0.4, -0.3, 0.9])
    f = compute_fiber(cfg_a, x)
    G = [dphi_green(cfg_a, x, f, a) for a in range(3)]
    errs = []
    for h in (0.1, 0.05):
        fd = connection_fd(cfg_a, x, f"abs:{h}", f)
        errs.append(max(np.linalg.norm(fd.dphi[a] - G[a]) for a in range(3)))
        assert np.abs(fd.connection).max() <= 1e-12
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_loop_transport(cfg_b):
    x = np.array([0.4, -0.3, 0.9])
    f = compute_fiber(cfg_b, x)
    loop = [x, x + [0.1, 0, 0], x + [0.1, 0.1, 0], x + [0, 0.1, 0], x]
    H, p0, p1 = transport_loop(cfg_b, loop, f.grid)
    assert np.abs(H.conj().T @ H - np.eye(3)).max() <= 1e-10
    assert np.abs(higgs_eigenvalues(p0) - higgs_eigenvalues(p1)).max() <= 1e-8


@pytest.mark.parametrize("rule, x, h", [("rel:1e-3", (0, 0, 0.5), 1e-3), ("rel:1e-3", (0, 0, 4.0), 4e-3),
                                        ("abs:0.02", (1, 1, 1), 0.02), (0.5, (1, 1, 1), 0.5)])
def test_fd_step_rules(rule, x, h):
    assert fd_step(np.asarray(x, dtype=float), rule) == pytest.approx(h)


def test_align_degenerate():
    base = np.eye(4)[:, :2]
    with pytest.raises(AlignmentDegenerate):
        align(base, np.eye(4)[:, 2:])
    S = align(base, base @ np.array([[0, 1j], [1j, 0]]))
    assert np.allclose(base @ np.array([[0, 1j], [1j, 0]]) @ S, base)


@pytest.mark.parametrize("x", [(1.0, 1.0, 1.0), (-0.5, 0.2, 1.3)])
def test_bogomolny_default(cfg_a, cfg_b, x):
    for nd in (cfg_a, cfg_b):
        r = bogomolny_residual(nd, x)
        assert r.residual <= 1e-4 and r.green <= 1e-10
        assert r.cross_dphi <= 1e-4


@settings(max_examples=6, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-2, 2)))
def test_green_bogomolny_random(x):
    from conftest import TYPE_A
    from nahmtransform.nahm_core import builtin_family
    from nahmtransform.sbtype import standard_framing
    nd = builtin_family("flat_zero", TYPE_A, standard_framing(TYPE_A))
    f = compute_fiber(nd, x)
    eps = {(0, 1): 2, (1, 2): 0, (0, 2): 1}
    for (a, b), c in eps.items():
        sign = -1.0 if (a, b) == (0, 2) else 1.0
        F = curvature_green(nd, x, f, a, b)
        assert np.abs(F - sign * dphi_green(nd, x, f, c)).max() <= 1e-9


def test_pauli_convention():
    assert np.allclose(SIGMA[0] @ SIGMA[1], SIGMA[2])
