from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TYPE_A, TYPE_B
from nahmtransform.errors import ChernMismatch, FamilyInapplicable, SampleOutOfRange
from nahmtransform.grids import ChebPanels
from nahmtransform.nahm_core import (
    ConstantGauge, ConstantInterval, PurePoleInterval, SampledInterval, apply_gauge, builtin_family,
    charpoly, check_jump_data, check_pole_structure, lax_invariants, nahm_residual, random_gauge, rescale,
    solve_nahm_ivp, to_temporal_gauge,
)
from nahmtransform.quaternion import casimir, su2_generators
from nahmtransform.sbtype import SymmetryBreakingType, standard_framing

B_SAMPLES = np.array([-1.5, -0.5, 0.5])


def test_flat_zero_is_zero(cfg_a):
    t = np.linspace(-0.9, 0.9, 7)
    assert np.abs(cfg_a.intervals[0].T(t)).max() == 0
    assert nahm_residual(cfg_a, t) == 0


def test_pure_pole_closed_form(cfg_b):
    rho = su2_generators(2)
    T = cfg_b.intervals[0].T(B_SAMPLES)
    for j, t in enumerate(B_SAMPLES):
        assert np.allclose(T[j], -rho / (t + 2), atol=1e-14)
    assert nahm_residual(cfg_b, B_SAMPLES) <= 1e-10


def test_flat_zero_inapplicable():
    with pytest.raises(FamilyInapplicable):
        builtin_family("flat_zero", TYPE_B, standard_framing(TYPE_B))


def test_noncommuting_constant_residual():
    T = np.array([np.diag([1j, -1j]), su2_generators(2)[0], np.zeros((2, 2))])
    iv = ConstantInterval(-1.0, 1.0, T)
    t2 = SymmetryBreakingType((-1, 1), (2, 2), ((1, 1), (-1, -1)))
    nd2 = replace(builtin_family("flat_zero", t2, standard_framing(t2)), intervals=(iv,))
    expect = max(np.linalg.norm(T[b] @ T[c] - T[c] @ T[b]) for b, c in ((1, 2), (2, 0), (0, 1)))
    assert nahm_residual(nd2, [0.0]) == pytest.approx(expect)


def test_sample_out_of_range(cfg_a):
    with pytest.raises(SampleOutOfRange):
        nahm_residual(cfg_a, [2.0])


def test_ivp_reproduces_pole(cfg_b):
    iv = cfg_b.intervals[0]
    sol = solve_nahm_ivp(-0.5, iv.T(-0.5)[0], (iv.lo, iv.hi), residues=(iv.residue("left"), None))
    t = np.linspace(-1.9, 0.9, 11)
    assert np.abs(sol.T(t) - iv.T(t)).max() <= 1e-8


def test_ivp_commuting_fixed_point():
    T = np.array([np.diag([1j, -2j]), np.diag([0.5j, 0.5j]), np.zeros((2, 2))])
    sol = solve_nahm_ivp(0.0, T, (-1.0, 1.0))
    assert np.abs(sol.T(np.array([-0.8, 0.7])) - T[None]).max() <= 1e-10


def test_lax_zero_and_triangular(cfg_a, cfg_b):
    assert np.abs(lax_invariants(cfg_a, [0.3 + 1j], [-0.5, 0.5]).eigenvalues).max() == 0
    assert lax_invariants(cfg_b, [0.0], B_SAMPLES).eig_drift == 0


def test_charpoly_matches_numpy():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.allclose(charpoly(A), np.poly(A))


def test_pole_structure(cfg_a, cfg_b):
    assert check_pole_structure(cfg_a).ok
    rep = check_pole_structure(cfg_b)
    assert rep.ok
    ev = np.linalg.eigvalsh(casimir(su2_generators(2)))
    assert np.allclose(ev, 0.75)


def test_wrong_sign_pole_fails(cfg_b):
    iv = cfg_b.intervals[0]
    flipped = replace(cfg_b, intervals=(PurePoleInterval(iv.lo, iv.hi, -iv.rho, "left"),))
    assert not check_pole_structure(flipped).ok


def test_jump_data(cfg_a, cfg_c):
    assert check_jump_data(cfg_a).ok
    assert check_jump_data(cfg_c).ok


def test_identity_gauge(cfg_b):
    g = apply_gauge([ConstantGauge(np.eye(2))], cfg_b)
    assert np.allclose(g.intervals[0].T(B_SAMPLES), cfg_b.intervals[0].T(B_SAMPLES))


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000))
def test_random_gauge_keeps_solution(seed):
    nd = builtin_family("pure_pole", TYPE_B, standard_framing(TYPE_B))
    g = apply_gauge(random_gauge(nd, seed), nd)
    assert nahm_residual(g, B_SAMPLES) <= 1e-8


def test_temporal_gauge(cfg_b):
    assert to_temporal_gauge(cfg_b) is cfg_b
    g = apply_gauge(random_gauge(cfg_b, 3), cfg_b)
    tg = to_temporal_gauge(g)
    t = np.linspace(-1.9, 0.9, 9)
    assert np.abs(tg.intervals[0].T0(t)).max() <= 1e-12
    assert nahm_residual(tg, B_SAMPLES) <= 1e-8


def test_rescale(cfg_a, cfg_b):
    assert rescale(TYPE_B, TYPE_B, cfg_b) is cfg_b
    t2 = SymmetryBreakingType((-2, 2), (1, 1), ((1,), (-1,)))
    assert np.abs(rescale(TYPE_A, t2, cfg_a).intervals[0].T([0.3])).max() == 0
    tb = SymmetryBreakingType((-1, 0.5), (1, 2), ((2,), (-1, -1)))
    out = rescale(TYPE_B, tb, cfg_b)
    t = np.array([-0.5, 0.0, 0.3])
    assert np.allclose(out.intervals[0].T(t), -su2_generators(2)[None] / (t + 1)[:, None, None, None], atol=1e-10)
    assert nahm_residual(out, t) <= 1e-10
    with pytest.raises(ChernMismatch):
        rescale(TYPE_A, TYPE_B, cfg_a)


def perturbed_pole(nd, eps, seed=3):
    iv = nd.intervals[0]
    M = np.random.default_rng(seed).normal(size=(3, 2, 2)) * (1 + 1j)
    smooth = ChebPanels.from_function(lambda t: eps * (t - iv.lo)[:, None, None, None] * M[None],
                                      [iv.lo, iv.hi], deg=4)
    return replace(nd, intervals=(SampledInterval(iv.lo, iv.hi, smooth, iv.residue("left")),))


@pytest.mark.parametrize("eps", [1e-3, 1e-2])
def test_lax_detects_perturbation(cfg_b, eps):
    nd = perturbed_pole(cfg_b, eps)
    assert lax_invariants(nd, [0.0, 0.3 + 0.1j], B_SAMPLES).eig_drift > 1e-6
    assert nahm_residual(nd, B_SAMPLES) > 1e-4
