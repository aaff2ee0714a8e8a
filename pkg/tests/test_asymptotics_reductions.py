from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TYPE_A, TYPE_B, TYPE_C
from oracles import charge_one_closed_form
from nahmtransform.asymptotics_reductions import (
    RayProfile, check_so_symmetry, check_sp_symmetry, data_symmetry_defect, energy, fit_mu_kappa,
    ray_profile, structure_map,
)
from nahmtransform.errors import FitIllConditioned, OddRank, TypeNotSymmetric
from nahmtransform.nahm_core import ConstantInterval, builtin_family
from nahmtransform.sbtype import SymmetryBreakingType, standard_framing


def test_charge_one_profile(cfg_a):
    radii = [1.0, 2.0, 4.0, 8.0]
    prof = ray_profile(cfg_a, (0.0, 0.0, 1.0), radii)
    for r, ev in zip(radii, prof.spectra):
        v = charge_one_closed_form(r)
        assert ev == pytest.approx([-v, v], rel=1e-6)


@pytest.mark.parametrize("direction", [(1.0, 0.0, 0.0), (0.3, -0.4, 0.2), (-1.0, 2.0, 2.0)])
def test_direction_invariance(cfg_a, direction):
    base = ray_profile(cfg_a, (0.0, 0.0, 1.0), [1.0, 3.0])
    other = ray_profile(cfg_a, direction, [1.0, 3.0])
    assert np.abs(np.asarray(base.spectra) - np.asarray(other.spectra)).max() <= 1e-8


def test_cfg_b_clusters(cfg_b):
    ev = ray_profile(cfg_b, (0.2, 0.3, 1.0), [16.0]).spectra[0]
    assert ev == pytest.approx([-1.0, -1.0, 2.0], abs=0.1)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 3.0), st.integers(1, 3), st.floats(-2, 2))
def test_fit_recovers_exact_model(lam, k, c):
    radii = np.array([4.0, 8.0, 16.0, 32.0])
    # two levels at +-lam with k and -k
    spectra = [np.sort([lam - k / (2 * r) + c / r**2, -lam + k / (2 * r) - c / r**2]) for r in radii]
    fit = fit_mu_kappa(RayProfile(np.array([0.0, 0.0, 1.0]), radii, spectra))
    assert fit.lam == pytest.approx((-lam, lam), abs=1e-8)
    assert np.concatenate(fit.k) == pytest.approx([k, -k], abs=1e-6)


def test_fit_cfg_a(cfg_a):
    fit = fit_mu_kappa(ray_profile(cfg_a, (0.2, 0.3, 1.0), [4.0, 8.0, 16.0]))
    assert fit.lam == pytest.approx((-1.0, 1.0), abs=1e-3)
    assert np.concatenate(fit.k) == pytest.approx([1.0, -1.0], abs=0.05)
    assert fit.matches(TYPE_A).ok


def test_fit_ill_conditioned(cfg_a):
    with pytest.raises(FitIllConditioned):
        fit_mu_kappa(ray_profile(cfg_a, (0.0, 0.0, 1.0), [4.0, 5.0, 6.0]))
    with pytest.raises(FitIllConditioned):
        fit_mu_kappa(ray_profile(cfg_a, (0.0, 0.0, 1.0), [4.0, 16.0]))


@pytest.mark.parametrize("t, e", [(TYPE_A, 2.0), (TYPE_B, 6.0), (TYPE_C, 4.0)])
def test_energy(t, e):
    rep = energy(t)
    assert rep.energy == e and rep.lambda_k == -e


def test_so_rejects_asymmetric(cfg_b):
    with pytest.raises(TypeNotSymmetric):
        check_so_symmetry(cfg_b)


def test_sp_rejects_odd_rank():
    t = SymmetryBreakingType((-1, 0, 1), (1, 1, 1), ((1,), (0,), (-1,)))
    with pytest.raises(OddRank):
        check_sp_symmetry(builtin_family("flat_jump", t, standard_framing(t)))


@pytest.mark.parametrize("kind, square", [("so", 1.0), ("sp", -1.0)])
def test_structure_squares(kind, square):
    assert structure_map(kind).square == square


def test_sp_structure_on_cfg_a(cfg_a):
    rep = check_sp_symmetry(cfg_a)
    for name in ("data_symmetry", "square", "fiber_preserved", "square_on_fiber", "spectrum_symmetry",
                 "covariantly_constant"):
        assert rep[name].passed, name
    # the antilinear map commutes with Phi
    assert rep["anticommutes_with_phi"].details["commutator"] <= 1e-10


def test_so_data_symmetric_cfg_a(cfg_a):
    rep = check_so_symmetry(cfg_a)
    assert rep["data_symmetry"].passed and rep["square"].passed


@pytest.mark.parametrize("eps", [1e-3, 2e-3, 4e-3])
def test_reality_defect_linear(cfg_a, eps):
    T = eps * np.array([1j, 2j, -1j]).reshape(3, 1, 1)
    nd = replace(cfg_a, intervals=(ConstantInterval(-1.0, 1.0, T),))
    assert data_symmetry_defect(nd, 1.0) == pytest.approx(4 * eps, rel=1e-10)
