import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TYPE_A, TYPE_B, TYPE_C
from nahmtransform.errors import (
    BoundViolated, DimensionMismatch, EndSignViolated, NonzeroTerminal, NotSorted, NotTraceFree, NotUnitary,
)
from nahmtransform.sbtype import (
    Framing, SymmetryBreakingType, energy_forms, random_framing, standard_framing, validate_framing,
    validate_type,
)


@pytest.mark.parametrize("t, m, N", [(TYPE_A, (1, 0), 2), (TYPE_B, (2, 0), 3), (TYPE_C, (2, 2, 0), 6)])
def test_derived_ranks(t, m, N):
    inv = validate_type(t)
    assert inv.m == m
    assert inv.N == N


def test_cfg_c_zero_level():
    assert validate_type(TYPE_C).r_zero[1] == 2


@pytest.mark.parametrize("lam, ranks, chern, exc", [
    ((-1, 1), (1, 1), ((1,), (1,)), EndSignViolated),
    ((1, -1), (1, 1), ((1,), (-1,)), NotSorted),
    ((-1, 2), (1, 1), ((1,), (-1,)), NotTraceFree),
    ((-1, 1), (1, 1), ((1, 1), (-1,)), DimensionMismatch),
    ((-1, 1), (2, 2), ((-1, 2), (-1, -1)), NotSorted),
    # k = 3 at the first level leaves rank 1 after the last level
    ((-2, 1), (1, 2), ((3,), (-1, -1)), NonzeroTerminal),
])
def test_invalid_types(lam, ranks, chern, exc):
    with pytest.raises(exc):
        validate_type(SymmetryBreakingType(lam, ranks, chern))


def test_bound_violated():
    # m_1 = 1 cannot host a level with two zero entries
    t = SymmetryBreakingType((-1, 0, 1), (1, 2, 1), ((1,), (0, 0), (-1,)))
    with pytest.raises(BoundViolated):
        validate_type(t)


@pytest.mark.parametrize("t, e", [(TYPE_A, 2.0), (TYPE_B, 6.0), (TYPE_C, 4.0)])
def test_energy_forms_agree(t, e):
    a, b = energy_forms(t)
    assert a == pytest.approx(e, abs=1e-12)
    assert b == pytest.approx(-e, abs=1e-12)


@pytest.mark.parametrize("t", [TYPE_A, TYPE_B, TYPE_C])
def test_standard_framing_valid(t):
    assert validate_framing(t, standard_framing(t)).ok


def test_scaled_gluing_map_rejected():
    f = standard_framing(TYPE_C)
    bad = Framing(f.V_plus, f.V_minus, tuple(2 * np.asarray(c) for c in f.C))
    rep = validate_framing(TYPE_C, bad)
    assert not rep.ok and rep.failures[0][0] == "NotUnitary"
    with pytest.raises(NotUnitary):
        validate_framing(TYPE_C, bad, raise_on_error=True)


def test_unique_framing_cfg_a():
    f, g = standard_framing(TYPE_A), random_framing(TYPE_A, 0)
    for a, b in zip(f.V_plus + f.V_minus, g.V_plus + g.V_minus):
        assert np.allclose(np.abs(a), np.abs(b))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_framing_valid_and_deterministic(seed):
    f = random_framing(TYPE_C, seed)
    assert validate_framing(TYPE_C, f).ok
    g = random_framing(TYPE_C, seed)
    for a, b in zip(f.V_plus + f.V_minus + f.C, g.V_plus + g.V_minus + g.C):
        assert np.array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=2, max_size=4))
def test_trace_free_lambdas_pass_trace_check(ranks):
    # lambda chosen trace free; the type may still fail for other reasons
    n = len(ranks)
    lam = np.arange(n, dtype=float)
    lam -= np.dot(lam, ranks) / sum(ranks)
    chern = [(1,) * ranks[0]] + [(0,) * r for r in ranks[1:-1]] + [(-1,) * ranks[-1]]
    t = SymmetryBreakingType(lam, ranks, chern)
    try:
        validate_type(t)
    except NotTraceFree:  # pragma: no cover
        pytest.fail("trace-free lambda rejected")
    except Exception:
        pass
