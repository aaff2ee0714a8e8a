import pytest

from nahmtransform.nahm_core import builtin_family
from nahmtransform.sbtype import SymmetryBreakingType, random_framing, standard_framing

TYPE_A = SymmetryBreakingType((-1, 1), (1, 1), ((1,), (-1,)))
TYPE_B = SymmetryBreakingType((-2, 1), (1, 2), ((2,), (-1, -1)))
TYPE_C = SymmetryBreakingType((-1, 0, 1), (2, 2, 2), ((1, 1), (0, 0), (-1, -1)))


@pytest.fixture(scope="session")
def cfg_a():
    return builtin_family("flat_zero", TYPE_A, standard_framing(TYPE_A))


@pytest.fixture(scope="session")
def cfg_b():
    return builtin_family("pure_pole", TYPE_B, standard_framing(TYPE_B))


@pytest.fixture(scope="session")
def cfg_c():
    return builtin_family("flat_jump", TYPE_C, random_framing(TYPE_C, 1))


@pytest.fixture(scope="session")
def configs(cfg_a, cfg_b, cfg_c):
    return {"A": cfg_a, "B": cfg_b, "C": cfg_c}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
