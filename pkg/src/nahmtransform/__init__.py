"""Numerical Nahm transform: from Nahm data with symmetry breaking to SU(N) monopole fields."""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .sbtype import (  # noqa: F401
    DerivedInvariants,
    Framing,
    SymmetryBreakingType,
    energy_forms,
    random_framing,
    standard_framing,
    validate_framing,
    validate_type,
)
from .nahm_core import NahmData, builtin_family, check_jump_data, check_pole_structure, lax_invariants  # noqa: F401
from .dirac_nahm import Fiber, compute_fiber, fiber_grid  # noqa: F401
from .monopole_fields import field_sample, higgs, higgs_eigenvalues  # noqa: F401
from .asymptotics_reductions import (  # noqa: F401
    check_so_symmetry,
    check_sp_symmetry,
    energy,
    fit_mu_kappa,
    ray_profile,
    ymh_energy_ball,
)
from .io import dump, from_document, load, to_document  # noqa: F401
from .estimator import NahmTransform  # noqa: F401
from . import cli  # noqa: F401
