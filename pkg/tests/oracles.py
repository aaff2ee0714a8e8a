"""Reference values computed without the fiber pipeline.

With ``T = 0`` on ``(-lam, lam)`` the kernel of the adjoint Dirac operator at
``x = r e_3`` is spanned by ``exp(+-r t)`` times the two eigenspinors of
``sigma_3``.  The two are orthogonal pointwise, so the Higgs field is diagonal
with entries ``int t e^{+-2rt} dt / int e^{+-2rt} dt``, integrated here with
adaptive quadrature.
"""
import numpy as np
from scipy.integrate import quad


def charge_one_higgs(r: float, lam: float = 1.0) -> float:
    """Positive Higgs eigenvalue of the charge-one monopole at radius ``r``."""
    w = lambda t: np.exp(2 * r * (t - lam))  # shifted to avoid overflow
    num, _ = quad(lambda t: t * w(t), -lam, lam, epsabs=0, epsrel=1e-13, limit=200)
    den, _ = quad(w, -lam, lam, epsabs=0, epsrel=1e-13, limit=200)
    return num / den


def charge_one_closed_form(r: float, lam: float = 1.0) -> float:
    return lam / np.tanh(2 * lam * r) - 1 / (2 * r)


# frozen from charge_one_higgs at lam = 1
FROZEN_CHARGE_ONE = {
    0.5: 0.31303528549933135,
    1.0: 0.5373147207275482,
    2.0: 0.7506711504016824,
    4.0: 0.8750002250703749,
}
