"""Quaternion units as 2x2 complex matrices and su(2) irreducibles.

The quaternions are modelled on C^2 with ``sigma_a = -1j * pauli_a``, so
that ``sigma_a sigma_b = -delta_ab + eps_abc sigma_c``.  A spinor on
``C^m (x) H`` is stored as a flat vector of length ``2m`` in Kronecker
order (row index ``2*i + s``).
"""
from __future__ import annotations

import numpy as np

PAULI = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)
SIGMA = -1j * PAULI

# Levi-Civita symbol
EPS = np.zeros((3, 3, 3))
for _a, _b, _c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    EPS[_a, _b, _c] = 1.0
    EPS[_b, _a, _c] = -1.0


def spin_matrices(k: int) -> np.ndarray:
    """Hermitian spin matrices ``J_1, J_2, J_3`` of the ``k``-dimensional irrep."""
    j = (k - 1) / 2.0
    mvals = j - np.arange(k)
    jp = np.zeros((k, k), dtype=complex)
    for i in range(1, k):
        m = mvals[i]
        jp[i - 1, i] = np.sqrt(j * (j + 1) - m * (m + 1))
    jm = jp.conj().T
    return np.array([(jp + jm) / 2, (jp - jm) / 2j, np.diag(mvals).astype(complex)])


def su2_generators(k: int) -> np.ndarray:
    """Skew-Hermitian generators ``e_a = -i J_a`` with ``[e_1, e_2] = e_3``."""
    return -1j * spin_matrices(k)


def block_generators(blocks) -> np.ndarray:
    """Block-diagonal generators for a direct sum of irreducibles."""
    size = int(sum(blocks))
    out = np.zeros((3, size, size), dtype=complex)
    pos = 0
    for k in blocks:
        out[:, pos:pos + k, pos:pos + k] = su2_generators(int(k))
        pos += k
    return out


def casimir(rho: np.ndarray) -> np.ndarray:
    """``-sum_a rho_a^2``; equals ``(k^2 - 1)/4`` on ``R_k``."""
    return -np.einsum("aij,ajk->ik", rho, rho)


def commutator(a, b):
    return a @ b - b @ a


def bracket_defect(rho: np.ndarray) -> float:
    """Largest ``||[rho_b, rho_c] - rho_a||`` over cyclic ``(a, b, c)``."""
    out = 0.0
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        out = max(out, float(np.linalg.norm(commutator(rho[b], rho[c]) - rho[a])))
    return out


def lift(mats: np.ndarray) -> np.ndarray:
    """``sum_a mats_a (x) sigma_a`` for a stack of three ``m x m`` matrices.

    Leading batch axes are allowed: ``mats`` has shape ``(..., 3, m, m)``.
    """
    m = mats.shape[-1]
    out = np.einsum("...aij,ast->...isjt", mats, SIGMA)
    return out.reshape(mats.shape[:-3] + (2 * m, 2 * m))


def sigma_on(m: int, a: int) -> np.ndarray:
    """``1_m (x) sigma_a`` as a ``2m x 2m`` matrix."""
    return np.kron(np.eye(m), SIGMA[a])


def spinor_bloch(q: np.ndarray) -> np.ndarray:
    """Coefficients ``c_a`` with ``q q^* - |q|^2/2 = sum_a c_a sigma_a``."""
    q = np.asarray(q, dtype=complex)
    return 0.5j * np.real(np.einsum("i,aij,j->a", q.conj(), PAULI, q))


def spinor_from_bloch(v: np.ndarray) -> np.ndarray:
    """Spinor ``q`` whose ``(1/2) q^* pauli q`` equals the real vector ``v``."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        return np.zeros(2, dtype=complex)
    h = np.einsum("a,aij->ij", v / n, PAULI)
    w, u = np.linalg.eigh(h)
    q = u[:, np.argmax(w)]
    return np.sqrt(2.0 * n) * q
