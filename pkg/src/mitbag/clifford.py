"""Dirac matrices, the symbol map ``alpha . x`` and the MIT boundary projectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_3 = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_1, SIGMA_2, SIGMA_3)

UNIT_TOL = 1e-12


class DimensionError(ValueError):
    """Raised for an unsupported spatial dimension or a vector of the wrong length."""


class NormalizationError(ValueError):
    """Raised when a boundary normal is not a unit vector."""


@dataclass(frozen=True)
class DiracAlgebra:
    """Pairwise anticommuting Hermitian matrices ``alpha_1..alpha_n`` and ``beta``.

    Attributes
    ----------
    n : int
        Spatial dimension.
    N : int
        Spinor dimension, ``2 ** ((n + 1) // 2)``.
    alphas : tuple of ndarray
        The ``n`` matrices multiplying the partial derivatives.
    beta : ndarray
        The mass matrix.
    """

    n: int
    N: int
    alphas: tuple
    beta: np.ndarray

    def __post_init__(self):
        for mat in (*self.alphas, self.beta):
            mat.setflags(write=False)

    def matrices(self):
        return (*self.alphas, self.beta)


def build_dirac_matrices(n: int) -> DiracAlgebra:
    """Return the Pauli-based representative for ``n`` in {2, 3}.

    For ``n = 2``: ``alpha_k = sigma_k`` and ``beta = sigma_3``.  For ``n = 3``
    the alphas are off-diagonal blocks of Pauli matrices and
    ``beta = diag(I_2, -I_2)``.
    """
    if n == 2:
        return DiracAlgebra(n=2, N=2, alphas=(SIGMA_1.copy(), SIGMA_2.copy()), beta=SIGMA_3.copy())
    if n == 3:
        zero = np.zeros((2, 2), dtype=complex)
        eye = np.eye(2, dtype=complex)
        alphas = tuple(np.block([[zero, s], [s, zero]]) for s in PAULI)
        beta = np.block([[eye, zero], [zero, -eye]])
        return DiracAlgebra(n=3, N=4, alphas=alphas, beta=beta)
    raise DimensionError(f"dimension out of scope: n={n} (supported: 2, 3)")


def alpha_dot(algebra: DiracAlgebra, x) -> np.ndarray:
    """Return ``sum_k x_k alpha_k``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (algebra.n,):
        raise DimensionError(f"expected a vector of length {algebra.n}, got shape {x.shape}")
    out = np.zeros((algebra.N, algebra.N), dtype=complex)
    for xk, ak in zip(x, algebra.alphas):
        out += xk * ak
    return out


def boundary_projector(algebra: DiracAlgebra, nu, sign: int) -> np.ndarray:
    """Return ``P_pm(nu) = (I -+ i beta alpha.nu) / 2``.

    ``sign=+1`` gives ``P_+``, whose range is the set of spinors obeying the
    MIT condition ``f = -i beta (alpha . nu) f``; ``sign=-1`` gives ``P_-``.
    """
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (algebra.n,):
        raise DimensionError(f"expected a normal of length {algebra.n}, got shape {nu.shape}")
    if abs(np.linalg.norm(nu) - 1.0) > UNIT_TOL:
        raise NormalizationError(f"normal must have unit length, |nu| = {np.linalg.norm(nu)!r}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    gamma = 1j * algebra.beta @ alpha_dot(algebra, nu)
    return 0.5 * (np.eye(algebra.N) - sign * gamma)


def boundary_projectors_batch(algebra: DiracAlgebra, normals: np.ndarray, sign: int) -> np.ndarray:
    """Vectorized :func:`boundary_projector` for an ``(..., n)`` array of unit normals.

    Returns an array of shape ``(..., N, N)``.  Normalization is the caller's job.
    """
    normals = np.asarray(normals, dtype=float)
    gamma = np.zeros(normals.shape[:-1] + (algebra.N, algebra.N), dtype=complex)
    for k, ak in enumerate(algebra.alphas):
        gamma += normals[..., k, None, None] * (1j * algebra.beta @ ak)
    return 0.5 * (np.eye(algebra.N) - sign * gamma)


def mit_basis(algebra: DiracAlgebra, nu) -> np.ndarray:
    """Orthonormal basis (columns) of the range of ``P_+(nu)``, shape ``(N, N/2)``."""
    p_plus = boundary_projector(algebra, nu, +1)
    w, v = np.linalg.eigh(p_plus)
    return v[:, w > 0.5]


def real_frame(algebra: DiracAlgebra, tol: float = 1e-14) -> np.ndarray | None:
    """A unitary ``U`` with every ``U (i beta alpha_k) U^*`` real, or ``None`` if no simple one exists.

    In such a spinor frame the boundary projectors are real symmetric, so
    every assembled form becomes a real symmetric matrix.  Candidates are the
    identity and the quarter turns ``(I - i G) / sqrt(2)`` about each
    generator ``G``.
    """
    gens = [1j * algebra.beta @ ak for ak in algebra.alphas]
    eye = np.eye(algebra.N, dtype=complex)
    candidates = [eye] + [(eye - 1j * g) / np.sqrt(2.0) for g in (*algebra.alphas, algebra.beta)]
    for U in candidates:
        if all(np.abs((U @ g @ U.conj().T).imag).max() <= tol for g in gens):
            return U
    return None
