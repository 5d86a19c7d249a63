"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``; the
helpers here validate them and wrap LAPACK with the conventions the rest of
the package relies on (full SVD, relative rank tolerance).
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

__all__ = [
    "DEFAULT_RANK_TOL",
    "SvdFactorization",
    "as_complex_matrix",
    "frobenius_norm",
    "pseudo_inverse",
    "svd",
]

#: Singular values at or below ``DEFAULT_RANK_TOL * sigma_max`` count as zero.
DEFAULT_RANK_TOL = 1e-10


def as_complex_matrix(a):
    """Return ``a`` as a finite 2-D complex128 array, raising ValueError otherwise."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf entries")
    return m


@dataclass(frozen=True)
class SvdFactorization:
    """Full SVD ``A = U @ diag(sigma) @ V^H``.

    ``u`` is m x m and ``v`` is n x n, so the trailing columns of ``v`` span
    the null space of ``A``. ``sigma`` has ``min(m, n)`` entries, descending.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def shape(self):
        return self.u.shape[0], self.v.shape[0]

    def rank(self, rank_tol=DEFAULT_RANK_TOL):
        if self.sigma.size == 0 or self.sigma[0] == 0.0:
            return 0
        return int(np.count_nonzero(self.sigma > rank_tol * self.sigma[0]))

    def reconstruct(self):
        m, n = self.shape
        s = np.zeros((m, n), dtype=np.complex128)
        k = self.sigma.size
        s[:k, :k] = np.diag(self.sigma)
        return self.u @ s @ self.v.conj().T


def svd(a):
    """Full singular value decomposition of a complex matrix.

    Raises
    ------
    NumericalError
        If LAPACK fails to converge; the error carries the matrix shape.
    """
    m = as_complex_matrix(a)
    if m.size == 0:
        raise ValueError("cannot factor an empty matrix")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}", shape=m.shape) from exc
    return SvdFactorization(u=u, sigma=s, v=vh.conj().T)


def pseudo_inverse(a, rank_tol=DEFAULT_RANK_TOL):
    """Moore-Penrose pseudo-inverse with a relative singular-value cutoff.

    An all-zero input returns the zero matrix of transposed shape.
    """
    if rank_tol < 0:
        raise ValueError("rank_tol must be nonnegative")
    m = as_complex_matrix(a)
    rows, cols = m.shape
    if m.size == 0 or not np.any(m):
        return np.zeros((cols, rows), dtype=np.complex128)
    f = svd(m)
    r = f.rank(rank_tol)
    u = f.u[:, :r]
    v = f.v[:, :r]
    return (v / f.sigma[:r]) @ u.conj().T


def frobenius_norm(a):
    m = as_complex_matrix(a)
    return float(np.sqrt(np.sum(m.real**2 + m.imag**2)))
