"""Functions of Hermitian positive-definite matrices via eigendecomposition."""

import numpy as np

from .errors import BoundaryError

HERMITIAN_TOL = 1e-12
# smallest eigenvalue allowed relative to the largest before a matrix counts
# as a cone boundary point
PD_FLOOR = 1e-12
MATFUN_FLOOR = 1e-13


def herm(A):
    """Hermitian part ``(A + A^H) / 2``; suppresses round-off asymmetry."""
    return 0.5 * (A + A.conj().T)


def as_hermitian(A, name="matrix", tol=HERMITIAN_TOL):
    """Validate a square Hermitian matrix and return it as complex128."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("%s must be square, got shape %s" % (name, A.shape))
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.conj().T).max(initial=0.0) > tol * scale:
        raise ValueError("%s is not Hermitian within %g" % (name, tol))
    return herm(A)


def as_positive_definite(A, name="matrix", floor=PD_FLOOR):
    """Validate a Hermitian positive-definite matrix.

    Raises
    ------
    ValueError
        If ``A`` is not square or not Hermitian.
    BoundaryError
        If ``min eig(A) <= floor * max eig(A)``.
    """
    A = as_hermitian(A, name)
    w = np.linalg.eigvalsh(A)
    if w[-1] <= 0 or w[0] <= floor * w[-1]:
        raise BoundaryError(
            "%s is not positive definite (eigenvalues in [%.3g, %.3g])"
            % (name, w[0], w[-1]))
    return A


def _eig_pd(A, name):
    w, V = np.linalg.eigh(herm(np.asarray(A, dtype=complex)))
    if w[-1] <= 0 or w[0] <= MATFUN_FLOOR * w[-1]:
        raise BoundaryError(
            "%s is numerically singular or indefinite (eigenvalues in [%.3g, %.3g])"
            % (name, w[0], w[-1]))
    return w, V


def hermitian_power(A, p, name="matrix"):
    """``A**p`` for Hermitian positive-definite ``A`` and real ``p``."""
    w, V = _eig_pd(A, name)
    return herm((V * w**p) @ V.conj().T)


def hermitian_sqrt(A, name="matrix"):
    """Hermitian positive-definite square root ``S`` with ``S @ S = A``.

    Parameters
    ----------
    A : ndarray of shape (n, n)
        Hermitian positive-definite matrix.

    Returns
    -------
    S : ndarray of shape (n, n), complex

    Raises
    ------
    BoundaryError
        If the smallest eigenvalue is below ``1e-13`` times the largest.
    """
    return hermitian_power(A, 0.5, name)


def hermitian_inv(A, name="matrix"):
    return hermitian_power(A, -1.0, name)


def hermitian_inv_sqrt(A, name="matrix"):
    return hermitian_power(A, -0.5, name)


def cholesky_factor(A, name="matrix"):
    """Upper-triangular ``C`` with ``C^H C = A``."""
    _eig_pd(A, name)
    L = np.linalg.cholesky(herm(np.asarray(A, dtype=complex)))
    return L.conj().T
