"""Hilbert projective metric on the positive orthant and on the PD cone.

Both cones are treated projectively: every function here is invariant under
positive rescaling of its arguments, so it really acts on rays.
"""

import math

import numpy as np
import scipy.linalg

from .errors import BoundaryError, InfiniteDiameterError, NotPositivityImprovingError
from .matfun import as_positive_definite


def as_positive_vector(x, name="vector"):
    """Validate a 1-d array with strictly positive finite entries."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("%s must be a non-empty 1-d array, got shape %s" % (name, x.shape))
    if not np.all(np.isfinite(x)):
        raise ValueError("%s has non-finite entries" % name)
    if np.any(x <= 0):
        raise BoundaryError("%s has nonpositive entries" % name)
    return x


def hilbert_distance_vec(x, y):
    """Hilbert distance between two rays of the positive orthant.

    ``d_H(x, y) = log(max_i(x_i / y_i) / min_i(x_i / y_i))``.

    Parameters
    ----------
    x, y : array_like of shape (n,)
        Strictly positive vectors.

    Returns
    -------
    float
        Nonnegative distance; zero iff ``x`` and ``y`` are parallel.
    """
    x = as_positive_vector(x, "x")
    y = as_positive_vector(y, "y")
    if x.shape != y.shape:
        raise ValueError("dimension mismatch: %s vs %s" % (x.shape, y.shape))
    return _dh_vec(x, y)


def _dh_vec(x, y):
    # log-space avoids overflow of the ratio for widely spread entries
    r = np.log(x) - np.log(y)
    return float(r.max() - r.min())


def hilbert_distance_psd(X, Y):
    """Hilbert distance between two rays of the positive-definite cone.

    Computed as ``log(lambda_max / lambda_min)`` of the generalized Hermitian
    eigenproblem ``X v = lambda Y v``, which has the spectrum of
    ``Y^{-1/2} X Y^{-1/2}``.
    """
    X = as_positive_definite(X, "X")
    Y = as_positive_definite(Y, "Y")
    if X.shape != Y.shape:
        raise ValueError("dimension mismatch: %s vs %s" % (X.shape, Y.shape))
    return _dh_psd(X, Y)


def _dh_psd(X, Y):
    w = scipy.linalg.eigh(X, Y, eigvals_only=True)
    if w[0] <= 0:
        raise BoundaryError("generalized eigenvalues not positive: %r" % (w,))
    return float(math.log(w[-1]) - math.log(w[0]))


def projective_diameter_stochastic(P):
    """Projective diameter of ``x -> P x`` on the positive orthant.

    ``max_{i,j,k,l} log(P_ij P_kl / (P_il P_kj))``.

    Raises
    ------
    InfiniteDiameterError
        If ``P`` has a zero entry (the diameter is then infinite).
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2:
        raise ValueError("kernel must be 2-d, got shape %s" % (P.shape,))
    if np.any(P < 0):
        raise ValueError("kernel has negative entries")
    if np.any(P == 0):
        raise InfiniteDiameterError("kernel has zero entries; projective diameter is infinite")
    L = np.log(P)
    # max over (i,k) of max_j (L_ij - L_kj) + max_l (L_kl - L_il)
    D = L[:, None, :] - L[None, :, :]
    m = D.max(axis=2)
    return float(max((m + m.T).max(), 0.0))


def birkhoff_ratio(diameter):
    """Birkhoff contraction ratio ``tanh(diameter / 4)``; 1 for infinite diameter."""
    if math.isnan(diameter) or diameter < 0:
        raise ValueError("diameter must be nonnegative, got %r" % diameter)
    if math.isinf(diameter):
        return 1.0
    return math.tanh(diameter / 4.0)


def _random_pure(rng, n):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def sample_densities(rng, n, samples, eps=1e-9):
    """Random density matrices: perturbed rank-1 projectors and full-rank ones.

    Rank-1 projectors are the extreme points of the state space; they are
    mixed with ``eps * I / n`` to sit in the interior of the cone.
    """
    out = []
    for k in range(samples):
        if k % 2 == 0:
            v = _random_pure(rng, n)
            rho = (1 - eps) * np.outer(v, v.conj()) + eps * np.eye(n) / n
        else:
            G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            rho = G @ G.conj().T
            rho /= np.trace(rho).real
        out.append(rho)
    return out


def psd_diameter_estimate(channel_apply, dim, samples=256, rng=None):
    """Sampled estimate of the projective diameter of a map on the PD cone.

    Returns ``2 * max d_H(channel_apply(X), channel_apply(I / dim))`` over
    sampled density matrices ``X``.  The factor two comes from the triangle
    inequality through the image of the maximally mixed state, so this is an
    estimate of an upper bound; it is not exact and is not a certificate.

    Raises
    ------
    NotPositivityImprovingError
        If some sampled image is not positive definite.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(rng)
    try:
        center = as_positive_definite(channel_apply(np.eye(dim) / dim), "image of I/n")
    except BoundaryError as exc:
        raise NotPositivityImprovingError(str(exc)) from exc
    best = 0.0
    for X in sample_densities(rng, dim, samples):
        try:
            Y = as_positive_definite(channel_apply(X), "channel image")
        except BoundaryError as exc:
            raise NotPositivityImprovingError(str(exc), iterate=X) from exc
        best = max(best, _dh_psd(Y, center))
    return 2.0 * best
