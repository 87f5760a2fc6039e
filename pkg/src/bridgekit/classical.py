"""Schrödinger bridges for discrete Markov priors.

The one-step problem is solved by iterating the composite map

    phihat0 --P^T--> phihatT --(pT / .)--> phiT --P--> phi0 --(p0 / .)--> phihat0

which is a strict contraction in the Hilbert metric whenever the kernel is
entrywise positive.  Multi-step bridges reduce to the one-step problem on the
product kernel, followed by propagation of the space-time harmonics.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.special import rel_entr

from .cone import birkhoff_ratio, projective_diameter_stochastic
from .errors import BoundaryError, ConvergenceError, InfiniteDiameterError
from .report import SolveReport

log = logging.getLogger(__name__)

PROB_TOL = 1e-12
MAX_ITER_CAP = 100_000


def as_probability_vector(p, name="probability vector", tol=PROB_TOL):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("%s must be a non-empty 1-d array, got shape %s" % (name, p.shape))
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("%s has negative or non-finite entries" % name)
    if abs(p.sum() - 1.0) > tol:
        raise ValueError("%s does not sum to 1 (sum = %.17g)" % (name, p.sum()))
    return p


def as_stochastic_matrix(P, name="kernel", tol=PROB_TOL):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise ValueError("%s must be a non-empty square matrix, got shape %s" % (name, P.shape))
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise ValueError("%s has negative or non-finite entries" % name)
    err = np.abs(P.sum(axis=1) - 1.0).max()
    if err > tol:
        raise ValueError("%s rows do not sum to 1 (max deviation %.3g)" % (name, err))
    return P


@dataclass
class MarkovPrior:
    """Window of a Markov chain: kernels ``Pi(0), ..., Pi(T-1)``.

    ``initial`` is the prior law of ``X(0)``; it only enters relative-entropy
    diagnostics and may be omitted.
    """

    kernels: list
    initial: np.ndarray | None = None

    def __post_init__(self):
        if len(self.kernels) < 1:
            raise ValueError("a Markov prior needs at least one kernel")
        self.kernels = [as_stochastic_matrix(K, "kernel %d" % t) for t, K in enumerate(self.kernels)]
        n = self.kernels[0].shape[0]
        for t, K in enumerate(self.kernels):
            if K.shape != (n, n):
                raise ValueError("kernel %d has shape %s, expected %s" % (t, K.shape, (n, n)))
        if self.initial is not None:
            self.initial = as_probability_vector(self.initial, "prior initial law")
            if self.initial.size != n:
                raise ValueError("prior initial law has length %d, expected %d" % (self.initial.size, n))

    @property
    def horizon(self):
        return len(self.kernels)

    @property
    def n_states(self):
        return self.kernels[0].shape[0]

    def composed(self, start=0, stop=None):
        """``Pi(start) Pi(start+1) ... Pi(stop-1)`` (identity for an empty window)."""
        stop = self.horizon if stop is None else stop
        out = np.eye(self.n_states)
        for K in self.kernels[start:stop]:
            out = out @ K
        return out


@dataclass
class SchrodingerPotentials:
    """Endpoint potentials ``phi(0), phi(T), phihat(0), phihat(T)``."""

    phi0: np.ndarray
    phiT: np.ndarray
    phihat0: np.ndarray
    phihatT: np.ndarray

    def rescaled(self, a):
        """The equivalent solution ``(a phi, phihat / a)``."""
        return SchrodingerPotentials(a * self.phi0, a * self.phiT,
                                     self.phihat0 / a, self.phihatT / a)


@dataclass
class BridgeSolution:
    potentials: SchrodingerPotentials
    joint: np.ndarray
    step_kernels: list
    marginals: list
    phi: np.ndarray
    phihat: np.ndarray
    report: SolveReport = field(default_factory=SolveReport)
    prior: MarkovPrior | None = None

    def relative_entropy_to_prior(self):
        """``D(q_0T || p_0T)`` against the prior joint of ``(X(0), X(T))``."""
        if self.prior is None or self.prior.initial is None:
            raise ValueError("prior initial law is required")
        return relative_entropy(self.joint, prior_joint(self.prior.initial, self.prior.composed()))


def relative_entropy(Q, P):
    """Relative entropy ``sum Q log(Q / P)`` of two joint laws.

    ``0 log 0 = 0``; the result is ``inf`` when ``Q`` charges a point that
    ``P`` does not.

    Parameters
    ----------
    Q, P : array_like
        Nonnegative arrays of equal shape, each summing to 1 within 1e-10.
    """
    Q = np.asarray(Q, dtype=float)
    P = np.asarray(P, dtype=float)
    if Q.shape != P.shape:
        raise ValueError("shape mismatch: %s vs %s" % (Q.shape, P.shape))
    if np.any(Q < 0) or np.any(P < 0):
        raise ValueError("negative entries")
    for name, A in (("Q", Q), ("P", P)):
        if abs(A.sum() - 1.0) > 1e-10:
            raise ValueError("%s does not sum to 1 (sum = %.17g)" % (name, A.sum()))
    return float(rel_entr(Q, P).sum())


def prior_joint(p0, pi):
    """Prior joint law ``p0(i) pi(i, j)`` of the endpoints."""
    return np.asarray(p0, dtype=float)[:, None] * np.asarray(pi, dtype=float)


def time_reversed(pi, p0):
    """Kernel of the time-reversed prior: ``p0(i) pi(i, j) / pT(j)`` transposed.

    Columns of ``pi`` never charged from the support of ``p0`` get a uniform
    row, which carries no mass.
    """
    J = prior_joint(p0, pi).T
    s = J.sum(axis=1, keepdims=True)
    n = J.shape[1]
    return np.where(s > 0, J / np.where(s > 0, s, 1.0), 1.0 / n)


def _support_distance(x, y, mask):
    # Hilbert distance restricted to the coordinates where the iterate can be nonzero
    r = np.log(x[mask]) - np.log(y[mask])
    return float(r.max() - r.min())


def default_max_iter(tol, rate):
    """``10 * ceil(log(tol) / log(rate))``, at least 100 and at most 1e5."""
    if rate >= 1.0:
        return MAX_ITER_CAP
    if rate <= 0.0:
        return 100
    return int(min(MAX_ITER_CAP, max(100, 10 * math.ceil(math.log(tol) / math.log(rate)))))


def _kernel_rate(pi, allow_nonpositive):
    try:
        delta = projective_diameter_stochastic(pi)
    except InfiniteDiameterError:
        if not allow_nonpositive:
            raise
        log.warning("kernel has zero entries; iterating without a contraction guarantee")
        return math.inf
    return delta


def solve_one_step(pi, p0, pT, tol=1e-12, max_iter=None, allow_nonpositive=False):
    """Solve the one-step Schrödinger system for a positive kernel.

    Parameters
    ----------
    pi : array_like of shape (N, N)
        Row-stochastic prior kernel with strictly positive entries.
    p0, pT : array_like of shape (N,)
        Target initial and final marginals.  Zero entries are allowed.
    tol : float
        Stop once successive ``phihat0`` iterates are within ``tol`` in the
        Hilbert metric.
    max_iter : int, optional
        Defaults to ``10 * ceil(log(tol) / log(tanh(Delta / 4)))`` clipped to
        ``[100, 1e5]``.
    allow_nonpositive : bool
        Run even if ``pi`` has zero entries.  No convergence guarantee.

    Returns
    -------
    potentials : SchrodingerPotentials
        Normalized so that ``<phihat0, phi0> = 1``.
    report : SolveReport

    Raises
    ------
    InfiniteDiameterError
        ``pi`` has a zero entry and ``allow_nonpositive`` is false.
    ConvergenceError
        ``max_iter`` iterations without reaching ``tol``.
    """
    pi = as_stochastic_matrix(pi)
    n = pi.shape[0]
    p0 = as_probability_vector(p0, "p0")
    pT = as_probability_vector(pT, "pT")
    if p0.size != n or pT.size != n:
        raise ValueError("marginals must have length %d" % n)
    if tol <= 0:
        raise ValueError("tol must be positive")

    delta = _kernel_rate(pi, allow_nonpositive)
    rate = birkhoff_ratio(delta)
    if max_iter is None:
        max_iter = default_max_iter(tol, rate)
    report = SolveReport(contraction_bound=rate if math.isfinite(delta) else None, tol=tol)

    support = p0 > 0
    x = np.ones(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(max_iter):
            phihatT = pi.T @ x
            phiT = pT / phihatT
            phi0 = pi @ phiT
            if np.any(phi0[support] <= 0) or np.any(phihatT[pT > 0] <= 0):
                raise BoundaryError("iterate left the positive orthant; kernel too sparse")
            nxt = np.where(support, p0 / phi0, 0.0)
            nxt /= nxt.max()
            res = _support_distance(nxt, x, support)
            x = nxt
            report.record(res)
            log.debug("iteration %d residual %.3e", report.iterations, res)
            if res < tol:
                report.converged = True
                break
    if not report.converged:
        raise ConvergenceError(
            "no convergence after %d iterations (residual %.3e)" % (max_iter, report.final_residual),
            report)

    # one more half sweep so that the adjoint relations hold exactly;
    # <x, phi0> = <P^T x, phiT> = sum(pT) = 1 fixes the pairing
    phihatT = pi.T @ x
    with np.errstate(divide="ignore"):
        phiT = np.where(pT > 0, pT / phihatT, 0.0)
    phi0 = pi @ phiT
    return SchrodingerPotentials(phi0=phi0, phiT=phiT, phihat0=x, phihatT=phihatT), report


def one_step_joint(potentials, pi):
    """Optimal endpoint coupling ``q(i, j) = phihat0(i) pi(i, j) phiT(j)``."""
    pi = np.asarray(pi, dtype=float)
    return potentials.phihat0[:, None] * pi * potentials.phiT[None, :]


def one_step_transition(pi, potentials):
    """Bridge kernel ``diag(phi0)^-1 pi diag(phiT)``."""
    phi0 = np.asarray(potentials.phi0, dtype=float)
    if np.any(phi0 <= 0):
        raise BoundaryError("phi0 has nonpositive entries")
    pi = np.asarray(pi, dtype=float)
    return pi * potentials.phiT[None, :] / phi0[:, None]


def propagate_harmonics(prior, phiT, phihat0):
    """Space-time harmonic ``phi`` (backward) and co-harmonic ``phihat`` (forward).

    Returns two arrays of shape ``(T + 1, N)``, row ``t`` holding the
    potential at time ``t``.
    """
    T, n = prior.horizon, prior.n_states
    phiT = np.asarray(phiT, dtype=float)
    phihat0 = np.asarray(phihat0, dtype=float)
    if phiT.shape != (n,) or phihat0.shape != (n,):
        raise ValueError("potentials must have length %d" % n)
    phi = np.empty((T + 1, n))
    phihat = np.empty((T + 1, n))
    phi[T] = phiT
    for t in range(T - 1, -1, -1):
        phi[t] = prior.kernels[t] @ phi[t + 1]
    phihat[0] = phihat0
    for t in range(T):
        phihat[t + 1] = prior.kernels[t].T @ phihat[t]
    return phi, phihat


def solve_bridge(prior, p0, pT, tol=1e-12, max_iter=None, allow_nonpositive=False):
    """Schrödinger bridge over a multi-step Markov prior.

    Positivity is required of the product kernel ``Pi(0) ... Pi(T-1)`` only.
    """
    if not isinstance(prior, MarkovPrior):
        prior = MarkovPrior(list(prior))
    product = prior.composed()
    # products of stochastic matrices drift from exact row sums by rounding
    product /= product.sum(axis=1, keepdims=True)
    potentials, report = solve_one_step(product, p0, pT, tol, max_iter, allow_nonpositive)
    phi, phihat = propagate_harmonics(prior, potentials.phiT, potentials.phihat0)
    steps = [prior.kernels[t] * phi[t + 1][None, :] / phi[t][:, None] for t in range(prior.horizon)]
    marginals = [phihat[t] * phi[t] for t in range(prior.horizon + 1)]
    return BridgeSolution(
        potentials=potentials,
        joint=one_step_joint(potentials, product),
        step_kernels=steps,
        marginals=marginals,
        phi=phi,
        phihat=phihat,
        report=report,
        prior=prior,
    )


def sinkhorn_doubly_stochastic(pi, tol=1e-12, max_iter=None):
    """Scale a positive stochastic matrix to doubly stochastic form.

    This is the one-step bridge with uniform marginals.

    Returns
    -------
    (ndarray, SchrodingerPotentials, SolveReport)
    """
    pi = as_stochastic_matrix(pi)
    u = np.full(pi.shape[0], 1.0 / pi.shape[0])
    potentials, report = solve_one_step(pi, u, u, tol, max_iter)
    return one_step_transition(pi, potentials), potentials, report


def residuals(pi, p0, pT, potentials):
    """Relative residuals of the four equations of the one-step system."""
    pi = np.asarray(pi, dtype=float)
    phi0, phiT = potentials.phi0, potentials.phiT
    phihat0, phihatT = potentials.phihat0, potentials.phihatT

    def rel(a, b):
        return float(np.abs(a - b).max() / max(np.abs(b).max(), np.finfo(float).tiny))

    return {
        "harmonic": rel(phi0, pi @ phiT),
        "coharmonic": rel(phihatT, pi.T @ phihat0),
        "boundary_initial": float(np.abs(phi0 * phihat0 - p0).max()),
        "boundary_final": float(np.abs(phiT * phihatT - pT).max()),
    }
