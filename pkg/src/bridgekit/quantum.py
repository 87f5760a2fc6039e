"""Kraus maps and quantum Schrödinger bridges.

Conventions: for Kraus coefficients ``E_i``

* ``kraus_apply`` is the state map ``rho -> sum E_i rho E_i^H`` (written
  with a dagger in the bridge literature, the analogue of ``P^T``);
* ``kraus_adjoint_apply`` is the observable map ``X -> sum E_i^H X E_i``
  (the analogue of ``P`` acting on functions).

Potentials follow the classical naming: ``phi`` are propagated backward by the
observable map, ``phihat`` forward by the state map.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
import scipy.linalg

from .cone import _dh_psd, birkhoff_ratio, psd_diameter_estimate
from .errors import BoundaryError, ConvergenceError, NotPositivityImprovingError
from .matfun import (
    as_hermitian,
    as_positive_definite,
    cholesky_factor,
    herm,
    hermitian_inv,
    hermitian_inv_sqrt,
    hermitian_sqrt,
)
from .report import SolveReport

log = logging.getLogger(__name__)

TP_TOL = 1e-10
DENSITY_TOL = 1e-12
MAX_ITER = 100_000
MAX_COEFFS = 4096
GAUGES = ("hermitian", "triangular")
# iterates are only rescaled when their trace leaves this window
_SCALE_WINDOW = (1e-100, 1e100)


@dataclass(frozen=True)
class KrausMap:
    """Trace-preserving completely positive map given by its coefficients.

    Parameters
    ----------
    coeffs : array_like of shape (k, n, n)
        Kraus coefficients with ``sum E_i^H E_i = I`` within 1e-10.
    check : bool
        Validate trace preservation.  Transformed maps built internally are
        checked separately by the residual table instead.
    """

    coeffs: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        E = np.asarray(self.coeffs, dtype=complex)
        if E.ndim == 2:
            E = E[None]
        if E.ndim != 3 or E.shape[1] != E.shape[2] or E.shape[0] < 1:
            raise ValueError("Kraus coefficients must have shape (k, n, n), got %s" % (E.shape,))
        object.__setattr__(self, "coeffs", E)
        if self.check:
            err = tp_defect(E)
            if err > TP_TOL:
                raise ValueError("Kraus map is not trace preserving (|sum E^H E - I| = %.3g)" % err)

    @property
    def dim(self):
        return self.coeffs.shape[1]

    @property
    def n_coeffs(self):
        return self.coeffs.shape[0]

    def __call__(self, rho):
        return kraus_apply(self, rho)

    def adjoint(self, X):
        return kraus_adjoint_apply(self, X)

    def conjugated(self, left, right):
        """Coefficients ``left @ E_i @ right`` (no trace-preservation check)."""
        return KrausMap(left @ self.coeffs @ right, check=False)


def tp_defect(coeffs):
    E = np.asarray(coeffs, dtype=complex)
    S = np.einsum("kji,kjl->il", E.conj(), E)
    return float(np.abs(S - np.eye(E.shape[1])).max())


def _as_kraus(E):
    return E if isinstance(E, KrausMap) else KrausMap(E)


def _check_dim(E, X):
    X = np.asarray(X, dtype=complex)
    if X.shape != (E.dim, E.dim):
        raise ValueError("dimension mismatch: map on %d x %d, argument %s" % (E.dim, E.dim, X.shape))
    return X


def kraus_apply(E, rho):
    """``sum_i E_i rho E_i^H``."""
    E = _as_kraus(E)
    rho = _check_dim(E, rho)
    # fixed summation order keeps results bit-reproducible
    return np.einsum("kij,jl,kml->im", E.coeffs, rho, E.coeffs.conj())


def kraus_adjoint_apply(E, X):
    """``sum_i E_i^H X E_i``; the dual of :func:`kraus_apply` in the trace pairing."""
    E = _as_kraus(E)
    X = _check_dim(E, X)
    return np.einsum("kji,jl,klm->im", E.coeffs.conj(), X, E.coeffs)


def compose(maps, max_coeffs=MAX_COEFFS):
    """Kraus map of ``maps[-1] o ... o maps[0]`` (state picture).

    Coefficients are the products ``E_{T-1, i_{T-1}} ... E_{0, i_0}`` in
    lexicographic order of ``(i_{T-1}, ..., i_0)``.
    """
    maps = [_as_kraus(E) for E in maps]
    if not maps:
        raise ValueError("need at least one map")
    n = maps[0].dim
    if any(E.dim != n for E in maps):
        raise ValueError("all maps must act on the same dimension")
    count = math.prod(E.n_coeffs for E in maps)
    if count > max_coeffs:
        raise ValueError("composition would have %d Kraus coefficients (cap %d)" % (count, max_coeffs))
    out = maps[0].coeffs
    for E in maps[1:]:
        out = np.einsum("aij,bjk->abik", E.coeffs, out).reshape(-1, n, n)
    return KrausMap(out, check=False)


# ---------------------------------------------------------------------------
# positivity improving

@dataclass
class PositivityCheck:
    """Outcome of :func:`check_positivity_improving`.

    ``status`` is ``"pass"`` (sampled, never a proof), ``"fail"`` with a
    witness pair ``(v, w)`` such that ``w^H E_i v`` vanishes for all ``i``,
    or ``"inconclusive"`` when the smallest sampled eigenvalue ratio is too
    small to call.
    """

    status: str
    witness: tuple | None = None
    min_eig_ratio: float = math.nan
    reason: str = ""

    @property
    def passed(self):
        return self.status == "pass"


def _pencil_witness(E):
    n = E.dim
    if E.n_coeffs == 1:
        v = np.zeros(n, dtype=complex)
        v[0] = 1
    else:
        _, V = scipy.linalg.eig(E.coeffs[0], E.coeffs[1])
        v = V[:, 0] / np.linalg.norm(V[:, 0])
    images = np.stack([Ei @ v for Ei in E.coeffs], axis=1)
    # w spans the orthogonal complement of span{E_i v}
    U, s, _ = np.linalg.svd(images, full_matrices=True)
    w = U[:, -1]
    return v, w


def check_positivity_improving(E, trials=256, rng=None, inconclusive_ratio=1e-8):
    """Sampled test of ``E(rho) > 0`` for every density matrix ``rho``.

    Deciding the property exactly is NP-hard, so a pass only means no sampled
    pure state was mapped to the boundary.  A failure always carries a
    witness.
    """
    E = _as_kraus(E)
    n = E.dim
    if E.n_coeffs <= n:
        v, w = _pencil_witness(E)
        return PositivityCheck("fail", (v, w), 0.0,
                               "n_coeffs = %d <= n = %d (necessary condition fails)" % (E.n_coeffs, n))
    rng = np.random.default_rng(rng)
    vecs = list(np.eye(n, dtype=complex))
    for _ in range(trials):
        z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        vecs.append(z / np.linalg.norm(z))
    worst = math.inf
    for v in vecs:
        w, V = np.linalg.eigh(herm(kraus_apply(E, np.outer(v, v.conj()))))
        ratio = w[0] / w[-1] if w[-1] > 0 else -math.inf
        if ratio <= 1e-12:
            return PositivityCheck("fail", (v, V[:, 0]), ratio,
                                   "a pure state is mapped to the cone boundary")
        worst = min(worst, ratio)
    if worst < inconclusive_ratio:
        return PositivityCheck("inconclusive", None, worst, "sampled image nearly singular")
    return PositivityCheck("pass", None, worst, "sampled")


def _require_positivity_improving(E, trials, rng):
    check = check_positivity_improving(E, trials, rng)
    if check.status == "fail":
        raise NotPositivityImprovingError("Kraus map is not positivity improving: " + check.reason,
                                          witness=check.witness)
    if check.status == "inconclusive":
        log.warning("positivity-improving check inconclusive (min eigenvalue ratio %.3g)",
                    check.min_eig_ratio)
    return check


# ---------------------------------------------------------------------------
# bridge solvers

@dataclass
class QuantumPotentials:
    phi0: np.ndarray
    phiT: np.ndarray
    phihat0: np.ndarray
    phihatT: np.ndarray


@dataclass
class QuantumBridgeResult:
    """Transformed Kraus map(s) together with the potentials that produced them.

    ``transformed`` is the one-step map from time 0 to T.  For multi-step
    problems ``step_maps`` lists the per-step maps and ``densities`` the
    intermediate states ``rho_0, ..., rho_T``; ``phi`` and ``phihat`` then
    hold the potentials at every time.
    """

    transformed: KrausMap
    potentials: QuantumPotentials
    report: SolveReport
    residuals: dict = field(default_factory=dict)
    verify_tol: float = 1e-9
    gauge: str = "hermitian"
    step_maps: list = field(default_factory=list)
    densities: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    phihat: list = field(default_factory=list)

    @property
    def converged(self):
        return self.report.converged

    @property
    def verified(self):
        return bool(self.residuals) and all(v < self.verify_tol for v in self.residuals.values())

    def failing(self):
        return {k: v for k, v in self.residuals.items() if not v < self.verify_tol}


def as_density_matrix(rho, name="density matrix"):
    rho = as_hermitian(rho, name, DENSITY_TOL)
    if abs(np.trace(rho).real - 1.0) > DENSITY_TOL:
        raise ValueError("%s does not have unit trace" % name)
    if np.linalg.eigvalsh(rho)[0] < -DENSITY_TOL:
        raise ValueError("%s has negative eigenvalues" % name)
    return rho


def factor(phi, gauge="hermitian"):
    """A factor ``chi`` with ``chi^H chi = phi``."""
    if gauge == "hermitian":
        return hermitian_sqrt(phi, "potential")
    if gauge == "triangular":
        return cholesky_factor(phi, "potential")
    raise ValueError("unknown gauge %r; expected one of %s" % (gauge, GAUGES))


def transform(E, phi0, phiT, gauge="hermitian"):
    """Multiplicative transformation ``F_i = chi_T E_i chi_0^{-1}``."""
    E = _as_kraus(E)
    chi0 = factor(phi0, gauge)
    chiT = factor(phiT, gauge)
    return E.conjugated(chiT, np.linalg.inv(chi0))


def rel_error(A, B):
    """Max-abs difference relative to max(1, |B|max)."""
    return float(np.abs(A - B).max() / max(1.0, np.abs(B).max()))


def system_residuals(E, F, pot, rho0, rhoT, gauge="hermitian", dual_unital=False):
    """Residual table for the quantum Schrödinger system and bridge conditions."""
    E = _as_kraus(E)
    F = _as_kraus(F)
    n = E.dim
    chi0 = factor(pot.phi0, gauge)
    chiT = factor(pot.phiT, gauge)
    out = {
        "harmonic": rel_error(kraus_adjoint_apply(E, pot.phiT), pot.phi0),
        "coharmonic": rel_error(kraus_apply(E, pot.phihat0), pot.phihatT),
        "boundary_initial": rel_error(chi0 @ pot.phihat0 @ chi0.conj().T, rho0),
        "boundary_final": rel_error(chiT @ pot.phihatT @ chiT.conj().T, rhoT),
        "transform": rel_error(F.coeffs, chiT @ E.coeffs @ np.linalg.inv(chi0)),
        "unital": rel_error(kraus_adjoint_apply(F, np.eye(n)), np.eye(n)),
        "marginal": rel_error(kraus_apply(F, rho0), rhoT),
    }
    if dual_unital:
        out["dual_unital"] = rel_error(kraus_apply(F, np.eye(n)), np.eye(n))
    return out


def doubly_stochastic_residuals(E, F, pot, gauge="hermitian"):
    """Residual table for uniform marginals, including ``F(I) = I``."""
    n = _as_kraus(E).dim
    u = np.eye(n) / n
    # boundary conditions hold for uniform marginals rescaled to trace n
    res = system_residuals(E, F, pot, u * n, u * n, gauge, dual_unital=True)
    res["marginal"] = rel_error(kraus_apply(F, u), u)
    return res


def _fixed_point(step, x, tol, max_iter, report, what):
    """Iterate ``x <- step(x)`` until successive iterates are ``tol``-close."""
    for _ in range(max_iter):
        try:
            nxt = herm(step(x))
            res = _dh_psd(nxt, x)
        except (BoundaryError, np.linalg.LinAlgError) as exc:
            raise NotPositivityImprovingError(
                "%s iterate left the positive-definite cone: %s" % (what, exc), iterate=x) from exc
        tr = np.trace(nxt).real
        if not _SCALE_WINDOW[0] < tr < _SCALE_WINDOW[1]:
            nxt = nxt / tr
        x = nxt
        report.record(res)
        log.debug("%s iteration %d residual %.3e", what, report.iterations, res)
        if res < tol:
            report.converged = True
            break
    return x


def solve_doubly_stochastic(E, tol=1e-12, max_iter=MAX_ITER, gauge="hermitian",
                            check_positivity=True, trials=256, rng=0, diameter_samples=0,
                            x0=None):
    """Doubly stochastic multiplicative transformation of a Kraus map.

    Iterates ``phihat0 -> E(phihat0) -> inverse -> E^H-side -> inverse``
    from ``phihat0 = I``.  The iterate is not rescaled (the map is
    homogeneous of degree one with unit eigenvalue on its fixed ray), so the
    limit carries the scale reached from the identity start.

    Parameters
    ----------
    E : KrausMap or array_like of shape (k, n, n)
    tol : float
        Hilbert-metric tolerance between successive ``phihat0`` iterates.
    gauge : {"hermitian", "triangular"}
        Factorization ``phi = chi^H chi`` used to build the coefficients.
    check_positivity : bool
        Run the sampled positivity-improving test first.
    diameter_samples : int
        If positive, estimate the projective diameter of the observable map
        and store ``tanh(diameter / 4)`` as the report's contraction bound.
    x0 : array_like, optional
        Positive-definite starting point (default ``I``).

    Returns
    -------
    (QuantumPotentials, QuantumBridgeResult)

    Raises
    ------
    NotPositivityImprovingError
        Failed positivity check, or an iterate left the PD cone.
    ConvergenceError
        ``max_iter`` exceeded.
    """
    E = _as_kraus(E)
    n = E.dim
    if check_positivity:
        _require_positivity_improving(E, trials, rng)
    report = SolveReport(tol=tol)
    if diameter_samples:
        delta = psd_diameter_estimate(E.adjoint, n, diameter_samples, rng)
        report.contraction_bound = birkhoff_ratio(delta)

    def step(x):
        phiT = hermitian_inv(kraus_apply(E, x), "phihatT")
        return hermitian_inv(kraus_adjoint_apply(E, phiT), "phi0")

    start = np.eye(n, dtype=complex) if x0 is None else as_positive_definite(x0, "x0")
    x = _fixed_point(step, start, tol, max_iter, report, "doubly-stochastic")
    if not report.converged:
        raise ConvergenceError("no convergence after %d iterations (residual %.3e)"
                               % (max_iter, report.final_residual), report)
    phihatT = herm(kraus_apply(E, x))
    phiT = hermitian_inv(phihatT)
    phi0 = herm(kraus_adjoint_apply(E, phiT))
    pot = QuantumPotentials(phi0=phi0, phiT=phiT, phihat0=x, phihatT=phihatT)
    F = transform(E, phi0, phiT, gauge)
    res = doubly_stochastic_residuals(E, F, pot, gauge)
    result = QuantumBridgeResult(transformed=F, potentials=pot, report=report,
                                 residuals=res, gauge=gauge)
    return pot, result


def _make_DT(rhoT):
    rT_half = hermitian_sqrt(rhoT, "rhoT")
    rT_ihalf = hermitian_inv_sqrt(rhoT, "rhoT")

    def DT(phihatT):
        inner = herm(rT_ihalf @ hermitian_inv(phihatT, "phihatT") @ rT_ihalf)
        X = herm(rT_half @ hermitian_sqrt(inner) @ rT_half)
        return herm(X @ X)
    return DT


def _make_Dhat0(rho0):
    def Dhat0(phi0):
        c = hermitian_inv_sqrt(phi0, "phi0")
        return herm(c @ rho0 @ c)
    return Dhat0


def solve_general_bridge(E, rho0, rhoT, tol=1e-12, max_iter=MAX_ITER, check_positivity=True,
                         trials=256, rng=0, verify_tol=1e-9, x0=None):
    """Quantum bridge for arbitrary strictly positive marginals.

    Iterates ``phihat0 -> E(.) -> D_T -> E^H-side -> Dhat_0`` where
    ``D_T`` solves ``phiT^{1/2} phihatT phiT^{1/2} = rhoT`` for ``phiT``
    and ``Dhat_0(phi0) = phi0^{-1/2} rho0 phi0^{-1/2}``.

    Existence of the fixed point is not proven in general, so the result
    is certified only by its residual table: check ``result.converged`` and
    ``result.verified`` rather than relying on the absence of an exception.
    Non-convergence is returned, not raised.

    Raises
    ------
    ValueError
        Marginals that are not strictly positive definite.  Pure states go
        through :func:`pure_state_bridge`.
    NotPositivityImprovingError
        Failed positivity check, or an iterate left the PD cone.
    """
    E = _as_kraus(E)
    n = E.dim
    rho0 = as_density_matrix(_check_dim(E, rho0), "rho0")
    rhoT = as_density_matrix(_check_dim(E, rhoT), "rhoT")
    for name, rho in (("rho0", rho0), ("rhoT", rhoT)):
        w = np.linalg.eigvalsh(rho)
        if w[0] <= 1e-12 * w[-1]:
            hint = " (pure state: use pure_state_bridge)" if np.sum(w > 1e-12 * w[-1]) == 1 else \
                " (rank deficient: perturb towards the interior)"
            raise BoundaryError("%s is not strictly positive definite%s" % (name, hint))
    if check_positivity:
        _require_positivity_improving(E, trials, rng)

    DT = _make_DT(rhoT)
    Dhat0 = _make_Dhat0(rho0)
    report = SolveReport(tol=tol)

    def step(x):
        return Dhat0(herm(kraus_adjoint_apply(E, DT(herm(kraus_apply(E, x))))))

    start = np.eye(n, dtype=complex) if x0 is None else as_positive_definite(x0, "x0")
    x = _fixed_point(step, start, tol, max_iter, report, "general-bridge")
    if not report.converged:
        log.warning("general bridge did not converge (residual %.3e)", report.final_residual)
    phihatT = herm(kraus_apply(E, x))
    phiT = DT(phihatT)
    phi0 = herm(kraus_adjoint_apply(E, phiT))
    pot = QuantumPotentials(phi0=phi0, phiT=phiT, phihat0=x, phihatT=phihatT)
    F = transform(E, phi0, phiT)
    res = system_residuals(E, F, pot, rho0, rhoT)
    return QuantumBridgeResult(transformed=F, potentials=pot, report=report, residuals=res,
                               verify_tol=verify_tol)


def pure_state_bridge(E, v0, vT, verify_tol=1e-10):
    """Closed-form bridge between two pure states.

    ``phiT = vT vT^H`` is rank one, so no iteration (and no inversion of
    ``phiT``) is involved: ``F_i = vT vT^H E_i phi0^{-1/2}`` with
    ``phi0 = sum E_i^H vT vT^H E_i``.
    """
    E = _as_kraus(E)
    v0 = np.asarray(v0, dtype=complex).ravel()
    vT = np.asarray(vT, dtype=complex).ravel()
    for name, v in (("v0", v0), ("vT", vT)):
        if v.shape != (E.dim,):
            raise ValueError("%s must have length %d" % (name, E.dim))
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("%s must have unit norm" % name)
    rho0 = np.outer(v0, v0.conj())
    phiT = np.outer(vT, vT.conj())
    phi0 = herm(kraus_adjoint_apply(E, phiT))
    try:
        c = hermitian_inv_sqrt(phi0, "phi0")
    except BoundaryError as exc:
        raise NotPositivityImprovingError("E^H(vT vT^H) is singular: " + str(exc)) from exc
    F = E.conjugated(phiT, c)
    phihat0 = herm(c @ rho0 @ c)
    pot = QuantumPotentials(phi0=phi0, phiT=phiT, phihat0=phihat0,
                            phihatT=herm(kraus_apply(E, phihat0)))
    report = SolveReport(converged=True, final_residual=0.0)
    res = pure_residuals(E, F, pot, rho0, phiT)
    return QuantumBridgeResult(transformed=F, potentials=pot, report=report, residuals=res,
                               verify_tol=verify_tol, gauge="pure")


def pure_residuals(E, F, pot, rho0, rhoT):
    n = E.dim
    return {
        "harmonic": rel_error(kraus_adjoint_apply(E, pot.phiT), pot.phi0),
        "transform": rel_error(F.coeffs, pot.phiT @ E.coeffs @ hermitian_inv_sqrt(pot.phi0)),
        "unital": rel_error(kraus_adjoint_apply(F, np.eye(n)), np.eye(n)),
        "marginal": rel_error(kraus_apply(F, rho0), rhoT),
    }


def multistep_bridge(Es, rho0, rhoT, tol=1e-12, max_iter=MAX_ITER, check_positivity=True,
                     trials=256, rng=0, verify_tol=1e-9, max_coeffs=MAX_COEFFS):
    """Bridge over a sequence of Kraus maps ``E_0, ..., E_{T-1}``.

    Solves the one-step problem for the composed map, then propagates
    ``phihat`` forward and ``phi`` backward through the individual steps.
    Per-step coefficients are ``phi_{t+1}^{1/2} E_{t,i} phi_t^{-1/2}`` and
    the intermediate states ``rho_t = phi_t^{1/2} phihat_t phi_t^{1/2}``.
    """
    Es = [_as_kraus(E) for E in Es]
    composed = compose(Es, max_coeffs)
    one = solve_general_bridge(composed, rho0, rhoT, tol, max_iter, check_positivity,
                               trials, rng, verify_tol)
    T = len(Es)
    phi = [None] * (T + 1)
    phihat = [None] * (T + 1)
    phi[T] = one.potentials.phiT
    phihat[0] = one.potentials.phihat0
    for t in range(T - 1, -1, -1):
        phi[t] = herm(kraus_adjoint_apply(Es[t], phi[t + 1]))
    for t in range(T):
        phihat[t + 1] = herm(kraus_apply(Es[t], phihat[t]))
    roots = [hermitian_sqrt(p, "phi_%d" % t) for t, p in enumerate(phi)]
    densities = [herm(r @ ph @ r) for r, ph in zip(roots, phihat)]
    steps = [Es[t].conjugated(roots[t + 1], hermitian_inv_sqrt(phi[t])) for t in range(T)]

    rho0 = np.asarray(rho0, dtype=complex)
    rhoT = np.asarray(rhoT, dtype=complex)
    res = dict(one.residuals)
    res.update(multistep_residuals(steps, densities, rho0, rhoT))
    return QuantumBridgeResult(transformed=one.transformed, potentials=one.potentials,
                               report=one.report, residuals=res, verify_tol=verify_tol,
                               step_maps=steps, densities=densities, phi=phi, phihat=phihat)


def multistep_residuals(steps, densities, rho0, rhoT):
    n = steps[0].dim
    rho = rho0
    out = {"step_unital": 0.0, "step_marginal": 0.0, "density_trace": 0.0, "density_psd": 0.0}
    for t, F in enumerate(steps):
        out["step_unital"] = max(out["step_unital"], rel_error(kraus_adjoint_apply(F, np.eye(n)), np.eye(n)))
        out["step_marginal"] = max(out["step_marginal"], rel_error(kraus_apply(F, densities[t]), densities[t + 1]))
        rho = kraus_apply(F, rho)
    out["chain_marginal"] = rel_error(rho, rhoT)
    for D in densities:
        out["density_trace"] = max(out["density_trace"], abs(np.trace(D).real - 1.0))
        out["density_psd"] = max(out["density_psd"], max(0.0, -np.linalg.eigvalsh(herm(D))[0]))
    return out


def random_kraus(n, k, rng=None):
    """Random trace-preserving Kraus map with ``k`` complex Gaussian coefficients."""
    rng = np.random.default_rng(rng)
    A = rng.standard_normal((k, n, n)) + 1j * rng.standard_normal((k, n, n))
    S = np.einsum("kji,kjl->il", A.conj(), A)
    return KrausMap(A @ hermitian_inv_sqrt(S))


def random_density(n, rng=None, mix=0.0):
    """Random full-rank density matrix; ``mix`` blends in ``I / n``."""
    rng = np.random.default_rng(rng)
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    rho = G @ G.conj().T
    rho /= np.trace(rho).real
    return herm((1 - mix) * rho + mix * np.eye(n) / n)
