"""Reference computations that share no code path with the solvers.

Each oracle recomputes a quantity from its definition: brute-force
enumeration, generic constrained optimization, or a closed form.
"""

import itertools
import math

import numpy as np
from scipy.optimize import minimize, minimize_scalar


def diameter_bruteforce(P):
    """max over all index quadruples of log(P_ij P_kl / (P_il P_kj))."""
    n, m = P.shape
    best = 0.0
    for i, k in itertools.product(range(n), repeat=2):
        for j, l in itertools.product(range(m), repeat=2):
            best = max(best, math.log(P[i, j] * P[k, l] / (P[i, l] * P[k, j])))
    return best


def kl(q, p):
    q = np.asarray(q, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    m = q > 0
    return float(np.sum(q[m] * np.log(q[m] / p[m])))


def coupling_kl_2x2(prior, p0, pT):
    """Minimize D(q || prior) over 2x2 couplings with marginals p0, pT.

    The feasible set is the segment q = [[a, p0_0 - a], [pT_0 - a, ...]];
    a bounded scalar search locates the minimizer and a dense grid guards
    against a wrong bracket.
    """
    lo = max(0.0, p0[0] + pT[0] - 1.0)
    hi = min(p0[0], pT[0])

    def q_of(a):
        return np.array([[a, p0[0] - a], [pT[0] - a, 1.0 - p0[0] - pT[0] + a]])

    def f(a):
        return kl(np.clip(q_of(a), 0.0, None), prior)

    grid = np.linspace(lo, hi, 20001)
    vals = [f(a) for a in grid]
    k = int(np.argmin(vals))
    a_lo, a_hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    r = minimize_scalar(f, bounds=(a_lo, a_hi), method="bounded", options={"xatol": 1e-14})
    a = r.x if r.fun <= vals[k] else grid[k]
    return q_of(a), f(a)


def coupling_kl(prior, p0, pT):
    """Minimize D(q || prior) over N x N couplings with marginals p0, pT.

    The top-left (N-1) x (N-1) block is free; the last row and column follow
    from the marginals.  SLSQP with the exact gradient and q >= 0 as
    inequality constraints, started from the independent coupling.
    """
    n = len(p0)
    m = (n - 1) ** 2
    # q = b + A z
    A = np.zeros((n * n, m))
    b = np.zeros(n * n)
    idx = lambda i, j: i * n + j
    for i in range(n - 1):
        for j in range(n - 1):
            c = i * (n - 1) + j
            A[idx(i, j), c] = 1
            A[idx(i, n - 1), c] = -1
            A[idx(n - 1, j), c] = -1
            A[idx(n - 1, n - 1), c] = 1
    for i in range(n - 1):
        b[idx(i, n - 1)] = p0[i]
    for j in range(n - 1):
        b[idx(n - 1, j)] = pT[j]
    b[idx(n - 1, n - 1)] = p0[n - 1] - sum(pT[j] for j in range(n - 1))
    logp = np.log(np.asarray(prior, dtype=float).ravel())

    def f(z):
        q = np.clip(b + A @ z, 1e-300, None)
        return float(np.sum(q * (np.log(q) - logp)))

    def g(z):
        q = np.clip(b + A @ z, 1e-300, None)
        return A.T @ (np.log(q) - logp + 1.0)

    z0 = np.outer(p0, pT)[: n - 1, : n - 1].ravel()
    cons = {"type": "ineq", "fun": lambda z: b + A @ z, "jac": lambda z: A}
    r = minimize(f, z0, jac=g, constraints=[cons], method="SLSQP",
                 options={"ftol": 1e-15, "maxiter": 1000})
    q = (b + A @ r.x).reshape(n, n)
    return q, f(r.x)


def sinkhorn_2x2_closed_form(P):
    """Doubly stochastic scaling of a positive 2x2 matrix.

    Diagonal scalings preserve the cross ratio c = P00 P11 / (P01 P10); the
    scaled matrix is [[a, 1-a], [1-a, a]] with a^2 / (1-a)^2 = c.
    """
    c = P[0, 0] * P[1, 1] / (P[0, 1] * P[1, 0])
    a = math.sqrt(c) / (1.0 + math.sqrt(c))
    return np.array([[a, 1 - a], [1 - a, a]])


def kraus_terms(E, rho):
    """sum_i E_i rho E_i^H as an explicit Python loop."""
    out = np.zeros_like(np.asarray(rho, dtype=complex))
    for Ei in E:
        out = out + Ei @ rho @ Ei.conj().T
    return out


def kraus_adjoint_terms(E, X):
    out = np.zeros_like(np.asarray(X, dtype=complex))
    for Ei in E:
        out = out + Ei.conj().T @ X @ Ei
    return out


def eig_ratio_distance(X, Y):
    """log of the spread of eig(X Y^{-1}), via a plain nonsymmetric solver."""
    w = np.linalg.eigvals(X @ np.linalg.inv(Y)).real
    return math.log(w.max() / w.min())


def random_stochastic(rng, n, low=0.02):
    P = rng.uniform(low, 1.0, size=(n, n))
    return P / P.sum(axis=1, keepdims=True)


def random_simplex(rng, n, low=0.02):
    p = rng.uniform(low, 1.0, size=n)
    return p / p.sum()


def random_pd(rng, n, complex_=True):
    G = rng.standard_normal((n, n))
    if complex_:
        G = G + 1j * rng.standard_normal((n, n))
    X = G @ G.conj().T + 0.1 * np.eye(n)
    return 0.5 * (X + X.conj().T)


def averaging_channel():
    s = math.sqrt(0.5)
    return np.array([[[s, 0], [0, 0]], [[0, 0], [0, s]], [[0, s], [s, 0]]], dtype=complex)


def skewed_channel():
    w, V = np.linalg.eigh(np.array([[2.0, 1.0], [1.0, 4.0]]))
    Mi = (V / np.sqrt(w)) @ V.T
    A = [np.array([[1.0, 1.0], [0.0, 0.0]]), np.array([[0.0, 1.0], [0.0, 1.0]]),
         np.array([[0.0, 1.0], [1.0, 0.0]])]
    return np.array([a @ Mi for a in A], dtype=complex)
