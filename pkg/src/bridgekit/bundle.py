"""JSON result bundles: encoding, decoding and residual recomputation.

Matrices are JSON arrays of rows.  Complex entries are ``[re, im]`` pairs,
so a complex array has one more trailing axis of length two than its real
counterpart; decoders are told the expected rank to tell the two apart.
Non-finite numbers are written as the strings ``"inf"``, ``"-inf"`` and
``"nan"``.  Output contains no timestamps, so equal inputs give equal bytes.
"""

import json
import math

import numpy as np

from . import classical, quantum

FORMAT = "bridgekit-result"
FORMAT_VERSION = 1
DEFAULT_PRECISION = 17

CLASSICAL_KINDS = ("classical-one-step", "classical-multi-step", "classical-sinkhorn")
QUANTUM_KINDS = ("quantum-doubly-stochastic", "quantum-bridge", "quantum-pure",
                 "quantum-multi-step")
KINDS = CLASSICAL_KINDS + QUANTUM_KINDS


class BundleError(ValueError):
    """A bundle is malformed or lacks a field its kind requires."""


def encode_number(x, precision=DEFAULT_PRECISION):
    if x is None or isinstance(x, (bool, str)):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if precision >= 17:
        # repr round-trips exactly
        return x
    return float("%.*g" % (precision, x))


def decode_number(x):
    if isinstance(x, str):
        return float(x)
    return x


def encode_array(a, precision=DEFAULT_PRECISION):
    """Nested lists; complex arrays gain a trailing ``[re, im]`` axis."""
    a = np.asarray(a)
    if np.iscomplexobj(a):
        a = np.stack([a.real, a.imag], axis=-1)
    a = np.asarray(a, dtype=float)
    flat = [encode_number(x, precision) for x in a.ravel().tolist()]
    return np.array(flat, dtype=object).reshape(a.shape).tolist() if a.ndim else flat[0]


def decode_array(obj, ndim, name="array"):
    """Inverse of :func:`encode_array` for an array of real rank ``ndim``."""
    try:
        a = np.array(_map_nested(obj, decode_number), dtype=float)
    except (TypeError, ValueError) as exc:
        raise BundleError("%s is not a numeric array: %s" % (name, exc)) from None
    if a.ndim == ndim + 1 and a.shape[-1] == 2:
        return a[..., 0] + 1j * a[..., 1]
    if a.ndim != ndim:
        raise BundleError("%s must have rank %d, got shape %s" % (name, ndim, a.shape))
    return a


def _map_nested(obj, fn):
    if isinstance(obj, list):
        return [_map_nested(x, fn) for x in obj]
    return fn(obj)


def dumps(bundle):
    """One top-level field per line, values in compact JSON."""
    items = ["%s: %s" % (json.dumps(k), json.dumps(v, ensure_ascii=False)) for k, v in bundle.items()]
    return "{\n " + ",\n ".join(items) + "\n}\n"


def loads(text):
    try:
        bundle = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleError("not valid JSON: %s" % exc) from None
    if not isinstance(bundle, dict) or bundle.get("format") != FORMAT:
        raise BundleError("not a %s document" % FORMAT)
    if bundle.get("kind") not in KINDS:
        raise BundleError("unknown kind %r" % bundle.get("kind"))
    return bundle


def _get(bundle, *path, ndim=None):
    node = bundle
    for key in path:
        if not isinstance(node, dict) or key not in node:
            raise BundleError("missing field %s" % ".".join(path))
        node = node[key]
    if ndim is None:
        return node
    return decode_array(node, ndim, ".".join(path))


def _is_uniform(*arrays):
    return all(np.allclose(a, np.full_like(a, 1.0 / a.shape[0]), rtol=0, atol=1e-15) for a in arrays)


# ---------------------------------------------------------------------------
# residuals recomputed from bundle data

def _classical_one_step(b):
    P = _get(b, "inputs", "kernel", ndim=2)
    p0 = _get(b, "inputs", "p0", ndim=1)
    pT = _get(b, "inputs", "pT", ndim=1)
    pot = classical.SchrodingerPotentials(*(_get(b, "potentials", k, ndim=1)
                                            for k in ("phi0", "phiT", "phihat0", "phihatT")))
    Q = _get(b, "transformed", "kernel", ndim=2)
    res = classical.residuals(P, p0, pT, pot)
    res["transition"] = float(np.abs(Q - classical.one_step_transition(P, pot)).max())
    res["row_sums"] = float(np.abs(Q.sum(axis=1) - 1).max())
    res["marginal"] = float(np.abs(p0 @ Q - pT).max())
    if _is_uniform(p0, pT):
        res["column_sums"] = float(np.abs(Q.sum(axis=0) - 1).max())
    return res


def _classical_multi_step(b):
    Ks = _get(b, "inputs", "kernels", ndim=3)
    p0 = _get(b, "inputs", "p0", ndim=1)
    pT = _get(b, "inputs", "pT", ndim=1)
    phi = _get(b, "potentials", "phi", ndim=2)
    phihat = _get(b, "potentials", "phihat", ndim=2)
    Qs = _get(b, "transformed", "step_kernels", ndim=3)
    marg = _get(b, "marginals", ndim=2)
    T = len(Ks)

    def rel(a, c):
        return float(np.abs(a - c).max() / max(np.abs(c).max(), np.finfo(float).tiny))

    res = {
        "harmonic": max(rel(phi[t], Ks[t] @ phi[t + 1]) for t in range(T)),
        "coharmonic": max(rel(phihat[t + 1], Ks[t].T @ phihat[t]) for t in range(T)),
        "boundary_initial": float(np.abs(phi[0] * phihat[0] - p0).max()),
        "boundary_final": float(np.abs(phi[T] * phihat[T] - pT).max()),
        "step_kernels": max(float(np.abs(Qs[t] - Ks[t] * phi[t + 1] / phi[t][:, None]).max())
                            for t in range(T)),
        "row_sums": float(np.abs(Qs.sum(axis=2) - 1).max()),
        "marginals": float(np.abs(marg - phi * phihat).max()),
        "step_marginal": max(float(np.abs(marg[t] @ Qs[t] - marg[t + 1]).max()) for t in range(T)),
    }
    q = p0
    for Q in Qs:
        q = q @ Q
    res["chain_marginal"] = float(np.abs(q - pT).max())
    return res


def _quantum_potentials(b):
    return quantum.QuantumPotentials(*(_get(b, "potentials", k, ndim=2)
                                       for k in ("phi0", "phiT", "phihat0", "phihatT")))


def _kraus(b, *path):
    return quantum.KrausMap(_get(b, *path, ndim=3), check=False)


def _quantum_doubly_stochastic(b):
    gauge = _get(b, "solver", "gauge")
    return quantum.doubly_stochastic_residuals(_kraus(b, "inputs", "kraus"),
                                               _kraus(b, "transformed", "kraus"),
                                               _quantum_potentials(b), gauge)


def _quantum_bridge(b):
    rho0 = _get(b, "inputs", "rho0", ndim=2)
    rhoT = _get(b, "inputs", "rhoT", ndim=2)
    u = np.eye(rho0.shape[0]) / rho0.shape[0]
    uniform = all(np.allclose(r, u, rtol=0, atol=1e-15) for r in (rho0, rhoT))
    return quantum.system_residuals(_kraus(b, "inputs", "kraus"), _kraus(b, "transformed", "kraus"),
                                    _quantum_potentials(b), rho0, rhoT, dual_unital=uniform)


def _quantum_pure(b):
    v0 = _get(b, "inputs", "v0", ndim=1)
    vT = _get(b, "inputs", "vT", ndim=1)
    return quantum.pure_residuals(_kraus(b, "inputs", "kraus"), _kraus(b, "transformed", "kraus"),
                                  _quantum_potentials(b), np.outer(v0, v0.conj()),
                                  np.outer(vT, vT.conj()))


def _quantum_multi_step(b):
    Es = [quantum.KrausMap(E, check=False) for E in _get(b, "inputs", "kraus_list", ndim=4)]
    rho0 = _get(b, "inputs", "rho0", ndim=2)
    rhoT = _get(b, "inputs", "rhoT", ndim=2)
    phi = _get(b, "potentials", "phi", ndim=3)
    phihat = _get(b, "potentials", "phihat", ndim=3)
    steps = [quantum.KrausMap(F, check=False) for F in _get(b, "transformed", "step_maps", ndim=4)]
    dens = _get(b, "densities", ndim=3)
    T = len(Es)
    if len(steps) != T or len(phi) != T + 1 or len(phihat) != T + 1 or len(dens) != T + 1:
        raise BundleError("inconsistent horizon in multi-step bundle")
    max_coeffs = _get(b, "solver", "max_coeffs")
    composed = quantum.compose(Es, max_coeffs)
    pot = quantum.QuantumPotentials(phi[0], phi[T], phihat[0], phihat[T])
    # the per-step roots telescope, so the composed step maps are the one-step map
    res = quantum.system_residuals(composed, quantum.compose(steps, max_coeffs), pot, rho0, rhoT)
    res["step_harmonic"] = max(quantum.rel_error(quantum.kraus_adjoint_apply(Es[t], phi[t + 1]), phi[t])
                               for t in range(T))
    res["step_coharmonic"] = max(quantum.rel_error(quantum.kraus_apply(Es[t], phihat[t]), phihat[t + 1])
                                 for t in range(T))
    res.update(quantum.multistep_residuals(steps, list(dens), rho0, rhoT))
    return res


_RESIDUALS = {
    "classical-one-step": _classical_one_step,
    "classical-sinkhorn": _classical_one_step,
    "classical-multi-step": _classical_multi_step,
    "quantum-doubly-stochastic": _quantum_doubly_stochastic,
    "quantum-bridge": _quantum_bridge,
    "quantum-pure": _quantum_pure,
    "quantum-multi-step": _quantum_multi_step,
}


def residual_table(bundle):
    """Recompute every residual of ``bundle`` from its emitted data.

    Raises
    ------
    BundleError
        A field needed for the recomputation is missing or malformed.
    """
    try:
        return _RESIDUALS[bundle["kind"]](bundle)
    except BundleError:
        raise
    except (KeyError, IndexError, TypeError) as exc:
        raise BundleError("malformed %s bundle: %r" % (bundle.get("kind"), exc)) from None


def has_solution(bundle):
    return "potentials" in bundle
