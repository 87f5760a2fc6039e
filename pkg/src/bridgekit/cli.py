"""Command-line front end.

Each subcommand reads its inputs from JSON files, runs one solver, prints a
plain-text summary with the convergence trace and optionally writes a
machine-readable bundle (``--output``).  ``verify`` re-checks a bundle.

Exit codes: 0 converged and verified, 1 input or validation error,
2 non-convergence or failed verification.
"""

import argparse
from dataclasses import dataclass
import json
import logging
import os
import sys

import numpy as np

from . import bundle as bd
from . import classical, quantum
from .errors import BridgeError, ConvergenceError
from .report import SolveReport

log = logging.getLogger("bridgekit")

EXIT_OK, EXIT_INPUT, EXIT_FAILED = 0, 1, 2
LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "trace": logging.DEBUG}

# input flag -> (bundle key, real rank)
INPUTS = {
    "kernel": ("kernel", 2),
    "kernels": ("kernels", 3),
    "p0": ("p0", 1),
    "pT": ("pT", 1),
    "prior_initial": ("prior_initial", 1),
    "kraus": ("kraus", 3),
    "kraus_list": ("kraus_list", 4),
    "rho0": ("rho0", 2),
    "rhoT": ("rhoT", 2),
    "v0": ("v0", 1),
    "vT": ("vT", 1),
}

REQUIRED = {
    "classical-one-step": ("kernel", "p0", "pT"),
    "classical-multi-step": ("kernels", "p0", "pT"),
    "classical-sinkhorn": ("kernel",),
    "quantum-doubly-stochastic": ("kraus",),
    "quantum-bridge": ("kraus", "rho0", "rhoT"),
    "quantum-pure": ("kraus", "v0", "vT"),
    "quantum-multi-step": ("kraus_list", "rho0", "rhoT"),
}

OPTIONAL = {
    "classical-multi-step": ("prior_initial",),
}


@dataclass
class ProblemSpec:
    """A solver run: kind, input file paths and solver settings."""

    kind: str
    inputs: dict
    tol: float = 1e-12
    max_iter: int | None = None
    seed: int = 0
    gauge: str = "hermitian"
    override_positivity_check: bool = False
    verify_tol: float = 1e-9
    precision: int = bd.DEFAULT_PRECISION
    max_coeffs: int = quantum.MAX_COEFFS
    trials: int = 256

    def validate(self):
        if self.kind not in REQUIRED:
            raise ValueError("unknown kind %r" % self.kind)
        missing = [k for k in REQUIRED[self.kind] if not self.inputs.get(k)]
        if missing:
            raise ValueError("%s needs --%s" % (self.kind, ", --".join(m.replace("_", "-") for m in missing)))
        allowed = set(REQUIRED[self.kind]) | set(OPTIONAL.get(self.kind, ()))
        extra = sorted(k for k, v in self.inputs.items() if v and k not in allowed)
        if extra:
            raise ValueError("%s does not take --%s" % (self.kind, ", --".join(e.replace("_", "-") for e in extra)))
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.gauge not in quantum.GAUGES:
            raise ValueError("gauge must be one of %s" % (quantum.GAUGES,))
        if self.gauge != "hermitian" and self.kind != "quantum-doubly-stochastic":
            raise ValueError("the %s gauge is only available for quantum-doubly-stochastic" % self.gauge)
        if not 1 <= self.precision <= 17:
            raise ValueError("precision must be between 1 and 17")


def load_input(path, ndim, name):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValueError("cannot read %s: %s" % (name, exc)) from None
    except json.JSONDecodeError as exc:
        raise ValueError("%s (%s) is not valid JSON: %s" % (name, path, exc)) from None
    return bd.decode_array(data, ndim, name)


def load_inputs(spec):
    out = {}
    for key, path in spec.inputs.items():
        if path:
            name, ndim = INPUTS[key]
            out[name] = load_input(path, ndim, name)
    return out


def _real(a, name):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        if np.abs(a.imag).max() > 0:
            raise ValueError("%s must be real" % name)
        a = a.real
    return a


# ---------------------------------------------------------------------------
# solvers -> bundle payloads

def _solve(spec, data):
    """Run the solver; return (inputs, outputs, report)."""
    kind = spec.kind
    rng = spec.seed
    check = not spec.override_positivity_check
    if kind in bd.CLASSICAL_KINDS:
        data = {k: _real(v, k) for k, v in data.items()}

    if kind in ("classical-one-step", "classical-sinkhorn"):
        P = data["kernel"]
        n = P.shape[0]
        p0 = data.get("p0", np.full(n, 1.0 / n))
        pT = data.get("pT", np.full(n, 1.0 / n))
        inputs = {"kernel": P, "p0": p0, "pT": pT}
        pot, report = _classical_guard(lambda: classical.solve_one_step(
            P, p0, pT, spec.tol, spec.max_iter, allow_nonpositive=spec.override_positivity_check))
        if pot is None:
            return inputs, None, report
        out = {
            "potentials": {"phi0": pot.phi0, "phiT": pot.phiT, "phihat0": pot.phihat0,
                           "phihatT": pot.phihatT},
            "transformed": {"kernel": classical.one_step_transition(P, pot)},
        }
        return inputs, out, report

    if kind == "classical-multi-step":
        prior = classical.MarkovPrior(list(data["kernels"]), initial=data.get("prior_initial"))
        inputs = {"kernels": data["kernels"], "p0": data["p0"], "pT": data["pT"]}
        if "prior_initial" in data:
            inputs["prior_initial"] = data["prior_initial"]
        sol, report = _classical_guard(lambda: _multi(prior, data, spec))
        if sol is None:
            return inputs, None, report
        out = {
            "potentials": {"phi": sol.phi, "phihat": sol.phihat},
            "transformed": {"step_kernels": np.stack(sol.step_kernels)},
            "marginals": np.stack(sol.marginals),
        }
        if prior.initial is not None:
            out["relative_entropy"] = sol.relative_entropy_to_prior()
        return inputs, out, report

    max_iter = spec.max_iter or quantum.MAX_ITER
    if kind == "quantum-doubly-stochastic":
        E = quantum.KrausMap(data["kraus"])
        inputs = {"kraus": E.coeffs}
        try:
            pot, res = quantum.solve_doubly_stochastic(E, spec.tol, max_iter, spec.gauge, check,
                                                       spec.trials, rng)
        except ConvergenceError as exc:
            return inputs, None, exc.report
        return inputs, _quantum_out(res), res.report

    if kind == "quantum-bridge":
        E = quantum.KrausMap(data["kraus"])
        inputs = {"kraus": E.coeffs, "rho0": data["rho0"], "rhoT": data["rhoT"]}
        res = quantum.solve_general_bridge(E, data["rho0"], data["rhoT"], spec.tol, max_iter, check,
                                           spec.trials, rng, spec.verify_tol)
        return inputs, _quantum_out(res), res.report

    if kind == "quantum-pure":
        E = quantum.KrausMap(data["kraus"])
        inputs = {"kraus": E.coeffs, "v0": data["v0"], "vT": data["vT"]}
        res = quantum.pure_state_bridge(E, data["v0"], data["vT"], spec.verify_tol)
        return inputs, _quantum_out(res), res.report

    if kind == "quantum-multi-step":
        Es = [quantum.KrausMap(E) for E in data["kraus_list"]]
        inputs = {"kraus_list": np.stack([E.coeffs for E in Es]), "rho0": data["rho0"],
                  "rhoT": data["rhoT"]}
        res = quantum.multistep_bridge(Es, data["rho0"], data["rhoT"], spec.tol, max_iter, check,
                                       spec.trials, rng, spec.verify_tol, spec.max_coeffs)
        p = res.potentials
        out = {
            "potentials": {"phi0": p.phi0, "phiT": p.phiT, "phihat0": p.phihat0, "phihatT": p.phihatT,
                           "phi": np.stack(res.phi), "phihat": np.stack(res.phihat)},
            "transformed": {"step_maps": np.stack([F.coeffs for F in res.step_maps])},
            "densities": np.stack(res.densities),
        }
        return inputs, out, res.report
    raise ValueError("unknown kind %r" % kind)


def _multi(prior, data, spec):
    sol = classical.solve_bridge(prior, data["p0"], data["pT"], spec.tol, spec.max_iter,
                                 spec.override_positivity_check)
    return sol, sol.report


def _classical_guard(fn):
    try:
        return fn()
    except ConvergenceError as exc:
        return None, exc.report


def _quantum_out(res):
    p = res.potentials
    return {
        "potentials": {"phi0": p.phi0, "phiT": p.phiT, "phihat0": p.phihat0, "phihatT": p.phihatT},
        "transformed": {"kraus": res.transformed.coeffs},
    }


def _encode_tree(node, precision):
    if isinstance(node, dict):
        return {k: _encode_tree(v, precision) for k, v in node.items()}
    if isinstance(node, np.ndarray):
        return bd.encode_array(node, precision)
    return bd.encode_number(node, precision)


def _report_dict(report, precision):
    d = report.to_dict()
    d["residual_trace"] = [bd.encode_number(x, precision) for x in d["residual_trace"]]
    for k in ("final_residual", "contraction_bound", "tol"):
        d[k] = bd.encode_number(d[k], precision)
    return d


def _status(bundle, residuals):
    converged = bool(bundle["report"]["converged"])
    tol = bd.decode_number(bundle["verify_tol"])
    verified = bool(residuals) and all(v < tol for v in residuals.values())
    return {
        "converged": converged,
        "verified": verified,
        "failing": sorted(k for k, v in residuals.items() if not v < tol),
        "exit_code": EXIT_OK if converged and verified else EXIT_FAILED,
    }


def run(spec):
    """Solve ``spec`` and assemble the result bundle.

    Returns
    -------
    (dict, int)
        The JSON-ready bundle and the exit status.

    Raises
    ------
    ValueError
        Invalid spec or inputs (including the solver's precondition errors).
    """
    spec.validate()
    data = load_inputs(spec)
    inputs, outputs, report = _solve(spec, data)
    p = spec.precision
    b = {
        "format": bd.FORMAT,
        "version": bd.FORMAT_VERSION,
        "kind": spec.kind,
        "precision": p,
        "solver": {
            "tol": bd.encode_number(spec.tol, p),
            "max_iter": spec.max_iter,
            "seed": spec.seed,
            "gauge": spec.gauge,
            "override_positivity_check": spec.override_positivity_check,
            "max_coeffs": spec.max_coeffs,
        },
        "verify_tol": bd.encode_number(spec.verify_tol, p),
        "inputs": _encode_tree(inputs, p),
    }
    if outputs is not None:
        b.update(_encode_tree(outputs, p))
    b["report"] = _report_dict(report or SolveReport(), p)
    # residuals are computed from the encoded data, so verify reproduces them
    residuals = bd.residual_table(json.loads(bd.dumps(b))) if outputs is not None else {}
    b["residuals"] = {k: bd.encode_number(v, p) for k, v in residuals.items()}
    b["status"] = _status(b, residuals)
    return b, b["status"]["exit_code"]


def verify(b):
    """Recompute the residual table of a parsed bundle; return (residuals, status)."""
    if not bd.has_solution(b):
        return {}, _status(b, {})
    for key in ("report", "verify_tol"):
        if key not in b:
            raise bd.BundleError("missing field %s" % key)
    residuals = bd.residual_table(b)
    return residuals, _status(b, residuals)


# ---------------------------------------------------------------------------
# text output

def summary(b, residuals, status):
    lines = ["kind: %s" % b["kind"]]
    rep = b["report"]
    lines.append("converged: %s   verified: %s   exit: %d"
                 % ("yes" if status["converged"] else "no", "yes" if status["verified"] else "no",
                    status["exit_code"]))
    lines.append("iterations: %d   final residual: %s   contraction bound: %s"
                 % (rep["iterations"], rep["final_residual"], rep["contraction_bound"]))
    if residuals:
        tol = bd.decode_number(b["verify_tol"])
        lines.append("residuals (tolerance %g):" % tol)
        width = max(len(k) for k in residuals)
        for k, v in residuals.items():
            lines.append("  %-*s  %.3e  %s" % (width, k, v, "ok" if v < tol else "FAIL"))
    else:
        lines.append("no solution emitted")
    lines.append(SolveReport.from_dict({**rep, "residual_trace": [
        bd.decode_number(x) for x in rep["residual_trace"]],
        "final_residual": bd.decode_number(rep["final_residual"])}).trace_block())
    return "\n".join(lines) + "\n"


def _configure_logging():
    level = os.environ.get("BRIDGEKIT_LOG", "").strip().lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _build_parser():
    parser = argparse.ArgumentParser(prog="bridgekit",
                                     description="Classical and quantum Schrödinger bridge solvers")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in REQUIRED:
        p = sub.add_parser(kind, help="solve a %s problem" % kind)
        for key in REQUIRED[kind] + OPTIONAL.get(kind, ()):
            p.add_argument("--" + key.replace("_", "-"), dest=key, metavar="FILE",
                           required=key in REQUIRED[kind], help="JSON array file")
        p.add_argument("--tol", type=float, default=1e-12, help="Hilbert-metric stopping tolerance")
        p.add_argument("--max-iter", type=int, default=None)
        p.add_argument("--seed", type=int, default=0, help="seed for sampled positivity checks")
        p.add_argument("--gauge", choices=quantum.GAUGES, default="hermitian")
        p.add_argument("--override-positivity-check", action="store_true",
                       help="run even if the kernel has zeros or the positivity check fails")
        p.add_argument("--verify-tol", type=float, default=1e-9)
        p.add_argument("--precision", type=int, default=bd.DEFAULT_PRECISION,
                       help="significant digits in the bundle")
        p.add_argument("--output", metavar="FILE", help="write the JSON bundle here")
    p = sub.add_parser("verify", help="recompute the residual table of a bundle")
    p.add_argument("bundle", metavar="FILE")
    return parser


def main(argv=None):
    _configure_logging()
    args = _build_parser().parse_args(argv)
    if args.command == "verify":
        try:
            with open(args.bundle, encoding="utf-8") as fh:
                b = bd.loads(fh.read())
            residuals, status = verify(b)
        except (OSError, ValueError) as exc:
            print("error: %s" % exc, file=sys.stderr)
            return EXIT_INPUT
        sys.stdout.write(summary(b, residuals, status))
        for k in status["failing"]:
            print("failing residual: %s" % k, file=sys.stderr)
        return status["exit_code"]

    spec = ProblemSpec(
        kind=args.command,
        inputs={k: getattr(args, k, None) for k in INPUTS},
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
        gauge=args.gauge,
        override_positivity_check=args.override_positivity_check,
        verify_tol=args.verify_tol,
        precision=args.precision,
    )
    try:
        b, code = run(spec)
    except (ValueError, BridgeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(bd.dumps(b))
    residuals = {k: bd.decode_number(v) for k, v in b["residuals"].items()}
    sys.stdout.write(summary(b, residuals, b["status"]))
    return code


if __name__ == "__main__":
    sys.exit(main())
