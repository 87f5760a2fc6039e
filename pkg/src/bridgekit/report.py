from dataclasses import dataclass, field
import math


@dataclass
class SolveReport:
    """Convergence record of a fixed-point solve.

    Attributes
    ----------
    iterations : int
        Number of applications of the composite map.
    residual_trace : list of float
        Hilbert-metric distance between successive iterates, one per
        iteration.
    final_residual : float
        Last entry of ``residual_trace`` (``inf`` if no iteration ran).
    contraction_bound : float or None
        Birkhoff bound ``tanh(diameter / 4)`` when it is known and finite.
    converged : bool
        Whether ``final_residual < tol`` was reached.
    tol : float
        Requested tolerance.
    """

    iterations: int = 0
    residual_trace: list = field(default_factory=list)
    final_residual: float = math.inf
    contraction_bound: float | None = None
    converged: bool = False
    tol: float = 0.0

    def record(self, residual):
        self.residual_trace.append(float(residual))
        self.iterations = len(self.residual_trace)
        self.final_residual = float(residual)

    def observed_ratios(self, burn_in=0, floor=0.0):
        """Successive ratios ``r[k+1] / r[k]`` for ``k >= burn_in``.

        Ratios whose numerator is at or below ``floor`` are dropped; near the
        rounding floor the residuals are noise and their ratios carry no
        information about the contraction rate.
        """
        r = self.residual_trace
        return [r[k + 1] / r[k] for k in range(burn_in, len(r) - 1)
                if r[k + 1] > floor and r[k] > 0]

    def trace_block(self):
        """Two-column ``iteration residual`` text block for plotting tools."""
        lines = ["# iteration  d_H_residual"]
        lines += ["%d %.17g" % (k + 1, r) for k, r in enumerate(self.residual_trace)]
        return "\n".join(lines)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "residual_trace": list(self.residual_trace),
            "final_residual": self.final_residual,
            "contraction_bound": self.contraction_bound,
            "converged": self.converged,
            "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            iterations=int(d["iterations"]),
            residual_trace=[float(x) for x in d["residual_trace"]],
            final_residual=float(d["final_residual"]),
            contraction_bound=d.get("contraction_bound"),
            converged=bool(d["converged"]),
            tol=float(d.get("tol", 0.0)),
        )
