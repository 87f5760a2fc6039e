"""Classical and quantum Schrödinger bridges by Hilbert-metric contraction."""

from .classical import (
    BridgeSolution,
    MarkovPrior,
    SchrodingerPotentials,
    one_step_joint,
    one_step_transition,
    propagate_harmonics,
    relative_entropy,
    sinkhorn_doubly_stochastic,
    solve_bridge,
    solve_one_step,
)
from .cone import (
    birkhoff_ratio,
    hilbert_distance_psd,
    hilbert_distance_vec,
    projective_diameter_stochastic,
    psd_diameter_estimate,
)
from .errors import (
    BoundaryError,
    BridgeError,
    ConvergenceError,
    InfiniteDiameterError,
    NotPositivityImprovingError,
    VerificationError,
)
from .matfun import hermitian_sqrt
from .quantum import (
    KrausMap,
    QuantumBridgeResult,
    QuantumPotentials,
    check_positivity_improving,
    kraus_adjoint_apply,
    kraus_apply,
    multistep_bridge,
    pure_state_bridge,
    solve_doubly_stochastic,
    solve_general_bridge,
)
from .report import SolveReport

__version__ = "0.1.0"
