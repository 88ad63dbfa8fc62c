"""Economic linear-quadratic control with possibly singular rotated costs."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .dissipativity import (
    CheckResult,
    DissipativityCertificate,
    SdpExport,
    SdpKind,
    Tier,
    certify_strict,
    check_pre_dissipativity,
    check_regularized,
    check_strict_a4,
    check_strict_pair,
    export_sdp,
)
from .errors import (
    Diverged,
    EconLQError,
    InvalidDimensions,
    InvalidMatrix,
    NoStabilizingSolution,
    NotConverged,
    NotStabilizable,
    NotStabilizing,
    NotStrictlyDissipative,
    NotSymmetric,
    NumericalFailure,
    ProblemFormatError,
    SingularA,
)
from .matkit import DEFAULT_TOL, Definiteness, ToleranceConfig
from .mpc import (
    FeedbackPolicy,
    RhConfig,
    SequencePolicy,
    Trajectory,
    ZeroPolicy,
    design_terminal_cost,
    optimal_plan,
    rotation_value_check,
    simulate,
    solve_rhocp,
    stability_report,
)
from .riccati import (
    Classification,
    RiccatiSolution,
    build_reverse,
    cgdare_residual,
    rcgdare_solve_stabilizing,
    rdare_solve_stabilizing,
    riccati_recursion,
    rotate_cost,
    solve_cgdare,
    structural_projector,
)
from .system import (
    KalmanDecomposition,
    LtiSystem,
    StageCost,
    controllability_rank,
    default_prestabilizer,
    kalman_decompose,
    prestabilize,
)
