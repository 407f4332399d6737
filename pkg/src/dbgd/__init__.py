"""Dynamic-barrier gradient descent for nonconvex simple bilevel problems.

Minimize an upper objective over the set of minimizers of a lower
objective using first-order information only.  The package provides the
built-in problem instances, the per-iteration direction subproblems, the
iteration driver with trace recording, stationarity and KKT certificates,
independent verification oracles, and a CLI experiment harness.
"""

from .direction import (
    DEFAULT_GUARD,
    BarrierRule,
    BloopOrthogonal,
    DirectionResult,
    DynamicBarrierMin,
    GradNormSquared,
    LowerLinearization,
    barrier_clamp_count,
    barrier_value,
    bloop_direction,
    dbgd_direction,
    lambda_closed_form,
    penalty_direction,
    qp_oracle_direction,
    reset_barrier_clamp_count,
)
from .errors import (
    CapabilityError,
    ConfigurationError,
    DbgdError,
    DivergenceError,
    EvaluationError,
    InfeasibleSubproblemError,
)
from .metrics import (
    KKTReport,
    StationarityReport,
    decompose_grad_f,
    hessian_least_squares,
    infeasible_stationary_ok,
    kkt_report,
    optimal_multiplier,
    scaled_kkt_ok,
    stationarity_report,
    unscaled_kkt_ok,
)
from .problems import (
    ProblemSpec,
    SmoothnessProfile,
    matrix_factorization_problem,
    quadratic_sanity_problem,
    rng,
    toy_problem,
)
from .solver import (
    Bloop,
    ConstantStep,
    Dbgd,
    Method,
    Penalty,
    ScheduledStep,
    SolverConfig,
    StepMode,
    TraceRecord,
    best_iterate,
    run,
    scheduled_step,
)
from .verify import (
    AuditReport,
    CertificateResult,
    RateFit,
    certificate_radius,
    dense_hessian,
    finite_diff_check,
    finite_diff_sweep,
    inequality_audit,
    local_certificate,
    rate_fit,
    sample_ball,
    sqrt_lemma_check,
    sqrt_lemma_violations,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_GUARD",
    "BarrierRule",
    "BloopOrthogonal",
    "DirectionResult",
    "DynamicBarrierMin",
    "GradNormSquared",
    "LowerLinearization",
    "barrier_clamp_count",
    "barrier_value",
    "bloop_direction",
    "dbgd_direction",
    "lambda_closed_form",
    "penalty_direction",
    "qp_oracle_direction",
    "reset_barrier_clamp_count",
    "CapabilityError",
    "ConfigurationError",
    "DbgdError",
    "DivergenceError",
    "EvaluationError",
    "InfeasibleSubproblemError",
    "KKTReport",
    "StationarityReport",
    "decompose_grad_f",
    "hessian_least_squares",
    "infeasible_stationary_ok",
    "kkt_report",
    "optimal_multiplier",
    "scaled_kkt_ok",
    "stationarity_report",
    "unscaled_kkt_ok",
    "ProblemSpec",
    "SmoothnessProfile",
    "matrix_factorization_problem",
    "quadratic_sanity_problem",
    "rng",
    "toy_problem",
    "Bloop",
    "ConstantStep",
    "Dbgd",
    "Method",
    "Penalty",
    "ScheduledStep",
    "SolverConfig",
    "StepMode",
    "TraceRecord",
    "best_iterate",
    "run",
    "scheduled_step",
    "AuditReport",
    "CertificateResult",
    "RateFit",
    "certificate_radius",
    "dense_hessian",
    "finite_diff_check",
    "finite_diff_sweep",
    "inequality_audit",
    "local_certificate",
    "rate_fit",
    "sample_ball",
    "sqrt_lemma_check",
    "sqrt_lemma_violations",
    "__version__",
]
