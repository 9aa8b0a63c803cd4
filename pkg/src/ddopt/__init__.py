"""Cascaded dirty-derivative estimation interconnected with continuous-time
optimization flows, plus the simulation and verification harness around them."""

from .estimator import (
    DirtyDerivativeConfig,
    DirtyDerivativeEstimator,
    LtiRealization,
    build_branch_block,
    build_estimator,
    build_f_block,
    closed_form_transfer,
    frequency_response,
    output_bound_constants,
    steady_state_sinusoid_error,
)
from .flows import (
    CorrectionMode,
    CostModel,
    LogCoshTrackingCost,
    QuadraticTrackingCost,
    check_redesign_condition,
    corrected_newton_rhs,
    cost_by_name,
    estimated_correction,
    gradient_flow_rhs,
    ideal_correction,
    lyapunov_gradients,
    newton_rhs,
)
from .numerics import (
    NoConvergenceError,
    SingularMatrixError,
    eig_extremes_symmetric,
    expm,
    lyapunov_solve,
    solve_linear,
)
from .signals import (
    AnalyticSignal,
    Constant,
    NoiseSpec,
    Polynomial,
    Sinusoid,
    benchmark_parameter_path,
    sample_noisy,
    sinusoid_5t_minus_2,
)
from .sim import (
    InsufficientDataError,
    Metric,
    NonFiniteStateError,
    SimConfig,
    Trajectory,
    integrate_rk4,
    run_derivative_experiment,
    run_interconnection,
    slope_fit,
    steady_state_metric,
)

__version__ = "0.1.0"
