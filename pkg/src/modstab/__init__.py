"""Stability toolkit for modulated Markov chains and slotted random-access
networks: finite-chain drift verification, regenerative coupling estimates
and simulation-based stability-region mapping, behind a small HTTP service
with a command-line client."""

__version__ = "0.1.0"

from .analysis import (
    AnalysisError,
    DriftReport,
    averaged_kernel,
    FosterCertificate,
    check_bounded_increments,
    check_minorization,
    expected_hitting_time,
    foster_certificate,
    multi_step_drift,
    stationary_distribution,
    sublinearity_check,
    tv_distance_curve,
    verify_drift_condition,
)
from .chains import InvalidStateError, RandomStream, Trajectory, step, trajectory
from .experiments import (
    BoundaryEstimate,
    StabilityVerdict,
    boundary_bisection,
    classify_stability,
    emit_report,
    idle_prob_empirical,
    sweep,
)
from .kernels import (
    KernelError,
    ModulatedKernel,
    ModulatedKernelModel,
    kernel_from_text,
    kernel_to_text,
    load_kernel,
    save_kernel,
)
from .network import (
    BERNOULLI,
    COORDINATOR,
    INFEASIBLE,
    NO_COORDINATOR,
    POISSON,
    ConfigError,
    DominationError,
    NetworkConfig,
    NetworkModel,
    NetworkState,
    build_truncated_kernel,
    theoretical_threshold,
)
from .splitting import (
    CouplingReport,
    NoMinorizationError,
    SplitKernel,
    build_split_kernel,
    estimate_coupling_tail,
    idle_probability_check,
    simulate_regenerations,
    split_chain_marginal,
)
