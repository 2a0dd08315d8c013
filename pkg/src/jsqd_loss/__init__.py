"""Numerics and exact simulation for N-server loss systems under JSQ(d) routing.

Computes the mean-field limit and its fixed point, the Ornstein-Uhlenbeck
fluctuation statistics (stationary mean and covariance), the first-order
blocking-probability correction, and validates them against event-driven
simulation of the finite-N Markov chain.
"""

__version__ = "0.1.0"

from .model import (
    InvalidParametersError,
    ModelParams,
    arrival_rate,
    as_occupancy_tail,
    build_H,
    drift,
    w1,
    w2,
    w3,
)
from .meanfield import (
    FixedPoint,
    FixedPointConvergenceError,
    IntegrationInstabilityError,
    Trajectory,
    fixed_point,
    integrate_mean_field,
    theta_map,
    xi_hat_map,
)
from .diffusion import (
    OUMomentTrajectory,
    OUStationaryStats,
    eigen_diagnostics,
    matrix_exponential_apply,
    ou_stationary_stats,
    stationary_covariance,
    stationary_kappa,
    transient_ou_moments,
)
from .simulator import (
    ConfigurationError,
    DegenerateRunError,
    SimConfig,
    SimOutcome,
    estimate_blocking,
    fluctuation_samples,
    run_replication,
    step,
)
from .analytics import (
    BlockingReport,
    blocking_approximation,
    erlang_b,
    error_scaling_experiment,
    halfin_whitt_limit,
)
