"""Signaling equilibria of two-player LQG games with private types.

Linear strategies ``u^i = L^i x^i + M^i xhat`` with Gaussian public beliefs:
a backward fixed-point recursion for finite horizons, a stationary solver,
an existence test for scalar actions, and Monte-Carlo verification.
"""

from .belief import (
    GaussianBelief, LinearPartialStrategy, kalman_gain, propagate_cov, update_belief,
    update_cov, update_mean,
)
from .existence import (
    ExistenceReport, Lambdas, assemble_lambdas, direction_survey, existence_check,
    existence_verdict, lambda_quadratic, normalized_gain,
)
from .game import (
    GameSpec, SpecFormatError, Trajectory, ValidationReport, dump_spec, load_spec, path_cost,
    spec_from_dict, spec_hash, spec_to_dict, stage_cost, validate_spec,
)
from .runtime import (
    Ensemble, EquilibriumPath, SimulationConfig, build_equilibrium_path, posterior_check, simulate,
)
from .solver import (
    NonConvergence, SingularStage, SolverError, SolverOptions, StageSolution, ValueCache,
    ValueQuadratic, evaluate_value, solve_affine_term, solve_signaling_gain, solve_stage,
    terminal_gain, update_rho, update_value,
)
from .stages import StackedLayout, StageMatrices, assemble_dcj, assemble_vbar
from .steady_state import SteadyStateSolution, solve_steady_state, steady_state_residuals
from .verify import (
    CostEstimate, DeviationSpec, deviation_suite, deviation_test, mc_cost_estimate,
    random_deviations, value_consistency_test,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
