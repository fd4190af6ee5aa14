"""Pattern recovery for atomic-norm penalized precision matrix estimation.

Submodules
----------
symmat
    Vectorizations, duplication matrix and matrix norms.
atomic_norm
    Polyhedral gauges: l1, l-infinity, SLOPE and general polytopes.
geometry
    Pattern subspaces, face projections and the constants of the bounds.
bounds
    Irrepresentability, the deviation bound delta and penalty level.
estimator
    ADMM solver for the penalized log-det problem with KKT certificates.
experiments
    Graph families, perturbation experiments and table drivers.
"""
from .atomic_norm import (AtomicNormSpec, Pattern, dual_eval, norm_eval,
                          pattern_of, prox)
from .bounds import (BoundsReport, IrrepresentabilityError, ProblemInstance,
                     bounds_general, bounds_glasso, compute_bounds,
                     default_spec)
from .estimator import SolverConfig, SolverResult, solve, solve_restricted
from .experiments import (GraphFamily, make_instance, reproduce_table,
                          run_perturbation_experiment)
from .geometry import (TauUndefinedError, build_geometry, tau_value,
                       tune_slope_weights)

__version__ = "0.1.0"

__all__ = [
    "AtomicNormSpec", "Pattern", "dual_eval", "norm_eval", "pattern_of",
    "prox", "BoundsReport", "IrrepresentabilityError", "ProblemInstance",
    "bounds_general", "bounds_glasso", "compute_bounds", "default_spec",
    "SolverConfig", "SolverResult", "solve", "solve_restricted",
    "GraphFamily", "make_instance", "reproduce_table",
    "run_perturbation_experiment", "TauUndefinedError", "build_geometry",
    "tau_value", "tune_slope_weights",
]
