"""Shortfall-minimizing allocation of a shared resource among consuming users."""

__version__ = "0.1.0"

from ._backend import BACKEND, HAVE_COMPILED
from .domain import (
    Allocation,
    DomainError,
    FeasibilityError,
    InvalidInstanceError,
    KnownInstance,
    Linear,
    Log1p,
    PiecewiseConstantPrior,
    PiecewiseLinearConcave,
    PreconditionError,
    SizeError,
    Sqrt,
    TruncatedExponentialPrior,
    UniformPrior,
    UnknownInstance,
    eval_cost,
    validate_instance,
)
from .expected_cost import ExpectedCost, check_curvature, eval_K, expected_objective, monte_carlo_K0
from .global_oracle import solve_concave_exact, solve_expected_grid
from .known_solver import linprog_objective, solve_linprog, true_objective
from .simulator import run, stability_trace, step
from .unknown_solver import find_vstar, sym_alloc

__all__ = [
    "BACKEND", "HAVE_COMPILED",
    "Allocation", "KnownInstance", "UnknownInstance",
    "Linear", "Sqrt", "Log1p", "PiecewiseLinearConcave",
    "UniformPrior", "TruncatedExponentialPrior", "PiecewiseConstantPrior",
    "DomainError", "FeasibilityError", "InvalidInstanceError", "PreconditionError", "SizeError",
    "eval_cost", "validate_instance",
    "ExpectedCost", "eval_K", "check_curvature", "monte_carlo_K0", "expected_objective",
    "solve_linprog", "true_objective", "linprog_objective",
    "solve_concave_exact", "solve_expected_grid",
    "find_vstar", "sym_alloc",
    "run", "step", "stability_trace",
]
