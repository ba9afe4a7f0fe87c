"""Stationary battery power law under negative ramp-rate control."""

from .distributions import IncrementLaw, LawKind, NormalizedSlope, ParameterError, equivalent_gamma
from .metrics import (
    ComparisonReport,
    ConvergenceError,
    EvaluationGrid,
    GridError,
    MethodSpec,
    compare,
    l1_distance,
    p99_curve,
    terms_for_tolerance,
)
from .neumann import NeumannSolution, SolverError, build_coefficients, solve_neumann
from .nystrom import NonContractionError, QuadratureSolution, solve_nystrom, solve_picard
from .simulate import EmpiricalLaw, SimulationConfig, run_dispatch, simulate, synthesize_power

__all__ = [
    "ComparisonReport",
    "ConvergenceError",
    "EmpiricalLaw",
    "EvaluationGrid",
    "GridError",
    "IncrementLaw",
    "LawKind",
    "MethodSpec",
    "NeumannSolution",
    "NonContractionError",
    "NormalizedSlope",
    "ParameterError",
    "QuadratureSolution",
    "SimulationConfig",
    "SolverError",
    "build_coefficients",
    "compare",
    "equivalent_gamma",
    "l1_distance",
    "p99_curve",
    "run_dispatch",
    "simulate",
    "solve_neumann",
    "solve_nystrom",
    "solve_picard",
    "synthesize_power",
    "terms_for_tolerance",
]
