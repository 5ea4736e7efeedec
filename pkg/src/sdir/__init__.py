"""Discrete-time SDIR information diffusion: dynamics, spectral analysis,
infection bounds and edge-deletion optimization."""

__version__ = "0.1.0"

from sdir.bounds import BoundCache, refresh_cache, sigma_lower, sigma_upper
from sdir.dynamics import (
    MeanFieldState,
    NodeState,
    Trajectory,
    estimated_infection,
    mean_field_step,
    monte_carlo_infection,
    run_mean_field,
    stochastic_step,
)
from sdir.model import (
    GeneratorSpec,
    NetworkModel,
    ValidationReport,
    delete_edges,
    emit_model_document,
    generate_network,
    parse_model_document,
    validate_model,
)
from sdir.optimize import (
    OptimizationResult,
    brute_force,
    greedy,
    random_baseline,
    sandwich,
    sandwich_audit,
)
from sdir.spectral import analyze, build_system_matrix, select_q, spectral_radius

__all__ = [
    "BoundCache",
    "GeneratorSpec",
    "MeanFieldState",
    "NetworkModel",
    "NodeState",
    "OptimizationResult",
    "Trajectory",
    "ValidationReport",
    "analyze",
    "brute_force",
    "build_system_matrix",
    "delete_edges",
    "emit_model_document",
    "estimated_infection",
    "generate_network",
    "greedy",
    "mean_field_step",
    "monte_carlo_infection",
    "parse_model_document",
    "random_baseline",
    "refresh_cache",
    "run_mean_field",
    "sandwich",
    "sandwich_audit",
    "select_q",
    "sigma_lower",
    "sigma_upper",
    "spectral_radius",
    "stochastic_step",
    "validate_model",
]
