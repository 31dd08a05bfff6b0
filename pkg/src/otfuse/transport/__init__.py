"""Discrete optimal transport: entropic solver, exact oracle, projection."""

from .estimator import AnchorTransport
from .exact import exact_transport
from .io import dump_plans, format_plan, load_plans, parse_plans
from .entropic import (
    SinkhornConfig,
    TransportPlan,
    barycentric_project,
    build_cost_matrix,
    check_cost_matrix,
    entropic_objective,
    entropy,
    marginal_violation,
    ot_objective_gradient_check,
    sinkhorn,
)

__all__ = [
    "AnchorTransport",
    "SinkhornConfig",
    "TransportPlan",
    "barycentric_project",
    "build_cost_matrix",
    "check_cost_matrix",
    "dump_plans",
    "entropic_objective",
    "entropy",
    "exact_transport",
    "format_plan",
    "load_plans",
    "marginal_violation",
    "ot_objective_gradient_check",
    "parse_plans",
    "sinkhorn",
]
