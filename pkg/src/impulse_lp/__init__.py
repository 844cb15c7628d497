"""Occupation-measure linear programs for impulse control of deterministic flows."""

from .benchmarks import ExpGrowthParams, build_expgrowth, build_preset
from .discretize import ABSORBED, DiscreteModel, Grid, build_grid, discretize
from .lp_aggregated import (AggregatedVector, aggregate, aggregated_cost, build_aggregated_lp,
                            verify_aggregation_feasibility)
from .lp_core import LPSolution, LPStatus, SparseLP, solve
from .lp_occupation import (OccupationVector, build_occupation_lp, extract_stationary_strategy,
                            occupation_cost)
from .model import ExtendedState, ModelSpec, classify, theta_star
from .strategy import (MarkovStrategy, check_domination, induce_markov_strategy,
                       strategy_occupation)

__all__ = [
    "ABSORBED", "AggregatedVector", "DiscreteModel", "ExpGrowthParams", "ExtendedState", "Grid",
    "LPSolution", "LPStatus", "MarkovStrategy", "ModelSpec", "OccupationVector", "SparseLP",
    "aggregate", "aggregated_cost", "build_aggregated_lp", "build_expgrowth", "build_grid",
    "build_occupation_lp", "build_preset", "check_domination", "classify", "discretize",
    "extract_stationary_strategy", "induce_markov_strategy", "occupation_cost", "solve",
    "strategy_occupation", "theta_star", "verify_aggregation_feasibility",
]
