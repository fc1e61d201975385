"""Semilinear heat flow on metric graphs: finite elements, order structure,
comparison by duality and radial reduction on regular trees."""

__version__ = "0.1.0"

from .graph import (Edge, Exhaustion, GraphError, MetricGraph, RegularTreeSpec, RootedMetrics,
                    branching_function, build_regular_tree, check_H2, distance, exhaust,
                    orient_by_root, validate_graph)
from .fem import (GraphField, GraphGrid, OperatorPair, assemble, build_grid, dirichlet_set,
                  flux_sum, integral, kirchhoff_residual)
from .dynamics import (BlowUpError, DualCoefficient, Nonlinearity, Trajectory, duality_gap,
                       evolve, heat_semigroup, solve_backward_dual, step_imex)
from .order import (OrderReport, OrderViolation, PreconditionError, StationarySolveError,
                    check_order_conditions, compare, monotone_iterate, solve_stationary)
from .barrier import BarrierParams, barrier_check
from .tree import (ReducedField, ReducedGrid, SymmetryError, TreeReduction, assemble_weighted,
                   check_symmetric_conditions, evolve_reduced_and_compare, lift, reduce)

__all__ = [
    "BarrierParams", "BlowUpError", "DualCoefficient", "Edge", "Exhaustion", "GraphError",
    "GraphField", "GraphGrid", "MetricGraph", "Nonlinearity", "OperatorPair", "OrderReport",
    "OrderViolation", "PreconditionError", "ReducedField", "ReducedGrid", "RegularTreeSpec",
    "RootedMetrics", "StationarySolveError", "SymmetryError", "Trajectory", "TreeReduction",
    "assemble", "assemble_weighted", "barrier_check", "branching_function", "build_grid",
    "build_regular_tree", "check_H2", "check_order_conditions", "check_symmetric_conditions",
    "compare", "dirichlet_set", "distance", "duality_gap", "evolve",
    "evolve_reduced_and_compare", "exhaust", "flux_sum", "heat_semigroup", "integral",
    "kirchhoff_residual", "lift", "monotone_iterate", "orient_by_root", "reduce",
    "solve_backward_dual", "solve_stationary", "step_imex", "validate_graph",
]
