"""Individually fair clustering: TV-fair assignment LPs, fair k-center, audits and hardness tooling."""

from .core import (
    DistanceMatrix,
    FairnessConstraintSet,
    GroupSpec,
    HardClustering,
    PointSet,
    SoftClustering,
    build_distance_matrix,
    hard_cost,
    soft_cost,
)
from .divergence import KL, TV, DivergenceKind, evaluate, generic_f, tv_lower_bounds
from .fair_assign import (
    FairAssignProblem,
    InfeasibleGroupsError,
    SolverConfig,
    alg_cf,
    alg_if,
    fair_kcenter,
    lower_bound_lp,
    phi_map_solution,
    solve_fair_assign,
)
from .lp import LinearProgram, LpBuilder, LpNumericalError, solve_lp, solve_transportation
from .vanilla import VanillaConfig, gonzalez_kcenter, lloyd_kmeans, local_search_kmedian, vanilla_cluster

__version__ = "0.1.0"
