"""Toolkit for optimal linear decision rules over box uncertainty sets.

Submodules
----------
model       problem/rule containers, worst-case evaluation, sparsity bounds
generators  production-inventory and newsvendor instance builders
reformulate robust-counterpart and compact primal/dual LP builders
lp          generic LP container, backend registry, MPS export
simplex     bundled bounded-variable revised simplex
activeset   the iterative restricted-dual solve with growth and pruning
cli         command-line entry points
"""

from .model import (
    BoxUncertainty,
    LinearDecisionRule,
    ROInstance,
    WorstCaseReport,
    brute_force_worst_case,
    check_feasibility,
    count_nonzeros,
    filter_rule,
    ldr_param_count,
    load_instance,
    save_instance,
    sparsity_bound,
    worst_case_row_value,
)
from .generators import (
    NewsvendorSpec,
    ProductionInventorySpec,
    benchmark_params,
    gen_newsvendor,
    gen_production_inventory,
)
from .reformulate import (
    ActiveSet,
    TupleIndex,
    build_D_A,
    build_P_A,
    build_rc_dual,
    build_rc_primal_full,
    dedup_tuples,
    model_size,
    production_tuple_bound,
    rc_primal_full_size,
)
from .lp import (
    LPModel,
    LPSolution,
    ModelTooLarge,
    SolverOptions,
    solve,
    write_mps,
)
from .activeset import (
    ActiveSetOptions,
    IterationStats,
    markovian_init,
    solve_active_set,
)

__all__ = [
    "BoxUncertainty",
    "LinearDecisionRule",
    "ROInstance",
    "WorstCaseReport",
    "brute_force_worst_case",
    "check_feasibility",
    "count_nonzeros",
    "filter_rule",
    "ldr_param_count",
    "load_instance",
    "save_instance",
    "sparsity_bound",
    "worst_case_row_value",
    "NewsvendorSpec",
    "ProductionInventorySpec",
    "benchmark_params",
    "gen_newsvendor",
    "gen_production_inventory",
    "ActiveSet",
    "TupleIndex",
    "build_D_A",
    "build_P_A",
    "build_rc_dual",
    "build_rc_primal_full",
    "dedup_tuples",
    "model_size",
    "production_tuple_bound",
    "rc_primal_full_size",
    "LPModel",
    "LPSolution",
    "ModelTooLarge",
    "SolverOptions",
    "solve",
    "write_mps",
    "ActiveSetOptions",
    "IterationStats",
    "markovian_init",
    "solve_active_set",
]

__version__ = "0.1.0"
