"""Online p-mean welfare maximization over divisible goods.

The threshold allocator, welfare functions, an offline benchmark, adversarial
instance generators and an experiment harness.
"""
from pmean.model import (
    Allocation,
    Instance,
    ScalingReport,
    agent_values,
    expand_allocation,
    load_instance,
    save_instance,
    split_to_cap,
    validate_scaling,
)
from pmean.welfare import Exponent, p_mean, welfare_ratio
from pmean.online import AlgState, GreedyAllocator, RunReport, UniformAllocator, run_online, step, threshold_for
from pmean.oracle import OracleResult, shift_allocation, solve_concave, solve_grid
from pmean.diagnostics import LemmaCheck, lemma_diagnostics
from pmean.adversaries import (
    NegativeGroupsAdversary,
    SuboptimalityAdversary,
    emit_capped,
    interact,
    predicted_bounds,
    random_dirichlet,
    random_sparse,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation", "Instance", "ScalingReport", "agent_values", "expand_allocation", "load_instance",
    "save_instance", "split_to_cap", "validate_scaling", "Exponent", "p_mean", "welfare_ratio",
    "AlgState", "GreedyAllocator", "RunReport", "UniformAllocator", "run_online", "step", "threshold_for",
    "OracleResult", "shift_allocation", "solve_concave", "solve_grid", "LemmaCheck", "lemma_diagnostics",
    "NegativeGroupsAdversary", "SuboptimalityAdversary", "emit_capped", "interact", "predicted_bounds",
    "random_dirichlet", "random_sparse",
]
