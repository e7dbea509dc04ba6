"""Optimal power/covariance allocation on the dual multiple-access channel."""

from .core import (
    AllocationProblem,
    AllocationSolution,
    extract_decoding_order,
    maximize_sum_rate,
    minimize_energy,
    solve_bc_design,
)

__all__ = [
    "AllocationProblem",
    "AllocationSolution",
    "extract_decoding_order",
    "maximize_sum_rate",
    "minimize_energy",
    "solve_bc_design",
]
