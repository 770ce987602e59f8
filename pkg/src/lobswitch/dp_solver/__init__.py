"""Backward-induction solver over a discretized time/state grid.

``grid`` owns state enumeration and nearest-node truncation, ``solver`` the
layer recursion and its reference (scalar) counterparts, ``kernels`` the
compiled node-parallel layer sweeps, ``policy_io`` the value/policy file
formats.
"""

from .grid import Grid, GridSpec, build_grid
from .solver import (SolveResult, backward_step, expectation_estimate,
                     intervention_max, solve)
from .policy_io import load_policy, save_policy

__all__ = [
    "Grid", "GridSpec", "build_grid",
    "SolveResult", "backward_step", "expectation_estimate",
    "intervention_max", "solve",
    "load_policy", "save_policy",
]
