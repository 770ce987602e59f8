"""Shared fixtures.

The lattice experiment setup (104181-node grid) is solved once per session
for both trader kinds and the premium ladder; several test modules and the
acceptance suite share those tables.
"""

import numpy as np
import pytest

from lobswitch.dp_solver import build_grid, solve
from lobswitch.dp_solver.grid import GridSpec
from lobswitch.market_model import ModelParams
from lobswitch.reward import RewardSpec
from lobswitch.strategy_accounting import TraderKind

THREADS = 2
EPS_LADDER = (0.0, 0.25, 0.5, 1.0)


@pytest.fixture(scope="session")
def lattice_setup():
    grid = build_grid(GridSpec())
    return {"grid": grid, "params": ModelParams(), "reward": RewardSpec()}


@pytest.fixture(scope="session")
def lattice_solves(lattice_setup):
    s = lattice_setup
    out = {"regular": solve("binomial", s["params"], s["grid"], s["reward"],
                            TraderKind.REGULAR, threads=THREADS)}
    for eps in EPS_LADDER:
        out[eps] = solve("binomial", s["params"], s["grid"], s["reward"],
                         TraderKind.INTERNALIZING, epsilon=eps,
                         threads=THREADS)
    return out


@pytest.fixture
def small_setup():
    """A small but non-degenerate lattice instance for unit tests."""
    spec = GridSpec(t_start=0.0, t_end=3.0, steps=3, q_max=4, i_min=-6,
                    i_max=6, pa_min=13, pa_max=16, pb_min=12, pb_max=15)
    params = ModelParams(delta_a=2, delta_b=2, pa_bar=16, pb_under=12,
                         horizon=3.0, pa0=14, pb0=13, q0_a=2, q0_b=2)
    return {"grid": build_grid(spec), "params": params,
            "reward": RewardSpec(variant="liquidation", u_a=1, u_b=1)}
