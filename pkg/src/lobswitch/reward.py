"""Terminal reward criteria.

The reward is linear in terminal cash with weight ``r_c > 0`` plus a
weighted valuation of terminal inventory.  Four valuation variants are
built in: linear, distance to a target holding (absolute or quadratic) and
a liquidation form where long inventory is sold below the bid and short
inventory bought back above the ask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Tuple

__all__ = ["RewardSpec", "GrowthReport", "check_growth", "inventory_value",
           "terminal_reward"]

VARIANTS = ("linear", "target_abs", "target_quad", "liquidation")


@dataclass(frozen=True)
class RewardSpec:
    """Reward weights and the inventory valuation variant.

    ``liquidation`` uses ``u_a``/``u_b`` as the buy-back and sell-out price
    offsets; the target variants use ``z0`` as the desired terminal holding.
    """

    r_c: float = 1.0
    r_i: float = 1.0
    variant: str = "liquidation"
    z0: float = 0.0
    u_a: float = 2.0
    u_b: float = 2.0

    def __post_init__(self):
        if self.r_c <= 0:
            raise ValueError("cash weight r_c must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown reward variant {self.variant!r}")
        for v in (self.r_i, self.z0, self.u_a, self.u_b):
            if not math.isfinite(v):
                raise ValueError("reward parameters must be finite")

    def spec(self) -> str:
        if self.variant == "linear":
            return "linear"
        if self.variant == "liquidation":
            return f"liquidation:{self.u_a},{self.u_b}"
        return f"{self.variant}:{self.z0}"


def inventory_value(spec: RewardSpec, z: float, pa: float, pb: float) -> float:
    """Inventory valuation F(z, pa, pb) for the chosen variant."""
    if spec.variant == "linear":
        return z
    if spec.variant == "target_abs":
        return abs(z - spec.z0)
    if spec.variant == "target_quad":
        return (z - spec.z0) ** 2
    if z > 0:
        return (pb - spec.u_b) * z
    if z < 0:
        return (pa + spec.u_a) * z
    return 0.0


def terminal_reward(spec: RewardSpec, inventory: float, cash: float,
                    pa: float, pb: float) -> float:
    """Total reward r_c * cash + r_i * F(inventory, pa, pb)."""
    if pa <= pb:
        raise ValueError("spread must be positive")
    return spec.r_c * cash + spec.r_i * inventory_value(spec, inventory, pa, pb)


@dataclass
class GrowthReport:
    """Empirical fit of the quadratic-growth and Lipschitz envelopes."""

    growth_constant: float
    lipschitz_constant: float
    ok: bool
    n_samples: int


def check_growth(spec: RewardSpec,
                 samples: Iterable[Tuple[float, float, float]]) -> GrowthReport:
    """Verify |F| <= r * (z^2 + pa^2 + pb^2 + 1) and the Lipschitz-in-z bound
    on a finite sample set, reporting the smallest constants that work.

    Diagnostic only; all built-in variants satisfy both bounds with a
    finite constant on any bounded sample domain.
    """
    pts = [(float(z), float(pa), float(pb)) for z, pa, pb in samples]
    if not pts:
        raise ValueError("need at least one sample")
    growth = 0.0
    for z, pa, pb in pts:
        envelope = z * z + pa * pa + pb * pb + 1.0
        growth = max(growth, abs(inventory_value(spec, z, pa, pb)) / envelope)
    lipschitz = 0.0
    for z1, pa, pb in pts:
        for z2, pa2, pb2 in pts:
            if (pa, pb) != (pa2, pb2) or z1 == z2:
                continue
            num = abs(inventory_value(spec, z1, pa, pb)
                      - inventory_value(spec, z2, pa, pb))
            den = (abs(pa) + abs(pb) + 1.0) * (abs(z1) + abs(z2) + 1.0) * abs(z1 - z2)
            lipschitz = max(lipschitz, num / den)
    ok = math.isfinite(growth) and math.isfinite(lipschitz)
    return GrowthReport(growth_constant=growth, lipschitz_constant=lipschitz,
                        ok=ok, n_samples=len(pts))
