"""State grid for the backward induction.

A node is (qa, qb, z, pa, pb) with integer volumes in [0, q_max], integer
inventory in [i_min, i_max] and integer prices with pa > pb.  Nodes are laid
out flat with the admissible price pair as the outermost axis, so one price
pair owns one contiguous block; this is what the parallel sweeps partition.

Off-grid states produced by trades or transitions are truncated to the
nearest node: coordinates are rounded (half-ties toward the smaller value)
and clamped to their ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

__all__ = ["Grid", "GridSpec", "build_grid"]


@dataclass(frozen=True)
class GridSpec:
    """Ranges of the state grid and the time mesh."""

    t_start: float = 1.0
    t_end: float = 10.0
    steps: int = 9
    q_max: int = 10
    i_min: int = -20
    i_max: int = 20
    pa_min: int = 12
    pa_max: int = 18
    pb_min: int = 12
    pb_max: int = 18

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one time step")
        if self.t_end <= self.t_start:
            raise ValueError("empty time interval")
        if self.q_max < 1:
            raise ValueError("volume range must contain at least {0, 1}")
        if self.i_min > self.i_max:
            raise ValueError("empty inventory range")
        if self.pa_min > self.pa_max or self.pb_min > self.pb_max:
            raise ValueError("empty price range")


@dataclass(frozen=True)
class Grid:
    spec: GridSpec
    times: np.ndarray
    pair_pa: np.ndarray     # (n_pairs,) ask price per admissible pair
    pair_pb: np.ndarray
    pair_index: np.ndarray  # (n_pa, n_pb) -> pair id, -1 if pa <= pb
    n_nodes: int = field(default=0)

    @property
    def nq(self) -> int:
        return self.spec.q_max + 1

    @property
    def nz(self) -> int:
        return self.spec.i_max - self.spec.i_min + 1

    @property
    def n_pairs(self) -> int:
        return len(self.pair_pa)

    @property
    def block(self) -> int:
        """Nodes per price pair."""
        return self.nz * self.nq * self.nq

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def encode(self, qa: int, qb: int, z: int, pa: int, pb: int) -> int:
        pair = int(self.pair_index[pa - self.spec.pa_min, pb - self.spec.pb_min])
        if pair < 0:
            raise ValueError(f"price pair ({pa}, {pb}) not admissible")
        iz = z - self.spec.i_min
        return ((pair * self.nz + iz) * self.nq + qb) * self.nq + qa

    def decode(self, node: int) -> Tuple[int, int, int, int, int]:
        qa = node % self.nq
        node //= self.nq
        qb = node % self.nq
        node //= self.nq
        iz = node % self.nz
        pair = node // self.nz
        return (qa, qb, iz + self.spec.i_min,
                int(self.pair_pa[pair]), int(self.pair_pb[pair]))

    def snap(self, qa: float, qb: float, z: float, pa: int,
             pb: int) -> Tuple[int, int, int, int, int]:
        """Truncate a raw state to the nearest admissible node.

        Rounding breaks half-ties toward the smaller coordinate; prices are
        clamped to their boxes, and the (model-impossible) case pa <= pb is
        resolved by pulling the bid just below the ask.
        """
        s = self.spec
        qa_i = min(max(_round_half_down(qa), 0), s.q_max)
        qb_i = min(max(_round_half_down(qb), 0), s.q_max)
        z_i = min(max(_round_half_down(z), s.i_min), s.i_max)
        pa_i = min(max(int(pa), s.pa_min), s.pa_max)
        pb_i = min(max(int(pb), s.pb_min), s.pb_max)
        if pa_i <= pb_i:
            pb_i = pa_i - 1
            if pb_i < s.pb_min:
                pb_i = s.pb_min
                pa_i = s.pb_min + 1
        return qa_i, qb_i, z_i, pa_i, pb_i

    def node_states(self) -> np.ndarray:
        """(n_nodes, 5) array of (qa, qb, z, pa, pb) in flat-index order."""
        out = np.empty((self.n_nodes, 5), dtype=np.int64)
        idx = 0
        for pair in range(self.n_pairs):
            for z in range(self.spec.i_min, self.spec.i_max + 1):
                for qb in range(self.nq):
                    for qa in range(self.nq):
                        out[idx] = (qa, qb, z, self.pair_pa[pair], self.pair_pb[pair])
                        idx += 1
        return out


def _round_half_down(x: float) -> int:
    return int(math.ceil(x - 0.5))


def build_grid(spec: GridSpec) -> Grid:
    """Enumerate the admissible nodes of a grid specification.

    Admissibility is pa > pb; the node count is the number of admissible
    price pairs times the volume/inventory block size.  Raises if no price
    pair is admissible.
    """
    pas, pbs = [], []
    for pa in range(spec.pa_min, spec.pa_max + 1):
        for pb in range(spec.pb_min, spec.pb_max + 1):
            if pa > pb:
                pas.append(pa)
                pbs.append(pb)
    if not pas:
        raise ValueError("no admissible price pair: every pa <= pb")
    pair_index = np.full((spec.pa_max - spec.pa_min + 1,
                          spec.pb_max - spec.pb_min + 1), -1, dtype=np.int64)
    for i, (pa, pb) in enumerate(zip(pas, pbs)):
        pair_index[pa - spec.pa_min, pb - spec.pb_min] = i
    times = np.linspace(spec.t_start, spec.t_end, spec.steps + 1)
    nq = spec.q_max + 1
    nz = spec.i_max - spec.i_min + 1
    n_nodes = len(pas) * nz * nq * nq
    return Grid(spec=spec, times=times,
                pair_pa=np.array(pas, dtype=np.int64),
                pair_pb=np.array(pbs, dtype=np.int64),
                pair_index=pair_index, n_nodes=n_nodes)
