"""Two-sided order book dynamics driven by order book events.

The book is tracked at the best quotes only: volumes at the ask and bid are
stochastic, every deeper level holds a constant depth. Price moves come from
two sources -- depletion of a best-quote volume (price steps away by one
tick, fresh depth is exposed) and a new limit order arriving one tick inside
the spread (price improves by one tick). Dark-pool liquidity events fill
mid-price pegged hidden orders.

Two transition kernels are provided: an Euler step of the diffusion model
(``step_continuous`` / ``simulate_book``) and an exact enumeration of the
lattice model used by the solver (``binomial_transitions``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "Arrival",
    "BookState",
    "BookTrajectory",
    "IntensityFn",
    "ModelParams",
    "TransitionOutcome",
    "binomial_transitions",
    "parse_intensity",
    "simulate_book",
    "step_continuous",
    "BINOMIAL_FILL_PROB",
    "binomial_arrival_prob",
]

# Lattice model constants: per-step probability that a dark-pool liquidity
# event hits one side, and the coefficient of the within-spread arrival rule.
BINOMIAL_FILL_PROB = 0.25
_BINOMIAL_ARRIVAL_COEFF = 0.3


def binomial_arrival_prob(spread: float) -> float:
    """Per-step probability that any within-spread arrival occurs."""
    return _BINOMIAL_ARRIVAL_COEFF * min(spread - 1.0, 1.0) if spread > 1 else 0.0


class Arrival(enum.Enum):
    """Which within-spread arrival, if any, occurred at this instant."""

    NONE = 0
    ASK = 1
    BID = 2


class IntensityFn:
    """Spread-dependent event intensity, either linear or tabulated.

    Within-spread arrival intensities are structurally zero at spread <= 1
    (there is no room inside the spread); dark-pool intensities are not.
    """

    def __init__(self, kind: str, coeff: float = 0.0,
                 table: Optional[Sequence[float]] = None,
                 zero_at_one: bool = False):
        if kind not in ("linear", "table"):
            raise ValueError(f"unknown intensity kind {kind!r}")
        if kind == "table" and not table:
            raise ValueError("table intensity needs at least one value")
        self.kind = kind
        self.coeff = float(coeff)
        self.table = None if table is None else [float(v) for v in table]
        self.zero_at_one = zero_at_one
        if self.max_over(64) < 0 or not math.isfinite(self.max_over(64)):
            raise ValueError("intensity must be finite and non-negative")

    def __call__(self, spread: float) -> float:
        if self.zero_at_one and spread <= 1:
            return 0.0
        if spread <= 0:
            return 0.0
        if self.kind == "linear":
            return self.coeff * spread
        idx = min(int(spread) - 1, len(self.table) - 1)
        return self.table[max(idx, 0)]

    def max_over(self, max_spread: int) -> float:
        return max(self(s) for s in range(1, max_spread + 1))

    def spec(self) -> str:
        if self.kind == "linear":
            return f"linear:{self.coeff}"
        return "table:[" + ",".join(repr(v) for v in self.table) + "]"

    def __repr__(self):
        return f"IntensityFn({self.spec()})"


def parse_intensity(text: str, zero_at_one: bool = False) -> IntensityFn:
    """Parse an intensity spec, ``linear:c`` or ``table:[v1,v2,...]``."""
    text = text.strip()
    if text.startswith("linear:"):
        return IntensityFn("linear", coeff=float(text[len("linear:"):]),
                           zero_at_one=zero_at_one)
    if text.startswith("table:"):
        body = text[len("table:"):].strip()
        if not (body.startswith("[") and body.endswith("]")):
            raise ValueError(f"malformed table intensity {text!r}")
        vals = [float(v) for v in body[1:-1].split(",") if v.strip()]
        return IntensityFn("table", table=vals, zero_at_one=zero_at_one)
    raise ValueError(f"unknown intensity spec {text!r}")


@dataclass(frozen=True)
class ModelParams:
    """Market dynamics parameters shared by both transition kernels.

    ``theta_*`` are the within-spread arrival intensities, ``lambda_*`` the
    dark-pool liquidity intensities.  The lattice kernel uses its own fixed
    per-step probabilities and ignores ``theta_*``/``lambda_*``; they drive
    the diffusion model only.
    """

    sigma_a: float = 10.0
    sigma_b: float = 10.0
    delta_a: float = 5.0
    delta_b: float = 5.0
    theta_a: IntensityFn = field(default_factory=lambda: parse_intensity("linear:0.5", True))
    theta_b: IntensityFn = field(default_factory=lambda: parse_intensity("linear:0.5", True))
    lambda_a: IntensityFn = field(default_factory=lambda: parse_intensity("table:[0.25]"))
    lambda_b: IntensityFn = field(default_factory=lambda: parse_intensity("table:[0.25]"))
    pa_bar: int = 18
    pb_under: int = 12
    epsilon: float = 0.0
    horizon: float = 10.0
    q0_a: float = 5.0
    q0_b: float = 5.0
    pa0: int = 16
    pb0: int = 15

    def __post_init__(self):
        if self.delta_a <= 0 or self.delta_b <= 0:
            raise ValueError("limit depth must be positive")
        if self.pb_under >= self.pa_bar:
            raise ValueError("trading bounds need pb_under < pa_bar")
        if self.sigma_a < 0 or self.sigma_b < 0:
            raise ValueError("volume volatility must be non-negative")
        if self.epsilon < 0:
            raise ValueError("internalization premium must be non-negative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.pa0 <= self.pb0:
            raise ValueError("initial prices need pa0 > pb0")
        object.__setattr__(self, "theta_a", _force_zero_at_one(self.theta_a))
        object.__setattr__(self, "theta_b", _force_zero_at_one(self.theta_b))

    def with_epsilon(self, epsilon: float) -> "ModelParams":
        return replace(self, epsilon=float(epsilon))


def _force_zero_at_one(fn: IntensityFn) -> IntensityFn:
    if fn.zero_at_one:
        return fn
    return IntensityFn(fn.kind, coeff=fn.coeff, table=fn.table, zero_at_one=True)


@dataclass(frozen=True)
class BookState:
    """Best-quote volumes and prices at one instant.

    ``arrival`` records whether a within-spread arrival happened at this
    instant; an arrival-flagged state is only reachable when the spread
    before the arrival exceeded one tick.
    """

    qa: float
    qb: float
    pa: int
    pb: int
    arrival: Arrival = Arrival.NONE

    def __post_init__(self):
        if self.qa < 0 or self.qb < 0:
            raise ValueError("volumes must be non-negative")
        if self.pa <= self.pb:
            raise ValueError("spread must be at least one tick")

    @property
    def spread(self) -> int:
        return self.pa - self.pb

    @property
    def mid(self) -> float:
        return (self.pa + self.pb) / 2.0


@dataclass(frozen=True)
class TransitionOutcome:
    """One branch of a transition: its probability, the state it leads to
    and the raw dark-pool liquidity events (buy-side, sell-side) that the
    accounting layer turns into fills."""

    prob: float
    next: BookState
    hidden_fills: Tuple[int, int] = (0, 0)


@dataclass
class BookTrajectory:
    """Simulated uncontrolled paths with depletion/arrival counters."""

    t: np.ndarray    # (n_steps+1,)
    qa: np.ndarray   # (n_paths, n_steps+1)
    qb: np.ndarray
    pa: np.ndarray
    pb: np.ndarray
    la: np.ndarray   # cumulative depletions, ask side
    lb: np.ndarray
    na: np.ndarray   # cumulative within-spread arrivals, ask side
    nb: np.ndarray


def step_continuous(state: BookState, params: ModelParams, dt: float,
                    rng: np.random.Generator) -> TransitionOutcome:
    """One Euler step of the diffusion model.

    Volumes are perturbed by a centered Normal with variance sigma^2*dt; a
    volume crossing zero depletes the level (price steps away one tick,
    depth resets).  Each side then receives at most one within-spread
    arrival with probability theta(spread)*dt and at most one dark-pool
    liquidity event with probability lambda(spread)*dt, both clamped to
    [0, 1].  Depletions are processed before arrivals; an arrival is
    dropped if the spread has shrunk to one tick by the time it applies.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    spread0 = state.spread

    z = rng.standard_normal(2)
    u = rng.random(4)

    qa = state.qa + params.sigma_a * math.sqrt(dt) * z[0]
    qb = state.qb + params.sigma_b * math.sqrt(dt) * z[1]
    pa, pb = state.pa, state.pb

    if qa <= 0:
        pa += 1
        qa = params.delta_a
    if qb <= 0:
        pb -= 1
        qb = params.delta_b

    arr_a = u[0] < min(params.theta_a(spread0) * dt, 1.0)
    arr_b = u[1] < min(params.theta_b(spread0) * dt, 1.0)
    fill_a = int(u[2] < min(params.lambda_a(spread0) * dt, 1.0))
    fill_b = int(u[3] < min(params.lambda_b(spread0) * dt, 1.0))

    arrival = Arrival.NONE
    if arr_a and pa - pb > 1:
        pa -= 1
        qa = params.delta_a
        arrival = Arrival.ASK
    if arr_b and pa - pb > 1:
        pb += 1
        qb = params.delta_b
        arrival = Arrival.BID if arrival is Arrival.NONE else arrival

    return TransitionOutcome(
        prob=1.0,
        next=BookState(qa=qa, qb=qb, pa=pa, pb=pb, arrival=arrival),
        hidden_fills=(fill_a, fill_b),
    )


def simulate_book(params: ModelParams, t_end: float, dt: float, seed: int,
                  n_paths: int = 1) -> BookTrajectory:
    """Simulate uncontrolled book paths, vectorized across paths.

    Deterministic given ``seed``.  Emits the full path of volumes and prices
    together with the cumulative depletion counters (la, lb) and
    within-spread arrival counters (na, nb), so that the price identities
    pa(t) - pa(0) = la(t) - na(t) and pb(t) - pb(0) = nb(t) - lb(t) can be
    checked directly on the output.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = round(t_end / dt)
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end) or n_steps == 0:
        raise ValueError("dt must divide t_end")

    rng = np.random.Generator(np.random.Philox(key=seed))
    shape = (n_paths, n_steps + 1)
    qa = np.empty(shape)
    qb = np.empty(shape)
    pa = np.empty(shape, dtype=np.int64)
    pb = np.empty(shape, dtype=np.int64)
    la = np.zeros(shape, dtype=np.int64)
    lb = np.zeros(shape, dtype=np.int64)
    na = np.zeros(shape, dtype=np.int64)
    nb = np.zeros(shape, dtype=np.int64)

    qa[:, 0] = params.q0_a
    qb[:, 0] = params.q0_b
    pa[:, 0] = params.pa0
    pb[:, 0] = params.pb0

    sq = math.sqrt(dt)

    def eval_on(fn: IntensityFn, spreads: np.ndarray) -> np.ndarray:
        uniq, inv = np.unique(spreads, return_inverse=True)
        vals = np.array([fn(int(s)) for s in uniq])
        return vals[inv]

    for k in range(n_steps):
        spread0 = pa[:, k] - pb[:, k]
        z = rng.standard_normal((n_paths, 2))
        u = rng.random((n_paths, 2))

        cqa = qa[:, k] + params.sigma_a * sq * z[:, 0]
        cqb = qb[:, k] + params.sigma_b * sq * z[:, 1]
        cpa = pa[:, k].copy()
        cpb = pb[:, k].copy()

        dep_a = cqa <= 0
        dep_b = cqb <= 0
        cpa[dep_a] += 1
        cqa = np.where(dep_a, params.delta_a, cqa)
        cpb[dep_b] -= 1
        cqb = np.where(dep_b, params.delta_b, cqb)

        want_a = u[:, 0] < np.minimum(eval_on(params.theta_a, spread0) * dt, 1.0)
        want_b = u[:, 1] < np.minimum(eval_on(params.theta_b, spread0) * dt, 1.0)

        arr_a = want_a & (cpa - cpb > 1)
        cpa[arr_a] -= 1
        cqa = np.where(arr_a, params.delta_a, cqa)
        arr_b = want_b & (cpa - cpb > 1)
        cpb[arr_b] += 1
        cqb = np.where(arr_b, params.delta_b, cqb)

        qa[:, k + 1] = cqa
        qb[:, k + 1] = cqb
        pa[:, k + 1] = cpa
        pb[:, k + 1] = cpb
        la[:, k + 1] = la[:, k] + dep_a
        lb[:, k + 1] = lb[:, k] + dep_b
        na[:, k + 1] = na[:, k] + arr_a
        nb[:, k + 1] = nb[:, k] + arr_b

    t = np.arange(n_steps + 1) * dt
    return BookTrajectory(t=t, qa=qa, qb=qb, pa=pa, pb=pb,
                          la=la, lb=lb, na=na, nb=nb)


def binomial_transitions(state: BookState, h: Tuple[int, int],
                         params: ModelParams) -> List[TransitionOutcome]:
    """Exact one-step law of the lattice model from a post-trade state.

    Each best-quote volume moves by +-1 with probability 1/2; a volume
    hitting zero depletes the level (price steps away, depth resets to the
    constant).  At most one within-spread arrival occurs, with probability
    p = 0.3*min(spread-1, 1) split evenly between the two sides, and at
    most one dark-pool liquidity event, with probabilities
    (none, buy-side, sell-side) = (0.5, 0.25, 0.25).  The three groups are
    independent; returned probabilities sum to one.
    """
    ha, hb = h
    _check_hidden(state.pa, state.pb, ha, hb, params)

    p_arr = binomial_arrival_prob(state.spread)
    arrival_branches = [(1.0 - p_arr, Arrival.NONE)]
    if p_arr > 0:
        arrival_branches += [(p_arr / 2.0, Arrival.ASK), (p_arr / 2.0, Arrival.BID)]
    hidden_branches = [(0.5, (0, 0)),
                       (BINOMIAL_FILL_PROB, (1, 0)),
                       (BINOMIAL_FILL_PROB, (0, 1))]

    outcomes = []
    for ra in (-1, 1):
        for rb in (-1, 1):
            qa = state.qa + ra
            pa = state.pa
            if qa <= 0:
                pa += 1
                qa = params.delta_a
            qb = state.qb + rb
            pb = state.pb
            if qb <= 0:
                pb -= 1
                qb = params.delta_b
            for p_a, arrival in arrival_branches:
                for p_h, fills in hidden_branches:
                    outcomes.append(TransitionOutcome(
                        prob=0.25 * p_a * p_h,
                        next=BookState(qa=qa, qb=qb, pa=pa, pb=pb, arrival=arrival),
                        hidden_fills=fills,
                    ))
    return outcomes


def _check_hidden(pa: int, pb: int, ha: int, hb: int, params: ModelParams):
    if ha not in (0, 1) or hb not in (0, 1) or (ha == 1 and hb == 1):
        raise ValueError("hidden flags must be 0/1 and not both set")
    if ha and pb >= params.pa_bar:
        raise ValueError("hidden buy not admissible at this bid price")
    if hb and pa <= params.pb_under:
        raise ValueError("hidden sell not admissible at this ask price")
