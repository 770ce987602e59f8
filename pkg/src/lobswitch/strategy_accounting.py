"""Admissible switching controls, hidden-order flags and trade accounting.

A switch decision ``(ua, ub)`` states how many limits to take on each side.
Integer parts move the quotes (ask up by ``[ua]``, bid down by ``[ub]``);
fractional parts are only meaningful at arrival instants, where they encode
a partial fill of the old-price limit at a premium, and at the terminal
instant, where the whole rectangle of fractional fills is admissible.
``u = [u] + {u}`` with ``{u}`` in [0, 1), so ``u = -0.4`` means integer part
-1 and fraction 0.6.

All functions here are pure and side-effect free; the solver, the forward
simulator and the exhaustive oracle all route their accounting through the
same formulas.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Tuple

from .market_model import BookState, ModelParams

__all__ = [
    "EventKind",
    "Side",
    "TraderKind",
    "SwitchDecision",
    "HiddenFlags",
    "TraderPosition",
    "admissible_controls",
    "admissible_hidden",
    "apply_hidden_fills",
    "apply_switch",
    "cash_flow",
    "hidden_drift",
    "shares_traded",
    "split_units",
]


class EventKind(enum.Enum):
    """What kind of decision instant the trader faces."""

    INTERIOR = "interior"
    ASK_ARRIVAL = "ask_arrival"
    BID_ARRIVAL = "bid_arrival"
    TERMINAL = "terminal"
    DONE = "done"


class Side(enum.Enum):
    ASK = "ask"
    BID = "bid"


class TraderKind(enum.Enum):
    REGULAR = "regular"
    INTERNALIZING = "internalizing"


@dataclass(frozen=True)
class SwitchDecision:
    """Limits to take on the ask and bid sides."""

    ua: float
    ub: float

    def as_tuple(self) -> Tuple[float, float]:
        return (self.ua, self.ub)


@dataclass(frozen=True)
class HiddenFlags:
    """Mid-price pegged hidden order flags, never both set."""

    ha: int = 0
    hb: int = 0

    def __post_init__(self):
        if self.ha not in (0, 1) or self.hb not in (0, 1):
            raise ValueError("hidden flags must be 0 or 1")
        if self.ha == 1 and self.hb == 1:
            raise ValueError("cannot post hidden orders on both sides")


@dataclass(frozen=True)
class TraderPosition:
    inventory: float = 0.0
    cash: float = 0.0


def split_units(u: float) -> Tuple[int, float]:
    """Integer and fractional part with the fraction in [0, 1)."""
    iu = math.floor(u)
    return int(iu), u - iu


def _event_arrival_side(kind: EventKind) -> Side | None:
    if kind is EventKind.ASK_ARRIVAL:
        return Side.ASK
    if kind is EventKind.BID_ARRIVAL:
        return Side.BID
    return None


def _fraction_range(mesh_denom: int, lo_int: int, hi: float) -> List[float]:
    """Mesh points lo_int, lo_int+1/m, ..., hi (hi assumed on the mesh)."""
    n = round((hi - lo_int) * mesh_denom)
    return [lo_int + j / mesh_denom for j in range(n + 1)]


def _d_set(trader: TraderKind, x: int, mesh_denom: int) -> List[float]:
    """Arrival-side component set for headroom ``x`` price levels.

    The regular trader may only decline (-1), absorb the arrival (0) or take
    one level (1); the internalizing trader may additionally fill any
    fraction of the old-price limit, discretized on the fraction mesh.
    """
    if x <= -1:
        return [-1.0]
    if x == 0:
        return [-1.0, 0.0]
    if trader is TraderKind.REGULAR:
        return [-1.0, 0.0, 1.0]
    return _fraction_range(mesh_denom, -1, 1.0)


def admissible_controls(kind: EventKind, pa: int, pb: int, trader: TraderKind,
                        pa_bar: int, pb_under: int,
                        fraction_mesh: float = 0.25) -> List[SwitchDecision]:
    """Enumerate the admissible switch decisions at a decision instant.

    Interior instants admit the integer rectangle bounded by the trading
    limits, minus the no-op (waiting is a separate action there, not a
    member of this set).  Arrival instants admit the trader-kind dependent
    arrival component on the arrival side, including the declining no-op
    -1.  The terminal instant admits the full fractional rectangle on the
    mesh; after the horizon only the no-op remains.  Results are sorted
    lexicographically by (ua, ub).
    """
    if pa <= pb:
        raise ValueError("spread must be positive")
    mesh_denom = _mesh_denominator(fraction_mesh)
    xa = max(pa_bar - pa, 0)
    xb = max(pb - pb_under, 0)

    if kind is EventKind.DONE:
        return [SwitchDecision(0.0, 0.0)]
    if kind is EventKind.TERMINAL:
        return [SwitchDecision(ua, ub)
                for ua in _fraction_range(mesh_denom, 0, float(xa))
                for ub in _fraction_range(mesh_denom, 0, float(xb))]
    if kind is EventKind.INTERIOR:
        return [SwitchDecision(float(ua), float(ub))
                for ua in range(xa + 1) for ub in range(xb + 1)
                if (ua, ub) != (0, 0)]

    ask_set = [float(v) for v in range(xa + 1)]
    bid_set = [float(v) for v in range(xb + 1)]
    if kind is EventKind.ASK_ARRIVAL:
        ask_set = sorted(set(_d_set(trader, pa_bar - pa, mesh_denom))
                         | set(float(v) for v in range(2, xa + 1)))
    else:
        bid_set = sorted(set(_d_set(trader, pb - pb_under, mesh_denom))
                         | set(float(v) for v in range(2, xb + 1)))
    return [SwitchDecision(ua, ub) for ua in ask_set for ub in bid_set]


def _mesh_denominator(fraction_mesh: float) -> int:
    m = round(1.0 / fraction_mesh)
    if m < 1 or abs(1.0 / m - fraction_mesh) > 1e-12:
        raise ValueError("fraction mesh must be 1/m for a positive integer m")
    return m


def admissible_hidden(pa: int, pb: int, params: ModelParams) -> List[HiddenFlags]:
    """Hidden-flag combinations admissible at the given prices.

    A hidden buy is allowed only while the bid is below the buy bound, a
    hidden sell only while the ask is above the sell bound, and never both
    at once.  Sorted lexicographically by (ha, hb)."""
    out = [HiddenFlags(0, 0)]
    if pa > params.pb_under:
        out.append(HiddenFlags(0, 1))
    if pb < params.pa_bar:
        out.append(HiddenFlags(1, 0))
    return out


def _validate_u(kind: EventKind, arrival: int, u: float):
    iu, fu = split_units(u)
    if kind is EventKind.DONE and u != 0:
        raise ValueError("no trading after the horizon")
    if kind is EventKind.TERMINAL:
        if u < 0:
            raise ValueError("terminal fills cannot be negative")
        return
    if arrival:
        if u < -1:
            raise ValueError("cannot take fewer than -1 limits at an arrival")
    else:
        if u < 0 or fu != 0:
            raise ValueError("off-arrival fills must be non-negative integers")


def shares_traded(side: Side, kind: EventKind, arrival: int, q: float,
                  u: float, delta: float) -> float:
    """Shares bought (ask side) or sold (bid side) by decision component ``u``.

    Taking ``u >= 1`` limits fills the best-quote volume plus ``u - 1``
    constant-depth levels.  At an arrival on this side, ``u >= 0``
    additionally takes the newly arrived level and a non-positive integer
    part fills the fraction ``{u}`` of the old-price volume.  At the
    terminal instant a pure fraction fills ``u * q``.
    """
    if q < 0:
        raise ValueError("volume must be non-negative")
    _validate_u(kind, arrival, u)
    iu, fu = split_units(u)
    if kind is EventKind.TERMINAL:
        g = 0.0
        if u >= 1:
            g += q + (u - 1.0) * delta
        if iu == 0:
            g += u * q
        return g
    g = 0.0
    if u >= 1:
        g += q + (u - 1.0) * delta
    if arrival:
        if u >= 0:
            g += delta
        if iu <= 0:
            g += fu * q
    return g


def cash_flow(side: Side, kind: EventKind, arrival: int, q: float, p: int,
              u: float, delta: float, epsilon: float) -> float:
    """Cash paid (ask side) or received (bid side) for decision component ``u``.

    Ladder fills are charged level by level.  At an arrival, the newly
    arrived level trades at the improved price (one tick better than the
    old quote) and the fractional fill of the old-price volume carries the
    internalization premium: old price plus ``epsilon`` on the ask side,
    minus ``epsilon`` on the bid side.
    """
    if q < 0:
        raise ValueError("volume must be non-negative")
    _validate_u(kind, arrival, u)
    iu, fu = split_units(u)
    if kind is EventKind.TERMINAL:
        f = 0.0
        if u >= 1:
            f += p * (q + (u - 1.0) * delta) + (0.5 * iu * (iu - 1) + iu * fu) * delta
        if iu == 0:
            f += p * u * q
        return f
    f = 0.0
    if u >= 1:
        f += p * (q + (u - 1.0) * delta) + 0.5 * u * (u - 1.0) * delta
    if arrival:
        if u >= 0:
            f += (p - 1) * delta if side is Side.ASK else (p + 1) * delta
        if iu <= 0:
            f += (p + epsilon) * fu * q if side is Side.ASK else (p - epsilon) * fu * q
    return f


def trade_deltas(kind: EventKind, state: BookState, u: SwitchDecision,
                 params: ModelParams) -> Tuple[float, float]:
    """(inventory change, cash change) of one trade: g and f netted across sides."""
    arr_a = 1 if kind is EventKind.ASK_ARRIVAL else 0
    arr_b = 1 if kind is EventKind.BID_ARRIVAL else 0
    ga = shares_traded(Side.ASK, kind, arr_a, state.qa, u.ua, params.delta_a)
    gb = shares_traded(Side.BID, kind, arr_b, state.qb, u.ub, params.delta_b)
    fa = cash_flow(Side.ASK, kind, arr_a, state.qa, state.pa, u.ua,
                   params.delta_a, params.epsilon)
    fb = cash_flow(Side.BID, kind, arr_b, state.qb, state.pb, u.ub,
                   params.delta_b, params.epsilon)
    return ga - gb, -fa + fb


def _post_volume(kind: EventKind, q: float, u: float, delta: float) -> float:
    iu, fu = split_units(u)
    if kind is EventKind.TERMINAL:
        base = delta if u >= 1 else (q if iu == 0 else 0.0)
        return (1.0 - fu) * base
    if iu != 0:
        return delta
    return (1.0 - fu) * q


def apply_switch(kind: EventKind, state: BookState, inventory: float,
                 u: SwitchDecision, params: ModelParams) -> Tuple[BookState, float]:
    """Post-trade book state and inventory after decision ``u``.

    Quotes move by the integer parts; a side with nonzero integer part
    exposes fresh constant depth, a pure fractional fill scales the
    standing volume down.  Raises if the post-trade book violates the
    spread invariant, which indicates an inadmissible call.
    """
    iua, _ = split_units(u.ua)
    iub, _ = split_units(u.ub)
    g_alpha, _ = trade_deltas(kind, state, u, params)
    qa = _post_volume(kind, state.qa, u.ua, params.delta_a)
    qb = _post_volume(kind, state.qb, u.ub, params.delta_b)
    post = BookState(qa=qa, qb=qb, pa=state.pa + iua, pb=state.pb - iub)
    return post, inventory + g_alpha


def hidden_drift(pa: int, pb: int, h: HiddenFlags, params: ModelParams) -> float:
    """Expected cash rate of resting hidden orders at the current quotes.

    A resting hidden buy pays the mid price at the dark-pool fill intensity;
    a resting hidden sell earns it.
    """
    _require_admissible_hidden(pa, pb, h, params)
    spread = pa - pb
    mid = (pa + pb) / 2.0
    return (-params.delta_a * h.ha * mid * params.lambda_a(spread)
            + params.delta_b * h.hb * mid * params.lambda_b(spread))


def apply_hidden_fills(position: TraderPosition, pa: int, pb: int,
                       h: HiddenFlags, fills: Tuple[int, int],
                       params: ModelParams) -> TraderPosition:
    """Settle dark-pool liquidity events against the resting hidden orders.

    A buy-side event fills a resting hidden buy: constant depth is added to
    the inventory and its mid-price value paid in cash; a sell-side event
    mirrors it.  Events on a side with no resting order have no effect.
    """
    inventory, cash = position.inventory, position.cash
    mid = (pa + pb) / 2.0
    if h.ha and fills[0]:
        inventory += params.delta_a
        cash -= params.delta_a * mid
    if h.hb and fills[1]:
        inventory -= params.delta_b
        cash += params.delta_b * mid
    return TraderPosition(inventory=inventory, cash=cash)


def _require_admissible_hidden(pa: int, pb: int, h: HiddenFlags,
                               params: ModelParams):
    if h.ha and pb >= params.pa_bar:
        raise ValueError("hidden buy not admissible: bid at or above buy bound")
    if h.hb and pa <= params.pb_under:
        raise ValueError("hidden sell not admissible: ask at or below sell bound")
