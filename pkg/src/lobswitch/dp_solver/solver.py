"""Backward induction over the state grid.

Layer k is computed from layer k+1 in three sweeps: the no-arrival value
(maximum over waiting and immediate trades, jointly with the hidden-order
flags, of immediate cash plus hidden-order drift plus expected
continuation), then the two arrival values (forced trade chained into the
same-instant no-arrival value at the truncated post-trade node).  The
terminal layer is a single intervention maximum against the terminal
reward.  Sweeps are node-parallel; any worker count yields bitwise
identical tables.

``expectation_estimate`` and ``intervention_max`` are scalar reference
implementations of the two building blocks, used by the test suite to
cross-check the compiled sweeps.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..market_model import (BINOMIAL_FILL_PROB, BookState, ModelParams,
                            binomial_transitions)
from ..reward import RewardSpec, inventory_value
from ..strategy_accounting import (EventKind, HiddenFlags, SwitchDecision,
                                   TraderKind, admissible_controls,
                                   admissible_hidden, split_units,
                                   trade_deltas)
from . import kernels
from .grid import Grid

__all__ = ["CompiledProblem", "SolveResult", "backward_step", "compile_problem",
           "expectation_estimate", "intervention_max", "solve", "post_trade_raw"]

logger = logging.getLogger(__name__)

_VARIANT_CODES = {"linear": kernels.VARIANT_LINEAR,
                  "target_abs": kernels.VARIANT_TARGET_ABS,
                  "target_quad": kernels.VARIANT_TARGET_QUAD,
                  "liquidation": kernels.VARIANT_LIQUIDATION}

_MC_DRAW_LIMIT = 50_000_000


@dataclass
class _CandidateTables:
    """Flat per-price-pair candidate rows for the three sweep kinds."""

    int_off: np.ndarray
    int_wait: np.ndarray
    int_iua: np.ndarray
    int_iub: np.ndarray
    int_hmask: np.ndarray
    term_off: np.ndarray
    term_iua: np.ndarray
    term_fua: np.ndarray
    term_iub: np.ndarray
    term_fub: np.ndarray
    ask_off: np.ndarray
    ask_iarr: np.ndarray
    ask_farr: np.ndarray
    ask_iother: np.ndarray
    bid_off: np.ndarray
    bid_iarr: np.ndarray
    bid_farr: np.ndarray
    bid_iother: np.ndarray


@dataclass
class CompiledProblem:
    """A solve instance with node coordinates and candidate tables packed
    for the compiled sweeps."""

    model: str
    grid: Grid
    params: ModelParams
    reward: RewardSpec
    trader: TraderKind
    epsilon: float
    fraction_mesh: float
    mc_samples: int
    seed: int
    node_qa: np.ndarray = field(repr=False, default=None)
    node_qb: np.ndarray = field(repr=False, default=None)
    node_z: np.ndarray = field(repr=False, default=None)
    node_pair: np.ndarray = field(repr=False, default=None)
    cands: _CandidateTables = field(repr=False, default=None)
    lam_a_tab: np.ndarray = field(repr=False, default=None)
    lam_b_tab: np.ndarray = field(repr=False, default=None)
    th_a_tab: np.ndarray = field(repr=False, default=None)
    th_b_tab: np.ndarray = field(repr=False, default=None)

    @property
    def variant_code(self) -> int:
        return _VARIANT_CODES[self.reward.variant]


@dataclass
class SolveResult:
    """Value tables and policies for every time index and node.

    ``v0``/``va``/``vb`` are the no-arrival and arrival values.  The
    no-arrival policy is (wait0, u0a, u0b, ha, hb): wait0 set means rest
    (with hidden flags) instead of trading.  ``uaa/uab`` and ``uba/ubb``
    are the forced-trade pairs at ask and bid arrivals.  At the terminal
    index all three values coincide and every policy holds the terminal
    trade.
    """

    model: str
    trader: str
    epsilon: float
    grid: Grid
    v0: np.ndarray
    va: np.ndarray
    vb: np.ndarray
    wait0: np.ndarray
    u0a: np.ndarray
    u0b: np.ndarray
    ha: np.ndarray
    hb: np.ndarray
    uaa: np.ndarray
    uab: np.ndarray
    uba: np.ndarray
    ubb: np.ndarray
    diagnostics: Dict = field(default_factory=dict)
    meta: Dict = field(default_factory=dict)

    def value_at(self, k: int, qa: int, qb: int, z: int, pa: int, pb: int) -> float:
        return float(self.v0[k, self.grid.encode(qa, qb, z, pa, pb)])


def compile_problem(model: str, params: ModelParams, grid: Grid,
                    reward: RewardSpec, trader: TraderKind,
                    epsilon: Optional[float] = None, fraction_mesh: float = 0.25,
                    mc_samples: int = 512, seed: int = 0) -> CompiledProblem:
    """Validate inputs and pack candidate tables for the sweeps."""
    if model not in ("binomial", "continuous"):
        raise ValueError(f"unknown model {model!r}")
    eps = params.epsilon if epsilon is None else float(epsilon)
    if eps < 0:
        raise ValueError("premium must be non-negative")
    params = params.with_epsilon(eps)
    if model == "binomial":
        for d in (params.delta_a, params.delta_b):
            if d != int(d):
                raise ValueError("lattice model needs integer limit depth")
            if int(d) > grid.spec.q_max:
                raise ValueError("limit depth exceeds the volume grid")
    if model == "continuous" and mc_samples < 1:
        raise ValueError("need at least one sample for the continuous model")

    prob = CompiledProblem(model=model, grid=grid, params=params, reward=reward,
                           trader=trader, epsilon=eps,
                           fraction_mesh=fraction_mesh,
                           mc_samples=int(mc_samples), seed=int(seed))
    _pack_nodes(prob)
    prob.cands = _pack_candidates(prob)
    smax = grid.spec.pa_max - grid.spec.pb_min
    prob.lam_a_tab = np.array([params.lambda_a(s) for s in range(smax + 1)])
    prob.lam_b_tab = np.array([params.lambda_b(s) for s in range(smax + 1)])
    prob.th_a_tab = np.array([params.theta_a(s) for s in range(smax + 1)])
    prob.th_b_tab = np.array([params.theta_b(s) for s in range(smax + 1)])
    return prob


def _pack_nodes(prob: CompiledProblem):
    g = prob.grid
    nq, nz, block = g.nq, g.nz, g.block
    prob.node_pair = np.repeat(np.arange(g.n_pairs, dtype=np.int64), block)
    prob.node_z = np.tile(np.repeat(np.arange(nz, dtype=np.int64), nq * nq),
                          g.n_pairs) + g.spec.i_min
    prob.node_qb = np.tile(np.repeat(np.arange(nq, dtype=np.int64), nq),
                           g.n_pairs * nz)
    prob.node_qa = np.tile(np.arange(nq, dtype=np.int64), g.n_pairs * nz * nq)


def _hidden_mask(pa1: int, pb1: int, params: ModelParams) -> int:
    # bit 0: no order, bit 1: resting sell (0,1), bit 2: resting buy (1,0)
    mask = 1
    if pa1 > params.pb_under:
        mask |= 2
    if pb1 < params.pa_bar:
        mask |= 4
    return mask


def _pack_candidates(prob: CompiledProblem) -> _CandidateTables:
    g, p = prob.grid, prob.params
    int_rows: List[Tuple[int, int, int, int]] = []
    term_rows: List[Tuple[int, float, int, float]] = []
    ask_rows: List[Tuple[int, float, int]] = []
    bid_rows: List[Tuple[int, float, int]] = []
    int_off = [0]
    term_off = [0]
    ask_off = [0]
    bid_off = [0]
    for pair in range(g.n_pairs):
        pa = int(g.pair_pa[pair])
        pb = int(g.pair_pb[pair])
        int_rows.append((1, 0, 0, _hidden_mask(pa, pb, p)))
        for u in admissible_controls(EventKind.INTERIOR, pa, pb, prob.trader,
                                     p.pa_bar, p.pb_under, prob.fraction_mesh):
            iua, iub = int(u.ua), int(u.ub)
            pa1 = min(pa + iua, g.spec.pa_max)
            pb1 = max(pb - iub, g.spec.pb_min)
            int_rows.append((0, iua, iub, _hidden_mask(pa1, pb1, p)))
        int_off.append(len(int_rows))
        for u in admissible_controls(EventKind.TERMINAL, pa, pb, prob.trader,
                                     p.pa_bar, p.pb_under, prob.fraction_mesh):
            iua, fua = split_units(u.ua)
            iub, fub = split_units(u.ub)
            term_rows.append((iua, fua, iub, fub))
        term_off.append(len(term_rows))
        for u in admissible_controls(EventKind.ASK_ARRIVAL, pa, pb, prob.trader,
                                     p.pa_bar, p.pb_under, prob.fraction_mesh):
            iua, fua = split_units(u.ua)
            ask_rows.append((iua, fua, int(u.ub)))
        ask_off.append(len(ask_rows))
        for u in admissible_controls(EventKind.BID_ARRIVAL, pa, pb, prob.trader,
                                     p.pa_bar, p.pb_under, prob.fraction_mesh):
            iub, fub = split_units(u.ub)
            bid_rows.append((iub, fub, int(u.ua)))
        bid_off.append(len(bid_rows))

    def cols(rows, idx, dtype):
        return np.array([r[idx] for r in rows], dtype=dtype)

    return _CandidateTables(
        int_off=np.array(int_off, dtype=np.int64),
        int_wait=cols(int_rows, 0, np.uint8),
        int_iua=cols(int_rows, 1, np.int64),
        int_iub=cols(int_rows, 2, np.int64),
        int_hmask=cols(int_rows, 3, np.uint8),
        term_off=np.array(term_off, dtype=np.int64),
        term_iua=cols(term_rows, 0, np.int64),
        term_fua=cols(term_rows, 1, np.float64),
        term_iub=cols(term_rows, 2, np.int64),
        term_fub=cols(term_rows, 3, np.float64),
        ask_off=np.array(ask_off, dtype=np.int64),
        ask_iarr=cols(ask_rows, 0, np.int64),
        ask_farr=cols(ask_rows, 1, np.float64),
        ask_iother=cols(ask_rows, 2, np.int64),
        bid_off=np.array(bid_off, dtype=np.int64),
        bid_iarr=cols(bid_rows, 0, np.int64),
        bid_farr=cols(bid_rows, 1, np.float64),
        bid_iother=cols(bid_rows, 2, np.int64),
    )


def _terminal_step(prob: CompiledProblem):
    g = prob.grid
    n = g.n_nodes
    v = np.empty(n)
    pol_ua = np.empty(n, dtype=np.float32)
    pol_ub = np.empty(n, dtype=np.float32)
    c = prob.cands
    kernels.terminal_layer(prob.node_qa, prob.node_qb, prob.node_z,
                           prob.node_pair, g.pair_pa, g.pair_pb, c.term_off,
                           c.term_iua, c.term_fua, c.term_iub, c.term_fub,
                           prob.params.delta_a, prob.params.delta_b,
                           prob.reward.r_c, prob.reward.r_i,
                           prob.variant_code, prob.reward.z0,
                           prob.reward.u_a, prob.reward.u_b,
                           v, pol_ua, pol_ub)
    return v, pol_ua, pol_ub


def _mc_draws(prob: CompiledProblem, k: int):
    n = prob.grid.n_nodes
    m = prob.mc_samples
    if n * m * 6 > _MC_DRAW_LIMIT:
        raise ValueError("continuous-model grid x sample budget too large; "
                         "shrink the grid or mc_samples")
    normals = np.empty((n, m, 2))
    unis = np.empty((n, m, 4))
    for node in range(n):
        key = np.array([prob.seed, (k << 32) + node], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        normals[node] = gen.standard_normal((m, 2))
        unis[node] = gen.random((m, 4))
    return normals, unis


def backward_step(prob: CompiledProblem, k: int, v0_next: np.ndarray,
                  va_next: np.ndarray, vb_next: np.ndarray) -> Dict[str, np.ndarray]:
    """Compute layer k of the tables from layer k+1."""
    g = prob.grid
    n = g.n_nodes
    c = prob.cands
    s = g.spec
    out = {name: np.empty(n) for name in ("v0", "va", "vb")}
    out["wait0"] = np.empty(n, dtype=np.uint8)
    out["u0a"] = np.empty(n, dtype=np.float32)
    out["u0b"] = np.empty(n, dtype=np.float32)
    out["ha"] = np.empty(n, dtype=np.uint8)
    out["hb"] = np.empty(n, dtype=np.uint8)
    out["uaa"] = np.empty(n, dtype=np.float32)
    out["uab"] = np.empty(n, dtype=np.float32)
    out["uba"] = np.empty(n, dtype=np.float32)
    out["ubb"] = np.empty(n, dtype=np.float32)
    clamp_int = np.zeros(n, dtype=np.int64)
    clamp_ask = np.zeros(n, dtype=np.int64)
    clamp_bid = np.zeros(n, dtype=np.int64)

    if prob.model == "binomial":
        w_high = 0.7 * v0_next + 0.15 * va_next + 0.15 * vb_next
        kernels.interior_binomial_layer(
            prob.node_qa, prob.node_qb, prob.node_z, prob.node_pair,
            g.pair_pa, g.pair_pb, g.pair_index,
            c.int_off, c.int_wait, c.int_iua, c.int_iub, c.int_hmask,
            g.nq, g.nz, s.i_min, s.i_max, s.q_max,
            s.pa_min, s.pa_max, s.pb_min, s.pb_max,
            prob.params.delta_a, prob.params.delta_b,
            prob.reward.r_c, BINOMIAL_FILL_PROB,
            v0_next, w_high,
            out["v0"], out["wait0"], out["u0a"], out["u0b"],
            out["ha"], out["hb"], clamp_int)
    else:
        normals, unis = _mc_draws(prob, k)
        kernels.interior_mc_layer(
            prob.node_qa, prob.node_qb, prob.node_z, prob.node_pair,
            g.pair_pa, g.pair_pb, g.pair_index,
            c.int_off, c.int_wait, c.int_iua, c.int_iub, c.int_hmask,
            g.nq, g.nz, s.i_min, s.i_max, s.q_max,
            s.pa_min, s.pa_max, s.pb_min, s.pb_max,
            prob.params.delta_a, prob.params.delta_b,
            prob.reward.r_c, g.dt,
            prob.params.sigma_a, prob.params.sigma_b,
            prob.lam_a_tab, prob.lam_b_tab, prob.th_a_tab, prob.th_b_tab,
            normals, unis,
            v0_next, va_next, vb_next,
            out["v0"], out["wait0"], out["u0a"], out["u0b"],
            out["ha"], out["hb"], clamp_int)

    kernels.arrival_layer(True, prob.node_qa, prob.node_qb, prob.node_z,
                          prob.node_pair, g.pair_pa, g.pair_pb, g.pair_index,
                          c.ask_off, c.ask_iarr, c.ask_farr, c.ask_iother,
                          g.nq, g.nz, s.i_min, s.i_max, s.q_max,
                          s.pa_min, s.pa_max, s.pb_min, s.pb_max,
                          prob.params.delta_a, prob.params.delta_b,
                          prob.epsilon, prob.reward.r_c,
                          out["v0"], out["va"], out["uaa"], out["uab"], clamp_ask)
    kernels.arrival_layer(False, prob.node_qa, prob.node_qb, prob.node_z,
                          prob.node_pair, g.pair_pa, g.pair_pb, g.pair_index,
                          c.bid_off, c.bid_iarr, c.bid_farr, c.bid_iother,
                          g.nq, g.nz, s.i_min, s.i_max, s.q_max,
                          s.pa_min, s.pa_max, s.pb_min, s.pb_max,
                          prob.params.delta_a, prob.params.delta_b,
                          prob.epsilon, prob.reward.r_c,
                          out["v0"], out["vb"], out["uba"], out["ubb"], clamp_bid)
    out["clamp_events"] = int(clamp_int.sum() + clamp_ask.sum() + clamp_bid.sum())
    return out


def solve(model: str, params: ModelParams, grid: Grid, reward: RewardSpec,
          trader: TraderKind, epsilon: Optional[float] = None,
          threads: int = 1, mc_samples: int = 512, fraction_mesh: float = 0.25,
          seed: int = 0) -> SolveResult:
    """Run the full backward induction and return tables and policies.

    Output is a deterministic function of the inputs: the same arguments
    give bitwise identical tables for every ``threads`` value, because the
    node sweeps neither share accumulators nor depend on scheduling.

    Args:
        model: "binomial" (exact one-step expectations) or "continuous"
            (Monte Carlo expectations with ``mc_samples`` per node/step,
            drawn from counter-based per-(node, step) streams).
        threads: worker count for the node-parallel sweeps.
    Returns:
        SolveResult with arrays of shape (steps+1, n_nodes).
    """
    prob = compile_problem(model, params, grid, reward, trader, epsilon,
                           fraction_mesh, mc_samples, seed)
    kernels.set_threads(threads)
    logger.info("grid contains %d admissible points", grid.n_nodes)

    kk = grid.n_steps
    n = grid.n_nodes
    res = SolveResult(
        model=model, trader=trader.value, epsilon=prob.epsilon, grid=grid,
        v0=np.empty((kk + 1, n)), va=np.empty((kk + 1, n)),
        vb=np.empty((kk + 1, n)),
        wait0=np.zeros((kk + 1, n), dtype=np.uint8),
        u0a=np.zeros((kk + 1, n), dtype=np.float32),
        u0b=np.zeros((kk + 1, n), dtype=np.float32),
        ha=np.zeros((kk + 1, n), dtype=np.uint8),
        hb=np.zeros((kk + 1, n), dtype=np.uint8),
        uaa=np.zeros((kk + 1, n), dtype=np.float32),
        uab=np.zeros((kk + 1, n), dtype=np.float32),
        uba=np.zeros((kk + 1, n), dtype=np.float32),
        ubb=np.zeros((kk + 1, n), dtype=np.float32),
    )

    t0 = time.perf_counter()
    v_term, pol_ua, pol_ub = _terminal_step(prob)
    term_seconds = time.perf_counter() - t0
    for name in ("v0", "va", "vb"):
        getattr(res, name)[kk] = v_term
    res.u0a[kk] = pol_ua
    res.u0b[kk] = pol_ub
    res.uaa[kk] = pol_ua
    res.uab[kk] = pol_ub
    res.uba[kk] = pol_ua
    res.ubb[kk] = pol_ub

    layer_seconds = []
    clamp_by_layer = []
    for k in range(kk - 1, -1, -1):
        t0 = time.perf_counter()
        layer = backward_step(prob, k, res.v0[k + 1], res.va[k + 1], res.vb[k + 1])
        layer_seconds.append(time.perf_counter() - t0)
        clamp_by_layer.append(layer.pop("clamp_events"))
        for name, arr in layer.items():
            getattr(res, name)[k] = arr
    layer_seconds.reverse()
    clamp_by_layer.reverse()

    res.diagnostics = {
        "terminal_seconds": term_seconds,
        "layer_seconds": layer_seconds,
        "clamp_by_layer": clamp_by_layer,
        "clamp_events": int(sum(clamp_by_layer)),
        "threads": threads,
    }
    res.meta = {
        "model": model,
        "trader": trader.value,
        "epsilon": prob.epsilon,
        "fraction_mesh": fraction_mesh,
        "mc_samples": mc_samples if model == "continuous" else 0,
        "seed": seed,
        "reward": reward.spec(),
        "r_c": reward.r_c,
        "r_i": reward.r_i,
    }
    if res.diagnostics["clamp_events"]:
        logger.info("state truncation hit %d candidate evaluations "
                    "(values near the inventory bounds are biased)",
                    res.diagnostics["clamp_events"])
    return res


def post_trade_raw(kind: EventKind, qa: float, qb: float, z: float, pa: int,
                   pb: int, u: SwitchDecision, params: ModelParams):
    """Raw post-trade state (qa, qb, z, pa, pb) plus the cash delta, without
    book-invariant validation; callers truncate to the grid."""
    iua, fua = split_units(u.ua)
    iub, fub = split_units(u.ub)
    state = BookState(qa=qa, qb=qb, pa=pa, pb=pb)
    g_alpha, f_alpha = trade_deltas(kind, state, u, params)

    def post_vol(q, uu, iu, fu, delta):
        if kind is EventKind.TERMINAL:
            base = delta if uu >= 1 else (q if iu == 0 else 0.0)
            return (1.0 - fu) * base
        return delta if iu != 0 else (1.0 - fu) * q

    qa1 = post_vol(qa, u.ua, iua, fua, params.delta_a)
    qb1 = post_vol(qb, u.ub, iub, fub, params.delta_b)
    return (qa1, qb1, z + g_alpha, pa + iua, pb - iub), f_alpha


def expectation_estimate(x: Tuple[int, int, int, int, int],
                         u: Optional[SwitchDecision], h: HiddenFlags,
                         prob: CompiledProblem, k: int,
                         v0_next: np.ndarray, va_next: np.ndarray,
                         vb_next: np.ndarray) -> float:
    """Reference continuation expectation for one (node, control, flags).

    Applies the (no-arrival instant) control, truncates, then either sums
    the exact lattice law or averages the Monte Carlo draws of the
    counter-based stream for (seed, k, node), picking the no-arrival or
    arrival table according to each branch's within-spread arrival.
    """
    g = prob.grid
    p = prob.params
    qa, qb, z, pa, pb = x
    if u is None:
        (qa1, qb1, z1, pa1, pb1) = (float(qa), float(qb), float(z), pa, pb)
    else:
        (qa1, qb1, z1, pa1, pb1), _ = post_trade_raw(
            EventKind.INTERIOR, qa, qb, z, pa, pb, u, p)
    qa1, qb1, z1, pa1, pb1 = g.snap(qa1, qb1, z1, pa1, pb1)

    if prob.model == "binomial":
        total = 0.0
        state = BookState(qa=float(qa1), qb=float(qb1), pa=pa1, pb=pb1)
        for out in binomial_transitions(state, (h.ha, h.hb), p):
            z2 = z1 + (p.delta_a * h.ha * out.hidden_fills[0]
                       - p.delta_b * h.hb * out.hidden_fills[1])
            nxt = g.snap(out.next.qa, out.next.qb, z2, out.next.pa, out.next.pb)
            idx = g.encode(*nxt)
            table = {0: v0_next, 1: va_next, 2: vb_next}[out.next.arrival.value]
            total += out.prob * table[idx]
        return total

    node = g.encode(qa, qb, z, pa, pb)
    key = np.array([prob.seed, (k << 32) + node], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    normals = gen.standard_normal((prob.mc_samples, 2))
    unis = gen.random((prob.mc_samples, 4))
    dt = g.dt
    s1 = pa1 - pb1
    p_lam_a = min(prob.lam_a_tab[s1] * dt, 1.0)
    p_lam_b = min(prob.lam_b_tab[s1] * dt, 1.0)
    p_th_a = min(prob.th_a_tab[s1] * dt, 1.0)
    p_th_b = min(prob.th_b_tab[s1] * dt, 1.0)
    acc = 0.0
    for m in range(prob.mc_samples):
        qa2 = qa1 + p.sigma_a * np.sqrt(dt) * normals[m, 0]
        pa2 = pa1
        if qa2 <= 0.0:
            pa2 = pa1 + 1
            qa2 = p.delta_a
        qb2 = qb1 + p.sigma_b * np.sqrt(dt) * normals[m, 1]
        pb2 = pb1
        if qb2 <= 0.0:
            pb2 = pb1 - 1
            qb2 = p.delta_b
        z2 = float(z1)
        if h.ha and unis[m, 0] < p_lam_a:
            z2 += p.delta_a
        elif h.hb and unis[m, 1] < p_lam_b:
            z2 -= p.delta_b
        nxt = g.snap(qa2, qb2, z2, pa2, pb2)
        idx = g.encode(*nxt)
        na = unis[m, 2] < p_th_a
        nb = unis[m, 3] < p_th_b
        if na and nb:
            acc += 0.5 * (va_next[idx] + vb_next[idx])
        elif na:
            acc += va_next[idx]
        elif nb:
            acc += vb_next[idx]
        else:
            acc += v0_next[idx]
    return acc / prob.mc_samples


def intervention_max(x: Tuple[int, int, int, int, int], kind: EventKind,
                     prob: CompiledProblem,
                     v0_layer: Optional[np.ndarray] = None
                     ) -> Tuple[float, SwitchDecision]:
    """Reference forced-trade maximum at an arrival or terminal instant.

    At the terminal instant the continuation is the terminal reward at the
    post-trade state; at an arrival it is the same-instant no-arrival value
    at the truncated post-trade node.  Ties resolve to the first candidate
    in lexicographic (ua, ub) order.
    """
    g, p, r = prob.grid, prob.params, prob.reward
    qa, qb, z, pa, pb = x
    best = -np.inf
    best_u = None
    for u in admissible_controls(kind, pa, pb, prob.trader, p.pa_bar,
                                 p.pb_under, prob.fraction_mesh):
        (qa1, qb1, z1, pa1, pb1), f_alpha = post_trade_raw(
            kind, qa, qb, z, pa, pb, u, p)
        if kind is EventKind.TERMINAL:
            val = r.r_c * f_alpha + r.r_i * inventory_value(r, z1, pa1, pb1)
        else:
            if v0_layer is None:
                raise ValueError("arrival maximization needs the no-arrival layer")
            idx = g.encode(*g.snap(qa1, qb1, z1, pa1, pb1))
            val = r.r_c * f_alpha + v0_layer[idx]
        if val > best:
            best = val
            best_u = u
    return best, best_u
