"""Policy evaluation: forward simulation, an exhaustive small-instance
oracle, and the internalization-advantage analysis.

The forward simulator runs the truncated grid chain that the solver
models, so for the lattice model the mean realized reward of a solved
policy is an unbiased estimate of the table value at the start node.  The
oracle recursively enumerates every action sequence and every outcome
branch without the solver's layering or vectorization and is the
independent check of the backward induction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .market_model import BINOMIAL_FILL_PROB, BookState, ModelParams, binomial_transitions
from .reward import RewardSpec, inventory_value
from .strategy_accounting import (EventKind, HiddenFlags, SwitchDecision,
                                  TraderKind, admissible_controls,
                                  admissible_hidden)
from .dp_solver.grid import Grid
from .dp_solver.solver import CompiledProblem, SolveResult, post_trade_raw

__all__ = ["DiffReport", "EpisodeRecord", "EpisodeStep", "RunStats",
           "diff_report", "exhaustive_oracle", "fair_premium", "make_policy",
           "oracle_value", "premium_report", "run_policy", "v_diff"]


# ---------------------------------------------------------------------------
# forward simulation


@dataclass
class EpisodeStep:
    k: int
    stage: str                      # "interior" | "arrival_ask" | "arrival_bid" | "terminal"
    state: Tuple[int, int, int, int, int]
    wait: int
    ua: float
    ub: float
    ha: int
    hb: int
    post_state: Tuple[float, float, float, int, int]
    fill_buy: int
    fill_sell: int
    inventory: float
    cash: float


@dataclass
class EpisodeRecord:
    path: int
    steps: List[EpisodeStep] = field(default_factory=list)
    reward: float = 0.0


@dataclass
class RunStats:
    n_paths: int
    mean_reward: float
    se_reward: float
    rewards: np.ndarray
    episodes: List[EpisodeRecord]
    mean_terminal_inventory: float


def _vec_interior_trade(qa, qb, z, pa, pb, ua, ub, params, spec):
    """Vectorized no-arrival trade: returns post volumes, post z (clamped),
    post prices and the cash delta.  Expression structure mirrors the
    scalar accounting so replays reproduce positions exactly."""
    da, db = params.delta_a, params.delta_b
    ga = np.where(ua >= 1, qa + (ua - 1.0) * da, 0.0)
    gb = np.where(ub >= 1, qb + (ub - 1.0) * db, 0.0)
    fa = np.where(ua >= 1, pa * (qa + (ua - 1.0) * da) + 0.5 * ua * (ua - 1.0) * da, 0.0)
    fb = np.where(ub >= 1, pb * (qb + (ub - 1.0) * db) + 0.5 * ub * (ub - 1.0) * db, 0.0)
    qa1 = np.where(ua != 0, da, qa)
    qb1 = np.where(ub != 0, db, qb)
    z1 = np.clip(z + np.ceil(ga - gb - 0.5).astype(np.int64), spec.i_min, spec.i_max)
    pa1 = np.minimum(pa + ua.astype(np.int64), spec.pa_max)
    pb1 = np.maximum(pb - ub.astype(np.int64), spec.pb_min)
    return qa1.astype(np.int64), qb1.astype(np.int64), z1, pa1, pb1, -fa + fb


def _vec_arrival_trade(ask_side, q_arr, q_oth, z, p_arr, p_oth, u_arr, u_oth,
                       params, grid):
    """Vectorized arrival-instant trade on the arrival side plus integer
    trade on the quiet side; returns snapped post state and cash delta."""
    d_arr = params.delta_a if ask_side else params.delta_b
    d_oth = params.delta_b if ask_side else params.delta_a
    eps = params.epsilon
    iu = np.floor(u_arr)
    fu = u_arr - iu
    g_arr = np.where(u_arr >= 1, q_arr + (u_arr - 1.0) * d_arr, 0.0)
    f_arr = np.where(u_arr >= 1,
                     p_arr * (q_arr + (u_arr - 1.0) * d_arr)
                     + 0.5 * u_arr * (u_arr - 1.0) * d_arr, 0.0)
    g_arr = g_arr + np.where(u_arr >= 0, d_arr, 0.0)
    improved = (p_arr - 1.0) if ask_side else (p_arr + 1.0)
    f_arr = f_arr + np.where(u_arr >= 0, improved * d_arr, 0.0)
    premium = (p_arr + eps) if ask_side else (p_arr - eps)
    g_arr = g_arr + np.where(iu <= 0, fu * q_arr, 0.0)
    f_arr = f_arr + np.where(iu <= 0, premium * fu * q_arr, 0.0)
    g_oth = np.where(u_oth >= 1, q_oth + (u_oth - 1.0) * d_oth, 0.0)
    f_oth = np.where(u_oth >= 1,
                     p_oth * (q_oth + (u_oth - 1.0) * d_oth)
                     + 0.5 * u_oth * (u_oth - 1.0) * d_oth, 0.0)
    q_arr1 = np.where(iu != 0, d_arr, (1.0 - fu) * q_arr)
    q_oth1 = np.where(u_oth != 0, d_oth, q_oth)
    if ask_side:
        g_alpha = g_arr - g_oth
        f_alpha = -f_arr + f_oth
        qa1, qb1 = q_arr1, q_oth1
        pa1 = p_arr.astype(np.int64) + iu.astype(np.int64)
        pb1 = p_oth.astype(np.int64) - u_oth.astype(np.int64)
    else:
        g_alpha = g_oth - g_arr
        f_alpha = -f_oth + f_arr
        qa1, qb1 = q_oth1, q_arr1
        pa1 = p_oth.astype(np.int64) + u_oth.astype(np.int64)
        pb1 = p_arr.astype(np.int64) - iu.astype(np.int64)
    qa1, qb1, z1, pa1, pb1 = _vec_snap(grid, qa1, qb1, z + g_alpha, pa1, pb1)
    return qa1, qb1, z1, pa1, pb1, f_alpha


def _vec_snap(grid: Grid, qa, qb, z, pa, pb):
    s = grid.spec
    qa1 = np.clip(np.ceil(qa - 0.5).astype(np.int64), 0, s.q_max)
    qb1 = np.clip(np.ceil(qb - 0.5).astype(np.int64), 0, s.q_max)
    z1 = np.clip(np.ceil(z - 0.5).astype(np.int64), s.i_min, s.i_max)
    pa1 = np.clip(pa, s.pa_min, s.pa_max).astype(np.int64)
    pb1 = np.clip(pb, s.pb_min, s.pb_max).astype(np.int64)
    bad = pa1 <= pb1
    if np.any(bad):
        pb1 = np.where(bad, pa1 - 1, pb1)
        low = pb1 < s.pb_min
        pb1 = np.where(low, s.pb_min, pb1)
        pa1 = np.where(bad & low, s.pb_min + 1, pa1)
    return qa1, qb1, z1, pa1, pb1


def _vec_encode(grid: Grid, qa, qb, z, pa, pb):
    s = grid.spec
    pair = grid.pair_index[pa - s.pa_min, pb - s.pb_min]
    return ((pair * grid.nz + (z - s.i_min)) * grid.nq + qb) * grid.nq + qa


def run_policy(policy: SolveResult, params: ModelParams, reward: RewardSpec,
               x0: Tuple[int, int, int, int, int], n_paths: int, seed: int,
               n_log: int = 3) -> RunStats:
    """Simulate the policy forward from ``x0`` over the solve horizon.

    Runs the same truncated chain the solver models (states snap to the
    grid, inventory clamps at its bounds), accounts every trade and every
    dark-pool fill, and reports the mean realized terminal reward with its
    standard error.  Deterministic given ``seed``; the first ``n_log``
    paths are returned as step-by-step episode records.

    Args:
        policy: solved tables (or a hand-built policy from make_policy).
        x0: start node (qa, qb, z, pa, pb).
    """
    grid = policy.grid
    spec = grid.spec
    params = params.with_epsilon(policy.epsilon)
    if policy.model not in ("binomial", "continuous"):
        raise ValueError(f"unknown model {policy.model!r}")
    kk = grid.n_steps
    rng = np.random.Generator(np.random.Philox(key=seed))

    qa = np.full(n_paths, x0[0], dtype=np.int64)
    qb = np.full(n_paths, x0[1], dtype=np.int64)
    z = np.full(n_paths, x0[2], dtype=np.int64)
    pa = np.full(n_paths, x0[3], dtype=np.int64)
    pb = np.full(n_paths, x0[4], dtype=np.int64)
    cash = np.zeros(n_paths)
    arrival = np.zeros(n_paths, dtype=np.int8)  # 0 none, 1 ask, 2 bid

    n_log = min(n_log, n_paths)
    episodes = [EpisodeRecord(path=i) for i in range(n_log)]

    def log_rows(k, stage, pre, act, post, fills, mask=None):
        for i in range(n_log):
            if mask is not None and not mask[i]:
                continue
            episodes[i].steps.append(EpisodeStep(
                k=k, stage=stage,
                state=(int(pre[0][i]), int(pre[1][i]), int(pre[2][i]),
                       int(pre[3][i]), int(pre[4][i])),
                wait=int(act[0][i]), ua=float(act[1][i]), ub=float(act[2][i]),
                ha=int(act[3][i]), hb=int(act[4][i]),
                post_state=(float(post[0][i]), float(post[1][i]),
                            float(post[2][i]), int(post[3][i]), int(post[4][i])),
                fill_buy=int(fills[0][i]), fill_sell=int(fills[1][i]),
                inventory=float(post[2][i]), cash=float(cash[i]),
            ))

    zeros = np.zeros(n_paths)
    izeros = np.zeros(n_paths, dtype=np.int64)

    for k in range(kk):
        # forced trade at an arrival instant, chained into the interior stage
        for side, code in (("ask", 1), ("bid", 2)):
            mask = arrival == code
            if not np.any(mask):
                continue
            node = _vec_encode(grid, qa, qb, z, pa, pb)
            if side == "ask":
                ua_comp = policy.uaa[k, node].astype(np.float64)
                ub_comp = policy.uab[k, node].astype(np.float64)
                res = _vec_arrival_trade(True, qa.astype(float), qb.astype(float),
                                         z.astype(float), pa.astype(float),
                                         pb.astype(float), ua_comp, ub_comp,
                                         params, grid)
            else:
                ua_comp = policy.uba[k, node].astype(np.float64)
                ub_comp = policy.ubb[k, node].astype(np.float64)
                res = _vec_arrival_trade(False, qb.astype(float), qa.astype(float),
                                         z.astype(float), pb.astype(float),
                                         pa.astype(float), ub_comp, ua_comp,
                                         params, grid)
            qa1, qb1, z1, pa1, pb1, f_alpha = res
            pre = (qa.copy(), qb.copy(), z.copy(), pa.copy(), pb.copy())
            qa = np.where(mask, qa1, qa)
            qb = np.where(mask, qb1, qb)
            z = np.where(mask, z1, z)
            pa = np.where(mask, pa1, pa)
            pb = np.where(mask, pb1, pb)
            cash = np.where(mask, cash + f_alpha, cash)
            log_rows(k, f"arrival_{side}", pre,
                     (izeros, ua_comp, ub_comp, izeros, izeros),
                     (qa, qb, z, pa, pb), (izeros, izeros), mask[:n_log])

        node = _vec_encode(grid, qa, qb, z, pa, pb)
        wait = policy.wait0[k, node].astype(bool)
        ua = policy.u0a[k, node].astype(np.float64)
        ub = policy.u0b[k, node].astype(np.float64)
        ha = policy.ha[k, node].astype(np.int64)
        hb = policy.hb[k, node].astype(np.int64)
        pre = (qa.copy(), qb.copy(), z.copy(), pa.copy(), pb.copy())
        qa1, qb1, z1, pa1, pb1, f_alpha = _vec_interior_trade(
            qa.astype(float), qb.astype(float), z, pa, pb, ua, ub, params, spec)
        qa = np.where(wait, qa, qa1)
        qb = np.where(wait, qb, qb1)
        z = np.where(wait, z, z1)
        pa = np.where(wait, pa, pa1)
        pb = np.where(wait, pb, pb1)
        cash = np.where(wait, cash, cash + f_alpha)

        # interval transition from the post-trade book
        mid = (pa + pb) / 2.0
        u = rng.random((n_paths, 5))
        if policy.model == "binomial":
            ra = np.where(u[:, 0] < 0.5, -1, 1)
            rb = np.where(u[:, 1] < 0.5, -1, 1)
            hid_a = (u[:, 2] >= 0.5) & (u[:, 2] < 0.75)
            hid_b = u[:, 2] >= 0.75
            s1 = pa - pb
            p_arr = np.where(s1 > 1, 0.3 * np.minimum(s1 - 1, 1), 0.0)
            nxt_arr = np.where(u[:, 3] < p_arr / 2, 1,
                               np.where(u[:, 3] < p_arr, 2, 0)).astype(np.int8)
            qa2 = qa + ra
            dep_a = qa2 <= 0
            pa = np.where(dep_a, np.minimum(pa + 1, spec.pa_max), pa)
            qa = np.where(dep_a, np.int64(params.delta_a), np.minimum(qa2, spec.q_max))
            qb2 = qb + rb
            dep_b = qb2 <= 0
            pb = np.where(dep_b, np.maximum(pb - 1, spec.pb_min), pb)
            qb = np.where(dep_b, np.int64(params.delta_b), np.minimum(qb2, spec.q_max))
        else:
            zn = rng.standard_normal((n_paths, 2))
            sqdt = math.sqrt(grid.dt)
            s1 = pa - pb
            lam_a = np.array([min(params.lambda_a(int(s)) * grid.dt, 1.0) for s in s1])
            lam_b = np.array([min(params.lambda_b(int(s)) * grid.dt, 1.0) for s in s1])
            th_a = np.array([min(params.theta_a(int(s)) * grid.dt, 1.0) for s in s1])
            th_b = np.array([min(params.theta_b(int(s)) * grid.dt, 1.0) for s in s1])
            hid_a = u[:, 0] < lam_a
            hid_b = u[:, 1] < lam_b
            na = u[:, 2] < th_a
            nb = u[:, 3] < th_b
            both_pick = u[:, 4] < 0.5
            nxt_arr = np.where(na & nb, np.where(both_pick, 1, 2),
                               np.where(na, 1, np.where(nb, 2, 0))).astype(np.int8)
            qa2 = qa + params.sigma_a * sqdt * zn[:, 0]
            dep_a = qa2 <= 0
            pa = np.where(dep_a, np.minimum(pa + 1, spec.pa_max), pa)
            qa2 = np.where(dep_a, params.delta_a, qa2)
            qa = np.clip(np.ceil(qa2 - 0.5).astype(np.int64), 0, spec.q_max)
            qb2 = qb + params.sigma_b * sqdt * zn[:, 1]
            dep_b = qb2 <= 0
            pb = np.where(dep_b, np.maximum(pb - 1, spec.pb_min), pb)
            qb2 = np.where(dep_b, params.delta_b, qb2)
            qb = np.clip(np.ceil(qb2 - 0.5).astype(np.int64), 0, spec.q_max)

        fill_buy = (ha == 1) & hid_a
        fill_sell = (hb == 1) & hid_b
        z = np.clip(z + np.int64(params.delta_a) * fill_buy
                    - np.int64(params.delta_b) * fill_sell,
                    spec.i_min, spec.i_max)
        cash = cash - params.delta_a * mid * fill_buy
        cash = cash + params.delta_b * mid * fill_sell
        arrival = nxt_arr
        log_rows(k, "interior", pre, (wait.astype(int), ua, ub, ha, hb),
                 (qa, qb, z, pa, pb), (fill_buy.astype(int), fill_sell.astype(int)))

    # terminal trade and reward
    node = _vec_encode(grid, qa, qb, z, pa, pb)
    ua = policy.u0a[kk, node].astype(np.float64)
    ub = policy.u0b[kk, node].astype(np.float64)
    pre = (qa.copy(), qb.copy(), z.copy(), pa.copy(), pb.copy())
    iua = np.floor(ua)
    fua = ua - iua
    iub = np.floor(ub)
    fub = ub - iub
    da, db = params.delta_a, params.delta_b
    ga = np.where(ua >= 1, qa + (ua - 1.0) * da, ua * qa)
    fa = np.where(ua >= 1, pa * (qa + (ua - 1.0) * da)
                  + (0.5 * iua * (iua - 1) + iua * fua) * da, pa * ua * qa)
    gb = np.where(ub >= 1, qb + (ub - 1.0) * db, ub * qb)
    fb = np.where(ub >= 1, pb * (qb + (ub - 1.0) * db)
                  + (0.5 * iub * (iub - 1) + iub * fub) * db, pb * ub * qb)
    cash = cash + (-fa + fb)
    z_term = z + ga - gb
    pa1 = pa + iua.astype(np.int64)
    pb1 = pb - iub.astype(np.int64)
    rewards = reward.r_c * cash + reward.r_i * _vec_inventory_value(
        reward, z_term, pa1, pb1)
    log_rows(kk, "terminal", pre, (izeros, ua, ub, izeros, izeros),
             (np.where(ua >= 1, (1 - fua) * da, (1 - fua) * qa),
              np.where(ub >= 1, (1 - fub) * db, (1 - fub) * qb),
              z_term, pa1, pb1), (izeros, izeros))
    for i in range(n_log):
        episodes[i].reward = float(rewards[i])

    mean = float(rewards.mean())
    se = float(rewards.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return RunStats(n_paths=n_paths, mean_reward=mean, se_reward=se,
                    rewards=rewards, episodes=episodes,
                    mean_terminal_inventory=float(np.mean(z_term)))


def _vec_inventory_value(spec: RewardSpec, z, pa, pb):
    if spec.variant == "linear":
        return z.astype(float)
    if spec.variant == "target_abs":
        return np.abs(z - spec.z0)
    if spec.variant == "target_quad":
        return (z - spec.z0) ** 2
    return np.where(z > 0, (pb - spec.u_b) * z,
                    np.where(z < 0, (pa + spec.u_a) * z, 0.0))


def make_policy(grid: Grid, model: str, epsilon: float,
                interior_fn: Callable, terminal_fn: Callable,
                arrival_fn: Optional[Callable] = None) -> SolveResult:
    """Compile per-node callbacks into runnable policy tables.

    ``interior_fn(k, qa, qb, z, pa, pb) -> (wait, ua, ub, ha, hb)``,
    ``terminal_fn(qa, qb, z, pa, pb) -> (ua, ub)`` and optional
    ``arrival_fn(k, side, qa, qb, z, pa, pb) -> (ua, ub)`` (defaults to
    declining the arrival).  Values are not filled in.
    """
    kk = grid.n_steps
    n = grid.n_nodes
    res = SolveResult(
        model=model, trader=TraderKind.REGULAR.value, epsilon=epsilon,
        grid=grid,
        v0=np.zeros((kk + 1, n)), va=np.zeros((kk + 1, n)),
        vb=np.zeros((kk + 1, n)),
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
    states = grid.node_states()
    for node in range(n):
        qa, qb, z, pa, pb = (int(v) for v in states[node])
        for k in range(kk):
            wait, ua, ub, ha, hb = interior_fn(k, qa, qb, z, pa, pb)
            res.wait0[k, node] = wait
            res.u0a[k, node] = ua
            res.u0b[k, node] = ub
            res.ha[k, node] = ha
            res.hb[k, node] = hb
            if arrival_fn is None:
                uaa, uab = -1.0, 0.0
                uba, ubb = 0.0, -1.0
            else:
                uaa, uab = arrival_fn(k, "ask", qa, qb, z, pa, pb)
                uba, ubb = arrival_fn(k, "bid", qa, qb, z, pa, pb)
            res.uaa[k, node] = uaa
            res.uab[k, node] = uab
            res.uba[k, node] = uba
            res.ubb[k, node] = ubb
        ua, ub = terminal_fn(qa, qb, z, pa, pb)
        res.u0a[kk, node] = ua
        res.u0b[kk, node] = ub
    return res


# ---------------------------------------------------------------------------
# exhaustive oracle


class _OracleEval:
    """Direct decision-tree enumeration of a lattice instance.

    Recurses over every action sequence and every outcome branch with no
    layer tables and no vectorization; shares only the primitive
    accounting with the solver.  The per-instance caches hold the
    *structure* of the problem (control sets per price pair, post-trade
    mappings per (node, action), merged one-step laws per (node, flags)) --
    values are never memoized, so each call walks the full tree.  A branch
    budget guards against oversized instances.
    """

    def __init__(self, prob: CompiledProblem, branch_cap: int):
        if prob.model != "binomial":
            raise ValueError("the oracle enumerates the lattice model only")
        self.prob = prob
        self.cap = branch_cap
        self.used = 0
        self._controls: Dict[Tuple, List[SwitchDecision]] = {}
        self._moves: Dict[Tuple, Tuple] = {}
        self._kernels: Dict[Tuple, List] = {}
        self._hidden: Dict[Tuple, List[HiddenFlags]] = {}

    def _charge(self):
        self.used += 1
        if self.used > self.cap:
            raise RuntimeError("oracle decision-tree budget exceeded")

    def _control_set(self, kind: EventKind, pa: int, pb: int):
        key = (kind, pa, pb)
        if key not in self._controls:
            p = self.prob.params
            self._controls[key] = admissible_controls(
                kind, pa, pb, self.prob.trader, p.pa_bar, p.pb_under,
                self.prob.fraction_mesh)
        return self._controls[key]

    def _move(self, kind: EventKind, x: Tuple, u: SwitchDecision):
        """Snapped post-trade node and cash delta for (node, action)."""
        key = (kind, x, u.ua, u.ub)
        if key not in self._moves:
            (qa1, qb1, z1, pa1, pb1), f_alpha = post_trade_raw(
                kind, x[0], x[1], x[2], x[3], x[4], u, self.prob.params)
            self._moves[key] = (self.prob.grid.snap(qa1, qb1, z1, pa1, pb1),
                                f_alpha)
        return self._moves[key]

    def _kernel(self, y: Tuple, h: HiddenFlags):
        """Merged one-step law from post-trade node ``y`` with flags ``h``:
        list of (probability, next node, event tag)."""
        key = (y, h.ha, h.hb)
        if key not in self._kernels:
            p = self.prob.params
            g = self.prob.grid
            state = BookState(qa=float(y[0]), qb=float(y[1]), pa=y[3], pb=y[4])
            children: Dict[Tuple, float] = {}
            for out in binomial_transitions(state, (h.ha, h.hb), p):
                z2 = y[2] + (p.delta_a * h.ha * out.hidden_fills[0]
                             - p.delta_b * h.hb * out.hidden_fills[1])
                nxt = g.snap(out.next.qa, out.next.qb, z2, out.next.pa,
                             out.next.pb)
                ck = (nxt, out.next.arrival.value)
                children[ck] = children.get(ck, 0.0) + out.prob
            self._kernels[key] = [(pr, nxt, arr)
                                  for (nxt, arr), pr in children.items()]
        return self._kernels[key]

    def _hidden_set(self, pa: int, pb: int):
        key = (pa, pb)
        if key not in self._hidden:
            self._hidden[key] = admissible_hidden(pa, pb, self.prob.params)
        return self._hidden[key]

    def _terminal_move(self, x: Tuple, u: SwitchDecision):
        """Unsnapped terminal post-trade (z, pa, pb) and cash delta."""
        key = ("T", x, u.ua, u.ub)
        if key not in self._moves:
            (_, _, z1, pa1, pb1), f_alpha = post_trade_raw(
                EventKind.TERMINAL, x[0], x[1], x[2], x[3], x[4], u,
                self.prob.params)
            self._moves[key] = (z1, pa1, pb1, f_alpha)
        return self._moves[key]

    def value(self, k: int, x: Tuple, event: str = "none") -> float:
        self._charge()
        g, p, r = self.prob.grid, self.prob.params, self.prob.reward
        qa, qb, z, pa, pb = x
        if k == g.n_steps:
            best = -math.inf
            for u in self._control_set(EventKind.TERMINAL, pa, pb):
                z1, pa1, pb1, f_alpha = self._terminal_move(x, u)
                val = r.r_c * f_alpha + r.r_i * inventory_value(r, z1, pa1, pb1)
                best = max(best, val)
            return best

        if event in ("ask", "bid"):
            kind = (EventKind.ASK_ARRIVAL if event == "ask"
                    else EventKind.BID_ARRIVAL)
            best = -math.inf
            for u in self._control_set(kind, pa, pb):
                nxt, f_alpha = self._move(kind, x, u)
                best = max(best, r.r_c * f_alpha + self.value(k, nxt, "none"))
            return best

        candidates: List[Tuple[Tuple, float]] = [(x, 0.0)]
        for u in self._control_set(EventKind.INTERIOR, pa, pb):
            candidates.append(self._move(EventKind.INTERIOR, x, u))
        best = -math.inf
        for y, f_alpha in candidates:
            mid1 = (y[3] + y[4]) / 2.0
            for h in self._hidden_set(y[3], y[4]):
                drift = (r.r_c * (p.delta_b * h.hb - p.delta_a * h.ha)
                         * mid1 * BINOMIAL_FILL_PROB)
                expect = 0.0
                for pr, nxt, arr in self._kernel(y, h):
                    ev = "none" if arr == 0 else ("ask" if arr == 1 else "bid")
                    expect += pr * self.value(k + 1, nxt, ev)
                best = max(best, r.r_c * f_alpha + drift + expect)
        return best


def oracle_value(prob: CompiledProblem, k: int,
                 x: Tuple[int, int, int, int, int], event: str = "none",
                 branch_cap: int = 5_000_000) -> float:
    """Value of one node by exhaustive decision-tree enumeration."""
    return _OracleEval(prob, branch_cap).value(k, x, event)


def exhaustive_oracle(prob: CompiledProblem, k: int = 0,
                      branch_cap: int = 5_000_000) -> Dict[str, np.ndarray]:
    """Oracle values of every node at time index ``k`` for all three event
    kinds.  Intended for tiny instances; the budget guards the tree size."""
    g = prob.grid
    states = g.node_states()
    out = {name: np.empty(g.n_nodes) for name in ("v0", "va", "vb")}
    ev = _OracleEval(prob, branch_cap)
    for node in range(g.n_nodes):
        ev.used = 0
        x = tuple(int(v) for v in states[node])
        out["v0"][node] = ev.value(k, x, "none")
        if k == g.n_steps:
            out["va"][node] = out["v0"][node]
            out["vb"][node] = out["v0"][node]
        else:
            out["va"][node] = ev.value(k, x, "ask")
            out["vb"][node] = ev.value(k, x, "bid")
    return out


def random_tiny_instance(rng: np.random.Generator) -> CompiledProblem:
    """Random lattice instance small enough for the exhaustive oracle.

    Keeps the price window narrow and shortens the horizon until the
    estimated decision tree stays modest; used by the oracle-equivalence
    checks of both the CLI and the test suite.
    """
    from .dp_solver.grid import GridSpec, build_grid
    from .dp_solver.solver import compile_problem
    from .market_model import ModelParams, parse_intensity

    steps = int(rng.choice([1, 1, 1, 2, 2, 2, 2, 3]))
    p_lo = int(rng.integers(12, 17))
    if steps == 3:
        # one admissible pair at spread one: waiting and hidden orders only,
        # so the tree stays shallow in the action dimension
        width, delta = 1, 1
        q_max = int(rng.integers(1, 3))
        i_half = 1
    elif steps == 2:
        width = int(rng.integers(1, 3))
        delta = 1 if width == 2 else int(rng.integers(1, 3))
        q_max = delta
        i_half = delta if width == 2 else int(rng.integers(delta, delta + 2))
    else:
        width = int(rng.integers(1, 3))
        delta = int(rng.integers(1, 3))
        q_max = delta + int(rng.integers(0, 2))
        i_half = int(rng.integers(delta, 2 * delta + 1))
    n_pairs = width * (width + 1) // 2
    while n_pairs * (2 * i_half + 1) * (q_max + 1) ** 2 > 200:
        if i_half > 1:
            i_half -= 1
        else:
            q_max -= 1
    mesh = float(rng.choice([0.25, 0.5]))
    trader = TraderKind.INTERNALIZING if rng.random() < 0.5 else TraderKind.REGULAR
    epsilon = float(rng.choice([0.0, 0.25, 0.5]))
    variant = rng.choice(["linear", "liquidation", "target_quad"])
    if variant == "linear":
        reward = RewardSpec(r_c=1.0, r_i=float(rng.choice([0.5, 1.0, -0.5])),
                            variant="linear")
    elif variant == "target_quad":
        reward = RewardSpec(r_c=1.0, r_i=-0.2, variant="target_quad", z0=0.0)
    else:
        upen = float(rng.integers(1, 3))
        reward = RewardSpec(r_c=1.0, r_i=1.0, variant="liquidation",
                            u_a=upen, u_b=upen)
    spec = GridSpec(t_start=0.0, t_end=float(steps), steps=steps,
                    q_max=q_max, i_min=-i_half, i_max=i_half,
                    pa_min=p_lo, pa_max=p_lo + width,
                    pb_min=p_lo, pb_max=p_lo + width)
    params = ModelParams(sigma_a=1.0, sigma_b=1.0,
                         delta_a=float(delta), delta_b=float(delta),
                         lambda_a=parse_intensity("table:[0.25]"),
                         lambda_b=parse_intensity("table:[0.25]"),
                         pa_bar=p_lo + width, pb_under=p_lo,
                         horizon=float(steps),
                         pa0=p_lo + 1, pb0=p_lo)
    grid = build_grid(spec)
    return compile_problem("binomial", params, grid, reward, trader,
                           epsilon=epsilon, fraction_mesh=mesh,
                           seed=int(rng.integers(0, 2 ** 31)))


# ---------------------------------------------------------------------------
# internalization advantage


@dataclass
class DiffReport:
    """Per-node relative advantage of the internalizing trader."""

    epsilon: float
    diff: np.ndarray            # advantage on included nodes
    included: np.ndarray        # bool mask over nodes
    n_excluded: int
    floor: float
    frac_in_band: float         # share of included nodes with diff in [1%, 15%]
    weighted_average: float


def v_diff(v_int: float, v_reg: float, floor: float = 0.0) -> float:
    """Relative advantage (v_int - v_reg) / v_reg; rejects a denominator
    below the floor."""
    if abs(v_reg) < floor or v_reg == 0.0:
        raise ValueError("reference value below the denominator floor")
    return (v_int - v_reg) / v_reg


def diff_report(v_int: np.ndarray, v_reg: np.ndarray, epsilon: float,
                weights: Optional[np.ndarray] = None,
                floor_scale: float = 1e-6) -> DiffReport:
    """Nodewise relative advantage with a denominator floor.

    The floor is ``floor_scale`` times the value scale max(1, max |v_reg|);
    nodes below it are excluded and counted.  Weights must sum to one over
    all nodes; they are renormalized over the included set for the average.
    """
    v_int = np.asarray(v_int, dtype=float)
    v_reg = np.asarray(v_reg, dtype=float)
    floor = floor_scale * max(1.0, float(np.max(np.abs(v_reg))))
    included = np.abs(v_reg) >= floor
    if weights is None:
        weights = np.full(v_reg.shape, 1.0 / v_reg.size)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != v_reg.shape:
            raise ValueError("weights shape mismatch")
        if abs(weights.sum() - 1.0) > 1e-9 or np.any(weights < 0):
            raise ValueError("weights must be non-negative and sum to one")
    diff = (v_int[included] - v_reg[included]) / v_reg[included]
    w_inc = weights[included]
    w_sum = w_inc.sum()
    weighted_average = float((diff * w_inc).sum() / w_sum) if w_sum > 0 else 0.0
    in_band = (diff >= 0.01) & (diff <= 0.15)
    frac = float(in_band.mean()) if diff.size else 0.0
    return DiffReport(epsilon=epsilon, diff=diff, included=included,
                      n_excluded=int((~included).sum()), floor=floor,
                      frac_in_band=frac, weighted_average=weighted_average)


def fair_premium(curve: Mapping[float, float], delta: float
                 ) -> Tuple[Optional[float], List[Tuple[float, float, float]]]:
    """Largest strictly positive ladder premium whose weighted average
    advantage stays at or above ``delta``; None if no positive premium
    qualifies.  Also reports violations of the expected decrease of the
    curve in the premium as (eps_low, eps_high, increase) triples."""
    if delta <= 0:
        raise ValueError("threshold must be positive")
    eps_sorted = sorted(curve)
    violations = []
    for lo, hi in zip(eps_sorted, eps_sorted[1:]):
        if curve[hi] > curve[lo] + 1e-12:
            violations.append((lo, hi, curve[hi] - curve[lo]))
    qualifying = [e for e in eps_sorted if e > 0 and curve[e] >= delta]
    return (max(qualifying) if qualifying else None), violations


def premium_report(reg: SolveResult, int_by_eps: Mapping[float, SolveResult],
                   delta: float, weights: Optional[np.ndarray] = None,
                   floor_scale: float = 1e-6) -> Dict:
    """Full premium analysis at the first time index: per-premium advantage
    distributions, the weighted-average curve, and the fair premium."""
    v_reg = reg.v0[0]
    reports = {}
    curve = {}
    for eps in sorted(int_by_eps):
        rep = diff_report(int_by_eps[eps].v0[0], v_reg, eps, weights, floor_scale)
        reports[eps] = rep
        curve[eps] = rep.weighted_average
    eps_star, violations = fair_premium(curve, delta)
    return {
        "curve": curve,
        "fair_premium": eps_star,
        "monotonicity_violations": violations,
        "reports": reports,
        "delta": delta,
    }
