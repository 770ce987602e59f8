"""Acceptance criteria, one test per criterion.

Each test prints a PASS/FAIL line (run with ``pytest -s`` to see them all).
Criterion 5's wall-time clause needs at least eight hardware threads; on
smaller machines it fails honestly and the printed diagnostics say why.
"""

import os
import time

import numpy as np
import pytest

from lobswitch.dp_solver import build_grid, solve
from lobswitch.dp_solver.grid import GridSpec
from lobswitch.evaluator import (diff_report, exhaustive_oracle, make_policy,
                                 random_tiny_instance, run_policy)
from lobswitch.market_model import ModelParams
from lobswitch.reward import RewardSpec
from lobswitch.strategy_accounting import EventKind, Side, TraderKind, cash_flow
from lobswitch.market_model import simulate_book

from conftest import EPS_LADDER, THREADS

X0 = (5, 5, 0, 16, 15)


def _report(num, ok, detail):
    print(f"ACCEPTANCE {num} {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def test_criterion_1_grid_cardinality():
    t0 = time.perf_counter()
    grid = build_grid(GridSpec())
    elapsed = time.perf_counter() - t0
    combinatorial = 11 * 11 * 41 * 21
    ok = grid.n_nodes == 104181 == combinatorial and elapsed < 1.0
    assert _report(1, ok, f"{grid.n_nodes} admissible nodes "
                          f"(expected 104181 = 11*11*41*21), "
                          f"built in {elapsed:.3f}s")


def test_criterion_2_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    n_instances = 20
    for _ in range(n_instances):
        prob = random_tiny_instance(rng)
        assert prob.grid.n_nodes <= 200 and prob.grid.n_steps <= 3
        res = solve(prob.model, prob.params, prob.grid, prob.reward,
                    prob.trader, epsilon=prob.epsilon,
                    fraction_mesh=prob.fraction_mesh, seed=prob.seed)
        oracle = exhaustive_oracle(prob)
        for name in ("v0", "va", "vb"):
            worst = max(worst, float(np.max(np.abs(
                getattr(res, name)[0] - oracle[name]))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 30.0
    assert _report(2, ok, f"{n_instances} tiny instances, max deviation "
                          f"{worst:.2e} (tol 1e-9), {elapsed:.1f}s (< 30s)")


def test_criterion_3_ordering_theorems(lattice_solves):
    reg = lattice_solves["regular"]
    int0 = lattice_solves[0.0]
    n = reg.v0.size
    viol_kind = int(np.sum(reg.v0 > int0.v0 + 1e-9))
    viol_ladder = 0
    for lo, hi in zip(EPS_LADDER, EPS_LADDER[1:]):
        viol_ladder += int(np.sum(lattice_solves[hi].v0
                                  > lattice_solves[lo].v0 + 1e-9))
    ok = viol_kind == 0 and viol_ladder == 0
    assert _report(3, ok, f"regular <= internalizing(0) at 100% of {n} "
                          f"entries ({viol_kind} violations); premium ladder "
                          f"{EPS_LADDER} non-increasing ({viol_ladder} violations)")


def test_criterion_4_dp_mc_consistency(lattice_solves, lattice_setup):
    params = lattice_setup["params"]
    reward = lattice_setup["reward"]
    grid = lattice_setup["grid"]
    res = lattice_solves["regular"]
    v0 = res.value_at(0, *X0)
    stats = run_policy(res, params, reward, X0, 100_000, seed=77)
    gap = abs(stats.mean_reward - v0)
    ok = gap <= 3 * stats.se_reward

    def always_wait(k, qa, qb, z, pa, pb):
        return (1, 0.0, 0.0, 0, 0)

    def wait_hidden_buy(k, qa, qb, z, pa, pb):
        return (1, 0.0, 0.0, 1 if pb < params.pa_bar else 0, 0)

    def greedy_sell(k, qa, qb, z, pa, pb):
        if pb - params.pb_under >= 1:
            return (0, 0.0, 1.0, 0, 0)
        return (1, 0.0, 0.0, 0, 0)

    def flat_terminal(qa, qb, z, pa, pb):
        return (0.0, 0.0)

    sub_ok = True
    details = []
    for fn in (always_wait, wait_hidden_buy, greedy_sell):
        pol = make_policy(grid, "binomial", 0.0, fn, flat_terminal)
        sub = run_policy(pol, params, reward, X0, 20_000, seed=78)
        good = sub.mean_reward <= v0 + 3 * sub.se_reward
        sub_ok = sub_ok and good
        details.append(f"{fn.__name__}={sub.mean_reward:.2f}")
    ok = ok and sub_ok
    assert _report(4, ok, f"optimal-policy mean {stats.mean_reward:.3f} vs "
                          f"v0 {v0:.3f} (gap {gap:.3f} <= 3*SE="
                          f"{3 * stats.se_reward:.3f}); suboptimal policies "
                          f"<= v0+3SE: {', '.join(details)}")


@pytest.fixture(scope="module")
def thread_sweep(lattice_setup):
    params = lattice_setup["params"]
    reward = lattice_setup["reward"]
    grid = lattice_setup["grid"]
    solve("binomial", params, grid, reward, TraderKind.INTERNALIZING,
          epsilon=0.0, threads=1)  # warm the compiled kernels
    return {p: solve("binomial", params, grid, reward,
                     TraderKind.INTERNALIZING, epsilon=0.0, threads=p)
            for p in (1, 2, 4, 8)}


def test_criterion_5_parallel_determinism(thread_sweep):
    names = ("v0", "va", "vb", "wait0", "u0a", "u0b", "ha", "hb",
             "uaa", "uab", "uba", "ubb")
    identical = all(np.array_equal(getattr(thread_sweep[1], n),
                                   getattr(thread_sweep[p], n))
                    for p in (2, 4, 8) for n in names)
    assert _report(5, identical,
                   f"tables bitwise identical for P in (1,2,4,8): {identical}")


def test_criterion_5_parallel_scaling(thread_sweep):
    t1 = float(np.mean(thread_sweep[1].diagnostics["layer_seconds"]))
    t8 = float(np.mean(thread_sweep[8].diagnostics["layer_seconds"]))
    ratio = t8 / t1
    ok = ratio <= 0.35
    assert _report(
        5, ok,
        f"per-layer wall time P=8/P=1 = {t8 * 1e3:.1f}ms/{t1 * 1e3:.1f}ms "
        f"= {ratio:.2f} (need <= 0.35; host has {os.cpu_count()} hardware "
        f"threads; below 8 physical cores this clause cannot hold)")


def test_criterion_6_accounting_brute_force():
    checked = 0
    for delta in (5, 3):
        for u in range(1, 6):
            for q in range(0, 11):
                for p in range(12, 19):
                    got = cash_flow(Side.ASK, EventKind.INTERIOR, 0, q, p,
                                    float(u), delta, 0.0)
                    ladder = q * p + sum(delta * (p + k) for k in range(1, u))
                    assert got == ladder, (delta, u, q, p)
                    checked += 1
    assert _report(6, True, f"ladder cash identity exact on {checked} "
                            f"(depth, u, q, p) combinations")


def test_criterion_7_advantage_distribution(lattice_solves):
    reg = lattice_solves["regular"].v0[0]
    int0 = lattice_solves[0.0].v0[0]
    rep = diff_report(int0, reg, epsilon=0.0)
    positive = reg > rep.floor
    diff_pos = (int0[positive] - reg[positive]) / reg[positive]
    prop_ok = bool(np.all(diff_pos >= -1e-9))
    in_band = rep.frac_in_band
    flagged = not (0.20 <= in_band <= 0.50)
    note = (" [FLAG: outside the 0.20-0.50 reference band]" if flagged else "")
    ok = prop_ok
    assert _report(7, ok, f"share of nodes with advantage in [1%,15%]: "
                          f"{in_band:.3f} vs ~0.35 reference{note}; "
                          f"advantage >= -1e-9 on all {int(positive.sum())} "
                          f"positive-denominator nodes: {prop_ok}; "
                          f"{rep.n_excluded} below-floor nodes excluded")


def test_criterion_8_pathwise_model_identities():
    params = ModelParams(pa_bar=100, pb_under=0, horizon=600.0,
                         pa0=20, pb0=15, q0_a=5, q0_b=5)
    traj = simulate_book(params, 600.0, 0.5, seed=123, n_paths=10_000)
    ask_identity = bool(np.all(traj.pa - traj.pa[:, :1] == traj.la - traj.na))
    bid_identity = bool(np.all(traj.pb - traj.pb[:, :1] == traj.nb - traj.lb))
    spread_ok = bool(np.all(traj.pa - traj.pb >= 1))
    ok = ask_identity and bid_identity and spread_ok
    assert _report(8, ok, f"10^4 paths x {traj.t.size - 1} steps: price/counter "
                          f"identities exact on both sides "
                          f"({ask_identity}, {bid_identity}); spread >= 1 "
                          f"everywhere: {spread_ok}")
