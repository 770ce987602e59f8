"""Command line entry point.

Subcommands: ``book-sim`` (uncontrolled book simulation), ``solve``
(backward induction), ``evaluate`` (forward policy simulation),
``premium`` (internalization advantage and fair premium) and
``oracle-check`` (solver vs exhaustive enumeration on tiny instances).

Exit codes: 0 success, 1 runtime failure, 2 missing input file,
64 usage error, 65 malformed config.  Output files embed the run's
config hash and are byte-reproducible from (config, seed).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .config import (ConfigError, config_hash, grid_from_config,
                     model_params_from_config, parse_kv_file,
                     reward_from_config)
from .dp_solver import build_grid, load_policy, save_policy, solve
from .evaluator import premium_report, run_policy
from .market_model import simulate_book
from .strategy_accounting import TraderKind

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_MISSING = 2
EXIT_USAGE = 64
EXIT_BADCONFIG = 65

logger = logging.getLogger("lobswitch")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _MissingInput(Exception):
    pass


def _default_threads() -> int:
    env = os.environ.get("LOBSWITCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise _MissingInput(f"missing input file: {path}")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lobswitch",
                     description="order-book switching strategies: simulate, "
                                 "solve, evaluate")
    parser.add_argument("--version", action="version",
                        version=f"lobswitch {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("book-sim", parents=[], add_help=True,
                       help="simulate the uncontrolled order book")
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", required=True, help="market params config")
    p.add_argument("--out", required=True, help="trajectory CSV path")
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("solve", help="run the backward induction")
    p.add_argument("--model", choices=["binomial", "continuous"],
                   default="binomial")
    p.add_argument("--trader", choices=["regular", "internalizing"],
                   required=True)
    p.add_argument("--epsilon", type=float, default=None,
                   help="internalization premium (default: from params)")
    p.add_argument("--params", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--reward", required=True)
    p.add_argument("--mc-samples", type=int, default=512)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--fraction-mesh", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="policy/value table path")
    p.add_argument("--format", choices=["bin", "csv"], default="bin")

    p = sub.add_parser("evaluate", help="simulate a solved policy forward")
    p.add_argument("--policy", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--reward", required=True)
    p.add_argument("--paths", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0", required=True,
                   help="start node qa,qb,z,pa,pb e.g. 5,5,0,16,15")
    p.add_argument("--log-paths", type=int, default=3)
    p.add_argument("--out", required=True, help="trajectory CSV path")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("premium", help="internalization advantage analysis")
    p.add_argument("--model", choices=["binomial", "continuous"],
                   default="binomial")
    p.add_argument("--params", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--reward", required=True)
    p.add_argument("--epsilon-ladder", default="0,0.25,0.5,1")
    p.add_argument("--weights", default="uniform",
                   help="'uniform' or a CSV file of node,weight rows")
    p.add_argument("--delta", type=float, default=0.005)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--mc-samples", type=int, default=512)
    p.add_argument("--fraction-mesh", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("oracle-check",
                       help="compare the solver against exhaustive enumeration")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--branch-cap", type=int, default=5_000_000)
    return parser


def _cmd_book_sim(args) -> int:
    kv = parse_kv_file(_require_file(args.params))
    params = model_params_from_config(args.params)
    chash = config_hash(kv, extra={"t_end": args.t_end, "dt": args.dt,
                                   "seed": args.seed, "paths": args.paths})
    traj = simulate_book(params, args.t_end, args.dt, args.seed,
                         n_paths=args.paths)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={chash}\n")
        fh.write("t,qa,qb,pa,pb,La,Lb,Na,Nb\n")
        for i in range(len(traj.t)):
            fh.write("%.17g,%.17g,%.17g,%d,%d,%d,%d,%d,%d\n" % (
                traj.t[i], traj.qa[0, i], traj.qb[0, i], traj.pa[0, i],
                traj.pb[0, i], traj.la[0, i], traj.lb[0, i],
                traj.na[0, i], traj.nb[0, i]))
    logger.info("wrote %s (%d steps, %d paths simulated)", out,
                len(traj.t) - 1, args.paths)
    if not args.no_figures:
        from .figures import save_book_figures
        for png in save_book_figures(traj, out):
            logger.info("wrote %s", png)
    return EXIT_OK


def _load_solve_inputs(args):
    params_kv = parse_kv_file(_require_file(args.params))
    grid_kv = parse_kv_file(_require_file(args.grid))
    reward_kv = parse_kv_file(_require_file(args.reward))
    params = model_params_from_config(args.params)
    grid = build_grid(grid_from_config(args.grid))
    reward = reward_from_config(args.reward)
    return params, grid, reward, (params_kv, grid_kv, reward_kv)


def _cmd_solve(args) -> int:
    params, grid, reward, kvs = _load_solve_inputs(args)
    threads = args.threads if args.threads is not None else _default_threads()
    chash = config_hash(*kvs, extra={
        "model": args.model, "trader": args.trader, "epsilon": args.epsilon,
        "fraction_mesh": args.fraction_mesh, "mc_samples": args.mc_samples,
        "seed": args.seed})
    result = solve(args.model, params, grid, reward,
                   TraderKind(args.trader), epsilon=args.epsilon,
                   threads=threads, mc_samples=args.mc_samples,
                   fraction_mesh=args.fraction_mesh, seed=args.seed)
    save_policy(result, args.out, fmt=args.format, config_hash=chash)
    logger.info("wrote %s (%d layers x %d nodes, format %s)", args.out,
                result.v0.shape[0], result.v0.shape[1], args.format)
    return EXIT_OK


def _parse_x0(text: str):
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 5:
        raise ConfigError("x0 must be qa,qb,z,pa,pb")
    return tuple(parts)


def _cmd_evaluate(args) -> int:
    policy = load_policy(_require_file(args.policy))
    params_kv = parse_kv_file(_require_file(args.params))
    reward_kv = parse_kv_file(_require_file(args.reward))
    params = model_params_from_config(args.params)
    reward = reward_from_config(args.reward)
    x0 = _parse_x0(args.x0)
    chash = config_hash(params_kv, reward_kv, extra={
        "policy": Path(args.policy).name, "paths": args.paths,
        "seed": args.seed, "x0": args.x0})
    stats = run_policy(policy, params, reward, x0, args.paths, args.seed,
                       n_log=args.log_paths)
    times = policy.grid.times
    out = Path(args.out)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={chash}\n")
        fh.write(f"# mean_reward={stats.mean_reward!r}\n")
        fh.write(f"# se_reward={stats.se_reward!r}\n")
        fh.write(f"# n_paths={stats.n_paths}\n")
        fh.write("t,qa,qb,pa,pb,action,ua,ub,ha,hb,inventory,cash\n")
        for ep in stats.episodes:
            for s in ep.steps:
                action = ("wait" if s.stage == "interior" and s.wait
                          else "trade" if s.stage == "interior"
                          else s.stage)
                fh.write("%.17g,%d,%d,%d,%d,%s,%.9g,%.9g,%d,%d,%.17g,%.17g\n" % (
                    times[s.k], s.state[0], s.state[1], s.state[3], s.state[4],
                    action, s.ua, s.ub, s.ha, s.hb, s.inventory, s.cash))
    logger.info("mean reward %.6f +- %.6f SE over %d paths; wrote %s",
                stats.mean_reward, stats.se_reward, stats.n_paths, out)
    if not args.no_figures:
        from .figures import save_trajectory_figure
        logger.info("wrote %s", save_trajectory_figure(times, stats.episodes, out))
    return EXIT_OK


def _load_weights(spec: str, n_nodes: int) -> Optional[np.ndarray]:
    if spec == "uniform":
        return None
    path = _require_file(spec)
    weights = np.zeros(n_nodes)
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("node"):
            continue
        try:
            node_s, w_s = line.split(",")
            weights[int(node_s)] = float(w_s)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad weight row") from exc
    return weights


def _cmd_premium(args) -> int:
    params, grid, reward, kvs = _load_solve_inputs(args)
    threads = args.threads if args.threads is not None else _default_threads()
    ladder = sorted({float(v) for v in args.epsilon_ladder.split(",")})
    if not ladder or any(e < 0 for e in ladder):
        raise ConfigError("premium ladder must be non-negative")
    weights = _load_weights(args.weights, grid.n_nodes)
    chash = config_hash(*kvs, extra={
        "model": args.model, "ladder": ladder, "delta": args.delta,
        "weights": args.weights, "seed": args.seed})

    logger.info("solving regular trader")
    reg = solve(args.model, params, grid, reward, TraderKind.REGULAR,
                threads=threads, mc_samples=args.mc_samples,
                fraction_mesh=args.fraction_mesh, seed=args.seed)
    int_by_eps = {}
    for eps in ladder:
        logger.info("solving internalizing trader, premium %g", eps)
        int_by_eps[eps] = solve(args.model, params, grid, reward,
                                TraderKind.INTERNALIZING, epsilon=eps,
                                threads=threads, mc_samples=args.mc_samples,
                                fraction_mesh=args.fraction_mesh,
                                seed=args.seed)
    report = premium_report(reg, int_by_eps, args.delta, weights)
    payload = {
        "config_hash": chash,
        "delta": args.delta,
        "epsilon_ladder": ladder,
        "curve": {str(e): report["curve"][e] for e in ladder},
        "fair_premium": report["fair_premium"],
        "monotonicity_violations": report["monotonicity_violations"],
        "per_epsilon": {
            str(e): {
                "weighted_average": rep.weighted_average,
                "frac_in_band_1pct_15pct": rep.frac_in_band,
                "n_excluded": rep.n_excluded,
                "floor": rep.floor,
            } for e, rep in report["reports"].items()
        },
    }
    out = Path(args.out)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    logger.info("fair premium: %s; wrote %s", report["fair_premium"], out)
    if not args.no_figures:
        from .figures import save_premium_figures
        zero = min(report["reports"])
        for png in save_premium_figures(report["curve"],
                                        report["fair_premium"],
                                        report["reports"][zero].diff, out):
            logger.info("wrote %s", png)
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    from .evaluator import exhaustive_oracle, random_tiny_instance

    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for i in range(args.instances):
        prob = random_tiny_instance(rng)
        res = solve(prob.model, prob.params, prob.grid, prob.reward,
                    prob.trader, epsilon=prob.epsilon,
                    fraction_mesh=prob.fraction_mesh, seed=prob.seed)
        oracle = exhaustive_oracle(prob, branch_cap=args.branch_cap)
        diff = max(float(np.max(np.abs(res.v0[0] - oracle["v0"]))),
                   float(np.max(np.abs(res.va[0] - oracle["va"]))),
                   float(np.max(np.abs(res.vb[0] - oracle["vb"]))))
        worst = max(worst, diff)
        logger.info("instance %2d: %4d nodes, %d steps, trader %-13s "
                    "max |solver - oracle| = %.3e", i, prob.grid.n_nodes,
                    prob.grid.n_steps, prob.trader.value, diff)
    if worst > args.tolerance:
        logger.error("oracle mismatch: %.3e > %.3e", worst, args.tolerance)
        return EXIT_RUNTIME
    logger.info("all %d instances within %.1e", args.instances, args.tolerance)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s",
                        stream=sys.stdout, force=True)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        handler = {
            "book-sim": _cmd_book_sim,
            "solve": _cmd_solve,
            "evaluate": _cmd_evaluate,
            "premium": _cmd_premium,
            "oracle-check": _cmd_oracle_check,
        }[args.command]
        return handler(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _MissingInput as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BADCONFIG
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
