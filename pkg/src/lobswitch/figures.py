"""Figure rendering for the CLI report paths.

Every report command writes its delimited data first and then, unless
figures are disabled, renders companion PNGs next to it with matplotlib.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .market_model import BookTrajectory  # noqa: E402

_SAVE_KW = dict(dpi=130, bbox_inches="tight", metadata={"Software": "lobswitch"})


def _style():
    plt.rcParams.update({
        "figure.figsize": (9.0, 5.0),
        "font.size": 10,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "lines.linewidth": 1.2,
    })


def save_book_figures(traj: BookTrajectory, out_csv: str | Path,
                      path_idx: int = 0) -> List[Path]:
    """Price and volume figures of one simulated book path, saved next to
    the trajectory CSV as <stem>_prices.png and <stem>_volumes.png."""
    _style()
    base = Path(out_csv)
    price_png = base.with_name(base.stem + "_prices.png")
    vol_png = base.with_name(base.stem + "_volumes.png")

    fig, ax = plt.subplots()
    ax.step(traj.t, traj.pa[path_idx], where="post", color="0.55", label="ask")
    ax.step(traj.t, traj.pb[path_idx], where="post", color="0.1", label="bid")
    ax.set_xlabel("time")
    ax.set_ylabel("price (ticks)")
    ax.set_title("Best quotes")
    ax.legend()
    fig.savefig(price_png, **_SAVE_KW)
    plt.close(fig)

    fig, ax = plt.subplots()
    ax.step(traj.t, traj.qa[path_idx], where="post", color="0.55", label="ask volume")
    ax.step(traj.t, -traj.qb[path_idx], where="post", color="0.1", label="-bid volume")
    ax.axhline(0.0, color="k", linewidth=0.6)
    ax.set_xlabel("time")
    ax.set_ylabel("shares")
    ax.set_title("Best-quote volumes")
    ax.legend()
    fig.savefig(vol_png, **_SAVE_KW)
    plt.close(fig)
    return [price_png, vol_png]


def save_trajectory_figure(times, episodes, out_csv: str | Path) -> Path:
    """Quote paths of the logged episodes with trade markers."""
    _style()
    base = Path(out_csv)
    png = base.with_name(base.stem + "_paths.png")
    fig, ax = plt.subplots()
    for ep in episodes:
        t = [times[s.k] for s in ep.steps]
        pa = [s.state[3] for s in ep.steps]
        pb = [s.state[4] for s in ep.steps]
        ax.step(t, pa, where="post", color="0.55", alpha=0.8)
        ax.step(t, pb, where="post", color="0.1", alpha=0.8)
        trades = [(times[s.k], s.state[3]) for s in ep.steps
                  if s.stage != "interior" or not s.wait]
        if trades:
            ax.plot([p[0] for p in trades], [p[1] for p in trades], "o",
                    color="tab:red", markersize=3)
    ax.set_xlabel("time")
    ax.set_ylabel("price (ticks)")
    ax.set_title("Sample paths under the policy (markers: trades)")
    fig.savefig(png, **_SAVE_KW)
    plt.close(fig)
    return png


def save_premium_figures(curve: Dict[float, float], eps_star: Optional[float],
                         diff_at_zero, out_json: str | Path) -> List[Path]:
    """Advantage histogram at zero premium and the premium curve."""
    _style()
    base = Path(out_json)
    hist_png = base.with_name(base.stem + "_diff_hist.png")
    curve_png = base.with_name(base.stem + "_curve.png")

    fig, ax = plt.subplots()
    ax.hist(diff_at_zero, bins=80, color="0.4")
    ax.set_xlabel("relative advantage of internalization (premium 0)")
    ax.set_ylabel("nodes")
    ax.set_title("Internalization advantage across start nodes")
    fig.savefig(hist_png, **_SAVE_KW)
    plt.close(fig)

    fig, ax = plt.subplots()
    eps = sorted(curve)
    ax.plot(eps, [curve[e] for e in eps], "o-", color="0.2")
    if eps_star is not None:
        ax.axvline(eps_star, color="tab:red", linestyle="--",
                   label=f"fair premium {eps_star:g}")
        ax.legend()
    ax.axhline(0.0, color="k", linewidth=0.6)
    ax.set_xlabel("premium")
    ax.set_ylabel("weighted average advantage")
    ax.set_title("Advantage vs internalization premium")
    fig.savefig(curve_png, **_SAVE_KW)
    plt.close(fig)
    return [hist_png, curve_png]
