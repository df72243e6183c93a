"""SVG plots from run metrics, with matching plot-data CSV dumps.

Every figure family gets one SVG plus one CSV whose values are copied from
the metrics files verbatim, so plotted numbers can be traced back exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .metrics import read_metrics_csv


def _save_csv(path, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    rows = zip(*[columns[n] for n in names])
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(names)
        for row in rows:
            writer.writerow([repr(float(v)) if v == v else "" for v in row])


def emit_plots(run_dir) -> list[Path]:
    """Reward/loss/symbol (and divergence, when measured) figures for one run."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(run_dir)
    metrics_path = run_dir / "metrics.csv"
    if not metrics_path.exists():
        raise FileNotFoundError(f"no metrics at {metrics_path}")
    metrics = read_metrics_csv(metrics_path)
    if metrics["env_steps"].size == 0:
        raise ValueError("metrics file is empty")
    out = []
    plots_dir = run_dir / "plots"
    plots_dir.mkdir(exist_ok=True)

    # reward curve from evaluation history
    evals_path = run_dir / "evals.csv"
    if evals_path.exists():
        ev = read_metrics_csv(evals_path)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(ev["agent_steps"], ev["mean_social"], marker="o")
        ax.fill_between(ev["agent_steps"], ev["mean_social"] - ev["std_social"],
                        ev["mean_social"] + ev["std_social"], alpha=0.2)
        ax.set_xlabel("agent steps")
        ax.set_ylabel("social episode reward")
        ax.set_title("evaluation reward")
        fig.tight_layout()
        p = plots_dir / "reward.svg"
        fig.savefig(p)
        plt.close(fig)
        _save_csv(plots_dir / "reward.csv",
                  {k: ev[k] for k in ("agent_steps", "mean_social", "std_social")})
        out.append(p)

    # loss curves
    loss_keys = [k for k in metrics
                 if k not in ("env_steps", "agent_steps", "update_index")
                 and not k.startswith(("episode_", "symbol_freq"))
                 and k != "symbol_entropy" and np.isfinite(metrics[k]).any()]
    if loss_keys:
        fig, ax = plt.subplots(figsize=(7, 4))
        for k in loss_keys:
            ax.plot(metrics["agent_steps"], metrics[k], label=k, linewidth=0.9)
        ax.set_xlabel("agent steps")
        ax.set_yscale("symlog")
        ax.legend(fontsize=6, ncol=2)
        ax.set_title("training losses")
        fig.tight_layout()
        p = plots_dir / "losses.svg"
        fig.savefig(p)
        plt.close(fig)
        _save_csv(plots_dir / "losses.csv",
                  {"agent_steps": metrics["agent_steps"],
                   **{k: metrics[k] for k in loss_keys}})
        out.append(p)

    # symbol usage over time
    freq_keys = sorted(k for k in metrics if k.startswith("symbol_freq"))
    if freq_keys and np.isfinite(metrics[freq_keys[0]]).any():
        fig, ax = plt.subplots(figsize=(6, 4))
        for k in freq_keys:
            ax.plot(metrics["agent_steps"], metrics[k], label=k)
        ax.plot(metrics["agent_steps"], metrics["symbol_entropy"], "k--",
                label="usage entropy")
        ax.set_xlabel("agent steps")
        ax.legend(fontsize=7)
        ax.set_title("symbol usage")
        fig.tight_layout()
        p = plots_dir / "symbols.svg"
        fig.savefig(p)
        plt.close(fig)
        _save_csv(plots_dir / "symbols.csv",
                  {"agent_steps": metrics["agent_steps"],
                   **{k: metrics[k] for k in freq_keys},
                   "symbol_entropy": metrics["symbol_entropy"]})
        out.append(p)

    # divergence curves, when the analysis has been run
    div_path = run_dir / "divergence.csv"
    if div_path.exists():
        dv = read_metrics_csv(div_path)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(dv["step"], dv["naive_mean"], label="naive")
        ax.plot(dv["step"], dv["shared_mean"], label="shared")
        ax.set_xlabel("imagination step")
        ax.set_ylabel("decoded-position divergence (m)")
        ax.legend()
        ax.set_title("imagined-rollout divergence")
        fig.tight_layout()
        p = plots_dir / "divergence.svg"
        fig.savefig(p)
        plt.close(fig)
        _save_csv(plots_dir / "divergence.csv", {k: dv[k] for k in dv})
        out.append(p)
    return out
