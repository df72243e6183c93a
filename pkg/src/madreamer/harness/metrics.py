"""Append-only training metrics.

`metrics.csv` holds the deterministic columns (bit-identical across reruns
of the same config+seed); wall-clock timings go to the separate
`timings.csv` so determinism checks stay meaningful.  Evaluation summaries
append to `evals.csv` plus one JSON line per point with the raw per-episode
rewards for later bootstrap analyses.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class MetricsRow:
    env_steps: int
    agent_steps: int
    update_index: int
    losses: dict[str, float]
    episode_social_reward: float | None
    per_agent_reward: list[float] | None
    symbol_freq: list[float] | None
    symbol_entropy: float | None
    wall_time_s: float = 0.0


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


class MetricsWriter:
    def __init__(self, run_dir, loss_keys: list[str], n_agents: int, n_symbols: int):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.loss_keys = list(loss_keys)
        self.n_agents = n_agents
        self.n_symbols = n_symbols
        self._t0 = time.monotonic()
        cols = ["env_steps", "agent_steps", "update_index"]
        cols += self.loss_keys
        cols += ["episode_social_reward"]
        cols += [f"episode_reward_agent{i}" for i in range(n_agents)]
        cols += [f"symbol_freq{k}" for k in range(n_symbols)]
        cols += ["symbol_entropy"]
        self.columns = cols
        self._metrics = open(self.run_dir / "metrics.csv", "w")
        self._metrics.write(",".join(cols) + "\n")
        self._timings = open(self.run_dir / "timings.csv", "w")
        self._timings.write("update_index,wall_time_s\n")
        self._evals = None
        self._evals_jsonl = None

    def write(self, row: MetricsRow) -> None:
        vals = [row.env_steps, row.agent_steps, row.update_index]
        vals += [row.losses.get(k) for k in self.loss_keys]
        vals += [row.episode_social_reward]
        agents = row.per_agent_reward or [None] * self.n_agents
        vals += list(agents) + [None] * (self.n_agents - len(agents))
        freqs = row.symbol_freq or [None] * self.n_symbols
        vals += list(freqs)
        vals += [row.symbol_entropy]
        self._metrics.write(",".join(_fmt(v) for v in vals) + "\n")
        self._metrics.flush()
        self._timings.write(f"{row.update_index},{time.monotonic() - self._t0:.3f}\n")
        self._timings.flush()

    def write_eval(self, agent_steps: int, stats: dict) -> None:
        if self._evals is None:
            self._evals = open(self.run_dir / "evals.csv", "w")
            cols = ["agent_steps", "mean_social", "std_social",
                    "correct_goal_rate", "wrong_goal_rate"]
            cols += [f"mean_agent{i}" for i in range(self.n_agents)]
            self._evals.write(",".join(cols) + "\n")
            self._evals_jsonl = open(self.run_dir / "evals.jsonl", "w")
        vals = [agent_steps, stats["mean_social"], stats["std_social"],
                stats["correct_goal_rate"], stats["wrong_goal_rate"]]
        vals += list(stats["mean_per_agent"])
        self._evals.write(",".join(_fmt(v) for v in vals) + "\n")
        self._evals.flush()
        detail = {"agent_steps": agent_steps,
                  "social": [float(x) for x in stats["episode_social"]],
                  "goals": [int(g) for g in stats["episode_goals"]]}
        self._evals_jsonl.write(json.dumps(detail) + "\n")
        self._evals_jsonl.flush()

    def close(self) -> None:
        self._metrics.close()
        self._timings.close()
        if self._evals is not None:
            self._evals.close()
            self._evals_jsonl.close()


def symbol_statistics(symbol_counts: np.ndarray) -> tuple[list[float], float]:
    """Per-symbol frequencies and the entropy of the usage distribution."""
    total = symbol_counts.sum()
    if total <= 0:
        k = symbol_counts.shape[-1]
        return [0.0] * k, 0.0
    freq = symbol_counts.sum(axis=0) / total
    nz = freq[freq > 0]
    entropy = float(-(nz * np.log(nz)).sum())
    return [float(f) for f in freq], entropy


def read_metrics_csv(path) -> dict[str, np.ndarray]:
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        vals = [float(v) if v else np.nan for v in col]
        out[name] = np.array(vals)
    return out
