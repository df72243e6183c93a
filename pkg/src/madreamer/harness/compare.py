"""Cross-run comparison tables with bootstrap ordering verdicts.

Scores each run by its best evaluation point (max over checkpoints of the
mean social episode reward) and reports pairwise orderings with bootstrap
confidence over the episode-level rewards recorded at that point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..diffcore.rng import Rng
from .config import load_config


@dataclass
class RunScore:
    run_dir: str
    algorithm: str
    shared_imagination: str
    communications: str
    seed: int
    max_avg_reward: float
    best_episode_rewards: list[float]


def _load_run(run_dir: Path) -> RunScore:
    cfg = load_config(run_dir / "config.json")
    points = []
    path = run_dir / "evals.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"{run_dir} has no evaluation history (incomplete run)")
    with open(path) as f:
        for line in f:
            if line.strip():
                points.append(json.loads(line))
    if not points:
        raise ValueError(f"{run_dir} has an empty evaluation history")
    best = max(points, key=lambda p: float(np.mean(p["social"])))
    shared = ("NA" if cfg.algorithm != "ma_dreamer"
              else ("Enabled" if cfg.shared_imagination else "Disabled"))
    return RunScore(
        run_dir=str(run_dir), algorithm=cfg.algorithm, shared_imagination=shared,
        communications="Enabled" if cfg.comm else "Disabled", seed=cfg.seed,
        max_avg_reward=float(np.mean(best["social"])),
        best_episode_rewards=[float(x) for x in best["social"]])


def bootstrap_greater(a: list[float], b: list[float], n_boot: int = 2000,
                      seed: int = 0) -> float:
    """P(mean(a) > mean(b)) under episode-level bootstrap resampling."""
    rng = Rng(seed).gen
    a = np.asarray(a)
    b = np.asarray(b)
    ia = rng.integers(0, len(a), size=(n_boot, len(a)))
    ib = rng.integers(0, len(b), size=(n_boot, len(b)))
    return float(np.mean(a[ia].mean(axis=1) > b[ib].mean(axis=1)))


def compare(run_dirs, n_boot: int = 2000) -> dict:
    """Build the ordering table; returns {'rows': ..., 'pairs': ..., 'table': str}."""
    if len(run_dirs) < 2:
        raise ValueError("need at least 2 completed runs to compare")
    scores = [_load_run(Path(d)) for d in run_dirs]
    scores.sort(key=lambda s: -s.max_avg_reward)
    header = f"{'Algorithm':<12} {'Shared imagination':<19} {'Communications':<15} {'Max. avg. reward':>17}"
    lines = [header, "-" * len(header)]
    for s in scores:
        lines.append(f"{s.algorithm:<12} {s.shared_imagination:<19} "
                     f"{s.communications:<15} {s.max_avg_reward:>17.3f}")
    pairs = []
    for i in range(len(scores)):
        for j in range(i + 1, len(scores)):
            a, b = scores[i], scores[j]
            p = bootstrap_greater(a.best_episode_rewards, b.best_episode_rewards,
                                  n_boot=n_boot)
            verdict = "a>b" if p >= 0.95 else ("b>a" if p <= 0.05 else "tie")
            pairs.append({"a": a.run_dir, "b": b.run_dir, "p_a_greater": p,
                          "verdict": verdict})
    return {
        "rows": [vars(s) for s in scores],
        "pairs": pairs,
        "table": "\n".join(lines),
    }
