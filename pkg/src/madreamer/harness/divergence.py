"""Naive-vs-shared imagined-rollout divergence measurement.

Collects fresh episodes with a trained policy, anchors both rollout modes at
the same replayed states, and measures how far the two agents' imagined
pictures of the same physical facts drift apart per step.  The headline
number is the horizon-step comparison with a bootstrap p-value over start
states.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..diffcore.rng import Rng
from ..imagination import (
    RolloutConfig,
    naive_rollout,
    rollout_divergence_detail,
    shared_rollout,
)
from ..replay import ReplayBuffer
from .collect import EnvWorker
from .config import load_config
from .runtime import DreamerDriver, build_dreamer_bundle, load_dreamer_checkpoint


def collect_episodes(bundle, task, n_episodes: int, seed: int,
                     explore_std: float = 0.1) -> ReplayBuffer:
    rng = Rng(seed)
    buffer = ReplayBuffer(max(n_episodes, 1))
    worker = EnvWorker(task, rng.split("div_env"))
    driver = DreamerDriver(bundle, 1, rng.split("div_drive"), greedy=False,
                           explore_std=explore_std)
    for _ in range(n_episodes):
        worker.begin_episode()
        driver.reset_row(0)
        done = False
        while not done:
            actions, symbols = driver.step([worker.obs])
            _, done = worker.step(actions[0], symbols[0])
        episode, _ = worker.take_episode()
        buffer.add_episode(episode)
    return buffer


def measure_divergence(run_dir, horizon: int = 15, n_starts: int = 500,
                       n_episodes: int = 8, seed: int = 1234,
                       n_boot: int = 2000) -> dict:
    """Returns the per-step curves and the horizon-step bootstrap comparison.

    Requires a run trained with the global model (shared imagination) on a
    2-player task so both rollout modes are available from one checkpoint.
    """
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.json")
    task = cfg.task_spec()
    if task.n_physical < 2:
        raise ValueError("divergence needs a 2-player task (two chains to compare)")
    bundle = build_dreamer_bundle(cfg, with_global=True)
    ckpt = run_dir / "checkpoints" / "best"
    if not ckpt.exists():
        ckpt = run_dir / "checkpoints" / "last"
    load_dreamer_checkpoint(bundle, ckpt)

    buffer = collect_episodes(bundle, task, n_episodes, seed)
    rng = Rng(seed).split("divergence")
    seq_len = min(cfg.seq_len, min(e.length for e in buffer.episodes))
    batch_rows = int(np.ceil(n_starts / seq_len))
    batch = buffer.sample_sequences(batch_rows, seq_len, rng.split("batch"))
    starts = buffer.sample_start_states(batch)
    if starts.count > n_starts:
        starts.global_states = starts.global_states[:n_starts]
        starts.obs = [{k: v[:n_starts] for k, v in agent.items()} for agent in starts.obs]

    rcfg = RolloutConfig(horizon=horizon, n_agents=task.n_physical, comm=False)
    naive = naive_rollout(bundle.models, bundle.policies, starts, rcfg, task,
                          rng.split("naive"))
    shared = shared_rollout(bundle.gmodel, bundle.models, bundle.policies, starts,
                            rcfg, task, rng.split("shared"))

    def pairwise(traj):
        mats = []
        for i in range(task.n_physical):
            for j in range(i + 1, task.n_physical):
                mats.append(rollout_divergence_detail(
                    traj.chain(i, bundle.models[i]), traj.chain(j, bundle.models[j]),
                    agent_indices=(i, j)))
        return np.mean(np.stack(mats), axis=0)  # (h+1, N)

    d_naive = pairwise(naive)
    d_shared = pairwise(shared)

    # bootstrap over start states at the horizon step
    boot_rng = Rng(seed).split("boot").gen
    n = d_naive.shape[1]
    idx = boot_rng.integers(0, n, size=(n_boot, n))
    diffs = d_naive[-1][idx].mean(axis=1) - d_shared[-1][idx].mean(axis=1)
    p_value = float(np.mean(diffs <= 0))

    result = {
        "horizon": horizon,
        "n_starts": int(n),
        "naive_mean": d_naive.mean(axis=1).tolist(),
        "shared_mean": d_shared.mean(axis=1).tolist(),
        "naive_at_horizon": float(d_naive[-1].mean()),
        "shared_at_horizon": float(d_shared[-1].mean()),
        "bootstrap_p_naive_not_greater": p_value,
    }
    with open(run_dir / "divergence.csv", "w") as f:
        f.write("step,naive_mean,shared_mean\n")
        for t in range(horizon + 1):
            f.write(f"{t},{result['naive_mean'][t]!r},{result['shared_mean'][t]!r}\n")
    (run_dir / "divergence.json").write_text(json.dumps(result, indent=2))
    return result
