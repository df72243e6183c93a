"""Greedy evaluation of a finished run.

Loads only what decentralized execution needs: for the model-based method
that is the per-agent models and the policy networks; the global checkpoint
is never read (delete it and this still works).
"""

from __future__ import annotations

import json
from pathlib import Path

from ..diffcore.nn import Params
from ..diffcore.rng import Rng
from .config import ExperimentConfig, load_config
from .runtime import (
    AGENTS_CKPT,
    POLICIES_CKPT,
    build_dreamer_bundle,
    load_dreamer_checkpoint,
    load_simple_checkpoint,
    run_eval_episodes,
)


def _checkpoint_dir(run_dir: Path, prefer: str = "best") -> Path:
    for tag in (prefer, "last", "best"):
        cand = run_dir / "checkpoints" / tag
        if cand.exists():
            return cand
    raise FileNotFoundError(f"no checkpoints under {run_dir / 'checkpoints'}")


def build_eval_driver_factory(cfg: ExperimentConfig, ckpt_dir: Path):
    """Returns (factory, task).  Only evaluation-time components are loaded."""
    task = cfg.task_spec()
    if cfg.algorithm == "ma_dreamer":
        bundle = build_dreamer_bundle(cfg, with_global=False)
        missing = [p for p in (AGENTS_CKPT, POLICIES_CKPT) if not (ckpt_dir / p).exists()]
        if missing:
            raise FileNotFoundError(f"missing agent checkpoints in {ckpt_dir}: {missing}")
        load_dreamer_checkpoint(bundle, ckpt_dir)
        from .runtime import DreamerDriver
        return (lambda n, rng: DreamerDriver(bundle, n, rng, greedy=True)), task
    if cfg.algorithm == "ma_ppo":
        from ..baselines.ppo import PpoConfig, build_ppo_agents
        from ..minisoccer import stream_widths
        from .train import PpoDriver, PpoTrainer
        s = lambda w: max(8, int(round(w * cfg.model_scale)))
        pcfg = PpoConfig(encoder_widths=tuple([s(cfg.ppo_encoder_units)] * 3),
                         lstm_units=s(cfg.ppo_lstm_units))
        params = Params(Rng(cfg.seed).split("ppo_params"))
        agents = build_ppo_agents(params, task,
                                  [stream_widths(task, i) for i in range(task.n_agents)], pcfg)
        load_simple_checkpoint(params, ckpt_dir)
        return (lambda n, rng: PpoDriver(agents, task, n, None)), task
    if cfg.algorithm == "maddpg":
        from ..baselines.maddpg import MaddpgConfig, build_maddpg
        from ..minisoccer import stream_widths
        from .train import MaddpgDriver
        s = lambda w: max(8, int(round(w * cfg.model_scale)))
        mcfg = MaddpgConfig(units=s(cfg.maddpg_units))
        agents = build_maddpg(task, [stream_widths(task, i) for i in range(task.n_agents)],
                              mcfg, Rng(cfg.seed))
        load_simple_checkpoint(agents.params, ckpt_dir)
        return (lambda n, rng: MaddpgDriver(agents, task, mcfg, n, None)), task
    raise ValueError(f"unknown algorithm {cfg.algorithm!r}")


def evaluate(run_dir, n_episodes: int = 50, seed: int | None = None,
             checkpoint: str = "best") -> dict:
    """Evaluation protocol: greedy policies over `n_episodes` fresh episodes."""
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.json")
    ckpt = _checkpoint_dir(run_dir, prefer=checkpoint)
    factory, task = build_eval_driver_factory(cfg, ckpt)
    eval_seed = seed if seed is not None else cfg.seed + 7919
    stats = run_eval_episodes(factory, task, n_episodes, eval_seed)
    stats["symbol_counts"] = stats["symbol_counts"].tolist()
    stats["checkpoint"] = str(ckpt)
    stats["run_dir"] = str(run_dir)
    (run_dir / "eval.json").write_text(json.dumps(stats, indent=2))
    return stats
