"""Experiment configuration: one flat, fully-serialized record.

Every hyperparameter of every subsystem lives here so a run directory's
config.json pins the experiment completely; loading rejects unknown keys,
and the sha256 of the canonical JSON is recorded next to the outputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..minisoccer.tasks import TASK_IDS, TaskSpec, make_task, with_comm

ALGORITHMS = ("ma_dreamer", "ma_ppo", "maddpg")


@dataclass
class ExperimentConfig:
    # identity
    task: str = "two_player"
    algorithm: str = "ma_dreamer"
    shared_imagination: bool = True
    comm: bool = False
    seed: int = 0
    out_dir: str = "runs/run"
    # budget and schedule (agent steps = env steps x physical agents)
    agent_steps: int = 100_000
    episode_len: int = 300
    n_workers: int = 8
    train_every: int = 5
    eval_every: int = 5000
    eval_episodes: int = 10
    checkpoint_every: int = 5000
    prefill_episodes: int = 5
    # replay
    replay_capacity: int = 2000
    batch_size: int = 50
    seq_len: int = 50
    # model sizes (model_scale multiplies every width below)
    model_scale: float = 1.0
    deter: int = 128
    stoch: int = 32
    global_deter: int = 256
    global_stoch: int = 64
    encoder_units: int = 400
    encoder_layers: int = 3
    latent_hidden: int = 200
    reward_hidden: int = 200
    # model training
    kl_beta: float = 1.0
    free_nats: float = 1.0
    estimation_weight: float = 1.0
    model_lr: float = 3e-4
    # imagination + policy
    horizon: int = 15
    reward_source: str = "global"
    gamma: float = 0.99
    lam: float = 0.95
    entropy_action: float = 3e-4
    entropy_comm: float = 3e-4
    policy_lr: float = 8e-5
    comm_units: int = 64
    trunk_units: int = 256
    n_symbols: int = 4
    # optimizer
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 100.0
    # exploration (collection time)
    explore_std_start: float = 0.3
    explore_std_final: float = 0.1
    explore_anneal_steps: int = 50_000
    # MA-PPO
    ppo_lr: float = 2.5e-4
    ppo_clip: float = 0.1
    ppo_entropy_coef: float = 0.01
    ppo_value_coef: float = 0.5
    ppo_rollout_steps: int = 128
    ppo_epochs: int = 4
    ppo_encoder_units: int = 256
    ppo_lstm_units: int = 512
    ppo_gae_lambda: float = 0.95
    # MADDPG
    maddpg_units: int = 128
    maddpg_lr_actor: float = 1e-3
    maddpg_lr_critic: float = 1e-3
    maddpg_polyak: float = 0.005
    maddpg_batch_episodes: int = 128
    maddpg_update_every: int = 100
    maddpg_exploration_noise: float = 0.1
    maddpg_gumbel_temperature: float = 1.0

    def validate(self) -> None:
        if self.task not in TASK_IDS:
            raise ValueError(f"unknown task {self.task!r}; choose from {TASK_IDS}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.task == "speaker_listener_fullobs" and self.comm:
            raise ValueError("the full-observability control task has no channel to enable")
        if self.agent_steps < 1 or self.episode_len < 1:
            raise ValueError("budgets must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.reward_source not in ("global", "agent"):
            raise ValueError(f"unknown reward_source {self.reward_source!r}")

    def task_spec(self) -> TaskSpec:
        spec = make_task(self.task, episode_len=self.episode_len)
        return with_comm(spec, self.comm and spec.comm_enabled)


def config_to_json(cfg: ExperimentConfig) -> str:
    return json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_json(cfg).encode("utf-8")).hexdigest()


def load_config(path) -> ExperimentConfig:
    """Strict loader: unknown keys are hard errors."""
    with open(path) as f:
        raw = json.load(f)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**raw)
    cfg.validate()
    return cfg


def save_config(cfg: ExperimentConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config_to_json(cfg))
    (out / "config_hash.txt").write_text(config_hash(cfg) + "\n")


def smoke_config(task: str = "two_player", algorithm: str = "ma_dreamer",
                 **overrides) -> ExperimentConfig:
    """Small-but-real settings for fast tests and determinism checks."""
    base = dict(
        task=task, algorithm=algorithm, episode_len=40, agent_steps=600,
        n_workers=2, train_every=40, eval_every=300, eval_episodes=2,
        checkpoint_every=300, prefill_episodes=2, replay_capacity=50,
        batch_size=6, seq_len=12, model_scale=0.08, horizon=5,
        explore_anneal_steps=400, ppo_rollout_steps=16, ppo_epochs=2,
        maddpg_batch_episodes=4, maddpg_update_every=80,
    )
    base.update(overrides)
    cfg = ExperimentConfig(**base)
    cfg.validate()
    return cfg
