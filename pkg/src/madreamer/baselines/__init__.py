"""Model-free baselines sharing the environment and harness."""

from .maddpg import (
    MaddpgAgents,
    MaddpgConfig,
    build_maddpg,
    build_maddpg_optimizers,
    maddpg_act,
    maddpg_update,
    polyak_update,
)
from .ppo import (
    PpoAgent,
    PpoConfig,
    PpoRollout,
    build_ppo_agents,
    gae_advantages,
    normalize_advantages,
    ppo_act,
    ppo_update,
)

__all__ = [
    "PpoConfig",
    "PpoAgent",
    "PpoRollout",
    "build_ppo_agents",
    "ppo_act",
    "ppo_update",
    "gae_advantages",
    "normalize_advantages",
    "MaddpgConfig",
    "MaddpgAgents",
    "build_maddpg",
    "build_maddpg_optimizers",
    "maddpg_act",
    "maddpg_update",
    "polyak_update",
]
