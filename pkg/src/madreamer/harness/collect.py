"""Environment workers: episode assembly shared by every algorithm.

A worker owns one environment instance, hands out observations (with the
previous step's symbols attached), records the episode arrays, and reports
completed episodes plus summary stats.  Symbols emitted at step t are heard
at step t+1, matching the imagination rollouts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore.rng import Rng
from ..minisoccer import (
    AgentObs,
    PhysAction,
    TaskSpec,
    global_state,
    incoming_comm,
    observe,
    reset,
    step,
)
from ..replay import Episode


@dataclass
class EpisodeStats:
    social_reward: float
    per_agent_reward: np.ndarray
    length: int
    goal: int                      # +1 correct goal, -1 wrong goal, 0 timeout
    symbol_counts: np.ndarray      # (n_agents, K)


class EnvWorker:
    def __init__(self, task: TaskSpec, rng: Rng):
        self.task = task
        self.rng = rng
        self.episode_index = 0
        self.world = None
        self.obs: list[AgentObs] = []
        self._rows = None
        self._last_symbols: dict[int, np.ndarray] | None = None

    def begin_episode(self) -> list[AgentObs]:
        seed = int(self.rng.split(f"episode{self.episode_index}").integers(0, 2 ** 31))
        self.episode_index += 1
        self.world = reset(self.task, seed)
        self._last_symbols = None
        self._rows = {
            "obs": [{} for _ in range(self.task.n_agents)],
            "actions": [], "symbols": [], "rewards": [], "gstates": [],
        }
        self._refresh_obs()
        return self.obs

    def _refresh_obs(self):
        obs = observe(self.world, self.task)
        for i, o in enumerate(obs):
            o.comm = incoming_comm(self.task, i, self._last_symbols)
        self.obs = obs

    def step(self, actions: list[PhysAction], symbols: dict[int, np.ndarray] | None = None):
        """Advance one tick; returns (rewards, done).  Records the transition."""
        symbols = symbols or {}
        for i, o in enumerate(self.obs):
            for name, arr in o.streams.items():
                self._rows["obs"][i].setdefault(name, []).append(arr)
        self._rows["gstates"].append(global_state(self.world))
        self._rows["actions"].append([[a.steer, a.accel] for a in actions])
        sym_row = np.zeros((self.task.n_agents, self.task.n_symbols), dtype=np.float32)
        for s, vec in symbols.items():
            sym_row[s] = vec
        self._rows["symbols"].append(sym_row)

        self.world, rewards, done = step(self.world, actions)
        self._rows["rewards"].append(rewards)
        self._last_symbols = symbols if symbols else None
        if self.world.step_index >= self.task.episode_len:
            done = True
        if not done:
            self._refresh_obs()
        return rewards, done

    def take_episode(self, policy_version: int = 0) -> tuple[Episode, EpisodeStats]:
        rows = self._rows
        episode = Episode(
            obs=[{name: np.stack(chunks).astype(np.float32) for name, chunks in agent.items()}
                 for agent in rows["obs"]],
            actions=np.asarray(rows["actions"], dtype=np.float32),
            symbols=np.stack(rows["symbols"]),
            rewards=np.asarray(rows["rewards"], dtype=np.float32),
            global_states=np.stack(rows["gstates"]),
            policy_version=policy_version,
        )
        rewards = episode.rewards
        stats = EpisodeStats(
            social_reward=float(rewards.sum()),
            per_agent_reward=rewards.sum(axis=0),
            length=episode.length,
            goal=int(self.world.last_goal),
            symbol_counts=episode.symbols.sum(axis=0),
        )
        self._rows = None
        return episode, stats


def make_workers(task: TaskSpec, n_workers: int, rng: Rng) -> list[EnvWorker]:
    workers = [EnvWorker(task, rng.split(f"worker{w}")) for w in range(n_workers)]
    for w in workers:
        w.begin_episode()
    return workers
