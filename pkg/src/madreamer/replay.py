"""Episodic replay: storage, fixed-length sequence slices, imagination starts.

Episodes hold aligned per-step arrays (observations per agent, physical
actions, emitted symbols, rewards, raw global states).  Sequence sampling
never crosses an episode boundary.  Start states for imagination are taken
from already-sampled sequence batches so the encoder work is shared.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .diffcore.rng import Rng
from .minisoccer.tasks import TaskSpec


@dataclass
class Episode:
    """One rollout.  Index t holds the observation at t, the action taken at
    t, the symbols emitted at t, and the reward caused by that action."""

    obs: list[dict[str, np.ndarray]]      # per agent: stream -> (T, w)
    actions: np.ndarray                   # (T, n_physical, 2)
    symbols: np.ndarray                   # (T, n_agents, K) one-hot or zeros
    rewards: np.ndarray                   # (T, n_physical)
    global_states: np.ndarray             # (T, state_width)
    episode_id: int = 0
    policy_version: int = 0

    @property
    def length(self) -> int:
        return self.actions.shape[0]

    def validate(self) -> None:
        t = self.length
        for agent_obs in self.obs:
            for name, arr in agent_obs.items():
                if arr.shape[0] != t:
                    raise ValueError(f"stream {name!r} length {arr.shape[0]} != {t}")
        for name, arr in (("symbols", self.symbols), ("rewards", self.rewards),
                          ("global_states", self.global_states)):
            if arr.shape[0] != t:
                raise ValueError(f"{name} length {arr.shape[0]} != {t}")


@dataclass
class SequenceBatch:
    """B aligned slices of length L.

    `prev_actions` and `rewards_in` are shifted views: at slice position j
    they hold the action that led into step j and the reward received on
    arrival, which is what the recurrent models consume.
    """

    obs: list[dict[str, np.ndarray]]      # per agent: stream -> (B, L, w)
    actions: np.ndarray                   # (B, L, n_physical, 2)
    prev_actions: np.ndarray              # (B, L, n_physical, 2)
    rewards: np.ndarray                   # (B, L, n_physical)
    rewards_in: np.ndarray                # (B, L, n_physical)
    symbols: np.ndarray                   # (B, L, n_agents, K)
    global_states: np.ndarray             # (B, L, state_width)
    episode_ids: np.ndarray               # (B,)
    offsets: np.ndarray                   # (B,)

    @property
    def batch(self) -> int:
        return self.actions.shape[0]

    @property
    def length(self) -> int:
        return self.actions.shape[1]


@dataclass
class StartStates:
    """Real states that anchor imagination rollouts (never imagined ones)."""

    global_states: np.ndarray             # (N, state_width) raw
    obs: list[dict[str, np.ndarray]]      # per agent: stream -> (N, w)

    @property
    def count(self) -> int:
        return self.global_states.shape[0]


class ReplayBuffer:
    def __init__(self, capacity: int = 2000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.episodes: deque[Episode] = deque()
        self._next_id = 0

    def __len__(self) -> int:
        return len(self.episodes)

    @property
    def total_steps(self) -> int:
        return sum(e.length for e in self.episodes)

    def add_episode(self, episode: Episode) -> None:
        episode.validate()
        if episode.episode_id == 0:
            episode.episode_id = self._next_id
        self._next_id = max(self._next_id + 1, episode.episode_id + 1)
        self.episodes.append(episode)
        while len(self.episodes) > self.capacity:
            self.episodes.popleft()

    def _eligible(self, min_len: int) -> list[Episode]:
        eligible = [e for e in self.episodes if e.length >= min_len]
        if not eligible:
            raise ValueError(f"no stored episode has length >= {min_len}")
        return eligible

    def sample_sequences(self, batch: int, length: int, rng: Rng) -> SequenceBatch:
        """Uniformly random (episode, offset) slices, seeded by `rng`."""
        eligible = self._eligible(length)
        n_agents = len(eligible[0].obs)
        picks = rng.integers(0, len(eligible), (batch,))
        obs = [{name: [] for name in eligible[0].obs[a]} for a in range(n_agents)]
        actions, prev_actions, rewards, rewards_in, symbols, gstates = [], [], [], [], [], []
        ep_ids, offsets = [], []
        for b in range(batch):
            ep = eligible[int(picks[b])]
            off = int(rng.integers(0, ep.length - length + 1))
            sl = slice(off, off + length)
            for a in range(n_agents):
                for name, arr in ep.obs[a].items():
                    obs[a][name].append(arr[sl])
            actions.append(ep.actions[sl])
            prev = np.zeros_like(ep.actions[sl])
            if off == 0:
                prev[1:] = ep.actions[off: off + length - 1]
            else:
                prev[:] = ep.actions[off - 1: off + length - 1]
            prev_actions.append(prev)
            rewards.append(ep.rewards[sl])
            rin = np.zeros_like(ep.rewards[sl])
            if off == 0:
                rin[1:] = ep.rewards[off: off + length - 1]
            else:
                rin[:] = ep.rewards[off - 1: off + length - 1]
            rewards_in.append(rin)
            symbols.append(ep.symbols[sl])
            gstates.append(ep.global_states[sl])
            ep_ids.append(ep.episode_id)
            offsets.append(off)
        return SequenceBatch(
            obs=[{name: np.stack(chunks) for name, chunks in agent.items()} for agent in obs],
            actions=np.stack(actions),
            prev_actions=np.stack(prev_actions),
            rewards=np.stack(rewards),
            rewards_in=np.stack(rewards_in),
            symbols=np.stack(symbols),
            global_states=np.stack(gstates),
            episode_ids=np.array(ep_ids),
            offsets=np.array(offsets),
        )

    def sample_start_states(self, batch: SequenceBatch) -> StartStates:
        """Flatten a sampled batch into imagination start states (all B*L steps)."""
        n = batch.batch * batch.length
        obs = [{name: arr.reshape(n, arr.shape[-1]) for name, arr in agent.items()}
               for agent in batch.obs]
        return StartStates(
            global_states=batch.global_states.reshape(n, batch.global_states.shape[-1]),
            obs=obs,
        )


# -- CSV episode logs ------------------------------------------------------

def episode_csv_header(spec: TaskSpec) -> list[str]:
    cols = ["step", "imagined"]
    for i in range(spec.n_physical):
        cols += [f"p{i}_x", f"p{i}_y", f"p{i}_heading", f"p{i}_speed"]
    cols += ["ball_x", "ball_y", "ball_vx", "ball_vy", "attack_side"]
    for i in range(spec.n_physical):
        cols += [f"a{i}_steer", f"a{i}_accel"]
    for i in range(spec.n_agents):
        cols.append(f"sym{i}")
    for i in range(spec.n_physical):
        cols.append(f"r{i}")
    return cols


def write_episode_csv(path, episode: Episode, spec: TaskSpec, imagined: bool = False) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(episode_csv_header(spec))
        for t in range(episode.length):
            gs = episode.global_states[t]
            row = [t, int(imagined)]
            row += [repr(float(v)) for v in gs[: 4 * spec.n_physical]]
            row += [repr(float(v)) for v in gs[4 * spec.n_physical: 4 * spec.n_physical + 4]]
            row.append(int(gs[4 * spec.n_physical + 4]))
            for i in range(spec.n_physical):
                row += [repr(float(episode.actions[t, i, 0])), repr(float(episode.actions[t, i, 1]))]
            for i in range(spec.n_agents):
                sym = episode.symbols[t, i]
                row.append(int(sym.argmax()) if sym.any() else -1)
            for i in range(spec.n_physical):
                row.append(repr(float(episode.rewards[t, i])))
            writer.writerow(row)


def read_episode_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [r for r in reader]
    out = {}
    data = np.array([[float(v) for v in r] for r in rows]) if rows else np.zeros((0, len(header)))
    for j, name in enumerate(header):
        out[name] = data[:, j]
    return out
