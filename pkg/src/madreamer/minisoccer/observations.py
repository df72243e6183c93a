"""Per-agent observation assembly.

Physical agents with partial observability see laser features plus
proprioception; full-observability agents (and speakers) see a normalized
encoding of the global state.  Incoming communication symbols ride along in
`AgentObs.comm` but are never part of the world-model streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tasks as C
from .laser import LASER_FEATURE_WIDTH, LaserScan, laser_features, laser_scan
from .tasks import TaskSpec
from .world import WorldState, global_state

PROPRIO_WIDTH = 3


@dataclass
class AgentObs:
    """Observation split into named model streams plus the comm side-channel."""

    streams: dict[str, np.ndarray]
    comm: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float32))
    laser: LaserScan | None = None

    def physical(self) -> np.ndarray:
        return np.concatenate([self.streams[k] for k in sorted(self.streams)])


def field_feature_width(n_players: int) -> int:
    return 5 * n_players + 5


def field_features(world: WorldState) -> np.ndarray:
    """Normalized full-field encoding: per player (x, y, sin, cos, speed), ball, side."""
    n = world.n_players
    out = np.zeros(field_feature_width(n), dtype=np.float32)
    for i in range(n):
        x, y, heading, speed = world.players[i]
        out[5 * i: 5 * i + 5] = (x / C.HALF_X, y / C.HALF_Y,
                                 math.sin(heading), math.cos(heading), speed / C.MAX_SPEED)
    out[5 * n + 0] = world.ball_pos[0] / C.HALF_X
    out[5 * n + 1] = world.ball_pos[1] / C.HALF_Y
    out[5 * n + 2] = world.ball_vel[0] / C.BALL_SPEED_SCALE
    out[5 * n + 3] = world.ball_vel[1] / C.BALL_SPEED_SCALE
    out[5 * n + 4] = float(world.attack_side)
    return out


def field_features_from_raw(state_vec: np.ndarray, n_players: int) -> np.ndarray:
    """Same encoding as `field_features` but from a raw global-state vector."""
    out = np.zeros(field_feature_width(n_players), dtype=np.float32)
    for i in range(n_players):
        x, y, heading, speed = state_vec[4 * i: 4 * i + 4]
        out[5 * i: 5 * i + 5] = (x / C.HALF_X, y / C.HALF_Y,
                                 math.sin(heading), math.cos(heading), speed / C.MAX_SPEED)
    base = 4 * n_players
    out[5 * n_players + 0] = state_vec[base + 0] / C.HALF_X
    out[5 * n_players + 1] = state_vec[base + 1] / C.HALF_Y
    out[5 * n_players + 2] = state_vec[base + 2] / C.BALL_SPEED_SCALE
    out[5 * n_players + 3] = state_vec[base + 3] / C.BALL_SPEED_SCALE
    out[5 * n_players + 4] = state_vec[base + 4]
    return out


def field_features_batch(state_vecs: np.ndarray, n_players: int) -> np.ndarray:
    """Vectorized `field_features_from_raw` over (N, state_width) rows."""
    n = state_vecs.shape[0]
    out = np.zeros((n, field_feature_width(n_players)), dtype=np.float32)
    for i in range(n_players):
        p = state_vecs[:, 4 * i: 4 * i + 4]
        out[:, 5 * i + 0] = p[:, 0] / C.HALF_X
        out[:, 5 * i + 1] = p[:, 1] / C.HALF_Y
        out[:, 5 * i + 2] = np.sin(p[:, 2])
        out[:, 5 * i + 3] = np.cos(p[:, 2])
        out[:, 5 * i + 4] = p[:, 3] / C.MAX_SPEED
    base = 4 * n_players
    off = 5 * n_players
    out[:, off + 0] = state_vecs[:, base + 0] / C.HALF_X
    out[:, off + 1] = state_vecs[:, base + 1] / C.HALF_Y
    out[:, off + 2] = state_vecs[:, base + 2] / C.BALL_SPEED_SCALE
    out[:, off + 3] = state_vecs[:, base + 3] / C.BALL_SPEED_SCALE
    out[:, off + 4] = state_vecs[:, base + 4]
    return out


def proprio_features(world: WorldState, agent_index: int) -> np.ndarray:
    _, _, heading, speed = world.players[agent_index]
    return np.array([speed / C.MAX_SPEED, math.sin(heading), math.cos(heading)],
                    dtype=np.float32)


def stream_widths(spec: TaskSpec, agent_index: int) -> dict[str, int]:
    """Model-visible stream widths for one agent under a task."""
    if agent_index >= spec.n_physical:
        return {"field": field_feature_width(spec.n_physical)}
    if agent_index in spec.fullobs:
        return {"field": field_feature_width(spec.n_physical)}
    return {"laser": LASER_FEATURE_WIDTH, "proprio": PROPRIO_WIDTH}


def observe(world: WorldState, spec: TaskSpec) -> list[AgentObs]:
    """Observations for every agent (physical first, speakers after)."""
    out = []
    for i in range(spec.n_physical):
        if i in spec.fullobs:
            out.append(AgentObs(streams={"field": field_features(world)}))
        else:
            scan = laser_scan(world, i, spec)
            out.append(AgentObs(streams={"laser": laser_features(scan)},
                                laser=scan))
            out[-1].streams["proprio"] = proprio_features(world, i)
    for _ in range(spec.n_speakers):
        out.append(AgentObs(streams={"field": field_features(world)}))
    return out


def incoming_comm(spec: TaskSpec, agent_index: int,
                  symbols: dict[int, np.ndarray] | None) -> np.ndarray:
    """Concatenate the one-hot symbols this agent hears (zeros before any message)."""
    senders = spec.incoming_senders(agent_index)
    if not senders:
        return np.zeros(0, dtype=np.float32)
    parts = []
    for s in senders:
        if symbols is not None and s in symbols:
            parts.append(np.asarray(symbols[s], dtype=np.float32))
        else:
            parts.append(np.zeros(spec.n_symbols, dtype=np.float32))
    return np.concatenate(parts)


def comm_input_width(spec: TaskSpec, agent_index: int) -> int:
    return len(spec.incoming_senders(agent_index)) * spec.n_symbols
