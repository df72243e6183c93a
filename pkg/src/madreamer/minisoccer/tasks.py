"""Task definitions and the fixed physical constants of the 2D soccer field.

All physical constants live here so that every module (dynamics, sensing,
observation encoding, models) reads the same numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

# Field geometry (meters) and integration step.
HALF_X = 10.0
HALF_Y = 7.0
DT = 0.1
GOAL_HALF_WIDTH = 2.0

# Players and ball.
PLAYER_RADIUS = 0.3
BALL_RADIUS = 0.5
MAX_SPEED = 2.0
MAX_TURN_RATE = math.pi
MAX_ACCEL = 2.0
BALL_FRICTION = 0.98
KICK_GAIN = 1.5
BALL_SPEED_SCALE = KICK_GAIN * MAX_SPEED

# Laser sensor.
N_RAYS = 64
FOV_RAD = math.radians(60.0)
MAX_RANGE = 15.0

# Communication channel.
N_SYMBOLS = 4

DEFAULT_EPISODE_LEN = 300

TASK_IDS = ("speaker_listener", "speaker_listener_fullobs", "two_player")


@dataclass(frozen=True)
class RewardCoeffs:
    goal: float = 10.0
    ball: float = 1.0
    advance: float = 2.0


@dataclass(frozen=True)
class TaskSpec:
    """One of the three benchmark configurations.

    `fullobs` lists the physical agents that see the whole field instead of
    lasers; `distinguish_goals` controls whether laser tags reveal which goal
    is the attacked one (only the symmetric 2-player game gets that hint).
    """

    task_id: str
    n_physical: int
    n_speakers: int
    comm_enabled: bool
    episode_len: int = DEFAULT_EPISODE_LEN
    coeffs: RewardCoeffs = field(default_factory=RewardCoeffs)
    fullobs: tuple[int, ...] = ()
    distinguish_goals: bool = False
    n_symbols: int = N_SYMBOLS

    @property
    def n_agents(self) -> int:
        return self.n_physical + self.n_speakers

    def speaker_indices(self) -> list[int]:
        return list(range(self.n_physical, self.n_agents))

    def comm_senders(self) -> list[int]:
        """Agents that emit symbols: speakers, plus every physical agent in 2P."""
        if not self.comm_enabled:
            return []
        if self.task_id == "two_player":
            return list(range(self.n_physical))
        return self.speaker_indices()

    def comm_receivers(self, sender: int) -> list[int]:
        return [i for i in range(self.n_agents) if i != sender]

    def incoming_senders(self, agent: int) -> list[int]:
        return [s for s in self.comm_senders() if s != agent]

    def validate(self) -> None:
        if self.task_id not in TASK_IDS:
            raise ValueError(f"unknown task id {self.task_id!r}")
        if self.task_id in ("speaker_listener",) and (self.n_physical, self.n_speakers) != (1, 1):
            raise ValueError("speaker_listener needs exactly 1 physical agent and 1 speaker")
        if self.task_id == "two_player" and (self.n_physical, self.n_speakers) != (2, 0):
            raise ValueError("two_player needs exactly 2 physical agents and no speakers")
        if self.episode_len < 1:
            raise ValueError("episode length must be positive")
        if self.comm_enabled and self.n_symbols < 2:
            raise ValueError("communication needs at least 2 symbols")


def make_task(task_id: str, episode_len: int = DEFAULT_EPISODE_LEN) -> TaskSpec:
    if task_id == "speaker_listener":
        spec = TaskSpec(task_id, n_physical=1, n_speakers=1, comm_enabled=True,
                        episode_len=episode_len)
    elif task_id == "speaker_listener_fullobs":
        # Single-agent control probe: the listener sees the whole field and
        # the channel is off, so there is nothing for a speaker to do.
        spec = TaskSpec(task_id, n_physical=1, n_speakers=0, comm_enabled=False,
                        episode_len=episode_len, fullobs=(0,))
    elif task_id == "two_player":
        spec = TaskSpec(task_id, n_physical=2, n_speakers=0, comm_enabled=True,
                        episode_len=episode_len, distinguish_goals=True)
    else:
        raise ValueError(f"unknown task id {task_id!r}")
    spec.validate()
    return spec


def with_comm(spec: TaskSpec, enabled: bool) -> TaskSpec:
    return replace(spec, comm_enabled=enabled)
