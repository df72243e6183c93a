"""Deterministic kinematic dynamics of the 2D soccer field.

Players are unicycle-style bodies (steer + forward acceleration), the ball
is a friction-damped point mass that reflects off walls and is kicked along
a player's heading on contact.  Everything is a pure function of
(state, actions); all randomness enters only through `reset`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..diffcore.rng import Rng
from . import tasks as C
from .tasks import TaskSpec


@dataclass
class PhysAction:
    """Steering and forward acceleration, both in [-1, 1] before scaling."""

    steer: float
    accel: float

    def clamped(self) -> "PhysAction":
        return PhysAction(float(np.clip(self.steer, -1.0, 1.0)),
                          float(np.clip(self.accel, -1.0, 1.0)))


@dataclass
class WorldState:
    """Ground-truth state: player poses, ball, attacked-goal side, step index.

    `players` is (n, 4) float64: x, y, heading (rad, wrapped to (-pi, pi]),
    speed (m/s, >= 0).  `attack_side` is +1 when the attacked goal is on the
    right wall, -1 on the left.  `last_goal` records the outcome of the most
    recent step: +1 scored in the attacked goal, -1 in the defended one, 0
    otherwise.
    """

    players: np.ndarray
    ball_pos: np.ndarray
    ball_vel: np.ndarray
    attack_side: int
    step_index: int = 0
    last_goal: int = 0

    @property
    def n_players(self) -> int:
        return self.players.shape[0]

    def copy(self) -> "WorldState":
        return WorldState(self.players.copy(), self.ball_pos.copy(), self.ball_vel.copy(),
                          self.attack_side, self.step_index, self.last_goal)

    def goal_center(self) -> np.ndarray:
        return np.array([self.attack_side * C.HALF_X, 0.0])


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = (a + math.pi) % (2.0 * math.pi) - math.pi
    if isinstance(a, np.ndarray):
        a[a == -math.pi] = math.pi
    elif a == -math.pi:
        a = math.pi
    return a


def reset(spec: TaskSpec, seed: int) -> WorldState:
    """Seeded initial state; the attacked-goal side is a fresh coin flip."""
    spec.validate()
    rng = Rng(seed).split("env_reset")
    margin = 1.0
    n = spec.n_physical
    players = np.zeros((n, 4))
    for i in range(n):
        players[i, 0] = rng.gen.uniform(-C.HALF_X + margin, C.HALF_X - margin)
        players[i, 1] = rng.gen.uniform(-C.HALF_Y + margin, C.HALF_Y - margin)
        players[i, 2] = wrap_angle(rng.gen.uniform(-math.pi, math.pi))
        players[i, 3] = 0.0
    attack_side = 1 if rng.gen.random() < 0.5 else -1
    # keep the ball clear of players so the first contact is intentional
    for _ in range(100):
        ball = np.array([rng.gen.uniform(-C.HALF_X + 2 * margin, C.HALF_X - 2 * margin),
                         rng.gen.uniform(-C.HALF_Y + 2 * margin, C.HALF_Y - 2 * margin)])
        clear = all(np.linalg.norm(ball - players[i, :2]) > C.PLAYER_RADIUS + C.BALL_RADIUS + 0.2
                    for i in range(n))
        if clear:
            break
    return WorldState(players=players, ball_pos=ball, ball_vel=np.zeros(2),
                      attack_side=attack_side, step_index=0, last_goal=0)


def _integrate_players(players: np.ndarray, actions: list[PhysAction]) -> np.ndarray:
    out = players.copy()
    for i, act in enumerate(actions):
        a = act.clamped()
        heading = wrap_angle(out[i, 2] + a.steer * C.MAX_TURN_RATE * C.DT)
        speed = float(np.clip(out[i, 3] + a.accel * C.MAX_ACCEL * C.DT, 0.0, C.MAX_SPEED))
        out[i, 0] += math.cos(heading) * speed * C.DT
        out[i, 1] += math.sin(heading) * speed * C.DT
        out[i, 2] = heading
        out[i, 3] = speed
    lim_x = C.HALF_X - C.PLAYER_RADIUS
    lim_y = C.HALF_Y - C.PLAYER_RADIUS
    out[:, 0] = np.clip(out[:, 0], -lim_x, lim_x)
    out[:, 1] = np.clip(out[:, 1], -lim_y, lim_y)
    return out


def _move_ball(pos: np.ndarray, vel: np.ndarray, attack_side: int):
    """Advance the ball one step; returns (pos, vel, goal_sign)."""
    pos = pos + vel * C.DT
    vel = vel.copy()
    goal = 0
    lim_x = C.HALF_X - C.BALL_RADIUS
    lim_y = C.HALF_Y - C.BALL_RADIUS
    for side in (-1, 1):
        if side * pos[0] > lim_x:
            if abs(pos[1]) <= C.GOAL_HALF_WIDTH:
                goal = 1 if side == attack_side else -1
            else:
                pos[0] = side * (2.0 * lim_x) - pos[0]
                vel[0] = -vel[0]
    if abs(pos[1]) > lim_y:
        s = 1.0 if pos[1] > 0 else -1.0
        pos[1] = s * (2.0 * lim_y) - pos[1]
        vel[1] = -vel[1]
    return pos, vel, goal


def step(world: WorldState, actions: list[PhysAction]) -> tuple[WorldState, np.ndarray, bool]:
    """One dt of dynamics; returns (next state, per-agent rewards, done)."""
    if len(actions) != world.n_players:
        raise ValueError(f"expected {world.n_players} actions, got {len(actions)}")
    players = _integrate_players(world.players, actions)
    ball_pos, ball_vel, goal = _move_ball(world.ball_pos, world.ball_vel, world.attack_side)
    if goal == 0:
        for i in range(players.shape[0]):
            delta = ball_pos - players[i, :2]
            dist = float(np.hypot(delta[0], delta[1]))
            if dist <= C.PLAYER_RADIUS + C.BALL_RADIUS:
                heading = players[i, 2]
                direction = np.array([math.cos(heading), math.sin(heading)])
                ball_vel = direction * (C.KICK_GAIN * players[i, 3])
                push = delta / dist if dist > 1e-9 else direction
                ball_pos = players[i, :2] + push * (C.PLAYER_RADIUS + C.BALL_RADIUS + 1e-3)
        ball_pos[0] = np.clip(ball_pos[0], -(C.HALF_X - C.BALL_RADIUS), C.HALF_X - C.BALL_RADIUS)
        ball_pos[1] = np.clip(ball_pos[1], -(C.HALF_Y - C.BALL_RADIUS), C.HALF_Y - C.BALL_RADIUS)
    ball_vel = ball_vel * C.BALL_FRICTION
    nxt = WorldState(players=players, ball_pos=ball_pos, ball_vel=ball_vel,
                     attack_side=world.attack_side, step_index=world.step_index + 1,
                     last_goal=goal)
    rewards = np.array([reward(world, nxt, i) for i in range(world.n_players)])
    done = goal != 0
    return nxt, rewards, done


def reward(world: WorldState, world_next: WorldState, agent_index: int,
           coeffs: C.RewardCoeffs = C.RewardCoeffs()) -> float:
    """Shaped per-agent reward over one transition.

    Goal term is signed (+ for the attacked goal, - for the defended one);
    the two shaping terms pay only for forward progress (clamped at zero):
    the agent closing on the ball, and the ball closing on the attacked goal.
    """
    r = coeffs.goal * world_next.last_goal
    d_ball_prev = float(np.linalg.norm(world.players[agent_index, :2] - world.ball_pos))
    d_ball_next = float(np.linalg.norm(world_next.players[agent_index, :2] - world_next.ball_pos))
    r += coeffs.ball * max(0.0, d_ball_prev - d_ball_next)
    goal_c = world.goal_center()
    d_goal_prev = float(np.linalg.norm(world.ball_pos - goal_c))
    d_goal_next = float(np.linalg.norm(world_next.ball_pos - goal_c))
    r += coeffs.advance * max(0.0, d_goal_prev - d_goal_next)
    return float(r)


def global_state(world: WorldState) -> np.ndarray:
    """Raw sufficient-statistics vector; round-trips bit-exactly via decode."""
    parts = [world.players.reshape(-1),
             world.ball_pos, world.ball_vel,
             np.array([float(world.attack_side)])]
    return np.concatenate(parts)


def decode_global_state(vec: np.ndarray, n_players: int) -> WorldState:
    players = vec[: 4 * n_players].reshape(n_players, 4).copy()
    ball_pos = vec[4 * n_players: 4 * n_players + 2].copy()
    ball_vel = vec[4 * n_players + 2: 4 * n_players + 4].copy()
    attack_side = int(vec[4 * n_players + 4])
    return WorldState(players=players, ball_pos=ball_pos, ball_vel=ball_vel,
                      attack_side=attack_side)


def global_state_width(n_players: int) -> int:
    return 4 * n_players + 5


def speaker_observation(world: WorldState, spec: TaskSpec) -> np.ndarray:
    """The non-embodied speaker sees the full field: exactly the global state."""
    if not spec.n_speakers:
        raise ValueError(f"task {spec.task_id!r} has no speaker")
    return global_state(world)


def mirror_x(world: WorldState) -> WorldState:
    """Reflect the field across the y axis (used by symmetry checks)."""
    players = world.players.copy()
    players[:, 0] = -players[:, 0]
    players[:, 2] = wrap_angle(math.pi - players[:, 2])
    return WorldState(players=players,
                      ball_pos=np.array([-world.ball_pos[0], world.ball_pos[1]]),
                      ball_vel=np.array([-world.ball_vel[0], world.ball_vel[1]]),
                      attack_side=-world.attack_side,
                      step_index=world.step_index, last_goal=world.last_goal)


def swap_players(world: WorldState) -> WorldState:
    out = world.copy()
    out.players = out.players[::-1].copy()
    return out


def mirror_action(a: PhysAction) -> PhysAction:
    return PhysAction(-a.steer, a.accel)
