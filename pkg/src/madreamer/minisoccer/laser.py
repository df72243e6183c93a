"""Laser rangefinder: 64 rays over a 60 degree cone, analytic intersections.

Each ray reports the nearest hit among walls, goal mouths, the ball and the
other players, up to 15 m, plus a 2-dimensional discrete semantic tag:
dim 0 is the coarse class (nothing / field boundary / movable object), dim 1
the subclass.  Which-goal-is-which is only revealed when the task says so
(`distinguish_goals`); otherwise both goal mouths share one tag and the
field's left/right symmetry stays unbroken.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tasks as C
from .tasks import TaskSpec
from .world import WorldState

# tag dim 0
TAG_NONE = 0
TAG_BOUNDARY = 1
TAG_OBJECT = 2
# tag dim 1 under TAG_BOUNDARY
SUB_WALL_LEFT = 0
SUB_WALL_RIGHT = 1
SUB_GOAL_OWN = 2
SUB_GOAL_OPP = 3
# tag dim 1 under TAG_OBJECT
SUB_BALL = 0
SUB_TEAMMATE = 1

N_TAG0 = 3
N_TAG1 = 4
FEATURES_PER_RAY = 1 + N_TAG0 + N_TAG1


@dataclass
class LaserScan:
    distances: np.ndarray  # (N_RAYS,) meters in [0, MAX_RANGE]
    tags: np.ndarray       # (N_RAYS, 2) int8


def ray_angles(heading: float) -> np.ndarray:
    offsets = np.linspace(-C.FOV_RAD / 2.0, C.FOV_RAD / 2.0, C.N_RAYS)
    return heading + offsets


def _wall_hits(origin: np.ndarray, dirs: np.ndarray, attack_side: int,
               distinguish_goals: bool):
    """Nearest boundary hit per ray; returns (dist, tag1) arrays."""
    n = dirs.shape[0]
    best = np.full(n, np.inf)
    tag1 = np.zeros(n, dtype=np.int8)
    for axis, lim in ((0, C.HALF_X), (1, C.HALF_Y)):
        other = 1 - axis
        other_lim = C.HALF_Y if axis == 0 else C.HALF_X
        d = dirs[:, axis]
        for side in (-1.0, 1.0):
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (side * lim - origin[axis]) / d
            hit_other = origin[other] + t * dirs[:, other]
            ok = (t > 1e-9) & np.isfinite(t) & (np.abs(hit_other) <= other_lim + 1e-9)
            better = ok & (t < best)
            if not better.any():
                continue
            if axis == 0:
                in_goal = np.abs(hit_other) <= C.GOAL_HALF_WIDTH
                if distinguish_goals:
                    goal_sub = SUB_GOAL_OPP if side == attack_side else SUB_GOAL_OWN
                else:
                    goal_sub = SUB_GOAL_OWN
                wall_sub = SUB_WALL_LEFT if side < 0 else SUB_WALL_RIGHT
                sub = np.where(in_goal, goal_sub, wall_sub)
            else:
                hit_x = hit_other
                sub = np.where(hit_x < 0, SUB_WALL_LEFT, SUB_WALL_RIGHT)
            tag1[better] = sub[better] if isinstance(sub, np.ndarray) else sub
            best[better] = t[better]
    return best, tag1


def _circle_hits(origin: np.ndarray, dirs: np.ndarray, center: np.ndarray, radius: float):
    """Nearest positive ray-circle intersection per ray (inf if none)."""
    oc = origin - center
    b = 2.0 * (dirs @ oc)
    c0 = float(oc @ oc) - radius * radius
    disc = b * b - 4.0 * c0
    t = np.full(dirs.shape[0], np.inf)
    ok = disc >= 0
    if ok.any():
        sq = np.sqrt(disc[ok])
        t_near = (-b[ok] - sq) / 2.0
        t_far = (-b[ok] + sq) / 2.0
        cand = np.where(t_near > 1e-9, t_near, np.where(t_far > 1e-9, t_far, np.inf))
        t[ok] = cand
    return t


def laser_scan(world: WorldState, agent_index: int, spec: TaskSpec) -> LaserScan:
    if agent_index >= world.n_players:
        raise ValueError(f"agent {agent_index} is not a physical player")
    origin = world.players[agent_index, :2]
    angles = ray_angles(world.players[agent_index, 2])
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    dist, wall_tag1 = _wall_hits(origin, dirs, world.attack_side, spec.distinguish_goals)
    tags = np.zeros((C.N_RAYS, 2), dtype=np.int8)
    tags[:, 0] = TAG_BOUNDARY
    tags[:, 1] = wall_tag1

    objects = [(world.ball_pos, C.BALL_RADIUS, SUB_BALL)]
    for j in range(world.n_players):
        if j != agent_index:
            objects.append((world.players[j, :2], C.PLAYER_RADIUS, SUB_TEAMMATE))
    for center, radius, sub in objects:
        t = _circle_hits(origin, dirs, center, radius)
        closer = t < dist
        dist = np.where(closer, t, dist)
        tags[closer, 0] = TAG_OBJECT
        tags[closer, 1] = sub

    beyond = dist > C.MAX_RANGE
    dist = np.minimum(dist, C.MAX_RANGE)
    tags[beyond] = (TAG_NONE, 0)
    return LaserScan(distances=dist, tags=tags)


def laser_features(scan: LaserScan) -> np.ndarray:
    """Net-ready encoding: per ray [distance/15, onehot(tag0), onehot(tag1)]."""
    feats = np.zeros((C.N_RAYS, FEATURES_PER_RAY), dtype=np.float32)
    feats[:, 0] = scan.distances / C.MAX_RANGE
    feats[np.arange(C.N_RAYS), 1 + scan.tags[:, 0]] = 1.0
    feats[np.arange(C.N_RAYS), 1 + N_TAG0 + scan.tags[:, 1]] = 1.0
    return feats.reshape(-1)


LASER_FEATURE_WIDTH = C.N_RAYS * FEATURES_PER_RAY
