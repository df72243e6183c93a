"""Independent oracles used across the test suite.

These deliberately avoid the library code paths they check: finite
differences for gradients, straight-line numpy for network forwards, shapely
plus quadratic roots for ray geometry, Monte Carlo for KL.
"""

from __future__ import annotations

import numpy as np

from madreamer.diffcore import backward
from madreamer.diffcore.tensor import Tensor


def finite_difference_check(fn, params: dict[str, Tensor], eps: float = 1e-2,
                            rtol: float = 1e-3, atol: float = 1e-4,
                            max_entries: int = 24, rng: np.random.Generator | None = None):
    """Central finite differences vs the reverse-mode gradient.

    `fn` rebuilds the scalar loss from the current parameter values.  Checks
    every entry when small, a random subset otherwise.  Errors are relative
    to the larger of the two values or the parameter's gradient RMS (the
    float32 finite-difference noise floor scales with the loss, not with an
    individual small entry).  Returns the largest relative error seen.
    """
    rng = rng or np.random.default_rng(0)
    loss = fn()
    grads = backward(loss, params)
    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        gflat = grads[name].reshape(-1)
        rms = float(np.sqrt(np.mean(np.square(gflat)))) if gflat.size else 0.0
        n = flat.size
        idxs = np.arange(n) if n <= max_entries else rng.choice(n, max_entries, replace=False)
        for idx in idxs:
            old = flat[idx].item()
            h = eps * max(1.0, abs(old))
            flat[idx] = old + h
            lp = fn().item()
            flat[idx] = old - h
            lm = fn().item()
            flat[idx] = old
            fd = (lp - lm) / (2.0 * h)
            an = gflat[idx]
            err = abs(an - fd) / max(abs(fd), abs(an), rms, atol / rtol)
            worst = max(worst, err)
            assert err < rtol, (f"gradient mismatch for {name}[{idx}]: "
                                f"analytic={an:.6g} fd={fd:.6g} rel={err:.3g}")
    return worst


def mlp_oracle(weights: list[np.ndarray], biases: list[np.ndarray], x: np.ndarray,
               activation=None) -> np.ndarray:
    """Straight-line float64 matmul chain (activation between layers only)."""
    h = x.astype(np.float64)
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = h @ w.astype(np.float64) + b.astype(np.float64)
        if activation is not None and i != len(weights) - 1:
            h = activation(h)
    return h


def mc_kl_gaussian(mean_p, std_p, mean_q, std_q, n_samples: int = 1_000_000,
                   seed: int = 0) -> float:
    """Monte-Carlo KL(p||q) for diagonal Gaussians."""
    rng = np.random.default_rng(seed)
    x = mean_p + std_p * rng.standard_normal((n_samples, len(mean_p)))

    def logpdf(x, m, s):
        return (-0.5 * ((x - m) / s) ** 2 - np.log(s) - 0.5 * np.log(2 * np.pi)).sum(axis=-1)

    return float(np.mean(logpdf(x, mean_p, std_p) - logpdf(x, mean_q, std_q)))


def ray_circle_oracle(origin, direction, center, radius) -> float:
    """Nearest positive intersection via the projection formulation (or inf)."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    oc = c - o
    t_mid = float(oc @ d)
    closest_sq = float(oc @ oc) - t_mid ** 2
    if closest_sq > radius * radius:
        return np.inf
    half = np.sqrt(radius * radius - closest_sq)
    for t in (t_mid - half, t_mid + half):
        if t > 1e-9:
            return t
    return np.inf


def ray_segment_oracle_shapely(origin, direction, p1, p2, max_range: float) -> float:
    """Nearest positive ray-segment intersection via shapely (or inf)."""
    from shapely.geometry import LineString, Point

    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    ray = LineString([tuple(o + 1e-9 * d), tuple(o + (max_range + 5.0) * d)])
    seg = LineString([tuple(p1), tuple(p2)])
    hit = ray.intersection(seg)
    if hit.is_empty:
        return np.inf
    pts = []
    if hit.geom_type == "Point":
        pts = [hit]
    elif hit.geom_type == "MultiPoint":
        pts = list(hit.geoms)
    elif hit.geom_type == "LineString":
        pts = [Point(c) for c in hit.coords]
    best = np.inf
    for p in pts:
        t = float(np.hypot(p.x - o[0], p.y - o[1]))
        best = min(best, t)
    return best


def laser_scene_oracle(world, agent_index, spec):
    """Full independent scan: shapely segments + quadratic circles.

    Returns (distances, tag0, tag1) arrays matching the laser contract.
    """
    from madreamer.minisoccer import laser as L
    from madreamer.minisoccer import tasks as C

    origin = world.players[agent_index, :2]
    heading = world.players[agent_index, 2]
    angles = heading + np.linspace(-C.FOV_RAD / 2, C.FOV_RAD / 2, C.N_RAYS)
    hx, hy, g = C.HALF_X, C.HALF_Y, C.GOAL_HALF_WIDTH
    walls = [((-hx, -hy), (-hx, hy)), ((hx, -hy), (hx, hy)),
             ((-hx, hy), (hx, hy)), ((-hx, -hy), (hx, -hy))]
    dists = np.full(C.N_RAYS, np.inf)
    tag0 = np.zeros(C.N_RAYS, dtype=int)
    tag1 = np.zeros(C.N_RAYS, dtype=int)
    for r, ang in enumerate(angles):
        d = np.array([np.cos(ang), np.sin(ang)])
        best, b0, b1 = np.inf, L.TAG_NONE, 0
        for p1, p2 in walls:
            t = ray_segment_oracle_shapely(origin, d, p1, p2, C.MAX_RANGE)
            if t < best:
                hit = origin + t * d
                if abs(abs(hit[0]) - hx) < 1e-6 and abs(hit[1]) <= g:
                    side = 1 if hit[0] > 0 else -1
                    if spec.distinguish_goals:
                        sub = L.SUB_GOAL_OPP if side == world.attack_side else L.SUB_GOAL_OWN
                    else:
                        sub = L.SUB_GOAL_OWN
                else:
                    sub = L.SUB_WALL_LEFT if hit[0] < 0 else L.SUB_WALL_RIGHT
                best, b0, b1 = t, L.TAG_BOUNDARY, sub
        t = ray_circle_oracle(origin, d, world.ball_pos, C.BALL_RADIUS)
        if t < best:
            best, b0, b1 = t, L.TAG_OBJECT, L.SUB_BALL
        for j in range(world.n_players):
            if j == agent_index:
                continue
            t = ray_circle_oracle(origin, d, world.players[j, :2], C.PLAYER_RADIUS)
            if t < best:
                best, b0, b1 = t, L.TAG_OBJECT, L.SUB_TEAMMATE
        if best > C.MAX_RANGE:
            best, b0, b1 = C.MAX_RANGE, L.TAG_NONE, 0
        dists[r], tag0[r], tag1[r] = best, b0, b1
    return dists, tag0, tag1
