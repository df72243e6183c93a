"""Environment dynamics, rewards, global state, task specs."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from madreamer.minisoccer import (
    PhysAction,
    RewardCoeffs,
    decode_global_state,
    global_state,
    global_state_width,
    make_task,
    mirror_action,
    mirror_x,
    observe,
    reset,
    reward,
    speaker_observation,
    step,
    swap_players,
)
from madreamer.minisoccer import tasks as C
from madreamer.minisoccer.world import WorldState, wrap_angle

TWO_P = make_task("two_player")
SL = make_task("speaker_listener")


def still(n=2):
    return [PhysAction(0.0, 0.0) for _ in range(n)]


def make_world(players, ball_pos, ball_vel=(0.0, 0.0), attack_side=1):
    return WorldState(players=np.array(players, dtype=float),
                      ball_pos=np.array(ball_pos, dtype=float),
                      ball_vel=np.array(ball_vel, dtype=float),
                      attack_side=attack_side)


class TestReset:
    def test_same_seed_identical(self):
        a, b = reset(TWO_P, 123), reset(TWO_P, 123)
        assert np.array_equal(a.players, b.players)
        assert np.array_equal(a.ball_pos, b.ball_pos)
        assert a.attack_side == b.attack_side

    def test_two_player_has_two_poses(self):
        assert reset(TWO_P, 0).players.shape == (2, 4)
        assert reset(SL, 0).players.shape == (1, 4)

    def test_attack_side_is_a_fair_coin(self):
        sides = np.array([reset(TWO_P, s).attack_side for s in range(1000)])
        assert abs(np.mean(sides == 1) - 0.5) < 0.05

    def test_entities_inside_field(self):
        for s in range(50):
            w = reset(TWO_P, s)
            assert np.all(np.abs(w.players[:, 0]) < C.HALF_X)
            assert np.all(np.abs(w.players[:, 1]) < C.HALF_Y)
            assert abs(w.ball_pos[0]) < C.HALF_X and abs(w.ball_pos[1]) < C.HALF_Y

    def test_invalid_spec_rejected(self):
        from dataclasses import replace
        bad = replace(TWO_P, n_physical=3)
        with pytest.raises(ValueError):
            reset(bad, 0)


class TestStep:
    def test_rest_state_only_ball_friction(self):
        w = make_world([[0, 0, 0, 0], [3, 3, 1, 0]], [5, 0], [1.0, 0.0])
        nxt, rewards, done = step(w, still())
        assert np.array_equal(nxt.players, w.players)
        assert np.allclose(nxt.ball_vel, np.array([1.0, 0.0]) * C.BALL_FRICTION)
        assert not done

    def test_action_count_mismatch(self):
        with pytest.raises(ValueError):
            step(reset(TWO_P, 0), [PhysAction(0, 0)])

    def test_driving_into_ball_kicks_it(self):
        w = make_world([[4, 0, 0, 0], [-5, -5, 0, 0]], [5, 0])
        contact = False
        for _ in range(40):
            w, rewards, done = step(w, [PhysAction(0.0, 1.0), PhysAction(0.0, 0.0)])
            if np.linalg.norm(w.ball_vel) > 0:
                contact = True
                break
        assert contact
        assert w.ball_vel[0] > 0          # kicked along +x heading
        assert abs(w.ball_vel[1]) < 1e-9

    def test_kick_magnitude_proportional_to_speed(self):
        w = make_world([[4.05, 0, 0, C.MAX_SPEED], [-5, -5, 0, 0]], [5, 0])
        nxt, _, _ = step(w, still())
        assert np.linalg.norm(nxt.ball_vel) == pytest.approx(
            C.KICK_GAIN * C.MAX_SPEED * C.BALL_FRICTION, rel=1e-6)

    def test_goal_sets_done_and_reward(self):
        w = make_world([[0, 0, 0, 0], [3, 3, 0, 0]], [C.HALF_X - 0.7, 0.0], [3.0, 0.0])
        nxt, rewards, done = step(w, still())
        assert done and nxt.last_goal == 1
        assert rewards[0] > 9.0           # goal coefficient dominates

    def test_wrong_goal_is_negative(self):
        w = make_world([[0, 0, 0, 0], [3, 3, 0, 0]], [-C.HALF_X + 0.7, 0.0], [-3.0, 0.0],
                       attack_side=1)
        nxt, rewards, done = step(w, still())
        assert done and nxt.last_goal == -1
        assert rewards[0] < -9.0

    def test_ball_reflects_off_side_walls(self):
        w = make_world([[0, 0, 0, 0], [3, 3, 0, 0]], [0.0, C.HALF_Y - 0.6], [0.0, 2.0])
        nxt, _, done = step(w, still())
        assert not done
        assert nxt.ball_vel[1] < 0

    def test_ball_reflects_off_goal_wall_outside_mouth(self):
        w = make_world([[0, 0, 0, 0], [3, 3, 0, 0]],
                       [C.HALF_X - 0.55, C.GOAL_HALF_WIDTH + 1.0], [2.0, 0.0])
        nxt, _, done = step(w, still())
        assert not done and nxt.ball_vel[0] < 0

    def test_determinism(self):
        w = reset(TWO_P, 9)
        acts = [PhysAction(0.3, 0.8), PhysAction(-0.5, 1.0)]
        a1, r1, d1 = step(w.copy(), acts)
        a2, r2, d2 = step(w.copy(), acts)
        assert np.array_equal(a1.players, a2.players)
        assert np.array_equal(a1.ball_pos, a2.ball_pos)
        assert np.array_equal(r1, r2) and d1 == d2

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 40))
    def test_energy_and_bounds(self, seed, n_steps):
        from madreamer.diffcore import Rng
        rng = Rng(seed)
        w = reset(TWO_P, seed)
        for _ in range(n_steps):
            acts = [PhysAction(float(a), float(b))
                    for a, b in rng.normal((2, 2)) * 2.0]
            w, _, done = step(w, acts)
            if done:
                break
            assert np.all(w.players[:, 3] <= C.MAX_SPEED + 1e-9)
            assert np.all(np.abs(w.players[:, 0]) <= C.HALF_X - C.PLAYER_RADIUS + 1e-9)
            assert np.all(np.abs(w.players[:, 1]) <= C.HALF_Y - C.PLAYER_RADIUS + 1e-9)
            assert abs(w.ball_pos[0]) <= C.HALF_X - C.BALL_RADIUS + 1e-9
            assert abs(w.ball_pos[1]) <= C.HALF_Y - C.BALL_RADIUS + 1e-9


class TestReward:
    def test_no_movement_no_goal_is_zero(self):
        w = make_world([[0, 0, 0, 0], [3, 3, 0, 0]], [5, 0])
        assert reward(w, w.copy(), 0) == 0.0

    def test_moving_toward_ball_pays_distance_closed(self):
        w = make_world([[0, 0, 0, 0]], [5, 0])
        nxt = make_world([[0.3, 0, 0, 0]], [5, 0])
        got = reward(w, nxt, 0, RewardCoeffs(goal=10, ball=1, advance=2))
        assert got == pytest.approx(0.3, rel=1e-9)

    def test_moving_away_contributes_exactly_zero(self):
        w = make_world([[0, 0, 0, 0]], [5, 0])
        nxt = make_world([[-0.4, 0, 0, 0]], [5, 0])
        assert reward(w, nxt, 0) == 0.0

    def test_ball_advance_term(self):
        w = make_world([[0, -3, 0, 0]], [0, 0], attack_side=1)
        nxt = make_world([[0, -3, 0, 0]], [1.0, 0], attack_side=1)
        got = reward(w, nxt, 0, RewardCoeffs(goal=10, ball=1, advance=2))
        assert got == pytest.approx(2.0 * 1.0, rel=1e-9)

    def test_social_reward_mirror_symmetry(self):
        from madreamer.diffcore import Rng
        rng = Rng(4)
        w = reset(TWO_P, 4)
        acts = [PhysAction(float(a), float(b)) for a, b in rng.normal((2, 2))]
        nxt, rewards, _ = step(w, acts)
        wm = swap_players(mirror_x(w))
        acts_m = [mirror_action(a) for a in reversed(acts)]
        nxt_m, rewards_m, _ = step(wm, acts_m)
        assert np.sum(rewards) == pytest.approx(np.sum(rewards_m), rel=1e-6, abs=1e-9)


class TestGlobalState:
    def test_width_constant(self):
        assert global_state(reset(TWO_P, 0)).shape == (global_state_width(2),)
        assert global_state(reset(SL, 0)).shape == (global_state_width(1),)

    def test_round_trip_bit_exact(self):
        w = reset(TWO_P, 5)
        dec = decode_global_state(global_state(w), 2)
        assert np.array_equal(dec.players, w.players)
        assert np.array_equal(dec.ball_pos, w.ball_pos)
        assert np.array_equal(dec.ball_vel, w.ball_vel)
        assert dec.attack_side == w.attack_side

    def test_distinct_states_distinct_vectors(self):
        a = global_state(reset(TWO_P, 1))
        b = global_state(reset(TWO_P, 2))
        assert not np.array_equal(a, b)


class TestSpeakerObservation:
    def test_equals_global_state(self):
        w = reset(SL, 3)
        assert np.array_equal(speaker_observation(w, SL), global_state(w))

    def test_changes_when_ball_moves(self):
        w = reset(SL, 3)
        before = speaker_observation(w, SL).copy()
        w.ball_pos = w.ball_pos + 0.5
        assert not np.array_equal(before, speaker_observation(w, SL))

    def test_available_every_step(self):
        w = reset(SL, 3)
        for _ in range(5):
            obs = observe(w, SL)
            assert obs[1].streams["field"].shape[0] > 0
            w, _, done = step(w, [PhysAction(0.1, 0.5)])
            if done:
                break

    def test_rejected_on_two_player(self):
        with pytest.raises(ValueError):
            speaker_observation(reset(TWO_P, 0), TWO_P)


class TestTaskSpec:
    def test_speaker_listener_structure(self):
        assert SL.n_physical == 1 and SL.n_speakers == 1 and SL.comm_enabled
        assert SL.comm_senders() == [1]
        assert SL.incoming_senders(0) == [1]

    def test_two_player_structure(self):
        assert TWO_P.n_physical == 2 and TWO_P.n_speakers == 0
        assert TWO_P.comm_senders() == [0, 1]
        assert TWO_P.distinguish_goals

    def test_fullobs_variant(self):
        spec = make_task("speaker_listener_fullobs")
        assert spec.fullobs == (0,) and not spec.comm_enabled
        assert spec.comm_senders() == []

    def test_unknown_task_rejected(self):
        with pytest.raises(ValueError):
            make_task("three_player")

    def test_wrap_angle_range(self):
        for a in np.linspace(-10, 10, 101):
            w = wrap_angle(float(a))
            assert -np.pi < w <= np.pi
