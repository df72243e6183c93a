"""Replay buffer: FIFO storage, boundary-safe slicing, start-state provenance."""

import numpy as np
import pytest

from madreamer.diffcore import Rng
from madreamer.minisoccer import make_task
from madreamer.replay import Episode, ReplayBuffer, read_episode_csv, write_episode_csv

TWO_P = make_task("two_player", episode_len=60)


def make_episode(length, episode_id=0, fill=None, n_agents=2):
    rng = np.random.default_rng(episode_id + 1)
    value = fill if fill is not None else rng.normal()
    obs = [{"laser": np.full((length, 6), value + i, np.float32),
            "proprio": rng.normal(size=(length, 3)).astype(np.float32)}
           for i in range(n_agents)]
    return Episode(
        obs=obs,
        actions=rng.normal(size=(length, n_agents, 2)).astype(np.float32),
        symbols=np.zeros((length, n_agents, 4), np.float32),
        rewards=rng.normal(size=(length, n_agents)).astype(np.float32),
        global_states=rng.normal(size=(length, 13)).astype(np.float32),
        episode_id=episode_id,
    )


class TestStorage:
    def test_round_trip_field_for_field(self):
        buf = ReplayBuffer(4)
        ep = make_episode(20, episode_id=7)
        buf.add_episode(ep)
        stored = buf.episodes[0]
        assert stored is ep
        assert np.array_equal(stored.actions, ep.actions)
        assert np.array_equal(stored.obs[1]["laser"], ep.obs[1]["laser"])

    def test_fifo_eviction(self):
        buf = ReplayBuffer(10)
        for i in range(11):
            buf.add_episode(make_episode(8, episode_id=i + 1))
        assert len(buf) == 10
        assert [e.episode_id for e in buf.episodes][0] == 2

    def test_malformed_episode_rejected(self):
        ep = make_episode(10)
        ep.rewards = ep.rewards[:5]
        with pytest.raises(ValueError):
            ReplayBuffer(2).add_episode(ep)

    def test_capacity_one_sampling_uses_that_episode(self):
        buf = ReplayBuffer(1)
        buf.add_episode(make_episode(16, episode_id=3))
        batch = buf.sample_sequences(8, 4, Rng(0))
        assert np.all(batch.episode_ids == 3)


class TestSampling:
    def test_fifty_by_fifty_gives_2500_timesteps(self):
        buf = ReplayBuffer(4)
        buf.add_episode(make_episode(60, 1))
        batch = buf.sample_sequences(50, 50, Rng(1))
        assert batch.batch * batch.length == 2500
        assert batch.actions.shape == (50, 50, 2, 2)

    def test_episode_length_equal_to_slice_gives_offset_zero(self):
        buf = ReplayBuffer(4)
        buf.add_episode(make_episode(12, 1))
        batch = buf.sample_sequences(20, 12, Rng(2))
        assert np.all(batch.offsets == 0)

    def test_no_slice_crosses_episode_boundary(self):
        buf = ReplayBuffer(8)
        for i in range(4):
            buf.add_episode(make_episode(15 + i, i + 1))
        batch = buf.sample_sequences(64, 10, Rng(3))
        lengths = {e.episode_id: e.length for e in buf.episodes}
        for ep_id, off in zip(batch.episode_ids, batch.offsets):
            assert off + 10 <= lengths[int(ep_id)]

    def test_short_episodes_excluded(self):
        buf = ReplayBuffer(4)
        buf.add_episode(make_episode(5, 1))
        with pytest.raises(ValueError):
            buf.sample_sequences(4, 10, Rng(0))
        buf.add_episode(make_episode(30, 2))
        batch = buf.sample_sequences(16, 10, Rng(0))
        assert np.all(batch.episode_ids == 2)

    def test_two_episode_frequency_half(self):
        buf = ReplayBuffer(4)
        buf.add_episode(make_episode(20, 1))
        buf.add_episode(make_episode(20, 2))
        batch = buf.sample_sequences(10_000, 5, Rng(4))
        frac = np.mean(batch.episode_ids == 1)
        assert abs(frac - 0.5) < 0.03

    def test_seeded_determinism(self):
        buf = ReplayBuffer(4)
        for i in range(3):
            buf.add_episode(make_episode(25, i + 1))
        a = buf.sample_sequences(12, 8, Rng(9))
        b = buf.sample_sequences(12, 8, Rng(9))
        assert np.array_equal(a.episode_ids, b.episode_ids)
        assert np.array_equal(a.offsets, b.offsets)
        assert np.array_equal(a.global_states, b.global_states)

    def test_shifted_views_align(self):
        buf = ReplayBuffer(2)
        ep = make_episode(20, 1)
        buf.add_episode(ep)
        batch = buf.sample_sequences(6, 8, Rng(5))
        for b in range(6):
            off = int(batch.offsets[b])
            if off == 0:
                assert np.all(batch.prev_actions[b, 0] == 0)
                assert np.all(batch.rewards_in[b, 0] == 0)
            else:
                assert np.array_equal(batch.prev_actions[b, 0], ep.actions[off - 1])
                assert np.array_equal(batch.rewards_in[b, 0], ep.rewards[off - 1])
            assert np.array_equal(batch.prev_actions[b, 1:], ep.actions[off:off + 7])


class TestStartStates:
    def test_states_appear_verbatim_in_storage(self):
        buf = ReplayBuffer(4)
        for i in range(2):
            buf.add_episode(make_episode(20, i + 1))
        batch = buf.sample_sequences(6, 5, Rng(6))
        starts = buf.sample_start_states(batch)
        stored = np.concatenate([e.global_states for e in buf.episodes])
        for row in starts.global_states:
            assert np.any(np.all(np.isclose(stored, row, atol=0), axis=1))

    def test_batch_size_honored_exactly(self):
        buf = ReplayBuffer(4)
        buf.add_episode(make_episode(30, 1))
        batch = buf.sample_sequences(7, 6, Rng(7))
        starts = buf.sample_start_states(batch)
        assert starts.count == 42
        assert starts.obs[0]["laser"].shape == (42, 6)

    def test_reproducible_given_seed(self):
        buf = ReplayBuffer(4)
        buf.add_episode(make_episode(30, 1))
        s1 = buf.sample_start_states(buf.sample_sequences(4, 6, Rng(8)))
        s2 = buf.sample_start_states(buf.sample_sequences(4, 6, Rng(8)))
        assert np.array_equal(s1.global_states, s2.global_states)


class TestEpisodeCsv:
    def test_round_trip(self, tmp_path):
        task = make_task("two_player", episode_len=10)
        rng = np.random.default_rng(0)
        length = 10
        ep = Episode(
            obs=[{"laser": rng.normal(size=(length, 4)).astype(np.float32)}
                 for _ in range(2)],
            actions=rng.normal(size=(length, 2, 2)).astype(np.float32),
            symbols=np.zeros((length, 2, 4), np.float32),
            rewards=rng.normal(size=(length, 2)).astype(np.float32),
            global_states=rng.normal(size=(length, 13)).astype(np.float32),
        )
        ep.symbols[3, 0, 2] = 1.0
        path = tmp_path / "episode.csv"
        write_episode_csv(path, ep, task)
        data = read_episode_csv(path)
        assert data["step"].shape == (10,)
        assert np.allclose(data["r0"], ep.rewards[:, 0], atol=1e-6)
        assert np.allclose(data["a1_steer"], ep.actions[:, 1, 0], atol=1e-6)
        assert data["sym0"][3] == 2.0
        assert data["sym0"][0] == -1.0
        assert np.allclose(data["ball_x"], ep.global_states[:, 8], atol=1e-6)
