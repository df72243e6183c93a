"""Training loops for the model-based method and both baselines.

All three share the same workers, metrics, evaluation protocol, checkpoint
format and (agent-step) budget accounting.  The model-based loop interleaves
collection with one world-model batch plus one imagination policy update
every `train_every` agent steps; baselines follow their own update schedules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..baselines.maddpg import (
    MaddpgConfig,
    build_maddpg,
    build_maddpg_optimizers,
    maddpg_act,
    maddpg_update,
)
from ..baselines.ppo import PpoConfig, PpoRollout, build_ppo_agents, ppo_act, ppo_update
from ..diffcore import tensor as T
from ..diffcore.nn import Params
from ..diffcore.optim import Adam
from ..diffcore.rng import Rng
from ..diffcore.tensor import Tensor
from ..imagination import RolloutConfig, anchor_from_posteriors, rollout_for_training
from ..minisoccer import PhysAction, field_features_batch, incoming_comm, stream_widths
from ..policy import build_policy_optimizers, policy_update
from ..replay import ReplayBuffer
from ..worldmodel import RSSMState
from .collect import EnvWorker, make_workers
from .config import ExperimentConfig, save_config
from .metrics import MetricsRow, MetricsWriter, symbol_statistics
from .runtime import (
    DreamerBundle,
    DreamerDriver,
    build_dreamer_bundle,
    run_eval_episodes,
    save_dreamer_checkpoint,
    save_simple_checkpoint,
)

DREAMER_LOSS_KEYS = ["wm_recon", "wm_reward", "wm_kl", "wm_total",
                     "g_recon", "g_reward", "g_kl", "g_est",
                     "actor_loss", "critic_loss", "mean_return",
                     "action_entropy", "symbol_entropy_loss"]
PPO_LOSS_KEYS = ["pi_loss", "value_loss", "entropy"]
MADDPG_LOSS_KEYS = ["critic_loss", "actor_loss"]


class TrainingAborted(RuntimeError):
    pass


def _abort(run_dir: Path, message: str, payload: dict):
    (run_dir / "diagnostic.json").write_text(json.dumps(payload, indent=2, default=str))
    raise TrainingAborted(message)


def train(cfg: ExperimentConfig) -> Path:
    """Run one experiment; returns the run directory."""
    cfg.validate()
    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir)
    if cfg.algorithm == "ma_dreamer":
        trainer = DreamerTrainer(cfg, run_dir)
    elif cfg.algorithm == "ma_ppo":
        trainer = PpoTrainer(cfg, run_dir)
    else:
        trainer = MaddpgTrainer(cfg, run_dir)
    trainer.run()
    return run_dir


class _TrainerBase:
    def __init__(self, cfg: ExperimentConfig, run_dir: Path, loss_keys: list[str]):
        self.cfg = cfg
        self.run_dir = run_dir
        self.task = cfg.task_spec()
        self.rng = Rng(cfg.seed)
        self.agent_steps = 0
        self.env_steps = 0
        self.updates = 0
        self.best_eval = -np.inf
        self.last_episode_stats = None
        self.metrics = MetricsWriter(run_dir, loss_keys, self.task.n_physical,
                                     cfg.n_symbols)
        self._next_eval = cfg.eval_every
        self._next_ckpt = cfg.checkpoint_every

    # shared plumbing ------------------------------------------------------
    def note_episode(self, stats):
        self.last_episode_stats = stats

    def write_metrics(self, losses: dict[str, float]):
        stats = self.last_episode_stats
        freq, ent = (symbol_statistics(stats.symbol_counts) if stats is not None
                     else ([0.0] * self.cfg.n_symbols, 0.0))
        self.metrics.write(MetricsRow(
            env_steps=self.env_steps, agent_steps=self.agent_steps,
            update_index=self.updates, losses=losses,
            episode_social_reward=stats.social_reward if stats else None,
            per_agent_reward=[float(x) for x in stats.per_agent_reward] if stats else None,
            symbol_freq=freq, symbol_entropy=ent))

    def maybe_eval_and_checkpoint(self):
        if self.agent_steps >= self._next_ckpt:
            self._next_ckpt += self.cfg.checkpoint_every
            self.save_checkpoint("last")
        if self.agent_steps >= self._next_eval:
            self._next_eval += self.cfg.eval_every
            stats = run_eval_episodes(self.eval_driver_factory(), self.task,
                                      self.cfg.eval_episodes, seed=self.cfg.seed + 917)
            self.metrics.write_eval(self.agent_steps, stats)
            if stats["mean_social"] > self.best_eval:
                self.best_eval = stats["mean_social"]
                self.save_checkpoint("best")

    def finish(self):
        self.save_checkpoint("last")
        stats = run_eval_episodes(self.eval_driver_factory(), self.task,
                                  self.cfg.eval_episodes, seed=self.cfg.seed + 917)
        self.metrics.write_eval(self.agent_steps, stats)
        if stats["mean_social"] > self.best_eval or not np.isfinite(self.best_eval):
            self.best_eval = stats["mean_social"]
            self.save_checkpoint("best")
        self.metrics.close()

    # per-algorithm hooks ---------------------------------------------------
    def save_checkpoint(self, tag: str):
        raise NotImplementedError

    def eval_driver_factory(self):
        raise NotImplementedError


# -- MA-Dreamer ---------------------------------------------------------------

class DreamerTrainer(_TrainerBase):
    def __init__(self, cfg: ExperimentConfig, run_dir: Path):
        super().__init__(cfg, run_dir, DREAMER_LOSS_KEYS)
        self.bundle = build_dreamer_bundle(cfg, with_global=cfg.shared_imagination)
        self.buffer = ReplayBuffer(cfg.replay_capacity)
        self.workers = make_workers(self.task, cfg.n_workers, self.rng.split("collect"))
        self.driver = DreamerDriver(self.bundle, cfg.n_workers, self.rng.split("drive"),
                                    greedy=False, explore_std=cfg.explore_std_start)
        params = self.bundle.params
        kw = dict(beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps,
                  clip_norm=cfg.clip_norm)
        self.model_opts = []
        for k in range(self.task.n_physical):
            names = set(params.subset(f"agent{k}/model"))
            self.model_opts.append(Adam([p for p in params.parameters() if p.name in names],
                                        cfg.model_lr, **kw))
        self.global_opt = None
        if self.bundle.gmodel is not None:
            names = set(params.subset("global"))
            self.global_opt = Adam([p for p in params.parameters() if p.name in names],
                                   cfg.model_lr, **kw)
        self.policy_opts = build_policy_optimizers(params, self.bundle.policies, cfg.policy_lr)
        self._pending = 0.0

    def save_checkpoint(self, tag: str):
        save_dreamer_checkpoint(self.bundle, self.run_dir / "checkpoints" / tag)

    def eval_driver_factory(self):
        bundle = self.bundle
        return lambda n, rng: DreamerDriver(bundle, n, rng, greedy=True)

    def _explore_std(self) -> float:
        c = self.cfg
        frac = min(1.0, self.agent_steps / max(1, c.explore_anneal_steps))
        return c.explore_std_start + frac * (c.explore_std_final - c.explore_std_start)

    def run(self):
        cfg, task = self.cfg, self.task
        while self.agent_steps < cfg.agent_steps:
            self.driver.explore_std = self._explore_std()
            obs_rows = [w.obs for w in self.workers]
            actions, symbols = self.driver.step(obs_rows)
            for j, worker in enumerate(self.workers):
                _, done = worker.step(actions[j], symbols[j])
                if done:
                    episode, stats = worker.take_episode(policy_version=self.updates)
                    self.buffer.add_episode(episode)
                    self.note_episode(stats)
                    self.driver.reset_row(j)
                    worker.begin_episode()
            self.env_steps += cfg.n_workers
            self.agent_steps += cfg.n_workers * task.n_physical
            self._pending += cfg.n_workers * task.n_physical
            if self._ready_to_train():
                while self._pending >= cfg.train_every:
                    self._pending -= cfg.train_every
                    self.train_step()
            self.maybe_eval_and_checkpoint()
        self.finish()

    def _ready_to_train(self) -> bool:
        if len(self.buffer) < self.cfg.prefill_episodes:
            return False
        return any(e.length >= self.cfg.seq_len for e in self.buffer.episodes)

    def train_step(self):
        cfg, task, bundle = self.cfg, self.task, self.bundle
        params = bundle.params
        u = self.updates
        batch = self.buffer.sample_sequences(cfg.batch_size, cfg.seq_len,
                                             self.rng.split(f"batch{u}"))
        B, L = batch.batch, batch.length
        losses = {}
        agent_states, agent_posts = [], []
        wm_avg = {"wm_recon": 0.0, "wm_reward": 0.0, "wm_kl": 0.0, "wm_total": 0.0}
        for k, model in enumerate(bundle.models):
            states, loss, posts = model.observe_sequence(
                batch.obs[k], batch.prev_actions[:, :, k, :], batch.rewards_in[:, :, k],
                self.rng.split(f"wm{k}u{u}"))
            if not np.isfinite(loss.total):
                _abort(self.run_dir, f"non-finite world-model loss (agent {k})",
                       {"agent": k, "loss": vars(loss) | {"total_tensor": None},
                        "update": u, "agent_steps": self.agent_steps})
            grads = T.backward(loss.total_tensor, params.subset(f"agent{k}/model"))
            self.model_opts[k].apply(grads)
            agent_states.append(states)
            agent_posts.append(posts)
            for key, v in (("wm_recon", loss.recon), ("wm_reward", loss.reward),
                           ("wm_kl", loss.kl), ("wm_total", loss.total)):
                wm_avg[key] += v / task.n_physical
        losses.update(wm_avg)

        feats = field_features_batch(
            batch.global_states.reshape(B * L, -1), task.n_physical).reshape(B, L, -1)
        g_states = None
        if bundle.gmodel is not None:
            posts_np = [(np.stack([p.mean.data for p in posts]),
                         np.stack([p.std.data for p in posts]))
                        for posts in agent_posts]
            g_states, gloss = bundle.gmodel.observe_sequence(
                feats, batch.prev_actions.reshape(B, L, -1), batch.rewards,
                posts_np, self.rng.split(f"gm{u}"))
            if not np.isfinite(gloss.total):
                _abort(self.run_dir, "non-finite global-model loss",
                       {"loss": {"recon": gloss.recon, "kl": gloss.kl}, "update": u})
            grads = T.backward(gloss.total_tensor, params.subset("global"))
            self.global_opt.apply(grads)
            losses.update({"g_recon": gloss.recon, "g_reward": gloss.reward,
                           "g_kl": gloss.kl, "g_est": float(np.mean(gloss.estimation))})
        else:
            losses.update({"g_recon": None, "g_reward": None, "g_kl": None, "g_est": None})

        anchor = self._anchor(agent_states, g_states, feats)
        rcfg = RolloutConfig(horizon=cfg.horizon,
                             mode="shared" if cfg.shared_imagination else "naive",
                             comm=cfg.comm, n_agents=task.n_physical,
                             reward_source=cfg.reward_source)
        traj = rollout_for_training(task, rcfg, bundle.models, bundle.gmodel,
                                    bundle.policies, anchor, self.rng.split(f"rollout{u}"))
        report = policy_update(traj, bundle.policies, params, self.policy_opts, bundle.pcfg)
        if not np.isfinite(report["actor_loss"]):
            _abort(self.run_dir, "non-finite policy loss", {"report": report, "update": u})
        losses.update({"actor_loss": report["actor_loss"],
                       "critic_loss": report["critic_loss"],
                       "mean_return": report["mean_return"],
                       "action_entropy": report["action_entropy"],
                       "symbol_entropy_loss": report["symbol_entropy"]})
        self.updates += 1
        self.write_metrics(losses)

    def _anchor(self, agent_states, g_states, feats):
        """Flatten filtered (t, batch) states into detached imagination starts."""
        def flatten(states_list):
            deter = np.concatenate([s.deter.data for s in states_list], axis=0)
            stoch = np.concatenate([s.stoch.data for s in states_list], axis=0)
            return RSSMState(Tensor(deter), Tensor(stoch))

        agents = [flatten(states) for states in agent_states]
        glob = flatten(g_states) if g_states is not None else None
        B, L = feats.shape[0], feats.shape[1]
        feats_flat = np.ascontiguousarray(
            feats.transpose(1, 0, 2).reshape(B * L, feats.shape[-1]))
        return anchor_from_posteriors(agents, glob, feats_flat)


# -- MA-PPO -------------------------------------------------------------------

class PpoDriver:
    """Greedy or sampling environment driver for the PPO agents."""

    def __init__(self, agents, task, n_workers: int, rng: Rng | None):
        self.agents = agents
        self.task = task
        self.rng = rng
        self.states = [a.zero_state(n_workers) for a in agents]
        self.prev_symbols = {s: np.zeros((n_workers, task.n_symbols), np.float32)
                             for s in task.comm_senders()}
        self._tick = 0

    def reset_row(self, w: int):
        for h, c in self.states:
            h.data[w] = 0.0
            c.data[w] = 0.0
        for s in self.prev_symbols:
            self.prev_symbols[s][w] = 0.0

    def _comm_for(self, agent: int, n: int):
        senders = self.task.incoming_senders(agent)
        if not senders or not self.task.comm_enabled:
            return None
        return np.concatenate([self.prev_symbols[s] for s in senders], axis=-1)

    def step(self, obs_rows):
        task = self.task
        w = len(obs_rows)
        tick = self._tick
        self._tick += 1
        actions = np.zeros((w, task.n_physical, 2), np.float32)
        symbols: dict[int, np.ndarray] = {}
        outs = []
        for i, agent in enumerate(self.agents):
            obs = {name: np.stack([obs_rows[j][i].streams[name] for j in range(w)])
                   for name in agent.stream_widths}
            rng = self.rng.split(f"a{i}t{tick}") if self.rng is not None else None
            h, c = self.states[i]
            out = ppo_act(agent, obs, self._comm_for(i, w), h, c, rng)
            self.states[i] = (out["h"], out["c"])
            outs.append(out)
            if out["action"] is not None:
                actions[:, i] = np.clip(out["action"], -1.0, 1.0)
            if out["symbol"] is not None:
                from ..diffcore.dists import onehot
                symbols[i] = onehot(out["symbol"], task.n_symbols)
        for s, hot in symbols.items():
            self.prev_symbols[s] = hot
        out_actions = [[PhysAction(float(actions[j, k, 0]), float(actions[j, k, 1]))
                        for k in range(task.n_physical)] for j in range(w)]
        out_symbols = [{s: symbols[s][j] for s in symbols} for j in range(w)]
        return out_actions, out_symbols, outs


class PpoTrainer(_TrainerBase):
    def __init__(self, cfg: ExperimentConfig, run_dir: Path):
        super().__init__(cfg, run_dir, PPO_LOSS_KEYS)
        scale = cfg.model_scale
        s = lambda w: max(8, int(round(w * scale)))
        self.pcfg = PpoConfig(
            encoder_widths=tuple([s(cfg.ppo_encoder_units)] * 3),
            lstm_units=s(cfg.ppo_lstm_units), lr=cfg.ppo_lr, clip=cfg.ppo_clip,
            entropy_coef=cfg.ppo_entropy_coef, value_coef=cfg.ppo_value_coef,
            gamma=cfg.gamma, gae_lambda=cfg.ppo_gae_lambda,
            rollout_steps=cfg.ppo_rollout_steps, epochs=cfg.ppo_epochs,
            n_workers=cfg.n_workers)
        self.params = Params(Rng(cfg.seed).split("ppo_params"))
        obs_widths = [stream_widths(self.task, i) for i in range(self.task.n_agents)]
        self.agents = build_ppo_agents(self.params, self.task, obs_widths, self.pcfg)
        self.opts = []
        for agent in self.agents:
            names = set(self.params.subset(agent.prefix))
            self.opts.append(Adam([p for p in self.params.parameters() if p.name in names],
                                  self.pcfg.lr, clip_norm=cfg.clip_norm))
        self.workers = make_workers(self.task, cfg.n_workers, self.rng.split("collect"))
        self.driver = PpoDriver(self.agents, self.task, cfg.n_workers, self.rng.split("drive"))

    def save_checkpoint(self, tag: str):
        save_simple_checkpoint(self.params, self.run_dir / "checkpoints" / tag)

    def eval_driver_factory(self):
        agents, task = self.agents, self.task
        return lambda n, rng: PpoDriver(agents, task, n, None)

    def run(self):
        cfg, task = self.cfg, self.task
        n_w = cfg.n_workers
        steps = cfg.ppo_rollout_steps
        while self.agent_steps < cfg.agent_steps:
            chunks = [{"obs": [], "comm": [], "action": [], "logp_a": [], "symbol": [],
                       "logp_s": [], "value": [], "reward": [], "done": []}
                      for _ in self.agents]
            init_states = [(st[0].data.copy(), st[1].data.copy()) for st in self.driver.states]
            for _t in range(steps):
                obs_rows = [w.obs for w in self.workers]
                comm_cache = [self.driver._comm_for(i, n_w) for i in range(task.n_agents)]
                actions, symbols, outs = self.driver.step(obs_rows)
                rewards = np.zeros((n_w, task.n_physical), np.float32)
                dones = np.zeros(n_w, np.float32)
                for j, worker in enumerate(self.workers):
                    r, done = worker.step(actions[j], symbols[j])
                    rewards[j] = r
                    if done:
                        dones[j] = 1.0
                        episode, stats = worker.take_episode(policy_version=self.updates)
                        self.note_episode(stats)
                        self.driver.reset_row(j)
                        worker.begin_episode()
                for i, agent in enumerate(self.agents):
                    ch = chunks[i]
                    ch["obs"].append({name: np.stack([obs_rows[j][i].streams[name]
                                                      for j in range(n_w)])
                                      for name in agent.stream_widths})
                    ch["comm"].append(comm_cache[i])
                    out = outs[i]
                    ch["action"].append(out["action"])
                    ch["logp_a"].append(out["logp_action"])
                    ch["symbol"].append(out["symbol"])
                    ch["logp_s"].append(out["logp_symbol"])
                    ch["value"].append(out["value"])
                    if i < task.n_physical:
                        ch["reward"].append(rewards[:, i])
                    else:
                        ch["reward"].append(rewards.mean(axis=1))
                    ch["done"].append(dones.copy())
                self.env_steps += n_w
                self.agent_steps += n_w * task.n_physical
            losses = {"pi_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
            for i, agent in enumerate(self.agents):
                rollout = self._finish_chunk(agent, i, chunks[i], init_states[i])
                report = ppo_update(agent, rollout, self.opts[i])
                if not np.isfinite(report["pi_loss"]):
                    _abort(self.run_dir, "non-finite PPO loss", {"agent": i, "report": report})
                for k in losses:
                    losses[k] += report.get(k, 0.0) / len(self.agents)
            self.updates += 1
            self.write_metrics(losses)
            self.maybe_eval_and_checkpoint()
        self.finish()

    def _finish_chunk(self, agent, i, ch, init_state) -> PpoRollout:
        with T.no_grad():
            obs_rows = [w.obs for w in self.workers]
            obs = {name: np.stack([obs_rows[j][i].streams[name]
                                   for j in range(self.cfg.n_workers)])
                   for name in agent.stream_widths}
            h, c = self.driver.states[i]
            out = ppo_act(agent, obs, self.driver._comm_for(i, self.cfg.n_workers),
                          Tensor(h.data.copy()), Tensor(c.data.copy()), None)
            bootstrap = out["value"]
        stack = lambda key: (np.stack(ch[key]) if ch[key][0] is not None else None)
        return PpoRollout(
            obs={name: np.stack([row[name] for row in ch["obs"]])
                 for name in agent.stream_widths},
            comm=stack("comm"), actions=stack("action"), logp_actions=stack("logp_a"),
            symbols=stack("symbol"), logp_symbols=stack("logp_s"),
            values=np.stack(ch["value"]), rewards=np.stack(ch["reward"]),
            dones=np.stack(ch["done"]), bootstrap=bootstrap,
            init_h=init_state[0], init_c=init_state[1])


# -- MADDPG -------------------------------------------------------------------

class MaddpgDriver:
    def __init__(self, agents, task, cfg: MaddpgConfig, n_workers: int, rng: Rng | None):
        self.agents = agents
        self.task = task
        self.cfg = cfg
        self.rng = rng
        self.states = [a.zero_state(n_workers) for a in agents.actors]
        self.prev_symbols = {s: np.zeros((n_workers, task.n_symbols), np.float32)
                             for s in task.comm_senders()}
        self._tick = 0

    def reset_row(self, w: int):
        for h, c in self.states:
            h.data[w] = 0.0
            c.data[w] = 0.0
        for s in self.prev_symbols:
            self.prev_symbols[s][w] = 0.0

    def _comm_for(self, agent: int):
        senders = self.task.incoming_senders(agent)
        if not senders or not self.task.comm_enabled:
            return None
        return np.concatenate([self.prev_symbols[s] for s in senders], axis=-1)

    def step(self, obs_rows):
        task = self.task
        w = len(obs_rows)
        tick = self._tick
        self._tick += 1
        actions = np.zeros((w, task.n_physical, 2), np.float32)
        symbols: dict[int, np.ndarray] = {}
        for i, actor in enumerate(self.agents.actors):
            obs = {name: np.stack([obs_rows[j][i].streams[name] for j in range(w)])
                   for name in actor.stream_widths}
            rng = self.rng.split(f"a{i}t{tick}") if self.rng is not None else None
            h, c = self.states[i]
            a, sym, h, c = maddpg_act(actor, obs, self._comm_for(i), h, c, rng, self.cfg)
            self.states[i] = (h, c)
            if a is not None:
                actions[:, i] = a
            if sym is not None:
                from ..diffcore.dists import onehot
                symbols[i] = onehot(sym, task.n_symbols)
        for s, hot in symbols.items():
            self.prev_symbols[s] = hot
        out_actions = [[PhysAction(float(actions[j, k, 0]), float(actions[j, k, 1]))
                        for k in range(task.n_physical)] for j in range(w)]
        out_symbols = [{s: symbols[s][j] for s in symbols} for j in range(w)]
        return out_actions, out_symbols


class MaddpgTrainer(_TrainerBase):
    def __init__(self, cfg: ExperimentConfig, run_dir: Path):
        super().__init__(cfg, run_dir, MADDPG_LOSS_KEYS)
        s = lambda w: max(8, int(round(w * cfg.model_scale)))
        self.mcfg = MaddpgConfig(units=s(cfg.maddpg_units), lr_actor=cfg.maddpg_lr_actor,
                                 lr_critic=cfg.maddpg_lr_critic, gamma=cfg.gamma,
                                 polyak=cfg.maddpg_polyak,
                                 batch_episodes=cfg.maddpg_batch_episodes,
                                 update_every=cfg.maddpg_update_every,
                                 exploration_noise=cfg.maddpg_exploration_noise,
                                 gumbel_temperature=cfg.maddpg_gumbel_temperature)
        obs_widths = [stream_widths(self.task, i) for i in range(self.task.n_agents)]
        self.agents = build_maddpg(self.task, obs_widths, self.mcfg, Rng(cfg.seed))
        self.opts = build_maddpg_optimizers(self.agents, self.mcfg)
        self.buffer = ReplayBuffer(cfg.replay_capacity)
        self.workers = make_workers(self.task, cfg.n_workers, self.rng.split("collect"))
        self.driver = MaddpgDriver(self.agents, self.task, self.mcfg, cfg.n_workers,
                                   self.rng.split("drive"))
        self._pending = 0.0

    def save_checkpoint(self, tag: str):
        save_simple_checkpoint(self.agents.params, self.run_dir / "checkpoints" / tag)

    def eval_driver_factory(self):
        agents, task, mcfg = self.agents, self.task, self.mcfg
        return lambda n, rng: MaddpgDriver(agents, task, mcfg, n, None)

    def run(self):
        cfg, task = self.cfg, self.task
        while self.agent_steps < cfg.agent_steps:
            obs_rows = [w.obs for w in self.workers]
            actions, symbols = self.driver.step(obs_rows)
            for j, worker in enumerate(self.workers):
                _, done = worker.step(actions[j], symbols[j])
                if done:
                    episode, stats = worker.take_episode(policy_version=self.updates)
                    self.buffer.add_episode(episode)
                    self.note_episode(stats)
                    self.driver.reset_row(j)
                    worker.begin_episode()
            self.env_steps += cfg.n_workers
            self.agent_steps += cfg.n_workers * task.n_physical
            self._pending += cfg.n_workers * task.n_physical
            if len(self.buffer) >= self.mcfg.batch_episodes:
                while self._pending >= self.mcfg.update_every:
                    self._pending -= self.mcfg.update_every
                    report = maddpg_update(self.agents, self.buffer, task, self.mcfg,
                                           self.opts, self.rng.split(f"upd{self.updates}"))
                    if not np.isfinite(report["critic_loss"]):
                        _abort(self.run_dir, "non-finite MADDPG loss", {"report": report})
                    self.updates += 1
                    self.write_metrics(report)
            self.maybe_eval_and_checkpoint()
        self.finish()
