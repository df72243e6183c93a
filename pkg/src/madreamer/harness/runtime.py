"""Network bundles, environment-time acting, evaluation and checkpoints.

Environment-time acting is decentralized by construction: each physical
agent filters its own latent model with its own observations and actions;
speakers read their full-field observation directly.  The global model
never appears here, which is what lets evaluation run with its checkpoint
deleted.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..diffcore import tensor as T
from ..diffcore.checkpoint import load_params, save_params
from ..diffcore.nn import Params
from ..diffcore.optim import Adam
from ..diffcore.rng import Rng
from ..diffcore.tensor import Tensor
from ..globalmodel import GlobalModelConfig, GlobalWorldModel
from ..minisoccer import PhysAction, TaskSpec, comm_input_width, field_feature_width, stream_widths
from ..policy import (
    ActorNet,
    AgentPolicy,
    CommNet,
    CriticNet,
    PolicyConfig,
    PolicyOptimizers,
    act,
    build_policy_optimizers,
    emit_symbol,
)
from ..worldmodel import AgentWorldModel, RSSMState, WorldModelConfig
from .collect import EnvWorker
from .config import ExperimentConfig


@dataclass
class DreamerBundle:
    params: Params
    task: TaskSpec
    models: list[AgentWorldModel]
    gmodel: GlobalWorldModel | None
    policies: list[AgentPolicy]
    wcfg: WorldModelConfig
    gcfg: GlobalModelConfig
    pcfg: PolicyConfig


def model_configs(cfg: ExperimentConfig):
    s = cfg.model_scale
    scale = lambda w: max(8, int(round(w * s)))
    enc = tuple([scale(cfg.encoder_units)] * cfg.encoder_layers)
    wcfg = WorldModelConfig(deter=scale(cfg.deter), stoch=scale(cfg.stoch),
                            encoder_widths=enc, decoder_widths=enc,
                            latent_hidden=scale(cfg.latent_hidden),
                            reward_hidden=(scale(cfg.reward_hidden), scale(cfg.reward_hidden)),
                            kl_beta=cfg.kl_beta, free_nats=cfg.free_nats)
    gcfg = GlobalModelConfig(deter=scale(cfg.global_deter), stoch=scale(cfg.global_stoch),
                             encoder_widths=enc, decoder_widths=enc, estimation_widths=enc,
                             latent_hidden=scale(cfg.latent_hidden),
                             reward_hidden=(scale(cfg.reward_hidden), scale(cfg.reward_hidden)),
                             kl_beta=cfg.kl_beta, free_nats=cfg.free_nats,
                             estimation_weight=cfg.estimation_weight)
    trunk = tuple([scale(cfg.trunk_units)] * 3)
    pcfg = PolicyConfig(comm_units=scale(cfg.comm_units), trunk_widths=trunk,
                        action_width=2, n_symbols=cfg.n_symbols, gamma=cfg.gamma,
                        lam=cfg.lam, entropy_action=cfg.entropy_action,
                        entropy_comm=cfg.entropy_comm)
    return wcfg, gcfg, pcfg


def build_dreamer_bundle(cfg: ExperimentConfig, with_global: bool = True) -> DreamerBundle:
    task = cfg.task_spec()
    wcfg, gcfg, pcfg = model_configs(cfg)
    params = Params(Rng(cfg.seed).split("params"))
    models = [AgentWorldModel(params, f"agent{k}/model", stream_widths(task, k), 2, wcfg)
              for k in range(task.n_physical)]
    gmodel = None
    if with_global:
        gmodel = GlobalWorldModel(params, field_feature_width(task.n_physical),
                                  2 * task.n_physical, task.n_physical,
                                  [wcfg.stoch] * task.n_physical, gcfg)
    z_width = wcfg.deter + wcfg.stoch
    senders = set(task.comm_senders())
    policies = []
    for i in range(task.n_agents):
        cw = comm_input_width(task, i) if task.comm_enabled else 0
        if i < task.n_physical:
            actor = ActorNet(params, f"agent{i}/actor", z_width, cw, pcfg)
            critic = CriticNet(params, f"agent{i}/critic", z_width, cw, pcfg)
            comm = (CommNet(params, f"agent{i}/comm", z_width, pcfg)
                    if i in senders else None)
            policies.append(AgentPolicy(actor=actor, critic=critic, comm=comm))
        else:
            comm = (CommNet(params, f"agent{i}/comm", field_feature_width(task.n_physical), pcfg)
                    if i in senders else None)
            policies.append(AgentPolicy(actor=None, critic=None, comm=comm, is_speaker=True))
    return DreamerBundle(params=params, task=task, models=models, gmodel=gmodel,
                         policies=policies, wcfg=wcfg, gcfg=gcfg, pcfg=pcfg)


class DreamerDriver:
    """Batched environment-time acting over a set of workers."""

    def __init__(self, bundle: DreamerBundle, n_workers: int, rng: Rng,
                 greedy: bool = False, explore_std: float = 0.0):
        self.bundle = bundle
        self.n_workers = n_workers
        self.rng = rng
        self.greedy = greedy
        self.explore_std = explore_std
        self._tick = 0
        task = bundle.task
        w = n_workers
        self.rssm = [m.initial_state(w) for m in bundle.models]
        self.actor_states = [p.actor.zero_state(w) if p.actor else None for p in bundle.policies]
        self.comm_states = [p.comm.zero_state(w) if p.comm else None for p in bundle.policies]
        self.prev_actions = np.zeros((w, task.n_physical, 2), dtype=np.float32)
        self.prev_symbols = {s: np.zeros((w, task.n_symbols), dtype=np.float32)
                             for s in task.comm_senders()}

    def reset_row(self, w: int) -> None:
        for state in self.rssm:
            state.deter.data[w] = 0.0
            state.stoch.data[w] = 0.0
        for st in self.actor_states + self.comm_states:
            if st is not None:
                st.h.data[w] = 0.0
                st.c.data[w] = 0.0
        self.prev_actions[w] = 0.0
        for s in self.prev_symbols:
            self.prev_symbols[s][w] = 0.0

    def _incoming(self, agent: int) -> Tensor | None:
        task = self.bundle.task
        senders = task.incoming_senders(agent)
        if not senders or not task.comm_enabled:
            return None
        return Tensor(np.concatenate([self.prev_symbols[s] for s in senders], axis=-1))

    def step(self, obs_rows: list[list]) -> tuple[list[list[PhysAction]], list[dict[int, np.ndarray]]]:
        """obs_rows[w][agent] -> AgentObs.  Returns per-worker actions and symbols."""
        bundle, task = self.bundle, self.bundle.task
        w = len(obs_rows)
        tick = self._tick
        self._tick += 1
        with T.no_grad():
            zs = []
            for k, model in enumerate(bundle.models):
                obs = {name: np.stack([obs_rows[j][k].streams[name] for j in range(w)])
                       for name in model.stream_widths}
                if self.greedy:
                    noise = np.zeros((w, model.cfg.stoch), dtype=np.float32)
                else:
                    noise = self.rng.split(f"post{k}t{tick}").normal((w, model.cfg.stoch))
                state, _, _ = model.posterior_step(self.rssm[k], self.prev_actions[:, k],
                                                   obs, noise)
                self.rssm[k] = state
                zs.append(state.z())

            symbols: dict[int, np.ndarray] = {}
            for s in task.comm_senders():
                pol = bundle.policies[s]
                if pol.is_speaker:
                    x = Tensor(np.stack([obs_rows[j][s].streams["field"] for j in range(w)]))
                else:
                    x = zs[s]
                noise = (None if self.greedy
                         else self.rng.split(f"sym{s}t{tick}").uniform((w, task.n_symbols)))
                hot, self.comm_states[s], _ = emit_symbol(pol.comm, x, self.comm_states[s], noise)
                symbols[s] = hot.numpy().copy()

            actions = np.zeros((w, task.n_physical, 2), dtype=np.float32)
            for k in range(task.n_physical):
                dist, self.actor_states[k] = bundle.policies[k].actor.dist(
                    zs[k], self._incoming(k), self.actor_states[k])
                mean = dist.mode().numpy()
                if self.greedy or self.explore_std <= 0:
                    a = mean
                else:
                    a = mean + self.explore_std * self.rng.split(f"act{k}t{tick}").normal(mean.shape)
                actions[:, k] = np.clip(a, -1.0, 1.0)

        self.prev_actions = actions
        for s, hot in symbols.items():
            self.prev_symbols[s] = hot
        out_actions = [[PhysAction(float(actions[j, k, 0]), float(actions[j, k, 1]))
                        for k in range(task.n_physical)] for j in range(w)]
        out_symbols = [{s: symbols[s][j] for s in symbols} for j in range(w)]
        return out_actions, out_symbols


def run_eval_episodes(driver_factory, task: TaskSpec, n_episodes: int, seed: int):
    """Greedy evaluation protocol shared by every algorithm.

    `driver_factory(n_workers, rng)` must build a greedy driver with
    `step(obs_rows)` and `reset_row(w)`.
    """
    rng = Rng(seed)
    worker = EnvWorker(task, rng.split("eval_env"))
    driver = driver_factory(1, rng.split("eval_driver"))
    social, goals, lengths = [], [], []
    per_agent = np.zeros(task.n_physical)
    symbol_counts = np.zeros((task.n_agents, task.n_symbols))
    for _ in range(n_episodes):
        worker.begin_episode()
        driver.reset_row(0)
        done = False
        while not done:
            result = driver.step([worker.obs])
            actions, symbols = result[0], result[1]
            _, done = worker.step(actions[0], symbols[0])
        episode, stats = worker.take_episode()
        social.append(stats.social_reward)
        goals.append(stats.goal)
        lengths.append(stats.length)
        per_agent += stats.per_agent_reward
        symbol_counts += stats.symbol_counts
    goals = np.array(goals)
    return {
        "mean_social": float(np.mean(social)),
        "std_social": float(np.std(social)),
        "mean_per_agent": [float(x) for x in per_agent / max(n_episodes, 1)],
        "correct_goal_rate": float(np.mean(goals == 1)),
        "wrong_goal_rate": float(np.mean(goals == -1)),
        "mean_length": float(np.mean(lengths)),
        "episode_social": social,
        "episode_goals": [int(g) for g in goals],
        "symbol_counts": symbol_counts,
        "n_episodes": n_episodes,
    }


# -- checkpoints -------------------------------------------------------------

AGENTS_CKPT = "agents.ckpt"
POLICIES_CKPT = "policies.ckpt"
GLOBAL_CKPT = "global.ckpt"


def save_dreamer_checkpoint(bundle: DreamerBundle, ckpt_dir) -> None:
    out = Path(ckpt_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = bundle.params.state_dict()
    agents = {n: v for n, v in state.items() if "/model/" in n}
    policies = {n: v for n, v in state.items()
                if "/actor/" in n or "/critic/" in n or "/comm/" in n}
    glob = {n: v for n, v in state.items() if n.startswith("global/")}
    save_params(out / AGENTS_CKPT, agents)
    save_params(out / POLICIES_CKPT, policies)
    if glob:
        save_params(out / GLOBAL_CKPT, glob)


def load_dreamer_checkpoint(bundle: DreamerBundle, ckpt_dir) -> None:
    """Evaluation path: the global checkpoint is optional and never required."""
    ckpt = Path(ckpt_dir)
    state = {}
    state.update(load_params(ckpt / AGENTS_CKPT))
    state.update(load_params(ckpt / POLICIES_CKPT))
    if bundle.gmodel is not None:
        gpath = ckpt / GLOBAL_CKPT
        if not gpath.exists():
            raise FileNotFoundError(
                f"{gpath} missing; rebuild the bundle with with_global=False to evaluate")
        state.update(load_params(gpath))
    wanted = {n for n, _ in bundle.params.items()}
    bundle.params.load_state_dict({n: v for n, v in state.items() if n in wanted})


def save_simple_checkpoint(params: Params, ckpt_dir, name: str = "nets.ckpt") -> None:
    out = Path(ckpt_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_params(out / name, params.state_dict())


def load_simple_checkpoint(params: Params, ckpt_dir, name: str = "nets.ckpt") -> None:
    params.load_state_dict(load_params(Path(ckpt_dir) / name))
