"""Recurrent MADDPG baseline: deterministic actors, centralized critics.

Each agent owns an actor seeing only its local observation and incoming
symbols, and a critic that consumes every agent's observation, action and
symbol (the centralized-training component).  Symbols are relaxed with a
fixed-temperature Gumbel-Softmax during learning and emitted as hard samples
in the environment.  Polyak-averaged target networks stabilize the TD
targets.  Updates run over whole replayed episodes with masked BPTT.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import tensor as T
from ..diffcore.dists import gumbel_softmax_sample, onehot
from ..diffcore.nn import MLP, LSTMCell, Params
from ..diffcore.optim import Adam
from ..diffcore.rng import Rng
from ..diffcore.tensor import Tensor
from ..minisoccer import TaskSpec
from ..replay import Episode, ReplayBuffer


@dataclass(frozen=True)
class MaddpgConfig:
    units: int = 128
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    gamma: float = 0.99
    polyak: float = 0.005
    batch_episodes: int = 128
    update_every: int = 100        # agent steps between updates
    exploration_noise: float = 0.1
    gumbel_temperature: float = 1.0
    action_width: int = 2

    def scaled(self, factor: float) -> "MaddpgConfig":
        return MaddpgConfig(units=max(8, int(self.units * factor)),
                            lr_actor=self.lr_actor, lr_critic=self.lr_critic,
                            gamma=self.gamma, polyak=self.polyak,
                            batch_episodes=self.batch_episodes,
                            update_every=self.update_every,
                            exploration_noise=self.exploration_noise,
                            gumbel_temperature=self.gumbel_temperature,
                            action_width=self.action_width)


class MaddpgActor:
    """Deterministic policy: local streams -> FC -> concat -> FC -> LSTM -> heads."""

    def __init__(self, params: Params, prefix: str, stream_widths: dict[str, int],
                 comm_in_width: int, acts_physically: bool, emits_symbols: bool,
                 n_symbols: int, cfg: MaddpgConfig):
        u = cfg.units
        self.cfg = cfg
        self.prefix = prefix
        self.stream_widths = dict(stream_widths)
        self.comm_in_width = comm_in_width
        self.acts_physically = acts_physically
        self.emits_symbols = emits_symbols
        self.n_symbols = n_symbols
        self.encoders = {name: MLP(params, f"{prefix}/enc/{name}", w, (u,))
                         for name, w in sorted(stream_widths.items())}
        if comm_in_width > 0:
            self.encoders["__comm__"] = MLP(params, f"{prefix}/enc/comm", comm_in_width, (u,))
        self.mix = MLP(params, f"{prefix}/mix", u * len(self.encoders), (u,))
        self.cell = LSTMCell(params, f"{prefix}/lstm", u, u)
        if acts_physically:
            self.action_head = MLP(params, f"{prefix}/action", u, (u, cfg.action_width),
                                   out_scale=0.01)
        if emits_symbols:
            self.comm_head = MLP(params, f"{prefix}/comm", u, (u, n_symbols), out_scale=0.01)
        self.params = params

    def zero_state(self, batch: int):
        return self.cell.zero_state(batch)

    def step(self, obs: dict[str, Tensor], comm: Tensor | None, h: Tensor, c: Tensor,
             reset_mask: Tensor | None = None):
        parts = [T.relu(self.encoders[n](obs[n])) for n in sorted(self.stream_widths)]
        if self.comm_in_width > 0:
            parts.append(T.relu(self.encoders["__comm__"](comm)))
        x = T.relu(self.mix(T.concat(parts, axis=-1)))
        if reset_mask is not None:
            h = h * reset_mask
            c = c * reset_mask
        h, c = self.cell(x, h, c)
        action = T.tanh(self.action_head(h)) if self.acts_physically else None
        logits = self.comm_head(h) if self.emits_symbols else None
        return action, logits, h, c


class MaddpgCritic:
    """Centralized action-value: all observations + all actions + all symbols."""

    def __init__(self, params: Params, prefix: str, obs_widths: list[dict[str, int]],
                 joint_action_width: int, joint_comm_width: int, cfg: MaddpgConfig):
        u = cfg.units
        self.cfg = cfg
        self.prefix = prefix
        self.obs_widths = obs_widths
        self.joint_action_width = joint_action_width
        self.joint_comm_width = joint_comm_width
        self.input_width = (sum(sum(w.values()) for w in obs_widths)
                            + joint_action_width + joint_comm_width)
        self.encoders = []
        for i, widths in enumerate(obs_widths):
            enc = {name: MLP(params, f"{prefix}/enc{i}/{name}", w, (u,))
                   for name, w in sorted(widths.items())}
            self.encoders.append(enc)
        self.action_enc = MLP(params, f"{prefix}/enc_act", joint_action_width, (u,))
        self.comm_enc = (MLP(params, f"{prefix}/enc_sym", joint_comm_width, (u,))
                         if joint_comm_width > 0 else None)
        n_groups = sum(len(w) for w in obs_widths) + 1 + (1 if self.comm_enc else 0)
        self.mix = MLP(params, f"{prefix}/mix", u * n_groups, (u,))
        self.cell = LSTMCell(params, f"{prefix}/lstm", u, u)
        self.head = MLP(params, f"{prefix}/q", u, (u, 1))

    def zero_state(self, batch: int):
        return self.cell.zero_state(batch)

    def step(self, all_obs: list[dict[str, Tensor]], joint_action: Tensor,
             joint_comm: Tensor | None, h: Tensor, c: Tensor):
        parts = []
        for i, enc in enumerate(self.encoders):
            for name in sorted(self.obs_widths[i]):
                parts.append(T.relu(enc[name](all_obs[i][name])))
        parts.append(T.relu(self.action_enc(joint_action)))
        if self.comm_enc is not None:
            parts.append(T.relu(self.comm_enc(joint_comm)))
        x = T.relu(self.mix(T.concat(parts, axis=-1)))
        h, c = self.cell(x, h, c)
        q = T.reshape(self.head(h), (h.shape[0],))
        return q, h, c


@dataclass
class MaddpgAgents:
    actors: list[MaddpgActor]
    critics: list[MaddpgCritic]
    params: Params
    target_params: Params
    target_actors: list[MaddpgActor]
    target_critics: list[MaddpgCritic]


def build_maddpg(task: TaskSpec, obs_widths: list[dict[str, int]], cfg: MaddpgConfig,
                 rng: Rng) -> MaddpgAgents:
    senders = set(task.comm_senders())
    joint_action_width = task.n_physical * cfg.action_width
    joint_comm_width = len(senders) * task.n_symbols if task.comm_enabled else 0

    def build(params: Params):
        actors, critics = [], []
        for i in range(task.n_agents):
            comm_w = len(task.incoming_senders(i)) * task.n_symbols if task.comm_enabled else 0
            actors.append(MaddpgActor(params, f"agent{i}/actor", obs_widths[i], comm_w,
                                      acts_physically=i < task.n_physical,
                                      emits_symbols=i in senders,
                                      n_symbols=task.n_symbols, cfg=cfg))
            critics.append(MaddpgCritic(params, f"agent{i}/critic", obs_widths,
                                        joint_action_width, joint_comm_width, cfg))
        return actors, critics

    params = Params(rng.split("maddpg"))
    actors, critics = build(params)
    target_params = Params(rng.split("maddpg"))   # same stream -> same init
    t_actors, t_critics = build(target_params)
    return MaddpgAgents(actors=actors, critics=critics, params=params,
                        target_params=target_params, target_actors=t_actors,
                        target_critics=t_critics)


def polyak_update(online: Params, target: Params, tau: float) -> None:
    for name, p in online.items():
        tp = target[name]
        tp.data = (1.0 - tau) * tp.data + tau * p.data


def _pad_episodes(episodes: list[Episode], task: TaskSpec):
    """Stack variable-length episodes into (Tmax, B, ...) arrays plus a mask."""
    t_max = max(e.length for e in episodes)
    b = len(episodes)
    n_agents = task.n_agents
    obs = []
    for i in range(n_agents):
        widths = {name: arr.shape[-1] for name, arr in episodes[0].obs[i].items()}
        obs.append({name: np.zeros((t_max, b, w), np.float32) for name, w in widths.items()})
    actions = np.zeros((t_max, b, task.n_physical, 2), np.float32)
    symbols = np.zeros((t_max, b, n_agents, task.n_symbols), np.float32)
    rewards = np.zeros((t_max, b, task.n_physical), np.float32)
    mask = np.zeros((t_max, b), np.float32)
    for j, ep in enumerate(episodes):
        t = ep.length
        for i in range(n_agents):
            for name, arr in ep.obs[i].items():
                obs[i][name][:t, j] = arr
        actions[:t, j] = ep.actions
        symbols[:t, j] = ep.symbols
        rewards[:t, j] = ep.rewards
        mask[:t, j] = 1.0
    return obs, actions, symbols, rewards, mask


def _agent_reward(rewards: np.ndarray, agent: int, n_physical: int) -> np.ndarray:
    """Physical agents optimize their own reward; speakers get the team mean."""
    if agent < n_physical:
        return rewards[..., agent]
    return rewards.mean(axis=-1)


def maddpg_update(agents: MaddpgAgents, buffer: ReplayBuffer, task: TaskSpec,
                  cfg: MaddpgConfig, optimizers: dict[str, Adam], rng: Rng) -> dict[str, float]:
    """One critic + actor update per agent over a batch of replayed episodes."""
    if len(buffer) < cfg.batch_episodes:
        raise ValueError(f"replay has {len(buffer)} episodes, need {cfg.batch_episodes}")
    idx = rng.choice(len(buffer), cfg.batch_episodes, replace=False)
    episodes = [buffer.episodes[int(i)] for i in idx]
    obs, actions, symbols, rewards, mask = _pad_episodes(episodes, task)
    t_max, b = mask.shape
    senders = task.comm_senders()
    n_phys = task.n_physical

    def obs_at(i, t):
        return {name: Tensor(arr[t]) for name, arr in obs[i].items()}

    def comm_at(i, t):
        sn = task.incoming_senders(i)
        if not sn or not task.comm_enabled:
            return None
        if t == 0:
            return Tensor(np.zeros((b, len(sn) * task.n_symbols), np.float32))
        return Tensor(np.concatenate([symbols[t - 1, :, s] for s in sn], axis=-1))

    def joint_action_at(t):
        return Tensor(actions[t].reshape(b, -1))

    def joint_comm_at(t):
        if not senders or not task.comm_enabled:
            return None
        return Tensor(np.concatenate([symbols[t, :, s] for s in senders], axis=-1))

    report = {}

    # target actions along the sequence (no graph needed)
    with T.no_grad():
        tgt_actions = np.zeros_like(actions)
        tgt_symbols = np.zeros_like(symbols)
        states = [a.zero_state(b) for a in agents.target_actors]
        for t in range(t_max):
            for i, actor in enumerate(agents.target_actors):
                a, logits, h, c = actor.step(obs_at(i, t), comm_at(i, t), *states[i])
                states[i] = (h, c)
                if a is not None:
                    tgt_actions[t, :, i] = a.numpy()
                if logits is not None:
                    noise = rng.split(f"tgt_sym{i}").uniform((b, task.n_symbols))
                    g = -np.log(-np.log(noise + 1e-20) + 1e-20)
                    tgt_symbols[t, :, i] = onehot((logits.numpy() + g).argmax(-1), task.n_symbols)

        # target Q along the sequence, per agent
        tgt_q = np.zeros((t_max, b, task.n_agents), np.float32)
        c_states = [cr.zero_state(b) for cr in agents.target_critics]
        for t in range(t_max):
            ja = Tensor(tgt_actions[t].reshape(b, -1))
            jc = (Tensor(np.concatenate([tgt_symbols[t, :, s] for s in senders], axis=-1))
                  if senders and task.comm_enabled else None)
            all_o = [obs_at(i, t) for i in range(task.n_agents)]
            for i, critic in enumerate(agents.target_critics):
                q, h, c = critic.step(all_o, ja, jc, *c_states[i])
                c_states[i] = (h, c)
                tgt_q[t, :, i] = q.numpy()

    # critic updates
    critic_losses = []
    for i, critic in enumerate(agents.critics):
        r_i = _agent_reward(rewards, i, n_phys)
        y = r_i.copy()
        y[:-1] += cfg.gamma * tgt_q[1:, :, i] * mask[1:]
        h, c = critic.zero_state(b)
        errs = []
        for t in range(t_max):
            all_o = [obs_at(k, t) for k in range(task.n_agents)]
            q, h, c = critic.step(all_o, joint_action_at(t), joint_comm_at(t), h, c)
            errs.append(T.square(q - Tensor(y[t])) * Tensor(mask[t]))
        loss = T.stack(errs, 0).sum() * (1.0 / max(mask.sum(), 1.0))
        grads = T.backward(loss, agents.params.subset(critic.prefix))
        optimizers[f"critic{i}"].apply(grads)
        critic_losses.append(loss.item())
    report["critic_loss"] = float(np.mean(critic_losses))

    # actor updates: replace own action with the policy output, ascend own critic
    actor_losses = []
    for i, actor in enumerate(agents.actors):
        h, c = actor.zero_state(b)
        qh, qc = agents.critics[i].zero_state(b)
        q_terms = []
        for t in range(t_max):
            a, logits, h, c = actor.step(obs_at(i, t), comm_at(i, t), h, c)
            ja_np = actions[t].copy()
            parts = []
            for k in range(n_phys):
                if k == i and a is not None:
                    parts.append(a)
                else:
                    parts.append(Tensor(ja_np[:, k]))
            ja = T.concat(parts, axis=-1)
            jc = None
            if senders and task.comm_enabled:
                sym_parts = []
                for s in senders:
                    if s == i and logits is not None:
                        noise = rng.split(f"act_sym{i}t{t}").uniform((b, task.n_symbols))
                        sym_parts.append(gumbel_softmax_sample(logits, cfg.gumbel_temperature,
                                                               noise))
                    else:
                        sym_parts.append(Tensor(symbols[t, :, s]))
                jc = T.concat(sym_parts, axis=-1)
            all_o = [obs_at(k, t) for k in range(task.n_agents)]
            q, qh, qc = agents.critics[i].step(all_o, ja, jc, qh, qc)
            q_terms.append(q * Tensor(mask[t]))
        loss = -T.stack(q_terms, 0).sum() * (1.0 / max(mask.sum(), 1.0))
        grads = T.backward(loss, agents.params.subset(actor.prefix))
        optimizers[f"actor{i}"].apply(grads)
        actor_losses.append(loss.item())
    report["actor_loss"] = float(np.mean(actor_losses))

    polyak_update(agents.params, agents.target_params, cfg.polyak)
    return report


def build_maddpg_optimizers(agents: MaddpgAgents, cfg: MaddpgConfig) -> dict[str, Adam]:
    opts = {}
    for i, actor in enumerate(agents.actors):
        names = set(agents.params.subset(actor.prefix))
        opts[f"actor{i}"] = Adam([p for p in agents.params.parameters() if p.name in names],
                                 cfg.lr_actor)
    for i, critic in enumerate(agents.critics):
        names = set(agents.params.subset(critic.prefix))
        opts[f"critic{i}"] = Adam([p for p in agents.params.parameters() if p.name in names],
                                  cfg.lr_critic)
    return opts


def maddpg_act(actor: MaddpgActor, obs: dict[str, np.ndarray], comm: np.ndarray | None,
               h: Tensor, c: Tensor, rng: Rng | None, cfg: MaddpgConfig,
               reset_mask: np.ndarray | None = None):
    """Environment-time step: deterministic action + Gaussian exploration noise,
    hard Gumbel symbol sample.  rng=None means greedy."""
    with T.no_grad():
        mask = Tensor(reset_mask[:, None].astype(np.float32)) if reset_mask is not None else None
        obs_t = {k: Tensor(np.asarray(v, np.float32)) for k, v in obs.items()}
        comm_t = Tensor(np.asarray(comm, np.float32)) if comm is not None else None
        a, logits, h, c = actor.step(obs_t, comm_t, h, c, reset_mask=mask)
        action = None
        if a is not None:
            action = a.numpy().copy()
            if rng is not None:
                action = np.clip(action + cfg.exploration_noise * rng.normal(action.shape),
                                 -1.0, 1.0)
        symbol = None
        if logits is not None:
            ln = logits.numpy()
            if rng is None:
                symbol = ln.argmax(axis=-1)
            else:
                u = rng.uniform(ln.shape)
                g = -np.log(-np.log(u + 1e-20) + 1e-20)
                symbol = (ln + g).argmax(axis=-1)
        return action, symbol, h, c
