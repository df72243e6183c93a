"""Recurrent multi-agent PPO baseline.

One independent network per agent: an encoder per observation stream (plus
one for incoming symbols), an LSTM trunk, and single-layer heads for the
critic, the Gaussian action policy and the categorical symbol policy.  No
centralized component anywhere; the only cross-agent pathway is the symbols
that arrive as observations.  Updates use the clipped surrogate objective
with GAE, several epochs per collected batch, and stored recurrent states
replayed from the start of each chunk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..diffcore import tensor as T
from ..diffcore.dists import Categorical, onehot
from ..diffcore.nn import MLP, LSTMCell, Params
from ..diffcore.optim import Adam
from ..diffcore.rng import Rng
from ..diffcore.tensor import Tensor
from ..minisoccer import PhysAction, TaskSpec

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PpoConfig:
    encoder_widths: tuple[int, ...] = (256, 256, 256)
    lstm_units: int = 512
    lr: float = 2.5e-4
    clip: float = 0.1
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_steps: int = 128
    epochs: int = 4
    n_workers: int = 8
    action_width: int = 2
    init_log_std: float = -0.5

    def scaled(self, factor: float) -> "PpoConfig":
        s = lambda w: max(8, int(w * factor))
        return PpoConfig(encoder_widths=tuple(s(w) for w in self.encoder_widths),
                         lstm_units=s(self.lstm_units), lr=self.lr, clip=self.clip,
                         entropy_coef=self.entropy_coef, value_coef=self.value_coef,
                         gamma=self.gamma, gae_lambda=self.gae_lambda,
                         rollout_steps=self.rollout_steps, epochs=self.epochs,
                         n_workers=self.n_workers, action_width=self.action_width,
                         init_log_std=self.init_log_std)


class PpoAgent:
    """Per-agent recurrent actor-critic with optional symbol head."""

    def __init__(self, params: Params, prefix: str, stream_widths: dict[str, int],
                 comm_in_width: int, acts_physically: bool, emits_symbols: bool,
                 n_symbols: int, cfg: PpoConfig):
        self.params = params
        self.prefix = prefix
        self.cfg = cfg
        self.stream_widths = dict(stream_widths)
        self.comm_in_width = comm_in_width
        self.acts_physically = acts_physically
        self.emits_symbols = emits_symbols
        self.n_symbols = n_symbols
        self.encoders = {name: MLP(params, f"{prefix}/enc/{name}", w, cfg.encoder_widths)
                         for name, w in sorted(stream_widths.items())}
        if comm_in_width > 0:
            self.encoders["__comm__"] = MLP(params, f"{prefix}/enc/comm",
                                            comm_in_width, cfg.encoder_widths)
        total = cfg.encoder_widths[-1] * len(self.encoders)
        self.cell = LSTMCell(params, f"{prefix}/lstm", total, cfg.lstm_units)
        self.value_head = MLP(params, f"{prefix}/value", cfg.lstm_units, (1,))
        if acts_physically:
            self.mean_head = MLP(params, f"{prefix}/mean", cfg.lstm_units,
                                 (cfg.action_width,), out_scale=0.01)
            params.const(f"{prefix}/log_std", (cfg.action_width,), cfg.init_log_std)
        if emits_symbols:
            self.comm_head = MLP(params, f"{prefix}/comm", cfg.lstm_units,
                                 (n_symbols,), out_scale=0.01)

    def zero_state(self, batch: int):
        return self.cell.zero_state(batch)

    def trunk(self, obs: dict[str, Tensor], comm: Tensor | None, h: Tensor, c: Tensor,
              reset_mask: Tensor | None = None):
        """One recurrent step; `reset_mask` zeroes rows that begin a new episode."""
        parts = [T.relu(self.encoders[name](obs[name])) for name in sorted(self.stream_widths)]
        if self.comm_in_width > 0:
            parts.append(T.relu(self.encoders["__comm__"](comm)))
        x = T.concat(parts, axis=-1)
        if reset_mask is not None:
            h = h * reset_mask
            c = c * reset_mask
        h, c = self.cell(x, h, c)
        return h, c

    def heads(self, h: Tensor):
        value = T.reshape(self.value_head(h), (h.shape[0],))
        mean = self.mean_head(h) if self.acts_physically else None
        logits = self.comm_head(h) if self.emits_symbols else None
        return value, mean, logits

    def log_std(self) -> Tensor:
        return self.params[f"{self.prefix}/log_std"]


def gaussian_log_prob(mean: Tensor, log_std: Tensor, actions: np.ndarray) -> Tensor:
    a = Tensor(np.asarray(actions, dtype=np.float32))
    inv_std = T.exp(-log_std)
    z = (a - mean) * inv_std
    per = -0.5 * T.square(z) - log_std - 0.5 * _LOG_2PI
    return per.sum(axis=-1)


def gaussian_entropy(log_std: Tensor, width: int) -> Tensor:
    return log_std.sum() + 0.5 * width * (_LOG_2PI + 1.0)


def gae_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                   bootstrap: np.ndarray, gamma: float, lam: float):
    """Per-worker GAE over a (T, W) rollout; resets at `dones`."""
    t_len, w = rewards.shape
    adv = np.zeros((t_len, w), dtype=np.float64)
    next_value = bootstrap.astype(np.float64)
    gae = np.zeros(w, dtype=np.float64)
    for t in reversed(range(t_len)):
        mask = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * mask - values[t]
        gae = delta + gamma * lam * mask * gae
        adv[t] = gae
        next_value = values[t].astype(np.float64)
    returns = adv + values
    return adv.astype(np.float32), returns.astype(np.float32)


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


@dataclass
class PpoRollout:
    """One collected (T, W) chunk for a single agent."""

    obs: dict[str, np.ndarray]
    comm: np.ndarray | None
    actions: np.ndarray | None
    logp_actions: np.ndarray | None
    symbols: np.ndarray | None
    logp_symbols: np.ndarray | None
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    bootstrap: np.ndarray
    init_h: np.ndarray
    init_c: np.ndarray


def ppo_update(agent: PpoAgent, rollout: PpoRollout, optimizer: Adam) -> dict[str, float]:
    """Clipped-surrogate update: `epochs` passes over the whole chunk."""
    cfg = agent.cfg
    t_len, w = rollout.values.shape
    if t_len == 0:
        raise ValueError("empty rollout buffer")
    adv, returns = gae_advantages(rollout.rewards, rollout.values, rollout.dones,
                                  rollout.bootstrap, cfg.gamma, cfg.gae_lambda)
    adv = normalize_advantages(adv)
    report = {}
    for _ in range(cfg.epochs):
        h = Tensor(rollout.init_h.copy())
        c = Tensor(rollout.init_c.copy())
        pi_terms, v_terms, ent_terms = [], [], []
        for t in range(t_len):
            obs_t = {k: Tensor(v[t]) for k, v in rollout.obs.items()}
            comm_t = Tensor(rollout.comm[t]) if rollout.comm is not None else None
            if t == 0:
                mask = None
            else:
                mask = Tensor((1.0 - rollout.dones[t - 1])[:, None].astype(np.float32))
            h, c = agent.trunk(obs_t, comm_t, h, c, reset_mask=mask)
            value, mean, logits = agent.heads(h)
            adv_t = Tensor(adv[t])
            logp_new = None
            ent = None
            if mean is not None:
                logp_new = gaussian_log_prob(mean, agent.log_std(), rollout.actions[t])
                ent = gaussian_entropy(agent.log_std(), cfg.action_width)
            if logits is not None:
                cat = Categorical(logits)
                lp = cat.log_probs()
                hot = Tensor(onehot(rollout.symbols[t], agent.n_symbols))
                lp_sym = (lp * hot).sum(axis=-1)
                logp_new = lp_sym if logp_new is None else logp_new + lp_sym
                cat_ent = cat.entropy().mean()
                ent = cat_ent if ent is None else ent + cat_ent
            old = rollout.logp_actions[t] if rollout.logp_actions is not None else 0.0
            if rollout.logp_symbols is not None:
                old = old + rollout.logp_symbols[t]
            ratio = T.exp(logp_new - Tensor(np.asarray(old, dtype=np.float32)))
            clipped = T.clip_scalar(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
            pi_terms.append(T.minimum(ratio * adv_t, clipped * adv_t).mean())
            v_terms.append(T.square(value - Tensor(returns[t])).mean())
            ent_terms.append(ent)
        pi_loss = -T.stack(pi_terms, 0).mean()
        v_loss = T.stack(v_terms, 0).mean() * 0.5
        ent_bonus = T.stack(ent_terms, 0).mean()
        loss = pi_loss + cfg.value_coef * v_loss - cfg.entropy_coef * ent_bonus
        grads = T.backward(loss, {n: agent.params[n] for n in agent.params.subset(agent.prefix)})
        optimizer.apply(grads)
        report = {"pi_loss": pi_loss.item(), "value_loss": v_loss.item(),
                  "entropy": ent_bonus.item()}
    return report


def ppo_act(agent: PpoAgent, obs: dict[str, np.ndarray], comm: np.ndarray | None,
            h: Tensor, c: Tensor, rng: Rng | None, reset_mask: np.ndarray | None = None):
    """Collection/eval step (no graph).  rng=None means greedy.

    Returns dict with action, logp, value, symbol index, symbol logp, h, c.
    """
    with T.no_grad():
        mask = Tensor(reset_mask[:, None].astype(np.float32)) if reset_mask is not None else None
        obs_t = {k: Tensor(np.asarray(v, dtype=np.float32)) for k, v in obs.items()}
        comm_t = Tensor(np.asarray(comm, dtype=np.float32)) if comm is not None else None
        h, c = agent.trunk(obs_t, comm_t, h, c, reset_mask=mask)
        value, mean, logits = agent.heads(h)
        out = {"value": value.numpy().copy(), "h": h, "c": c,
               "action": None, "logp_action": None, "symbol": None, "logp_symbol": None}
        if mean is not None:
            std = np.exp(agent.log_std().numpy())
            if rng is None:
                action = mean.numpy().copy()
            else:
                action = mean.numpy() + std * rng.normal(mean.shape)
            lp = (-0.5 * ((action - mean.numpy()) / std) ** 2
                  - agent.log_std().numpy() - 0.5 * _LOG_2PI).sum(axis=-1)
            out["action"] = action
            out["logp_action"] = lp
        if logits is not None:
            logit_np = logits.numpy()
            lse = np.log(np.exp(logit_np - logit_np.max(-1, keepdims=True)).sum(-1, keepdims=True))
            log_probs = logit_np - logit_np.max(-1, keepdims=True) - lse
            if rng is None:
                sym = logit_np.argmax(axis=-1)
            else:
                u = rng.uniform(logit_np.shape)
                gumbel = -np.log(-np.log(u + 1e-20) + 1e-20)
                sym = (logit_np + gumbel).argmax(axis=-1)
            out["symbol"] = sym
            out["logp_symbol"] = np.take_along_axis(log_probs, sym[:, None], axis=-1)[:, 0]
        return out


def build_ppo_agents(params: Params, task: TaskSpec, obs_widths: list[dict[str, int]],
                     cfg: PpoConfig) -> list[PpoAgent]:
    agents = []
    senders = set(task.comm_senders())
    for i in range(task.n_agents):
        comm_w = len(task.incoming_senders(i)) * task.n_symbols if task.comm_enabled else 0
        agents.append(PpoAgent(params, f"agent{i}/ppo", obs_widths[i], comm_w,
                               acts_physically=i < task.n_physical,
                               emits_symbols=i in senders,
                               n_symbols=task.n_symbols, cfg=cfg))
    return agents
