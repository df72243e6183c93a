"""Decentralized actors, critics and communication networks.

Actors consume the agent's own latent code plus an LSTM embedding of
incoming symbols and emit tanh-squashed Gaussian actions.  Communication
policies are recurrent and emit straight-through one-hot symbols, so
gradients flow across agents through the channel.  Critics are decentralized
(agent latent + own comm embedding only) and train on stop-gradient targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import tensor as T
from .diffcore.dists import (
    Categorical,
    DiagGaussian,
    TanhGaussian,
    gaussian_from_raw,
    straight_through_onehot,
)
from .diffcore.nn import MLP, LSTMCell, Params
from .diffcore.optim import Adam
from .diffcore.rng import Rng
from .diffcore.tensor import Tensor


@dataclass(frozen=True)
class PolicyConfig:
    comm_units: int = 64          # comm encoder / comm policy layers
    trunk_widths: tuple[int, ...] = (256, 256, 256)
    action_width: int = 2
    n_symbols: int = 4
    gamma: float = 0.99
    lam: float = 0.95
    entropy_action: float = 3e-4
    entropy_comm: float = 3e-4

    def scaled(self, factor: float) -> "PolicyConfig":
        s = lambda w: max(8, int(w * factor))
        return PolicyConfig(comm_units=s(self.comm_units),
                            trunk_widths=tuple(s(w) for w in self.trunk_widths),
                            action_width=self.action_width, n_symbols=self.n_symbols,
                            gamma=self.gamma, lam=self.lam,
                            entropy_action=self.entropy_action,
                            entropy_comm=self.entropy_comm)


@dataclass
class RecurrentState:
    h: Tensor
    c: Tensor

    def detach(self) -> "RecurrentState":
        return RecurrentState(self.h.detach(), self.c.detach())


class CommEncoder:
    """3 fully connected layers + LSTM over incoming symbols."""

    def __init__(self, params: Params, prefix: str, comm_width: int, units: int):
        self.comm_width = comm_width
        self.units = units
        self.mlp = MLP(params, f"{prefix}/mlp", comm_width, (units, units, units))
        self.cell = LSTMCell(params, f"{prefix}/lstm", units, units)

    def zero_state(self, batch: int) -> RecurrentState:
        h, c = self.cell.zero_state(batch)
        return RecurrentState(h, c)

    def __call__(self, symbols: Tensor | None, state: RecurrentState, batch: int):
        if symbols is None:
            symbols = T.zeros((batch, self.comm_width))
        x = T.relu(self.mlp(symbols))
        h, c = self.cell(x, state.h, state.c)
        return h, RecurrentState(h, c)


class ActorNet:
    """Gaussian policy over physical actions, squashed to [-1, 1]."""

    def __init__(self, params: Params, prefix: str, z_width: int, comm_width: int,
                 cfg: PolicyConfig):
        self.cfg = cfg
        self.z_width = z_width
        self.comm_width = comm_width
        self.encoder = (CommEncoder(params, f"{prefix}/comm_enc", comm_width, cfg.comm_units)
                        if comm_width > 0 else None)
        emb = cfg.comm_units if comm_width > 0 else 0
        self.trunk = MLP(params, f"{prefix}/trunk", z_width + emb,
                         (*cfg.trunk_widths, 2 * cfg.action_width), out_scale=0.01)

    def zero_state(self, batch: int) -> RecurrentState | None:
        return self.encoder.zero_state(batch) if self.encoder else None

    def dist(self, z: Tensor, symbols: Tensor | None, state: RecurrentState | None):
        """Action distribution; returns (TanhGaussian, new recurrent state)."""
        if self.encoder is not None:
            emb, state = self.encoder(symbols, state, z.shape[0])
            x = T.concat([z, emb], axis=-1)
        else:
            x = z
        raw = self.trunk(x)
        a = self.cfg.action_width
        base = gaussian_from_raw(T.narrow(raw, -1, 0, a), T.narrow(raw, -1, a, a))
        return TanhGaussian(base), state


class CommNet:
    """Recurrent communication policy emitting one of K symbols."""

    def __init__(self, params: Params, prefix: str, in_width: int, cfg: PolicyConfig):
        self.cfg = cfg
        self.in_width = in_width
        u = cfg.comm_units
        self.mlp = MLP(params, f"{prefix}/mlp", in_width, (u, u, u))
        self.cell = LSTMCell(params, f"{prefix}/lstm", u, u)
        self.head = MLP(params, f"{prefix}/head", u, (cfg.n_symbols,), out_scale=0.01)

    def zero_state(self, batch: int) -> RecurrentState:
        h, c = self.cell.zero_state(batch)
        return RecurrentState(h, c)

    def logits(self, x: Tensor, state: RecurrentState):
        hid = T.relu(self.mlp(x))
        h, c = self.cell(hid, state.h, state.c)
        return self.head(h), RecurrentState(h, c)


class CriticNet:
    """Decentralized value head: agent latent plus own comm embedding."""

    def __init__(self, params: Params, prefix: str, z_width: int, comm_width: int,
                 cfg: PolicyConfig):
        self.cfg = cfg
        self.comm_width = comm_width
        self.encoder = (CommEncoder(params, f"{prefix}/comm_enc", comm_width, cfg.comm_units)
                        if comm_width > 0 else None)
        emb = cfg.comm_units if comm_width > 0 else 0
        self.trunk = MLP(params, f"{prefix}/trunk", z_width + emb, (*cfg.trunk_widths, 1))

    def zero_state(self, batch: int) -> RecurrentState | None:
        return self.encoder.zero_state(batch) if self.encoder else None

    def value(self, z: Tensor, symbols: Tensor | None, state: RecurrentState | None):
        if self.encoder is not None:
            emb, state = self.encoder(symbols, state, z.shape[0])
            x = T.concat([z, emb], axis=-1)
        else:
            x = z
        v = self.trunk(x)
        return T.reshape(v, (z.shape[0],)), state


@dataclass
class AgentPolicy:
    """Everything one agent carries: actor/critic (physical agents only) and
    an optional communication policy."""

    actor: ActorNet | None
    critic: CriticNet | None
    comm: CommNet | None
    is_speaker: bool = False


def act(actor: ActorNet, z: Tensor, incoming_symbols: Tensor | None,
        actor_state: RecurrentState | None, noise: np.ndarray | None):
    """Sample (or take the mode of) a physical action.

    Returns (action tensor in [-1, 1], new recurrent state, dist).
    """
    dist, state = actor.dist(z, incoming_symbols, actor_state)
    if noise is None:
        return dist.mode(), state, dist
    return dist.rsample(noise), state, dist


def emit_symbol(comm_net: CommNet, x: Tensor, comm_state: RecurrentState,
                noise: np.ndarray | None):
    """Straight-through one-hot symbol; greedy argmax when noise is None.

    Returns (one-hot tensor, new recurrent state, Categorical).
    """
    logits, state = comm_net.logits(x, comm_state)
    dist = Categorical(logits)
    return straight_through_onehot(dist, noise), state, dist


@dataclass
class PolicyOptimizers:
    """One Adam per network so updates never leak across roles."""

    actor: list[Adam | None]
    critic: list[Adam | None]
    comm: list[Adam | None]


def build_policy_optimizers(params: Params, policies: list[AgentPolicy],
                            lr: float) -> PolicyOptimizers:
    def subset(prefix):
        names = set(params.subset(prefix))
        return [p for p in params.parameters() if p.name in names]

    actor, critic, comm = [], [], []
    for i, pol in enumerate(policies):
        actor.append(Adam(subset(f"agent{i}/actor"), lr) if pol.actor else None)
        critic.append(Adam(subset(f"agent{i}/critic"), lr) if pol.critic else None)
        comm.append(Adam(subset(f"agent{i}/comm"), lr) if pol.comm else None)
    return PolicyOptimizers(actor=actor, critic=critic, comm=comm)


def policy_update(trajectory, policies: list[AgentPolicy], params: Params,
                  optimizers: PolicyOptimizers, cfg: PolicyConfig) -> dict[str, float]:
    """One actor/critic/comm update from a fully on-tape imagined trajectory.

    Actors maximize lambda-returns by backpropagation through the rollout
    dynamics (plus an entropy bonus); communication policies receive their
    gradients through the straight-through symbols inside the same objective.
    Critics regress on stop-gradient targets computed from detached latents,
    so critic-loss gradients can never reach actor parameters.
    """
    from .diffcore.tensor import GradError, backward

    h = trajectory.horizon
    n_phys = trajectory.n_agents
    if not trajectory.z or not trajectory.z[1][0].on_tape:
        raise GradError("trajectory is off the tape; gradients unavailable")

    returns = []
    for k in range(n_phys):
        rewards = [trajectory.rewards[t][k] for t in range(h)]
        values = [trajectory.values[t][k] for t in range(h + 1)]
        returns.append(lambda_returns(rewards, values, cfg.gamma, cfg.lam))

    mean_return = T.stack([g for ret in returns for g in ret], 0).mean()
    act_entropy = T.stack([e for step in trajectory.action_entropies for e in step], 0).mean()
    actor_loss = -mean_return - cfg.entropy_action * act_entropy
    sym_entropy = None
    sym_terms = [e for step in trajectory.symbol_entropies for e in step.values()]
    if sym_terms:
        sym_entropy = T.stack(sym_terms, 0).mean()
        actor_loss = actor_loss - cfg.entropy_comm * sym_entropy

    # critic regression on detached inputs and frozen targets
    critic_losses = []
    batch = trajectory.start_count
    for k in range(n_phys):
        critic = policies[k].critic
        state = critic.zero_state(batch)
        errs = []
        for t in range(h):
            z = trajectory.z[t][k].detach()
            inc = trajectory.incoming[t][k]
            inc = inc.detach() if inc is not None else None
            v, state = critic.value(z, inc, state)
            target = Tensor(returns[k][t].data.copy())
            errs.append(T.square(v - target))
        critic_losses.append(T.stack(errs, 0).mean())
    critic_loss = T.stack(critic_losses, 0).mean() * 0.5

    actor_comm_params = {}
    for i, pol in enumerate(policies):
        if pol.actor:
            actor_comm_params.update(params.subset(f"agent{i}/actor"))
        if pol.comm:
            actor_comm_params.update(params.subset(f"agent{i}/comm"))
    grads = backward(actor_loss, actor_comm_params)
    for i, pol in enumerate(policies):
        if optimizers.actor[i] is not None:
            optimizers.actor[i].apply(grads)
        if optimizers.comm[i] is not None:
            optimizers.comm[i].apply(grads)

    critic_params = {}
    for i, pol in enumerate(policies):
        if pol.critic:
            critic_params.update(params.subset(f"agent{i}/critic"))
    cgrads = backward(critic_loss, critic_params)
    for i in range(len(policies)):
        if optimizers.critic[i] is not None:
            optimizers.critic[i].apply(cgrads)

    report = {
        "actor_loss": actor_loss.item(),
        "critic_loss": critic_loss.item(),
        "mean_return": mean_return.item(),
        "action_entropy": act_entropy.item(),
        "symbol_entropy": sym_entropy.item() if sym_entropy is not None else 0.0,
    }
    return report


def lambda_returns(rewards: list[Tensor], values: list[Tensor], gamma: float, lam: float):
    """Dreamer-style recursive targets.

    rewards has length h, values h+1 (bootstrap); returns G_0..G_{h-1} with
    G_t = r_t + gamma * ((1 - lam) * V_{t+1} + lam * G_{t+1}) and G_h = V_h.
    """
    h = len(rewards)
    if len(values) != h + 1:
        raise ValueError(f"need {h + 1} values for {h} rewards, got {len(values)}")
    out: list[Tensor | None] = [None] * h
    nxt = values[h]
    for t in reversed(range(h)):
        blended = (1.0 - lam) * values[t + 1] + lam * nxt
        out[t] = rewards[t] + gamma * blended
        nxt = out[t]
    return out
