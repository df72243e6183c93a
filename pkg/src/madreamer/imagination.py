"""Imagined trajectory generation for policy learning.

Two modes.  Naive: every agent unrolls its own latent model with its own
imagined actions, oblivious of the others, so the per-agent trajectories
drift apart under partial observability.  Shared: a single global model is
unrolled with the joint imagined action; each agent's stochastic latent is
decoded from the global code by the estimation heads while its deterministic
path is rebuilt by its own recurrence, so all perspectives stay mutually
consistent and, from each agent's point of view, still live in its own
latent space.  Communication symbols are generated inside the rollout
(straight-through one-hots, delivered with one step of latency) and never
enter any latent model.

Only step 0 comes from the real environment; everything after is model
output, on the differentiation tape end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import tensor as T
from .diffcore.rng import Rng
from .diffcore.tensor import Tensor
from .globalmodel import GlobalWorldModel
from .minisoccer.observations import field_features_from_raw
from .minisoccer.tasks import TaskSpec
from .policy import AgentPolicy, RecurrentState, act, emit_symbol
from .replay import StartStates
from .worldmodel import AgentWorldModel, RSSMState


@dataclass(frozen=True)
class RolloutConfig:
    horizon: int = 15
    mode: str = "shared"            # "naive" | "shared"
    comm: bool = False
    n_agents: int = 1               # physical agents
    reward_source: str = "global"   # shared mode: "global" | "agent"

    def validate(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.mode not in ("naive", "shared"):
            raise ValueError(f"unknown rollout mode {self.mode!r}")
        if self.reward_source not in ("global", "agent"):
            raise ValueError(f"unknown reward source {self.reward_source!r}")


@dataclass
class ImaginedTrajectory:
    """Everything produced along an imagined rollout, still on the tape."""

    horizon: int
    n_agents: int
    mode: str
    comm: bool
    start_count: int
    z: list[list[Tensor]]                      # [t][agent] (N, z_width), t in 0..h
    actions: list[list[Tensor]]                # [t][agent] (N, A), t in 0..h-1
    rewards: list[list[Tensor]]                # [t][agent] (N,), t in 0..h-1
    values: list[list[Tensor]]                 # [t][agent] (N,), t in 0..h
    action_entropies: list[list[Tensor]]       # [t][agent] (N,), t in 0..h-1
    incoming: list[list[Tensor | None]]        # [t][agent], what each agent heard at t
    symbols: list[dict[int, Tensor]] = field(default_factory=list)   # [t][sender]
    symbol_entropies: list[dict[int, Tensor]] = field(default_factory=list)
    global_z: list[Tensor] | None = None       # [t] (N, zg), shared mode only

    @property
    def decision_points(self) -> int:
        """Imagined decision points touched by one policy update."""
        return self.start_count * self.horizon

    def chain(self, agent: int, model: AgentWorldModel) -> "AgentChain":
        return AgentChain(model=model, z=[self.z[t][agent] for t in range(self.horizon + 1)])


@dataclass
class AgentChain:
    """One agent's per-step latents plus the decoder that grounds them."""

    model: AgentWorldModel
    z: list[Tensor]

    @property
    def horizon(self) -> int:
        return len(self.z) - 1


# -- anchoring -------------------------------------------------------------

@dataclass
class RolloutAnchor:
    """Detached t=0 latents; the only quantities taken from the real MDP."""

    agent_states: list[RSSMState]
    global_state: RSSMState | None
    field_feats: np.ndarray


def anchor_from_observations(agent_models: list[AgentWorldModel],
                             gmodel: GlobalWorldModel | None,
                             starts: StartStates, n_physical: int,
                             rng: Rng) -> RolloutAnchor:
    """Cold anchor: encode each start observation through the posteriors."""
    n = starts.count
    feats = np.stack([field_features_from_raw(starts.global_states[i], n_physical)
                      for i in range(n)])
    agent_states = []
    rng_a = rng.split("anchor_agents")
    with T.no_grad():
        for k, model in enumerate(agent_models):
            obs = {name: starts.obs[k][name] for name in model.stream_widths}
            noise = rng_a.split(f"agent{k}").normal((n, model.cfg.stoch))
            state, _, _ = model.posterior_step(model.initial_state(n),
                                               np.zeros((n, model.action_width), np.float32),
                                               obs, noise)
            agent_states.append(state.detach())
        g_state = None
        if gmodel is not None:
            noise = rng.split("anchor_global").normal((n, gmodel.cfg.stoch))
            g_state, _, _ = gmodel.posterior_step(
                gmodel.initial_state(n),
                np.zeros((n, gmodel.joint_action_width), np.float32), feats, noise)
            g_state = g_state.detach()
    return RolloutAnchor(agent_states=agent_states, global_state=g_state, field_feats=feats)


def anchor_from_posteriors(agent_states: list[RSSMState], global_state: RSSMState | None,
                           field_feats: np.ndarray) -> RolloutAnchor:
    """Warm anchor: reuse filtered states from a world-model training pass."""
    return RolloutAnchor(agent_states=[s.detach() for s in agent_states],
                         global_state=global_state.detach() if global_state else None,
                         field_feats=field_feats)


# -- the engine ------------------------------------------------------------

def _incoming_for(task: TaskSpec, agent: int, prev_symbols: dict[int, Tensor] | None,
                  n: int) -> Tensor | None:
    senders = task.incoming_senders(agent)
    if not senders:
        return None
    parts = []
    for s in senders:
        if prev_symbols is not None and s in prev_symbols:
            parts.append(prev_symbols[s])
        else:
            parts.append(T.zeros((n, task.n_symbols)))
    return T.concat(parts, axis=-1)


def _rollout(task: TaskSpec, cfg: RolloutConfig,
             agent_models: list[AgentWorldModel],
             gmodel: GlobalWorldModel | None,
             policies: list[AgentPolicy],
             anchor: RolloutAnchor, rng: Rng) -> ImaginedTrajectory:
    cfg.validate()
    if cfg.mode == "shared" and gmodel is None:
        raise ValueError("shared rollouts need the global model")
    if cfg.comm and task.n_symbols < 2:
        raise ValueError("communication needs K >= 2 symbols")
    n_phys = task.n_physical
    n = anchor.field_feats.shape[0]
    h = cfg.horizon

    rng_prior = rng.split("prior")
    rng_est = rng.split("estimate")
    rng_act = rng.split("actions")
    rng_sym = rng.split("symbols")

    # t = 0 latents
    g_state = anchor.global_state
    states: list[RSSMState] = []
    if cfg.mode == "shared":
        est = gmodel.estimate_agent_latents(g_state)
        for k in range(n_phys):
            noise = rng_est.split(f"a{k}t0").normal((n, agent_models[k].cfg.stoch))
            states.append(RSSMState(anchor.agent_states[k].deter, est[k].rsample(noise)))
    else:
        states = [RSSMState(s.deter, s.stoch) for s in anchor.agent_states]

    actor_states = [policies[i].actor.zero_state(n) if policies[i].actor else None
                    for i in range(task.n_agents)]
    critic_states = [policies[i].critic.zero_state(n) if policies[i].critic else None
                     for i in range(task.n_agents)]
    comm_states = [policies[i].comm.zero_state(n) if policies[i].comm else None
                   for i in range(task.n_agents)]

    traj = ImaginedTrajectory(horizon=h, n_agents=n_phys, mode=cfg.mode, comm=cfg.comm,
                              start_count=n, z=[], actions=[], rewards=[], values=[],
                              action_entropies=[], incoming=[], symbols=[],
                              symbol_entropies=[],
                              global_z=[] if cfg.mode == "shared" else None)

    feats0 = Tensor(anchor.field_feats.astype(np.float32))
    prev_symbols: dict[int, Tensor] | None = None

    for t in range(h + 1):
        z_t = [states[k].z() for k in range(n_phys)]
        traj.z.append(z_t)
        if cfg.mode == "shared":
            traj.global_z.append(g_state.z())

        incoming_t: list[Tensor | None] = []
        for i in range(task.n_agents):
            if cfg.comm and task.comm_enabled:
                incoming_t.append(_incoming_for(task, i, prev_symbols, n))
            else:
                incoming_t.append(None)
        traj.incoming.append(incoming_t)

        # values at every step (bootstrap at the horizon)
        vals = []
        for k in range(n_phys):
            v, critic_states[k] = policies[k].critic.value(z_t[k], incoming_t[k],
                                                           critic_states[k])
            vals.append(v)
        traj.values.append(vals)

        if t == h:
            break

        # symbols emitted at t, heard at t+1
        symbols_t: dict[int, Tensor] = {}
        sym_ent_t: dict[int, Tensor] = {}
        if cfg.comm and task.comm_enabled:
            for s in task.comm_senders():
                pol = policies[s]
                if pol.is_speaker:
                    if cfg.mode == "shared":
                        x = feats0 if t == 0 else gmodel.decode_obs(traj.global_z[t])
                    else:
                        x = feats0
                else:
                    x = z_t[s]
                noise = rng_sym.split(f"s{s}t{t}").uniform((n, task.n_symbols))
                sym, comm_states[s], dist = emit_symbol(pol.comm, x, comm_states[s], noise)
                symbols_t[s] = sym
                sym_ent_t[s] = dist.entropy()
        traj.symbols.append(symbols_t)
        traj.symbol_entropies.append(sym_ent_t)

        # actions from the decentralized policies
        actions_t, ents_t = [], []
        for k in range(n_phys):
            noise = rng_act.split(f"a{k}t{t}").normal((n, policies[k].actor.cfg.action_width))
            a, actor_states[k], dist = act(policies[k].actor, z_t[k], incoming_t[k],
                                           actor_states[k], noise)
            actions_t.append(a)
            ents_t.append(dist.entropy())
        traj.actions.append(actions_t)
        traj.action_entropies.append(ents_t)

        # transition
        if cfg.mode == "shared":
            joint = T.concat(actions_t, axis=-1)
            g_noise = rng_prior.split(f"g{t}").normal((n, gmodel.cfg.stoch))
            g_state, _ = gmodel.prior_step(g_state, joint, g_noise)
            est = gmodel.estimate_agent_latents(g_state)
            new_states = []
            for k in range(n_phys):
                deter = agent_models[k].cell(
                    T.concat([states[k].stoch, actions_t[k]], axis=-1), states[k].deter)
                e_noise = rng_est.split(f"a{k}t{t + 1}").normal((n, agent_models[k].cfg.stoch))
                new_states.append(RSSMState(deter, est[k].rsample(e_noise)))
            states = new_states
            if cfg.reward_source == "global":
                r_all = gmodel.decode_rewards(g_state.z())
                rewards_t = [T.reshape(T.narrow(r_all, -1, k, 1), (n,)) for k in range(n_phys)]
            else:
                rewards_t = [agent_models[k].decode_reward(states[k].z()) for k in range(n_phys)]
        else:
            new_states, rewards_t = [], []
            for k in range(n_phys):
                p_noise = rng_prior.split(f"a{k}t{t}").normal((n, agent_models[k].cfg.stoch))
                s_next, _ = agent_models[k].prior_step(states[k], actions_t[k], p_noise)
                new_states.append(s_next)
                rewards_t.append(agent_models[k].decode_reward(s_next.z()))
            states = new_states
        traj.rewards.append(rewards_t)
        prev_symbols = symbols_t if symbols_t else None

    return traj


# -- public entry points ----------------------------------------------------

def naive_rollout(agent_models: list[AgentWorldModel], policies: list[AgentPolicy],
                  starts: StartStates, cfg: RolloutConfig, task: TaskSpec,
                  rng: Rng) -> ImaginedTrajectory:
    """Independent per-agent unrolls from each agent's own encoded start."""
    cfg = RolloutConfig(horizon=cfg.horizon, mode="naive", comm=cfg.comm,
                        n_agents=cfg.n_agents, reward_source=cfg.reward_source)
    anchor = anchor_from_observations(agent_models, None, starts, task.n_physical,
                                      rng.split("anchor"))
    return _rollout(task, cfg, agent_models, None, policies, anchor, rng)


def shared_rollout(gmodel: GlobalWorldModel, agent_models: list[AgentWorldModel],
                   policies: list[AgentPolicy], starts: StartStates,
                   cfg: RolloutConfig, task: TaskSpec, rng: Rng) -> ImaginedTrajectory:
    """Consistent rollout through the global model, communication off."""
    cfg = RolloutConfig(horizon=cfg.horizon, mode="shared", comm=False,
                        n_agents=cfg.n_agents, reward_source=cfg.reward_source)
    anchor = anchor_from_observations(agent_models, gmodel, starts, task.n_physical,
                                      rng.split("anchor"))
    return _rollout(task, cfg, agent_models, gmodel, policies, anchor, rng)


def shared_rollout_with_comm(gmodel: GlobalWorldModel, agent_models: list[AgentWorldModel],
                             policies: list[AgentPolicy], starts: StartStates,
                             cfg: RolloutConfig, task: TaskSpec,
                             rng: Rng) -> ImaginedTrajectory:
    """Shared rollout plus symbol exchange learned inside imagination."""
    cfg = RolloutConfig(horizon=cfg.horizon, mode="shared", comm=cfg.comm,
                        n_agents=cfg.n_agents, reward_source=cfg.reward_source)
    anchor = anchor_from_observations(agent_models, gmodel, starts, task.n_physical,
                                      rng.split("anchor"))
    return _rollout(task, cfg, agent_models, gmodel, policies, anchor, rng)


def rollout_for_training(task: TaskSpec, cfg: RolloutConfig,
                         agent_models: list[AgentWorldModel],
                         gmodel: GlobalWorldModel | None,
                         policies: list[AgentPolicy],
                         anchor: RolloutAnchor, rng: Rng) -> ImaginedTrajectory:
    """Engine entry for the trainer (warm anchors from the model batch)."""
    return _rollout(task, cfg, agent_models, gmodel, policies, anchor, rng)


# -- divergence of imagined chains ------------------------------------------

def _laser_entity_distances(model: AgentWorldModel, recon: np.ndarray) -> dict[str, np.ndarray]:
    """Soft entity geometry decoded from reconstructed laser features.

    Rays vote for ball/teammate with their tag scores; distances come from
    tag-weighted averages.  Returns self->ball, mate->ball, self->mate.
    """
    from .minisoccer import laser as L
    from .minisoccer import tasks as C

    widths = model.stream_widths
    offset = 0
    laser_block = None
    for name in sorted(widths):
        if name == "laser":
            laser_block = recon[:, offset: offset + widths[name]]
        offset += widths[name]
    rays = laser_block.reshape(recon.shape[0], C.N_RAYS, L.FEATURES_PER_RAY)
    angles = np.linspace(-C.FOV_RAD / 2, C.FOV_RAD / 2, C.N_RAYS)
    dist = np.clip(rays[:, :, 0], 0.0, 1.0) * C.MAX_RANGE
    obj_score = np.clip(rays[:, :, 1 + L.TAG_OBJECT], 0.0, None)
    out = {}
    for key, sub in (("ball", L.SUB_BALL), ("mate", L.SUB_TEAMMATE)):
        w = obj_score * np.clip(rays[:, :, 1 + L.N_TAG0 + sub], 0.0, None)
        total = w.sum(axis=1) + 1e-6
        d = (w * dist).sum(axis=1) / total
        a = (w * angles[None, :]).sum(axis=1) / total
        out[key] = np.stack([d * np.cos(a), d * np.sin(a)], axis=1)
    return {
        "self_ball": np.linalg.norm(out["ball"], axis=1),
        "mate_ball": np.linalg.norm(out["ball"] - out["mate"], axis=1),
        "self_mate": np.linalg.norm(out["mate"], axis=1),
    }


def _field_entity_distances(model: AgentWorldModel, recon: np.ndarray,
                            agent_index: int) -> dict[str, np.ndarray]:
    from .minisoccer import tasks as C

    n = (recon.shape[1] - 5) // 5
    players = recon[:, : 5 * n].reshape(-1, n, 5)
    px = players[:, :, 0] * C.HALF_X
    py = players[:, :, 1] * C.HALF_Y
    bx = recon[:, 5 * n + 0] * C.HALF_X
    by = recon[:, 5 * n + 1] * C.HALF_Y
    me, other = agent_index, 1 - agent_index if n > 1 else agent_index
    d_self_ball = np.hypot(px[:, me] - bx, py[:, me] - by)
    d_mate_ball = np.hypot(px[:, other] - bx, py[:, other] - by)
    d_self_mate = np.hypot(px[:, me] - px[:, other], py[:, me] - py[:, other])
    return {"self_ball": d_self_ball, "mate_ball": d_mate_ball, "self_mate": d_self_mate}


def chain_entity_distances(chain: AgentChain, agent_index: int) -> list[dict[str, np.ndarray]]:
    """Physically grounded distances decoded at every step of one chain."""
    out = []
    with T.no_grad():
        for z in chain.z:
            recon = chain.model.decode_obs(z).numpy()
            if "laser" in chain.model.stream_widths:
                out.append(_laser_entity_distances(chain.model, recon))
            else:
                out.append(_field_entity_distances(chain.model, recon, agent_index))
    return out


def rollout_divergence_detail(traj_a: AgentChain, traj_b: AgentChain,
                              agent_indices: tuple[int, int] = (0, 1)) -> np.ndarray:
    """Per-start, per-step inconsistency matrix (horizon+1, N).

    Compares frame-invariant decoded quantities: each chain's belief about
    the same physical distances (agent->ball for both agents, agent->agent).
    Identical chains give exactly zero everywhere.
    """
    if traj_a.horizon != traj_b.horizon:
        raise ValueError(f"horizon mismatch: {traj_a.horizon} vs {traj_b.horizon}")
    i, j = agent_indices
    da = chain_entity_distances(traj_a, i)
    db = chain_entity_distances(traj_b, j)
    n = da[0]["self_ball"].shape[0]
    out = np.zeros((traj_a.horizon + 1, n))
    for t in range(traj_a.horizon + 1):
        # each chain's belief about dist(agent_i, ball) and dist(agent_j, ball)
        pairs = [
            np.abs(da[t]["self_ball"] - db[t]["mate_ball" if i != j else "self_ball"]),
            np.abs(da[t]["mate_ball" if i != j else "self_ball"] - db[t]["self_ball"]),
        ]
        if i != j:
            pairs.append(np.abs(da[t]["self_mate"] - db[t]["self_mate"]))
        out[t] = np.mean(np.stack(pairs), axis=0)
    return out


def rollout_divergence(traj_a: AgentChain, traj_b: AgentChain,
                       agent_indices: tuple[int, int] = (0, 1)) -> np.ndarray:
    """Per-step mean inconsistency between two chains sharing a start state."""
    return rollout_divergence_detail(traj_a, traj_b, agent_indices).mean(axis=1)
