"""Global world model: an RSSM over the full field state.

Consumes the joint physical action, reconstructs the global features,
predicts every agent's reward, and carries one latent-estimation head per
physical agent that predicts the distribution of that agent's stochastic
latent at the same timestep.  The estimation loss is one-directional: agent
models provide targets with gradients blocked.  This model exists only for
training (shared imagination); evaluation never loads it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import tensor as T
from .diffcore.dists import DiagGaussian, gaussian_from_raw, kl_diag_gaussian
from .diffcore.nn import MLP, GRUCell, Params
from .diffcore.rng import Rng
from .diffcore.tensor import Tensor
from .worldmodel import RSSMState, WorldModelConfig


@dataclass(frozen=True)
class GlobalModelConfig:
    deter: int = 256
    stoch: int = 64
    encoder_widths: tuple[int, ...] = (400, 400, 400)
    decoder_widths: tuple[int, ...] = (400, 400, 400)
    estimation_widths: tuple[int, ...] = (400, 400, 400)
    latent_hidden: int = 200
    reward_hidden: tuple[int, ...] = (200, 200)
    kl_beta: float = 1.0
    free_nats: float = 1.0
    estimation_weight: float = 1.0

    def scaled(self, factor: float) -> "GlobalModelConfig":
        s = lambda w: max(8, int(w * factor))
        return GlobalModelConfig(
            deter=s(self.deter), stoch=s(self.stoch),
            encoder_widths=tuple(s(w) for w in self.encoder_widths),
            decoder_widths=tuple(s(w) for w in self.decoder_widths),
            estimation_widths=tuple(s(w) for w in self.estimation_widths),
            latent_hidden=s(self.latent_hidden),
            reward_hidden=tuple(s(w) for w in self.reward_hidden),
            kl_beta=self.kl_beta, free_nats=self.free_nats,
            estimation_weight=self.estimation_weight)


@dataclass
class GlobalLoss:
    recon: float
    reward: float
    kl: float
    estimation: list[float]
    total: float
    total_tensor: Tensor | None = None


class GlobalWorldModel:
    """RSSM over global features with per-agent reward and latent heads."""

    def __init__(self, params: Params, field_width: int, joint_action_width: int,
                 n_agents: int, agent_stoch_widths: list[int], cfg: GlobalModelConfig,
                 prefix: str = "global"):
        if len(agent_stoch_widths) != n_agents:
            raise ValueError("one stochastic width per physical agent required")
        self.params = params
        self.prefix = prefix
        self.cfg = cfg
        self.field_width = field_width
        self.joint_action_width = joint_action_width
        self.n_agents = n_agents
        self.agent_stoch_widths = list(agent_stoch_widths)
        self.embed_width = cfg.encoder_widths[-1]
        self.encoder = MLP(params, f"{prefix}/encoder", field_width, cfg.encoder_widths)
        self.cell = GRUCell(params, f"{prefix}/cell", cfg.stoch + joint_action_width, cfg.deter)
        self.latent_head = MLP(params, f"{prefix}/latent", cfg.deter + self.embed_width,
                               (cfg.latent_hidden, 2 * cfg.stoch))
        z_width = cfg.deter + cfg.stoch
        self.obs_decoder = MLP(params, f"{prefix}/decoder", z_width,
                               (*cfg.decoder_widths, field_width))
        self.reward_head = MLP(params, f"{prefix}/reward", z_width,
                               (*cfg.reward_hidden, n_agents))
        self.estimation_heads = [
            MLP(params, f"{prefix}/estimate{k}", z_width,
                (*cfg.estimation_widths, 2 * agent_stoch_widths[k]))
            for k in range(n_agents)
        ]

    def initial_state(self, batch: int) -> RSSMState:
        return RSSMState(T.zeros((batch, self.cfg.deter)), T.zeros((batch, self.cfg.stoch)))

    def encode(self, field_feats) -> Tensor:
        if not isinstance(field_feats, Tensor):
            field_feats = Tensor(np.asarray(field_feats, dtype=np.float32))
        return T.relu(self.encoder(field_feats))

    def _advance(self, prev: RSSMState, joint_action) -> Tensor:
        if not isinstance(joint_action, Tensor):
            joint_action = Tensor(np.asarray(joint_action, dtype=np.float32))
        if joint_action.shape[-1] != self.joint_action_width:
            raise ValueError(
                f"joint action width {joint_action.shape[-1]} != {self.joint_action_width}")
        return self.cell(T.concat([prev.stoch, joint_action], axis=-1), prev.deter)

    def _latent(self, deter: Tensor, embed: Tensor | None) -> DiagGaussian:
        if embed is None:
            embed = T.zeros((deter.shape[0], self.embed_width))
        raw = self.latent_head(T.concat([deter, embed], axis=-1))
        return gaussian_from_raw(T.narrow(raw, -1, 0, self.cfg.stoch),
                                 T.narrow(raw, -1, self.cfg.stoch, self.cfg.stoch))

    def posterior_step(self, prev: RSSMState, joint_action, field_feats, noise):
        deter = self._advance(prev, joint_action)
        prior = self._latent(deter, None)
        posterior = self._latent(deter, self.encode(field_feats))
        return RSSMState(deter, posterior.rsample(noise)), prior, posterior

    def prior_step(self, prev: RSSMState, joint_action, noise):
        """Imagination transition: next global state from the prior."""
        deter = self._advance(prev, joint_action)
        prior = self._latent(deter, None)
        return RSSMState(deter, prior.rsample(noise)), prior

    def estimate_agent_latents(self, g: RSSMState) -> list[DiagGaussian]:
        """Per-agent stochastic-latent distributions decoded from the global code."""
        z = g.z()
        out = []
        for k, head in enumerate(self.estimation_heads):
            raw = head(z)
            w = self.agent_stoch_widths[k]
            out.append(gaussian_from_raw(T.narrow(raw, -1, 0, w), T.narrow(raw, -1, w, w)))
        return out

    def decode_obs(self, z: Tensor) -> Tensor:
        return self.obs_decoder(z)

    def decode_rewards(self, z: Tensor) -> Tensor:
        return self.reward_head(z)

    def observe_sequence(self, field_feats: np.ndarray, prev_joint_actions: np.ndarray,
                         rewards_in: np.ndarray, agent_posteriors: list[tuple[np.ndarray, np.ndarray]],
                         rng: Rng):
        """Filter a (B, L) joint batch; returns (states, GlobalLoss, posteriors).

        `agent_posteriors[k]` is (means, stds) of agent k's posterior over the
        same (L, B) steps, already detached: only the estimation heads and the
        global trunk learn from the estimation term.
        """
        B, L = field_feats.shape[0], field_feats.shape[1]
        if any(m.shape[0] != L for m, _ in agent_posteriors):
            raise ValueError("agent posterior sequences misaligned with the joint batch")
        flat = Tensor(field_feats.reshape(B * L, -1).astype(np.float32))
        embeds_3d = T.reshape(self.encode(flat), (B, L, self.embed_width))
        noise = rng.split("posterior").normal((L, B, self.cfg.stoch))

        state = self.initial_state(B)
        states, post_means, post_stds, pri_means, pri_stds = [], [], [], [], []
        for t in range(L):
            deter = self._advance(state, prev_joint_actions[:, t])
            embed_t = T.reshape(T.narrow(embeds_3d, 1, t, 1), (B, self.embed_width))
            prior = self._latent(deter, None)
            posterior = self._latent(deter, embed_t)
            state = RSSMState(deter, posterior.rsample(noise[t]))
            states.append(state)
            post_means.append(posterior.mean)
            post_stds.append(posterior.std)
            pri_means.append(prior.mean)
            pri_stds.append(prior.std)

        z = T.concat([T.stack([s.deter for s in states], axis=0),
                      T.stack([s.stoch for s in states], axis=0)], axis=-1)
        z_flat = T.reshape(z, (L * B, self.cfg.deter + self.cfg.stoch))

        target = Tensor(np.ascontiguousarray(
            field_feats.astype(np.float32).transpose(1, 0, 2).reshape(L * B, -1)))
        recon_nll = (0.5 * T.square(self.decode_obs(z_flat) - target)).sum(axis=-1).mean()

        r_target = Tensor(np.ascontiguousarray(
            rewards_in.astype(np.float32).transpose(1, 0, 2).reshape(L * B, self.n_agents)))
        reward_nll = (0.5 * T.square(self.decode_rewards(z_flat) - r_target)).sum(axis=-1).mean()

        posterior_all = DiagGaussian(T.stack(post_means, 0), T.stack(post_stds, 0))
        prior_all = DiagGaussian(T.stack(pri_means, 0), T.stack(pri_stds, 0))
        kl = kl_diag_gaussian(posterior_all, prior_all)
        kl_clamped = T.maximum_scalar(kl, self.cfg.free_nats).mean()

        est_terms = []
        est_values = []
        for k, head in enumerate(self.estimation_heads):
            raw = head(z_flat)
            w = self.agent_stoch_widths[k]
            est = gaussian_from_raw(T.narrow(raw, -1, 0, w), T.narrow(raw, -1, w, w))
            means, stds = agent_posteriors[k]
            agent_post = DiagGaussian(Tensor(means.reshape(L * B, w).astype(np.float32)),
                                      Tensor(stds.reshape(L * B, w).astype(np.float32)))
            term = kl_diag_gaussian(agent_post, est).mean()
            est_terms.append(term)
            est_values.append(term.item())

        total = recon_nll + reward_nll + self.cfg.kl_beta * kl_clamped
        for term in est_terms:
            total = total + self.cfg.estimation_weight * term
        loss = GlobalLoss(recon=recon_nll.item(), reward=reward_nll.item(),
                          kl=kl.mean().item(), estimation=est_values,
                          total=total.item(), total_tensor=total)
        return states, loss


def build_global_model(params: Params, field_width: int, joint_action_width: int,
                       n_agents: int, agent_stoch_widths: list[int],
                       cfg: GlobalModelConfig) -> GlobalWorldModel:
    return GlobalWorldModel(params, field_width, joint_action_width, n_agents,
                            agent_stoch_widths, cfg)
