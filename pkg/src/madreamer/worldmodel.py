"""Per-agent recurrent latent world model.

A GRU carries the deterministic path; a shared latent head produces the
prior (from the deterministic state alone) and the posterior (deterministic
state plus encoded observation).  Decoder heads reconstruct the observation
and predict the reward.  Communication symbols are never inputs: the model
sees only the physical observation streams and the physical action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import nn
from .diffcore import tensor as T
from .diffcore.dists import DiagGaussian, gaussian_from_raw, kl_diag_gaussian
from .diffcore.nn import MLP, GRUCell, Params
from .diffcore.rng import Rng
from .diffcore.tensor import Tensor


@dataclass
class RSSMState:
    """Deterministic recurrent vector plus stochastic latent sample."""

    deter: Tensor
    stoch: Tensor

    def z(self) -> Tensor:
        """Full latent code used downstream."""
        return T.concat([self.deter, self.stoch], axis=-1)

    @property
    def batch(self) -> int:
        return self.deter.shape[0]

    def detach(self) -> "RSSMState":
        return RSSMState(self.deter.detach(), self.stoch.detach())


@dataclass(frozen=True)
class WorldModelConfig:
    deter: int = 128
    stoch: int = 32
    encoder_widths: tuple[int, ...] = (400, 400, 400)
    decoder_widths: tuple[int, ...] = (400, 400, 400)
    latent_hidden: int = 200
    reward_hidden: tuple[int, ...] = (200, 200)
    kl_beta: float = 1.0
    free_nats: float = 1.0

    def scaled(self, factor: float) -> "WorldModelConfig":
        """Shrunk copy for smoke-scale runs."""
        s = lambda w: max(8, int(w * factor))
        return WorldModelConfig(
            deter=s(self.deter), stoch=s(self.stoch),
            encoder_widths=tuple(s(w) for w in self.encoder_widths),
            decoder_widths=tuple(s(w) for w in self.decoder_widths),
            latent_hidden=s(self.latent_hidden),
            reward_hidden=tuple(s(w) for w in self.reward_hidden),
            kl_beta=self.kl_beta, free_nats=self.free_nats)


@dataclass
class WorldModelLoss:
    recon: float
    reward: float
    kl: float
    total: float
    total_tensor: Tensor | None = None


class AgentWorldModel:
    """RSSM over one agent's physical observation streams."""

    def __init__(self, params: Params, prefix: str, stream_widths: dict[str, int],
                 action_width: int, cfg: WorldModelConfig):
        self.params = params
        self.prefix = prefix
        self.cfg = cfg
        self.stream_widths = dict(stream_widths)
        self.action_width = action_width
        self.obs_width = sum(stream_widths.values())
        self.embed_width = cfg.encoder_widths[-1] * len(stream_widths)
        self.encoders = {
            name: MLP(params, f"{prefix}/encoder/{name}", width, cfg.encoder_widths)
            for name, width in sorted(stream_widths.items())
        }
        self.cell = GRUCell(params, f"{prefix}/cell", cfg.stoch + action_width, cfg.deter)
        self.latent_head = MLP(params, f"{prefix}/latent",
                               cfg.deter + self.embed_width,
                               (cfg.latent_hidden, 2 * cfg.stoch))
        self.obs_decoder = MLP(params, f"{prefix}/decoder",
                               cfg.deter + cfg.stoch,
                               (*cfg.decoder_widths, self.obs_width))
        self.reward_head = MLP(params, f"{prefix}/reward",
                               cfg.deter + cfg.stoch, (*cfg.reward_hidden, 1))

    # -- pieces ----------------------------------------------------------
    def initial_state(self, batch: int) -> RSSMState:
        return RSSMState(T.zeros((batch, self.cfg.deter)), T.zeros((batch, self.cfg.stoch)))

    def encode(self, obs: dict[str, Tensor | np.ndarray]) -> Tensor:
        parts = []
        for name in sorted(self.stream_widths):
            x = obs[name]
            if not isinstance(x, Tensor):
                x = Tensor(np.asarray(x, dtype=np.float32))
            parts.append(T.relu(self.encoders[name](x)))
        return T.concat(parts, axis=-1)

    def _advance(self, prev: RSSMState, action) -> Tensor:
        if not isinstance(action, Tensor):
            action = Tensor(np.asarray(action, dtype=np.float32))
        if action.shape[-1] != self.action_width:
            raise ValueError(f"action width {action.shape[-1]} != {self.action_width}")
        x = T.concat([prev.stoch, action], axis=-1)
        return self.cell(x, prev.deter)

    def _latent(self, deter: Tensor, embed: Tensor | None) -> DiagGaussian:
        """Shared head: the prior is the posterior with a zeroed-out embed."""
        if embed is None:
            embed = T.zeros((deter.shape[0], self.embed_width))
        raw = self.latent_head(T.concat([deter, embed], axis=-1))
        mean = T.narrow(raw, -1, 0, self.cfg.stoch)
        std = T.narrow(raw, -1, self.cfg.stoch, self.cfg.stoch)
        return gaussian_from_raw(mean, std)

    def posterior_step(self, prev: RSSMState, action, obs, noise):
        """Advance with an observation; returns (state, prior, posterior)."""
        deter = self._advance(prev, action)
        prior = self._latent(deter, None)
        posterior = self._latent(deter, self.encode(obs))
        stoch = posterior.rsample(noise)
        return RSSMState(deter, stoch), prior, posterior

    def prior_step(self, prev: RSSMState, action, noise):
        """Advance without observations (the imagination transition)."""
        deter = self._advance(prev, action)
        prior = self._latent(deter, None)
        return RSSMState(deter, prior.rsample(noise)), prior

    def decode_obs(self, z: Tensor) -> Tensor:
        return self.obs_decoder(z)

    def decode_reward(self, z: Tensor) -> Tensor:
        return T.reshape(self.reward_head(z), (z.shape[0],))

    def obs_target(self, obs: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(obs[k], dtype=np.float32)
                               for k in sorted(self.stream_widths)], axis=-1)

    # -- training --------------------------------------------------------
    def observe_sequence(self, obs_seq: dict[str, np.ndarray], prev_actions: np.ndarray,
                         rewards_in: np.ndarray, rng: Rng):
        """Filter a (B, L) batch and build the reconstruction/KL loss.

        Returns (per-step states, WorldModelLoss, per-step posteriors).
        """
        some = next(iter(obs_seq.values()))
        B, L = some.shape[0], some.shape[1]
        flat_obs = {k: Tensor(v.reshape(B * L, v.shape[-1]).astype(np.float32))
                    for k, v in obs_seq.items()}
        embeds = self.encode(flat_obs)                      # (B*L, E)
        embeds_3d = T.reshape(embeds, (B, L, self.embed_width))
        noise = rng.split("posterior").normal((L, B, self.cfg.stoch))

        state = self.initial_state(B)
        states, post_means, post_stds, pri_means, pri_stds = [], [], [], [], []
        for t in range(L):
            deter = self._advance(state, prev_actions[:, t])
            embed_t = T.reshape(T.narrow(embeds_3d, 1, t, 1), (B, self.embed_width))
            prior = self._latent(deter, None)
            posterior = self._latent(deter, embed_t)
            stoch = posterior.rsample(noise[t])
            state = RSSMState(deter, stoch)
            states.append(state)
            post_means.append(posterior.mean)
            post_stds.append(posterior.std)
            pri_means.append(prior.mean)
            pri_stds.append(prior.std)

        z = T.concat([T.stack([s.deter for s in states], axis=0),
                      T.stack([s.stoch for s in states], axis=0)], axis=-1)
        z_flat = T.reshape(z, (L * B, self.cfg.deter + self.cfg.stoch))

        target = self.obs_target({k: v.reshape(B * L, v.shape[-1]) for k, v in obs_seq.items()})
        target = Tensor(np.ascontiguousarray(
            target.reshape(B, L, -1).transpose(1, 0, 2).reshape(L * B, -1)))
        recon = self.decode_obs(z_flat)
        recon_nll = (0.5 * T.square(recon - target)).sum(axis=-1).mean()

        r_target = Tensor(np.ascontiguousarray(rewards_in.astype(np.float32).T.reshape(L * B)))
        r_pred = self.decode_reward(z_flat)
        reward_nll = (0.5 * T.square(r_pred - r_target)).mean()

        posterior_all = DiagGaussian(T.stack(post_means, 0), T.stack(post_stds, 0))
        prior_all = DiagGaussian(T.stack(pri_means, 0), T.stack(pri_stds, 0))
        kl = kl_diag_gaussian(posterior_all, prior_all)     # (L, B)
        kl_clamped = T.maximum_scalar(kl, self.cfg.free_nats).mean()

        total = recon_nll + reward_nll + self.cfg.kl_beta * kl_clamped
        loss = WorldModelLoss(recon=recon_nll.item(), reward=reward_nll.item(),
                              kl=kl.mean().item(), total=total.item(), total_tensor=total)
        posteriors = [DiagGaussian(m, s) for m, s in zip(post_means, post_stds)]
        return states, loss, posteriors


def build_agent_model(params: Params, agent_index: int, stream_widths: dict[str, int],
                      action_width: int, cfg: WorldModelConfig) -> AgentWorldModel:
    return AgentWorldModel(params, f"agent{agent_index}/model", stream_widths,
                           action_width, cfg)
