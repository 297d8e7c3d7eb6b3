"""Deterministic-policy-gradient actor-critic with target networks and replay."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np

from .nets import MLP, Adam, CheckpointError, load_networks, save_networks
from .pi import Observation


class TrainingDiverged(ArithmeticError):
    pass


@dataclass(frozen=True)
class AgentHyper:
    hidden: tuple[int, ...] = (64, 64)
    action_limit: float = 0.1
    gamma: float = 0.95
    tau: float = 0.005
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    batch_size: int = 64
    buffer_size: int = 100_000
    warmup: int = 500
    updates_per_step: int = 1
    reward_scale: float = 0.01
    noise_start: float = 0.5
    noise_end: float = 0.05
    noise_decay_episodes: int = 1500
    freq_scale: float = 0.4
    tie_scale: float = 0.05
    ace_scale: float = 0.5
    # twin critics, smoothed target actions and a delayed actor step
    twin_critic: bool = True
    policy_delay: int = 2
    target_noise: float = 0.2  # fraction of action_limit
    target_noise_clip: float = 0.5
    # append the dispatch currently in force (scaled by action_limit) to the input
    observe_dispatch: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if not self.action_limit > 0:
            raise ValueError("action_limit must be > 0")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError("buffer_size must be >= batch_size >= 1")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")

    def noise_at(self, episode: int) -> float:
        frac = min(1.0, episode / max(1, self.noise_decay_episodes))
        return self.action_limit * (self.noise_start + frac * (self.noise_end - self.noise_start))


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self._ptr = 0

    def __len__(self):
        return self.size

    def add(self, obs, act, rew, next_obs, done):
        i = self._ptr
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self._ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, n):
        idx = rng.integers(0, self.size, size=n)
        return self.obs[idx], self.act[idx], self.rew[idx], self.next_obs[idx], self.done[idx]


def obs_dim_for(m: int, n_ties: int, g: int, hyper: AgentHyper) -> int:
    return 2 * m + n_ties + (g if hyper.observe_dispatch else 0)


def features(obs: Observation, hyper: AgentHyper) -> np.ndarray:
    """Normalised network input: frequencies, tie flows, ACE integrals (and the held dispatch)."""
    ace_int = np.zeros_like(obs.f) if obs.ace_integral is None else obs.ace_integral
    parts = [
        np.asarray(obs.f) / hyper.freq_scale,
        np.atleast_1d(obs.p_tie) / hyper.tie_scale,
        np.asarray(ace_int) / hyper.ace_scale,
    ]
    if hyper.observe_dispatch:
        if obs.pref is None:
            raise ValueError("observation lacks the held dispatch this agent expects")
        parts.append(np.asarray(obs.pref) / hyper.action_limit)
    return np.concatenate(parts)


class Agent:
    """Actor ``s -> a`` (tanh-bounded) and critic ``(s, a) -> Q``, each with a target copy."""

    def __init__(self, obs_dim: int, act_dim: int, hyper: AgentHyper, seed: int = 0):
        self.obs_dim, self.act_dim = int(obs_dim), int(act_dim)
        self.hyper = hyper
        init_rng = np.random.default_rng([seed, 1])
        self.actor = MLP((obs_dim, *hyper.hidden, act_dim), "tanh", rng=init_rng)
        self.critic = MLP((obs_dim + act_dim, *hyper.hidden, 1), "linear", rng=init_rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.critic2 = self.critic2_target = None
        if hyper.twin_critic:
            self.critic2 = MLP((obs_dim + act_dim, *hyper.hidden, 1), "linear", rng=init_rng)
            self.critic2_target = self.critic2.copy()
        self._make_optimizers()
        self.buffer = ReplayBuffer(hyper.buffer_size, obs_dim, act_dim)
        self.rng = np.random.default_rng([seed, 2])
        self.n_updates = 0

    def _make_optimizers(self):
        hp = self.hyper
        self.actor_opt = Adam(self.actor.params, hp.actor_lr)
        self.critic_opt = Adam(self.critic.params, hp.critic_lr)
        self.critic2_opt = Adam(self.critic2.params, hp.critic_lr) if self.critic2 is not None else None

    # forward passes -------------------------------------------------------
    def actor_forward(self, s) -> np.ndarray:
        out = self.actor.forward(s) * self.hyper.action_limit
        return out[0] if np.ndim(s) == 1 else out

    def critic_forward(self, s, a) -> np.ndarray:
        x = np.hstack([np.atleast_2d(s), np.atleast_2d(a)])
        q = self.critic.forward(x)[:, 0]
        return q[0] if np.ndim(s) == 1 else q

    def act(self, s, noise: float = 0.0) -> np.ndarray:
        a = self.actor_forward(s)
        if noise > 0:
            a = a + self.rng.normal(0.0, noise, size=a.shape)
        lim = self.hyper.action_limit
        return np.clip(a, -lim, lim)

    # learning -------------------------------------------------------------
    def remember(self, s, a, r, s_next, done):
        self.buffer.add(s, a, r, s_next, done)

    def update(self, batch=None) -> dict:
        """One critic step; every ``policy_delay`` calls also an actor step and target update."""
        hp = self.hyper
        if batch is None:
            batch = self.buffer.sample(self.rng, hp.batch_size)
        s, a, r, s2, d = batch
        n = s.shape[0]
        lim = hp.action_limit

        a2 = self.actor_target.forward(s2) * lim
        if hp.twin_critic and hp.target_noise > 0:
            c = hp.target_noise_clip * lim
            a2 = np.clip(a2 + np.clip(self.rng.normal(0.0, hp.target_noise * lim, a2.shape), -c, c), -lim, lim)
        x2 = np.hstack([s2, a2])
        q_next = self.critic_target.forward(x2)[:, 0]
        if self.critic2 is not None:
            q_next = np.minimum(q_next, self.critic2_target.forward(x2)[:, 0])
        y = r * hp.reward_scale + hp.gamma * (1.0 - d) * q_next

        xa = np.hstack([s, a])
        critic_loss = 0.0
        critics = [(self.critic, self.critic_opt)]
        if self.critic2 is not None:
            critics.append((self.critic2, self.critic2_opt))
        for net, opt in critics:
            q, cache = net.forward(xa, keep=True)
            err = q[:, 0] - y
            critic_loss += float(np.mean(err * err))
            grads, _ = net.backward(cache, (2.0 / n) * err[:, None])
            opt.step(net.params, grads)

        diag = {"critic_loss": critic_loss, "actor_objective": None}
        if self.n_updates % hp.policy_delay == 0:
            mu, a_cache = self.actor.forward(s, keep=True)
            qa, c_cache = self.critic.forward(np.hstack([s, mu * lim]), keep=True)
            diag["actor_objective"] = float(np.mean(qa))
            _, dq_dx = self.critic.backward(c_cache, np.full((n, 1), 1.0 / n))
            dq_da = dq_dx[:, self.obs_dim:] * lim
            a_grads, _ = self.actor.backward(a_cache, -dq_da)
            self.actor_opt.step(self.actor.params, a_grads)
            self.actor_target.soft_update_from(self.actor, hp.tau)
            self.critic_target.soft_update_from(self.critic, hp.tau)
            if self.critic2 is not None:
                self.critic2_target.soft_update_from(self.critic2, hp.tau)
        self.n_updates += 1
        values = [critic_loss] + ([diag["actor_objective"]] if diag["actor_objective"] is not None else [])
        if not np.all(np.isfinite(values)):
            raise TrainingDiverged(f"non-finite loss after {self.n_updates} updates")
        return diag

    # persistence ----------------------------------------------------------
    def networks(self) -> dict:
        nets = {
            "actor": self.actor,
            "critic": self.critic,
            "actor_target": self.actor_target,
            "critic_target": self.critic_target,
        }
        if self.critic2 is not None:
            nets["critic2"] = self.critic2
            nets["critic2_target"] = self.critic2_target
        return nets

    def save(self, path_or_buf) -> bytes:
        meta = {"obs_dim": self.obs_dim, "act_dim": self.act_dim, "hyper": asdict(self.hyper)}
        return save_networks(path_or_buf, self.networks(), meta)

    def digest(self) -> str:
        return hashlib.sha256(save_networks(_NullSink(), self.networks(), {})).hexdigest()

    @classmethod
    def load(cls, path_or_buf, seed: int = 0) -> "Agent":
        nets, meta = load_networks(path_or_buf)
        try:
            hyper = AgentHyper(**meta["hyper"])
            agent = cls(meta["obs_dim"], meta["act_dim"], hyper, seed=seed)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"checkpoint metadata unusable: {exc}") from exc
        expected = agent.networks()
        if set(nets) != set(expected):
            raise CheckpointError(f"checkpoint holds networks {sorted(nets)}, expected {sorted(expected)}")
        for name, net in nets.items():
            if expected[name].sizes != net.sizes:
                raise CheckpointError(f"checkpoint layer sizes {net.sizes} do not match {expected[name].sizes} for {name}")
            setattr(agent, name, net)
        agent._make_optimizers()
        return agent


class _NullSink:
    def write(self, data):
        pass
