"""Safe training loop for the actor-critic agent."""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from ..config import StudyConfig
from ..control.agent import Agent, TrainingDiverged, features, obs_dim_for
from ..plant import discretize
from .episode import CBF_FLAG, VIOLATION, AgentPolicy, run_episode
from .scenario import Scenario, random_schedule

MOVING_WINDOW = 100


def moving_average(values, window: int = MOVING_WINDOW) -> np.ndarray:
    """Trailing mean over up to ``window`` entries (shorter at the start)."""
    v = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


@dataclass
class TrainReport:
    episode_rewards: list[float]
    episode_steps: list[int]
    terminals: list[str]
    flag_episodes: list[int]
    violation_episodes: list[int]
    min_step_reward: float
    r6_events: int
    r5_episodes: int
    seed: int
    mode: str
    updates: int
    agent_digest: str
    wall_clock: float = field(default=0.0, compare=False)

    @property
    def moving_average(self) -> list[float]:
        return moving_average(self.episode_rewards).tolist()

    @property
    def violation_count(self) -> int:
        return len(self.violation_episodes)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "episodes": len(self.episode_rewards),
            "seed": self.seed,
            "mode": self.mode,
            "updates": self.updates,
            "violation_count": self.violation_count,
            "violation_episodes": self.violation_episodes,
            "flag_episodes": self.flag_episodes,
            "r5_episodes": self.r5_episodes,
            "r6_events": self.r6_events,
            "min_step_reward": self.min_step_reward,
            "agent_sha256": self.agent_digest,
            "episode_rewards": self.episode_rewards,
            "moving_average": self.moving_average,
            "episode_steps": self.episode_steps,
            "terminals": self.terminals,
        }
        if include_timing:
            d["wall_clock_s"] = self.wall_clock
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=1, sort_keys=True) + "\n"


def episode_scenario(cfg: StudyConfig, seed: int, episode: int, mode: str) -> Scenario:
    tr = cfg.training
    rng = np.random.default_rng([seed, 100, episode])
    sched = random_schedule(rng, tr.duration, cfg.model.m, tr.load_steps_min, tr.load_steps_max, tr.load_step_max)
    return Scenario(duration=tr.duration, agc_period=tr.agc_period, load_schedule=sched,
                    safety=cfg.safety, seed=episode, mode=mode)


def train(cfg: StudyConfig, episodes: int | None = None, seed: int | None = None, mode: str | None = None,
          progress=None, agent: Agent | None = None) -> tuple[TrainReport, Agent]:
    """Run the training loop; returns the report and the trained agent.

    On a non-finite update the agent is rolled back to the last completed
    episode and :class:`TrainingDiverged` is raised with it attached as
    ``exc.agent``.
    """
    tr = cfg.training
    episodes = tr.episodes if episodes is None else int(episodes)
    seed = tr.seed if seed is None else int(seed)
    mode = cfg.safety.mode if mode is None else mode
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    model = cfg.model
    hp = cfg.agent
    obs_dim = obs_dim_for(model.m, model.n_ties, model.g, hp)
    if agent is None:
        agent = Agent(obs_dim, model.g, hp, seed=seed)
    dm = discretize(model, cfg.safety.ts_pred)
    policy = AgentPolicy(agent)
    min_learn = max(hp.warmup, hp.batch_size)

    def on_transition(obs, u, r, next_obs, done):
        agent.remember(features(obs, hp), u, r, features(next_obs, hp), done)
        if len(agent.buffer) >= min_learn:
            for _ in range(hp.updates_per_step):
                agent.update()

    rewards, steps, terminals, flags, viols = [], [], [], [], []
    min_step = 0.0
    r6 = r5 = 0
    t0 = time.perf_counter()
    last_good = io.BytesIO()
    agent.save(last_good)
    for ep in range(episodes):
        policy.noise = hp.noise_at(ep)
        scen = episode_scenario(cfg, seed, ep, mode)
        try:
            trace = run_episode(scen, policy, model, cfg.reward, dm=dm, record_dt=None, on_transition=on_transition)
        except TrainingDiverged as exc:
            last_good.seek(0)
            exc.agent = Agent.load(last_good, seed=seed)
            raise
        rewards.append(trace.total_reward)
        steps.append(len(trace.step_t))
        terminals.append(trace.terminal)
        if trace.terminal == CBF_FLAG:
            flags.append(ep)
        if trace.violated or trace.terminal == VIOLATION:
            viols.append(ep)
        if len(trace.step_t):
            min_step = min(min_step, float(trace.step_reward.min()))
        r6 += int(np.count_nonzero(trace.step_terms[:, 5]))
        r5 += int(np.any(trace.step_terms[:, 4] != 0))
        last_good = io.BytesIO()
        agent.save(last_good)
        if progress is not None:
            progress(ep, trace)
    report = TrainReport(
        episode_rewards=rewards, episode_steps=steps, terminals=terminals, flag_episodes=flags,
        violation_episodes=viols, min_step_reward=min_step, r6_events=r6, r5_episodes=r5,
        seed=seed, mode=mode, updates=agent.n_updates, agent_digest=agent.digest(),
        wall_clock=time.perf_counter() - t0,
    )
    return report, agent
