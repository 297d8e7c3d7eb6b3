"""Closed-loop episode: policy dispatch every AGC period, safety screening, held-input plant."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from ..control.agent import features
from ..control.pi import Observation, PiController
from ..control.reward import RewardConfig, RewardTerms, reward_terms
from ..plant import RK4_DT, DiscreteModel, SimState, SimulationDivergence, SystemModel, discretize, step_held
from ..safety import FLAG, OFF, RECTIFY, OutsideSafeSet, screen
from .scenario import TIME_EPS, Scenario

TIME_UP = "TimeUp"
CBF_FLAG = "CbfFlag"
VIOLATION = "Violation"


class Policy(Protocol):
    def reset(self) -> None: ...

    def act(self, obs: Observation, t: float, dt: float) -> np.ndarray: ...


@dataclass(frozen=True)
class OutsideDecision:
    """Screening could not run because the state already left the safe set."""

    areas: tuple[int, ...]
    h: np.ndarray

    flagged = True


@dataclass
class Screening:
    t: float
    decision: object
    u_raw: np.ndarray
    u_applied: np.ndarray


@dataclass
class EpisodeTrace:
    state_labels: tuple[str, ...]
    generator_labels: tuple[str, ...]
    # sampled series
    t: np.ndarray
    x: np.ndarray
    pref_raw: np.ndarray
    pref_applied: np.ndarray
    # one row per reward instant
    step_t: np.ndarray
    step_f: np.ndarray
    step_p_tie: np.ndarray
    step_pref: np.ndarray
    step_pref_prev: np.ndarray
    step_flag: np.ndarray
    step_violation: np.ndarray
    step_terms: np.ndarray  # (k, 6), columns follow TERM_NAMES
    screenings: list[Screening] = field(repr=False)
    terminal: str = TIME_UP
    peak_abs_freq: np.ndarray = None
    freq_index: np.ndarray = None
    tie_index: np.ndarray = None

    @property
    def step_reward(self) -> np.ndarray:
        return self.step_terms.sum(axis=1)

    @property
    def total_reward(self) -> float:
        return float(self.step_reward.sum())

    @property
    def f(self) -> np.ndarray:
        return self.x[:, self.freq_index]

    @property
    def p_tie(self) -> np.ndarray:
        return self.x[:, self.tie_index]

    @property
    def violated(self) -> bool:
        return bool(self.step_violation.any())

    @property
    def n_flags(self) -> int:
        return int(self.step_flag.sum())


def observe(model: SystemModel, x, ace_integral, pref) -> Observation:
    return Observation(
        f=model.frequencies(x).copy(),
        p_tie=model.tie_flows(x).copy(),
        net_export=model.net_export(x),
        ace_integral=np.array(ace_integral, dtype=float),
        pref=np.array(pref, dtype=float),
    )


def _is_on(t: float, grid: float, origin: float) -> bool:
    q = (t - origin) / grid
    return abs(q - round(q)) < 1e-6


def run_episode(
    scenario: Scenario,
    policy: Policy,
    model: SystemModel,
    reward_cfg: RewardConfig,
    dm: DiscreteModel | None = None,
    record_dt: float | None = 0.01,
    on_transition: Callable | None = None,
) -> EpisodeTrace:
    """Simulate ``policy`` in closed loop under ``scenario``.

    Every ``agc_period`` the policy proposes a dispatch. Unless the mode is
    off, the dispatch is screened at the start of the hold and again every
    ``safety.recheck`` seconds against the currently applied input. In flag
    mode a flag (or a state already outside the safe set) ends the episode;
    in rectify mode the applied input is replaced by the QP solution.

    A reward is computed at the end of each hold (or at termination) from the
    observation there, the raw dispatch and the hold's flags.
    ``on_transition(obs, u_raw, reward, next_obs, terminal)`` is called for
    every reward so a learner can store it.
    """
    cfg = scenario.safety
    mode = scenario.mode
    if dm is None or abs(dm.ts - cfg.ts_pred) > 1e-12:
        dm = discretize(model, cfg.ts_pred)
    m, g = model.m, model.g
    P = scenario.agc_period
    rec_every = 0
    if record_dt:
        rec_every = int(round(record_dt / RK4_DT))
        if rec_every < 1 or abs(rec_every * RK4_DT - record_dt) > 1e-12:
            raise ValueError("record_dt must be a positive multiple of 1 ms")

    policy.reset()
    s = SimState(np.zeros(model.n), 0.0)
    applied = np.zeros(g)
    ace_int = np.zeros(m)
    obs = observe(model, s.x, ace_int + obs_ace(model, s.x) * P, applied)
    ace_int = obs.ace_integral
    prev_raw = np.zeros(g)
    peak = np.zeros(m)

    ts, xs, raws, apps = [0.0], [s.x.copy()], [np.zeros(g)], [np.zeros(g)]
    rows = {k: [] for k in ("t", "f", "tie", "pref", "prev", "flag", "viol", "terms")}
    screenings: list[Screening] = []
    terminal = TIME_UP
    load_times = scenario.load_times()

    for k in range(scenario.n_dispatches):
        t_k = k * P
        t_next = min((k + 1) * P, scenario.duration)
        raw = np.asarray(policy.act(obs, t_k, P), dtype=float).reshape(-1)
        if raw.shape != (g,) or not np.all(np.isfinite(raw)):
            raise ValueError(f"policy returned an invalid dispatch {raw!r}")

        # segment boundaries: re-check instants and load steps inside the hold
        cuts = {t_next}
        if mode != OFF:
            n_chk = int(np.ceil((t_next - t_k) / cfg.recheck - TIME_EPS))
            cuts.update(t_k + j * cfg.recheck for j in range(1, n_chk))
        cuts.update(tl for tl in load_times if t_k + TIME_EPS < tl < t_next - TIME_EPS)
        cuts = sorted(cuts)

        flagged = violated = False
        t_cur = t_k
        for tb in cuts:
            PL = scenario.load_at(t_cur, m)
            if mode == OFF:
                applied = raw.copy()
            elif _is_on(t_cur, cfg.recheck, t_k):
                try:
                    d = screen(model, dm, cfg, s.x, PL, raw, applied, mode)
                except OutsideSafeSet as exc:
                    d = OutsideDecision(areas=exc.areas, h=exc.h)
                if mode == FLAG:
                    if d.flagged:
                        flagged = True
                    else:
                        applied = raw.copy()
                elif mode == RECTIFY and not isinstance(d, OutsideDecision):
                    applied = d.u.copy()
                screenings.append(Screening(t_cur, d, raw.copy(), applied.copy()))
                if flagged:
                    break
            try:
                s_new, pk, samples = step_held(model, s, PL, applied, tb - t_cur, rec_every)
            except SimulationDivergence:
                violated = True
                terminal = VIOLATION
                break
            if rec_every and len(samples):
                h = (tb - t_cur) / max(1, int(np.ceil((tb - t_cur) / RK4_DT - 1e-9)))
                for j, row in enumerate(samples, start=1):
                    ts.append(t_cur + j * rec_every * h)
                    xs.append(row)
                    raws.append(raw.copy())
                    apps.append(applied.copy())
            peak = np.maximum(peak, pk)
            s = SimState(s_new.x, tb)
            t_cur = tb
            if np.any(pk > cfg.F):
                violated = True
                if mode == FLAG:
                    terminal = VIOLATION
                    break
        if flagged:
            terminal = CBF_FLAG

        dt_int = t_cur - t_k
        next_obs = observe(model, s.x, ace_int + obs_ace(model, s.x) * max(dt_int, 0.0), applied)
        terms = reward_terms(reward_cfg, next_obs.f, next_obs.p_tie, raw, model.generator_index,
                             cbf_flag=flagged, violation=violated, Pref_prev=prev_raw)
        _append(rows, t_cur, next_obs, raw, prev_raw, flagged, violated, terms)
        done = terminal != TIME_UP
        if on_transition is not None:
            on_transition(obs, raw, terms.total, next_obs, done)
        if done:
            break
        obs = next_obs
        ace_int = obs.ace_integral
        prev_raw = raw

    return EpisodeTrace(
        state_labels=model.state_labels,
        generator_labels=model.generator_labels,
        t=np.asarray(ts),
        x=np.vstack(xs),
        pref_raw=np.vstack(raws),
        pref_applied=np.vstack(apps),
        step_t=np.asarray(rows["t"]),
        step_f=np.asarray(rows["f"]).reshape(-1, m),
        step_p_tie=np.asarray(rows["tie"]).reshape(-1, model.n_ties),
        step_pref=np.asarray(rows["pref"]).reshape(-1, g),
        step_pref_prev=np.asarray(rows["prev"]).reshape(-1, g),
        step_flag=np.asarray(rows["flag"], dtype=bool),
        step_violation=np.asarray(rows["viol"], dtype=bool),
        step_terms=np.asarray(rows["terms"]).reshape(-1, 6),
        screenings=screenings,
        terminal=terminal,
        peak_abs_freq=peak,
        freq_index=np.asarray(model.freq_index),
        tie_index=np.asarray(model.tie_index),
    )


def obs_ace(model: SystemModel, x) -> np.ndarray:
    return model.net_export(x) + model.bias * model.frequencies(x)


def _append(rows, t, obs, raw, prev, flagged, violated, terms: RewardTerms):
    rows["t"].append(t)
    rows["f"].append(obs.f)
    rows["tie"].append(obs.p_tie)
    rows["pref"].append(raw.copy())
    rows["prev"].append(prev.copy())
    rows["flag"].append(flagged)
    rows["viol"].append(violated)
    rows["terms"].append(terms.as_tuple())


class PiPolicy:
    """Adapter so a :class:`PiController` fits the episode loop."""

    def __init__(self, controller: PiController):
        self.controller = controller

    def reset(self):
        self.controller.reset()

    def act(self, obs: Observation, t: float, dt: float) -> np.ndarray:
        return self.controller.step(obs, dt)


class AgentPolicy:
    """Actor network as a policy, optionally with Gaussian exploration noise."""

    def __init__(self, agent, noise: float = 0.0):
        self.agent = agent
        self.noise = noise

    def reset(self):
        pass

    def features(self, obs: Observation) -> np.ndarray:
        return features(obs, self.agent.hyper)

    def act(self, obs: Observation, t: float, dt: float) -> np.ndarray:
        return self.agent.act(self.features(obs), self.noise)
