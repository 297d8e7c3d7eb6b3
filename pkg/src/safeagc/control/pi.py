"""PI baseline on the area control error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Observation:
    """What AGC measures: area frequency deviations, tie-line flows, net area exports.

    ``ace_integral`` (running integral of each area's ACE) and ``pref`` (the
    dispatch currently in force) are kept by the episode loop and handed to
    the learning agent as extra input.
    """

    f: np.ndarray
    p_tie: np.ndarray
    net_export: np.ndarray
    ace_integral: np.ndarray | None = None
    pref: np.ndarray | None = None

    def ace(self, bias) -> np.ndarray:
        return self.net_export + np.asarray(bias) * self.f


@dataclass
class PiController:
    """Per-area PI on ACE, split over the area's units by participation factors.

    The dispatch is ``-participation * (kp * ACE + ki * integral(ACE))``: a
    positive ACE (over-frequency or over-export) lowers the references.
    """

    kp: np.ndarray
    ki: np.ndarray
    participation: list[np.ndarray]
    groups: tuple[tuple[int, ...], ...]
    bias: np.ndarray
    integral: np.ndarray = field(default=None)

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        self.ki = np.asarray(self.ki, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        self.participation = [np.asarray(p, dtype=float) for p in self.participation]
        m = len(self.groups)
        if self.kp.shape != (m,) or self.ki.shape != (m,) or len(self.participation) != m:
            raise ValueError("PI gains and participation must have one entry per area")
        if np.any(self.ki < 0):
            raise ValueError("ki must be >= 0")
        for p, members in zip(self.participation, self.groups):
            if p.shape != (len(members),) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError("participation factors must be nonnegative and sum to 1 per area")
        if self.integral is None:
            self.integral = np.zeros(m)

    @property
    def n_generators(self) -> int:
        return sum(len(g) for g in self.groups)

    def reset(self):
        self.integral = np.zeros(len(self.groups))

    def step(self, obs: Observation, dt: float) -> np.ndarray:
        if not dt > 0:
            raise ValueError("dt must be positive")
        ace = obs.ace(self.bias)
        self.integral = self.integral + ace * dt
        area_cmd = -(self.kp * ace + self.ki * self.integral)
        out = np.zeros(self.n_generators)
        for i, members in enumerate(self.groups):
            out[list(members)] = self.participation[i] * area_cmd[i]
        return out


def pi_step(c: PiController, obs: Observation, dt: float) -> np.ndarray:
    return c.step(obs, dt)
