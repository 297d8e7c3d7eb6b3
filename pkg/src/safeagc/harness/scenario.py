"""Disturbance schedules and run settings for one closed-loop episode."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..safety import FLAG, MODES, SafetyConfig

TIME_EPS = 1e-9


@dataclass(frozen=True)
class LoadStep:
    time: float
    area: int
    delta: float  # pu, positive = more load


@dataclass(frozen=True)
class Scenario:
    duration: float
    agc_period: float
    load_schedule: tuple[LoadStep, ...]
    safety: SafetyConfig
    seed: int = 0
    mode: str = FLAG

    def __post_init__(self):
        object.__setattr__(self, "load_schedule", tuple(sorted(self.load_schedule, key=lambda s: s.time)))
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if not self.agc_period > 0:
            raise ValueError("agc_period must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        for s in self.load_schedule:
            if not 0.0 <= s.time <= self.duration:
                raise ValueError(f"load step at t={s.time} outside [0, {self.duration}]")
        if self.mode != self.safety.mode:
            object.__setattr__(self, "safety", replace(self.safety, mode=self.mode))

    @property
    def n_dispatches(self) -> int:
        return int(np.ceil(self.duration / self.agc_period - TIME_EPS))

    def load_at(self, t: float, m: int) -> np.ndarray:
        PL = np.zeros(m)
        for s in self.load_schedule:
            if t >= s.time - TIME_EPS:
                if not 0 <= s.area < m:
                    raise ValueError(f"load step area {s.area} out of range for {m} areas")
                PL[s.area] += s.delta
        return PL

    def load_times(self) -> list[float]:
        return [s.time for s in self.load_schedule]


def random_schedule(rng: np.random.Generator, duration: float, m: int, n_min: int, n_max: int,
                    max_step: float, resolution: float = 0.01) -> tuple[LoadStep, ...]:
    """1..n random load steps, uniform in time (snapped to ``resolution``) and in +-max_step."""
    count = int(rng.integers(n_min, n_max + 1))
    steps = []
    for _ in range(count):
        t = round(float(rng.uniform(0.0, duration)) / resolution) * resolution
        steps.append(LoadStep(time=min(t, duration), area=int(rng.integers(m)),
                              delta=float(rng.uniform(-max_step, max_step))))
    return tuple(steps)


@dataclass(frozen=True)
class RampAttack:
    """Scripted dispatch that ramps one generator's reference without bound."""

    rate: float
    generator: int
    n_generators: int
    start: float = 0.0

    def reset(self):
        pass

    def act(self, obs, t: float, dt: float) -> np.ndarray:
        u = np.zeros(self.n_generators)
        u[self.generator] = self.rate * max(0.0, t - self.start)
        return u


@dataclass
class ZeroPolicy:
    n_generators: int
    calls: int = field(default=0)

    def reset(self):
        self.calls = 0

    def act(self, obs, t: float, dt: float) -> np.ndarray:
        self.calls += 1
        return np.zeros(self.n_generators)
