"""Six-term AGC reward."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEVEL = "level"
CHANGE = "change"


@dataclass(frozen=True)
class RewardConfig:
    r1: tuple[float, ...]
    r2: float | tuple[float, ...]
    r3: float
    r4: float
    r5: float
    r6: float
    # "level": r3 * Pref.Pref as the formula reads; "change": r3 * (Pref - Pref_prev)^2
    dispatch_penalty: str = LEVEL

    def __post_init__(self):
        object.__setattr__(self, "r1", tuple(float(v) for v in np.atleast_1d(self.r1)))
        r2 = np.atleast_1d(np.asarray(self.r2, dtype=float))
        object.__setattr__(self, "r2", float(r2[0]) if r2.size == 1 else tuple(r2.tolist()))
        weights = list(self.r1) + list(r2) + [self.r3, self.r4, self.r5, self.r6]
        if any(w < 0 for w in weights):
            raise ValueError("reward weights must be nonnegative")
        if self.dispatch_penalty not in (LEVEL, CHANGE):
            raise ValueError(f"dispatch_penalty must be {LEVEL!r} or {CHANGE!r}")


@dataclass(frozen=True)
class RewardTerms:
    frequency: float
    tie: float
    dispatch: float
    sharing: float
    flag: float
    violation: float

    @property
    def total(self) -> float:
        return self.frequency + self.tie + self.dispatch + self.sharing + self.flag + self.violation

    def as_tuple(self) -> tuple[float, ...]:
        return (self.frequency, self.tie, self.dispatch, self.sharing, self.flag, self.violation)


TERM_NAMES = ("frequency", "tie", "dispatch", "sharing", "flag", "violation")


def sharing_imbalance(Pref, groups) -> float:
    """Sum over areas of squared deviations from the area's mean dispatch."""
    Pref = np.asarray(Pref, dtype=float)
    total = 0.0
    for members in groups:
        p = Pref[list(members)]
        total += float(np.sum((p - p.mean()) ** 2))
    return total


def reward_terms(cfg: RewardConfig, f, p_tie, Pref, groups, cbf_flag=False, violation=False, Pref_prev=None):
    f = np.asarray(f, dtype=float)
    p_tie = np.atleast_1d(np.asarray(p_tie, dtype=float))
    Pref = np.asarray(Pref, dtype=float)
    r1 = np.asarray(cfg.r1)
    if r1.size != f.size:
        raise ValueError(f"r1 has {r1.size} weights for {f.size} areas")
    r2 = np.broadcast_to(np.asarray(cfg.r2, dtype=float), p_tie.shape)
    if cfg.dispatch_penalty == CHANGE:
        prev = np.zeros_like(Pref) if Pref_prev is None else np.asarray(Pref_prev, dtype=float)
        d = Pref - prev
    else:
        d = Pref
    return RewardTerms(
        frequency=-float(r1 @ np.abs(f)),
        tie=-float(r2 @ np.abs(p_tie)),
        dispatch=-cfg.r3 * float(d @ d),
        sharing=-cfg.r4 * sharing_imbalance(Pref, groups),
        flag=-cfg.r5 if cbf_flag else 0.0,
        violation=-cfg.r6 if violation else 0.0,
    )


def reward(cfg: RewardConfig, f, p_tie, Pref, groups, cbf_flag=False, violation=False, Pref_prev=None) -> float:
    return reward_terms(cfg, f, p_tie, Pref, groups, cbf_flag, violation, Pref_prev).total
