"""Per-area logarithmic barrier on one-step-ahead frequencies, screening and rectification.

``h_i = F^2 - f_i(t+Ts)^2`` where the prediction holds the load and the
currently applied dispatch. The barrier is ``B = -log(h / (1 + h))`` and a
candidate dispatch ``u`` passes when, for every area,
``dB_i/dt - alpha_i / B_i <= 0`` along ``xdot = A x + B1 P_L + B2 u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import QpInfeasibleError, QpProblem, solve_least_distance_qp
from .plant import DiscreteModel, SystemModel, predict_frequencies

FLAG = "flag"
RECTIFY = "rectify"
OFF = "off"
MODES = (FLAG, RECTIFY, OFF)

ALLOW_TOL = 1e-9


class OutsideSafeSet(Exception):
    """Raised when a barrier is evaluated with some ``h_i <= 0``.

    Callers treat this as a safety violation event, not a numerical fault.
    """

    def __init__(self, areas, h):
        self.areas = tuple(int(a) for a in areas)
        self.h = np.asarray(h, dtype=float)
        super().__init__(f"state outside the safe set in areas {list(self.areas)}")


class SafetyHardStop(RuntimeError):
    """The rectification QP has no feasible point."""


@dataclass(frozen=True)
class SafetyConfig:
    F: float
    alpha: tuple[float, ...]
    ts_pred: float
    mode: str = FLAG
    include_load_in_bdot: bool = True
    recheck_period: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if not self.F > 0:
            raise ValueError("F must be > 0")
        if not self.alpha or any(not a > 0 for a in self.alpha):
            raise ValueError("every alpha_i must be > 0")
        if not self.ts_pred > 0:
            raise ValueError("ts_pred must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.recheck_period is not None and not self.recheck_period > 0:
            raise ValueError("recheck_period must be > 0")

    @property
    def recheck(self) -> float:
        return self.ts_pred if self.recheck_period is None else self.recheck_period


@dataclass(frozen=True)
class BarrierEval:
    f_pred: np.ndarray
    h: np.ndarray
    B: np.ndarray
    Bdot: np.ndarray
    residual: np.ndarray
    # residual_i(u) = offset_i + gain_i . u
    offset: np.ndarray = field(repr=False)
    gain: np.ndarray = field(repr=False)

    @property
    def satisfied(self) -> bool:
        return bool(np.all(self.residual <= ALLOW_TOL))


@dataclass(frozen=True)
class Allowed:
    u: np.ndarray
    residual: np.ndarray

    flagged = False

    @property
    def delta(self) -> np.ndarray:
        return np.zeros_like(self.u)


@dataclass(frozen=True)
class Flagged:
    u_raw: np.ndarray
    areas: tuple[int, ...]
    residual: np.ndarray

    flagged = True


@dataclass(frozen=True)
class Rectified:
    u: np.ndarray
    delta: np.ndarray
    active_areas: tuple[int, ...]
    residual: np.ndarray

    flagged = True


CbfDecision = Allowed | Flagged | Rectified


def barrier_h(dm: DiscreteModel, cfg: SafetyConfig, x, PL, Pref) -> np.ndarray:
    f = predict_frequencies(dm, x, PL, Pref)
    return cfg.F**2 - f**2


def barrier_b(h: float) -> float:
    """``-log(h / (1 + h))``; returns ``inf`` for ``h <= 0`` (outside the safe set)."""
    if not h > 0:
        return math.inf
    return -math.log(h / (1.0 + h))


def _barrier_b_vec(h: np.ndarray) -> np.ndarray:
    # log1p form keeps precision when h is large
    return np.log1p(1.0 / h)


def barrier_condition(
    model: SystemModel, dm: DiscreteModel, cfg: SafetyConfig, x, PL, u_candidate, Pref_held=None
) -> BarrierEval:
    """Evaluate ``Bdot_i - alpha_i / B_i`` for a candidate dispatch.

    ``Pref_held`` is the dispatch currently applied; it sets the predicted
    frequencies inside ``h``; ``None`` means nothing is dispatched yet (zeros).
    """
    x = np.asarray(x, dtype=float)
    PL = np.asarray(PL, dtype=float)
    u = np.asarray(u_candidate, dtype=float)
    held = np.zeros_like(u) if Pref_held is None else np.asarray(Pref_held, dtype=float)
    f = predict_frequencies(dm, x, PL, held)
    h = cfg.F**2 - f**2
    outside = np.flatnonzero(h <= 0.0)
    if outside.size:
        raise OutsideSafeSet(outside, h)
    B = _barrier_b_vec(h)
    alpha = np.asarray(cfg.alpha)
    if alpha.size != h.size:
        raise ValueError(f"{alpha.size} alpha values for {h.size} areas")
    # dB/dx = -(dh/dx)/(h + h^2),  dh/dx = -2 f c_i Abar
    dBdx = (2.0 * f / (h + h * h))[:, None] * (dm.C @ dm.Abar)
    drift = model.A @ x
    if cfg.include_load_in_bdot:
        drift = drift + model.B1 @ PL
    offset = dBdx @ drift - alpha / B
    gain = dBdx @ model.B2
    Bdot = dBdx @ (drift + model.B2 @ u)
    residual = Bdot - alpha / B
    return BarrierEval(f_pred=f, h=h, B=B, Bdot=Bdot, residual=residual, offset=offset, gain=gain)


def screen(
    model: SystemModel, dm: DiscreteModel, cfg: SafetyConfig, x, PL, u_raw, Pref_held=None, mode=None
) -> CbfDecision:
    """Check ``u_raw`` against every area's barrier condition.

    In flag mode a failing candidate is returned as :class:`Flagged`. In
    rectify mode the nearest candidate satisfying all barrier constraints
    (least-distance QP, one half-space per area) is returned as
    :class:`Rectified`.
    """
    mode = cfg.mode if mode is None else mode
    u_raw = np.asarray(u_raw, dtype=float)
    ev = barrier_condition(model, dm, cfg, x, PL, u_raw, Pref_held)
    bad = np.flatnonzero(ev.residual > ALLOW_TOL)
    if bad.size == 0 or mode == OFF:
        return Allowed(u=u_raw.copy(), residual=ev.residual)
    if mode == FLAG:
        return Flagged(u_raw=u_raw.copy(), areas=tuple(int(i) for i in bad), residual=ev.residual)
    problem = QpProblem(target=u_raw, normals=ev.gain, bounds=-ev.offset)
    try:
        u_safe = solve_least_distance_qp(problem)
    except QpInfeasibleError as exc:
        raise SafetyHardStop(str(exc)) from exc
    residual = ev.offset + ev.gain @ u_safe
    active = tuple(int(i) for i in np.flatnonzero(residual > -1e-9 * max(1.0, float(np.max(np.abs(ev.offset))))))
    return Rectified(u=u_safe, delta=u_safe - u_raw, active_areas=active, residual=residual)
