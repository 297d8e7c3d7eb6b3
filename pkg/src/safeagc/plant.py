"""Linearized multi-area load-frequency model: assembly, ZOH discretization, simulation.

State ordering is per area (each generator's internal states in listed order,
then the area frequency deviation), followed by one state per tie-line. All
frequencies are deviations in Hz; powers are per-unit on a common base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import NumericsError, zoh_matrices

THERMAL = "thermal-reheat"
HYDRO = "hydro"

RK4_DT = 1e-3


class ModelError(ValueError):
    """Invalid plant parameters or topology."""


class SimulationDivergence(ArithmeticError):
    pass


@dataclass(frozen=True)
class GeneratorParams:
    """One AGC-participating unit.

    Thermal units use ``t_governor``, ``t_turbine``, ``reheat_gain`` and
    ``t_reheat``. Hydro units use ``t_governor``, ``t_reset`` and
    ``t_transient`` (transient-droop lead/lag) and ``t_water``.
    """

    kind: str
    droop: float
    t_governor: float
    t_turbine: float = 0.0
    reheat_gain: float = 0.0
    t_reheat: float = 0.0
    t_reset: float = 0.0
    t_transient: float = 0.0
    t_water: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in (THERMAL, HYDRO):
            raise ModelError(f"generator kind must be {THERMAL!r} or {HYDRO!r}, got {self.kind!r}")
        if not self.droop > 0:
            raise ModelError("droop must be > 0")
        if self.kind == THERMAL:
            required = ("t_governor", "t_turbine", "t_reheat")
            if not 0.0 <= self.reheat_gain <= 1.0:
                raise ModelError("reheat_gain must lie in [0, 1]")
        else:
            required = ("t_governor", "t_reset", "t_transient", "t_water")
        for name in required:
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be > 0 for a {self.kind} unit")

    @property
    def n_states(self) -> int:
        return 3


@dataclass(frozen=True)
class AreaParams:
    """Swing dynamics ``Kp/(1 + s Tp)``, frequency bias and the area's units."""

    power_system_gain: float
    power_system_time: float
    bias: float
    generators: tuple[GeneratorParams, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        if not self.generators:
            raise ModelError(f"area {self.name or '?'} needs at least one generator")
        if not self.power_system_gain > 0 or not self.power_system_time > 0:
            raise ModelError("swing parameters must be > 0")
        if not self.bias > 0:
            raise ModelError("frequency bias must be > 0")


@dataclass(frozen=True)
class TieLine:
    from_area: int
    to_area: int
    sync_coefficient: float

    def __post_init__(self):
        if self.from_area == self.to_area:
            raise ModelError("tie-line endpoints must differ")
        if not self.sync_coefficient > 0:
            raise ModelError("tie-line synchronizing coefficient must be > 0")


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Continuous model ``xdot = A x + B1 P_L + B2 P_ref``, ``f = C x``."""

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    state_labels: tuple[str, ...]
    generator_index: tuple[tuple[int, ...], ...]
    generator_labels: tuple[str, ...]
    freq_index: np.ndarray
    tie_index: np.ndarray
    tie_incidence: np.ndarray
    bias: np.ndarray
    area_names: tuple[str, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def g(self) -> int:
        return self.B2.shape[1]

    @property
    def n_ties(self) -> int:
        return self.tie_index.size

    def derivative(self, x, PL, Pref) -> np.ndarray:
        return self.A @ x + self.B1 @ PL + self.B2 @ Pref

    def frequencies(self, x) -> np.ndarray:
        return np.asarray(x)[self.freq_index]

    def tie_flows(self, x) -> np.ndarray:
        return np.asarray(x)[self.tie_index]

    def net_export(self, x) -> np.ndarray:
        """Per-area net tie-line export (positive = power leaving the area)."""
        return self.tie_incidence @ self.tie_flows(x)


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    Abar: np.ndarray
    B1bar: np.ndarray
    B2bar: np.ndarray
    C: np.ndarray
    ts: float


@dataclass(frozen=True)
class SimState:
    x: np.ndarray
    t: float = 0.0


def _generator_block(gen: GeneratorParams):
    """Return (Agg 3x3, coupling to area frequency 3, input column 3, output row 3)."""
    Ag = np.zeros((3, 3))
    a_f = np.zeros(3)
    b_u = np.zeros(3)
    out = np.zeros(3)
    if gen.kind == THERMAL:
        # governor xg, non-reheat turbine pt, reheat output pr
        tg, tt, kr, tr = gen.t_governor, gen.t_turbine, gen.reheat_gain, gen.t_reheat
        Ag[0, 0] = -1.0 / tg
        a_f[0] = -1.0 / (gen.droop * tg)
        b_u[0] = 1.0 / tg
        Ag[1, 0] = 1.0 / tt
        Ag[1, 1] = -1.0 / tt
        # pr' = (pt - pr)/tr + kr * pt'
        Ag[2, 0] = kr / tt
        Ag[2, 1] = 1.0 / tr - kr / tt
        Ag[2, 2] = -1.0 / tr
        out[2] = 1.0
    else:
        # governor x1, transient droop x2 = (1 + s tR)/(1 + s tT) x1, turbine (1 - s Tw)/(1 + s Tw/2)
        t1, trs, trh, tw = gen.t_governor, gen.t_reset, gen.t_transient, gen.t_water
        Ag[0, 0] = -1.0 / t1
        a_f[0] = -1.0 / (gen.droop * t1)
        b_u[0] = 1.0 / t1
        # x2' = (x1 - x2)/trh + (trs/trh) x1'
        r = trs / trh
        Ag[1, 0] = 1.0 / trh - r / t1
        Ag[1, 1] = -1.0 / trh
        a_f1 = -r / (gen.droop * t1)
        b_u1 = r / t1
        # ph' = 2 (x2 - ph)/tw - 2 x2'
        Ag[2] = -2.0 * Ag[1]
        Ag[2, 1] += 2.0 / tw
        Ag[2, 2] = -2.0 / tw
        a_f[1] = a_f1
        b_u[1] = b_u1
        a_f[2] = -2.0 * a_f1
        b_u[2] = -2.0 * b_u1
        out[2] = 1.0
    return Ag, a_f, b_u, out


def build_model(areas, ties=()) -> SystemModel:
    """Assemble the block-structured continuous model from per-area parameters."""
    areas = list(areas)
    ties = list(ties)
    if not areas:
        raise ModelError("at least one area is required")
    m = len(areas)
    for k, tie in enumerate(ties):
        for end in (tie.from_area, tie.to_area):
            if not 0 <= end < m:
                raise ModelError(f"tie-line {k} references area {end}, but only {m} areas exist")

    n = sum(sum(g.n_states for g in a.generators) + 1 for a in areas) + len(ties)
    ng = sum(len(a.generators) for a in areas)
    A = np.zeros((n, n))
    B1 = np.zeros((n, m))
    B2 = np.zeros((n, ng))
    C = np.zeros((m, n))
    labels: list[str] = []
    gen_labels: list[str] = []
    gen_index: list[tuple[int, ...]] = []
    freq_index = np.zeros(m, dtype=np.int64)
    area_names = tuple(a.name or f"area{i + 1}" for i, a in enumerate(areas))

    row = 0
    col = 0
    outputs = []  # (area, generator output state)
    for i, area in enumerate(areas):
        start = row
        f_pos = start + sum(g.n_states for g in area.generators)
        members = []
        for j, gen in enumerate(area.generators):
            Ag, a_f, b_u, out = _generator_block(gen)
            sl = slice(row, row + 3)
            A[sl, sl] = Ag
            A[sl, f_pos] = a_f
            B2[sl, col] = b_u
            gname = gen.name or f"{area_names[i]}_g{j + 1}"
            stage = ("gov", "turb", "reheat") if gen.kind == THERMAL else ("gov", "droop", "turb")
            labels.extend(f"{gname}_{s}" for s in stage)
            outputs.append((f_pos, row + int(np.argmax(out))))
            gen_labels.append(gname)
            members.append(col)
            col += 1
            row += 3
        kp, tp = area.power_system_gain, area.power_system_time
        A[f_pos, f_pos] = -1.0 / tp
        B1[f_pos, i] = -kp / tp
        C[i, f_pos] = 1.0
        freq_index[i] = f_pos
        labels.append(f"{area_names[i]}_df")
        gen_index.append(tuple(members))
        row += 1
    for f_pos, out_pos in outputs:
        kp_tp = -B1[f_pos].sum()
        A[f_pos, out_pos] += kp_tp

    tie_index = np.arange(row, row + len(ties), dtype=np.int64)
    incidence = np.zeros((m, len(ties)))
    for k, tie in enumerate(ties):
        pos = row + k
        fa, fb = freq_index[tie.from_area], freq_index[tie.to_area]
        A[pos, fa] = 2.0 * math.pi * tie.sync_coefficient
        A[pos, fb] = -2.0 * math.pi * tie.sync_coefficient
        incidence[tie.from_area, k] = 1.0
        incidence[tie.to_area, k] = -1.0
        labels.append(f"ptie_{area_names[tie.from_area]}_{area_names[tie.to_area]}")
    # exported power is a load on the sending area
    for i in range(m):
        f_pos = freq_index[i]
        kp_tp = -B1[f_pos, i]
        for k in range(len(ties)):
            A[f_pos, tie_index[k]] -= kp_tp * incidence[i, k]

    bias = np.array([a.bias for a in areas])
    return SystemModel(
        A=A, B1=B1, B2=B2, C=C,
        state_labels=tuple(labels),
        generator_index=tuple(gen_index),
        generator_labels=tuple(gen_labels),
        freq_index=freq_index,
        tie_index=tie_index,
        tie_incidence=incidence,
        bias=bias,
        area_names=area_names,
    )


def discretize(model: SystemModel, ts: float) -> DiscreteModel:
    """Exact ZOH discretization at step ``ts``."""
    if not ts > 0:
        raise NumericsError("ts must be positive")
    B = np.hstack([model.B1, model.B2])
    Abar, Bbar = zoh_matrices(model.A, B, ts)
    m = model.B1.shape[1]
    return DiscreteModel(
        Abar=Abar, B1bar=Bbar[:, :m].copy(), B2bar=Bbar[:, m:].copy(), C=model.C.copy(), ts=float(ts)
    )


def _check_inputs(nx, nl, nu, x, PL, Pref):
    x = np.asarray(x, dtype=float)
    PL = np.asarray(PL, dtype=float)
    Pref = np.asarray(Pref, dtype=float)
    if x.shape != (nx,) or PL.shape != (nl,) or Pref.shape != (nu,):
        raise NumericsError(
            f"expected x{(nx,)}, PL{(nl,)}, Pref{(nu,)}; got {x.shape}, {PL.shape}, {Pref.shape}"
        )
    return x, PL, Pref


def predict_state(dm: DiscreteModel, x, PL, Pref) -> np.ndarray:
    x, PL, Pref = _check_inputs(dm.Abar.shape[0], dm.B1bar.shape[1], dm.B2bar.shape[1], x, PL, Pref)
    return dm.Abar @ x + dm.B1bar @ PL + dm.B2bar @ Pref


def predict_frequencies(dm: DiscreteModel, x, PL, Pref) -> np.ndarray:
    """Area frequency deviations one ``ts`` ahead with inputs held."""
    return dm.C @ predict_state(dm, x, PL, Pref)


def step_held(model: SystemModel, s: SimState, PL, Pref, dt: float, record_every: int = 0):
    """Advance ``s`` by ``dt`` with RK4 sub-steps of at most 1 ms.

    Returns ``(new_state, peak_abs_freq, samples)``; ``peak_abs_freq`` covers
    every sub-step boundary, ``samples`` every ``record_every`` sub-steps.
    """
    if not dt > 0:
        raise NumericsError("dt must be positive")
    x, PL, Pref = _check_inputs(model.n, model.m, model.g, s.x, PL, Pref)
    nsteps = max(1, int(math.ceil(dt / RK4_DT - 1e-9)))
    h = dt / nsteps
    c = model.B1 @ PL + model.B2 @ Pref
    xf, peak, samples = kernels.integrate_linear(model.A, c, x, h, nsteps, model.freq_index, record_every)
    if not np.all(np.isfinite(xf)):
        raise SimulationDivergence(f"non-finite plant state at t={s.t + dt:.3f}s")
    return SimState(x=xf, t=s.t + dt), peak, samples


def eigenvalues(model: SystemModel) -> np.ndarray:
    ev = np.linalg.eigvals(model.A)
    return ev[np.lexsort((ev.imag, ev.real))]


def steady_state(model: SystemModel, PL, Pref) -> np.ndarray:
    """Equilibrium state for constant inputs (A must be nonsingular)."""
    return -np.linalg.solve(model.A, model.B1 @ np.asarray(PL, float) + model.B2 @ np.asarray(Pref, float))

