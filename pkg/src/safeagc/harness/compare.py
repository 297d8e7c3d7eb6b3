"""PI tuning, step-response metrics and the PI-vs-agent comparison."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..config import StudyConfig
from ..control.pi import PiController
from ..control.reward import sharing_imbalance
from ..plant import SystemModel
from ..safety import OFF
from .episode import AgentPolicy, EpisodeTrace, PiPolicy, run_episode
from .scenario import LoadStep, Scenario


def step_scenario(cfg: StudyConfig, mode: str = OFF) -> Scenario:
    ev = cfg.evaluation
    return Scenario(
        duration=ev.duration,
        agc_period=ev.agc_period,
        load_schedule=(LoadStep(ev.load_step_time, ev.load_step_area, ev.load_step),),
        safety=cfg.safety,
        mode=mode,
    )


def make_pi(model: SystemModel, kp, ki, participation) -> PiController:
    m = model.m
    return PiController(
        kp=np.broadcast_to(np.asarray(kp, float), (m,)).copy(),
        ki=np.broadcast_to(np.asarray(ki, float), (m,)).copy(),
        participation=[np.asarray(p, float) for p in participation],
        groups=model.generator_index,
        bias=model.bias,
    )


def itae(trace: EpisodeTrace) -> float:
    """Time-weighted absolute frequency error, summed over areas (trapezoid rule)."""
    err = np.abs(trace.f).sum(axis=1) * trace.t
    return float(np.sum(0.5 * (err[1:] + err[:-1]) * np.diff(trace.t)))


@dataclass(frozen=True)
class PiTuning:
    kp: float
    ki: float
    cost: float
    table: tuple  # (kp, ki, cost) for every grid point


def tune_pi(cfg: StudyConfig, record_dt: float = 0.01) -> PiTuning:
    """Coarse grid search over shared (kp, ki) minimising the step-response ITAE."""
    scen = step_scenario(cfg)
    table = []
    for kp, ki in itertools.product(cfg.pi.tune_kp_grid, cfg.pi.tune_ki_grid):
        pi = make_pi(cfg.model, kp, ki, cfg.pi.participation)
        trace = run_episode(scen, PiPolicy(pi), cfg.model, cfg.reward, record_dt=record_dt)
        cost = itae(trace) if trace.terminal == "TimeUp" else float("inf")
        table.append((float(kp), float(ki), cost))
    best = min(table, key=lambda r: (r[2], r[0], r[1]))
    return PiTuning(kp=best[0], ki=best[1], cost=best[2], table=tuple(table))


def pi_from_config(cfg: StudyConfig, tuned: PiTuning | None = None) -> PiController:
    if tuned is not None:
        return make_pi(cfg.model, tuned.kp, tuned.ki, cfg.pi.participation)
    return make_pi(cfg.model, cfg.pi.kp, cfg.pi.ki, cfg.pi.participation)


@dataclass(frozen=True)
class StepMetrics:
    peak_abs_freq: tuple[float, ...]
    peak_abs_tie: float
    settling_time: tuple[float, ...]  # inf if never inside the band for good
    settled: bool
    imbalance: float
    final_abs_freq: tuple[float, ...]


def settling_time(t, y, band: float) -> float:
    """First time after which ``|y|`` stays below ``band`` until the end of the record."""
    outside = np.flatnonzero(np.abs(y) >= band)
    if outside.size == 0:
        return float(t[0])
    last = outside[-1]
    if last == len(t) - 1:
        return float("inf")
    return float(t[last + 1])


def step_metrics(trace: EpisodeTrace, model: SystemModel, band: float) -> StepMetrics:
    f = trace.f
    ts = tuple(settling_time(trace.t, f[:, i], band) for i in range(f.shape[1]))
    return StepMetrics(
        peak_abs_freq=tuple(float(v) for v in np.abs(f).max(axis=0)),
        peak_abs_tie=float(np.abs(trace.p_tie).max()),
        settling_time=ts,
        settled=bool(all(np.isfinite(ts)) and all(s < trace.t[-1] for s in ts)),
        imbalance=sharing_imbalance(trace.pref_applied[-1], model.generator_index),
        final_abs_freq=tuple(float(v) for v in np.abs(f[-1])),
    )


@dataclass
class Comparison:
    traces: dict
    metrics: dict

    def summary_rows(self) -> list[dict]:
        rows = []
        for name, m in self.metrics.items():
            row = {"policy": name}
            for i, v in enumerate(m.peak_abs_freq):
                row[f"peak_abs_df_area{i + 1}"] = v
            row["peak_abs_ptie"] = m.peak_abs_tie
            for i, v in enumerate(m.settling_time):
                row[f"settling_time_area{i + 1}"] = v
            row["settled"] = m.settled
            row["imbalance"] = m.imbalance
            rows.append(row)
        return rows


def compare(cfg: StudyConfig, policies: dict, mode: str = OFF, record_dt: float = 0.01) -> Comparison:
    """Run each named policy on the same load-step scenario and collect metrics."""
    scen = step_scenario(cfg, mode)
    traces, metrics = {}, {}
    for name, pol in policies.items():
        tr = run_episode(scen, pol, cfg.model, cfg.reward, record_dt=record_dt)
        traces[name] = tr
        metrics[name] = step_metrics(tr, cfg.model, cfg.evaluation.settle_band)
    return Comparison(traces, metrics)


def pi_vs_agent(cfg: StudyConfig, agent, mode: str = OFF, tuned: PiTuning | None = None) -> Comparison:
    if tuned is None and cfg.pi.tune:
        tuned = tune_pi(cfg)
    return compare(cfg, {"pi": PiPolicy(pi_from_config(cfg, tuned)), "rl": AgentPolicy(agent)}, mode)


# CSV output ---------------------------------------------------------------

def trace_csv(trace: EpisodeTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    gl = trace.generator_labels
    w.writerow(["time", *trace.state_labels, *(f"pref_raw_{g}" for g in gl), *(f"pref_applied_{g}" for g in gl)])
    for i in range(trace.t.size):
        w.writerow([repr(float(trace.t[i])), *map(repr, trace.x[i].tolist()),
                    *map(repr, trace.pref_raw[i].tolist()), *map(repr, trace.pref_applied[i].tolist())])
    return buf.getvalue()


def write_trace_csv(trace: EpisodeTrace, path) -> Path:
    path = Path(path)
    path.write_text(trace_csv(trace))
    return path


def rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def metrics_dict(m: StepMetrics) -> dict:
    return asdict(m)
