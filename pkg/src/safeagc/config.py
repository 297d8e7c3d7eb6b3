"""YAML study configuration: plant, safety, reward, PI, agent and run settings."""

from __future__ import annotations

import copy
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .control.agent import AgentHyper
from .control.reward import RewardConfig
from .plant import AreaParams, GeneratorParams, ModelError, SystemModel, TieLine, build_model
from .safety import SafetyConfig

MODE_ALIASES = {"flag": "flag", "rectify": "rectify", "off": "off", "unfiltered": "off"}


class ConfigError(ValueError):
    """Malformed or invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _load_yaml(source) -> dict:
    if source is None or source == "default":
        text = resources.files("safeagc").joinpath("data/default.yaml").read_text()
    elif isinstance(source, dict):
        return copy.deepcopy(source)
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError("config", f"file not found: {path}")
        text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML ({exc.__class__.__name__})") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a mapping")
    return data


def _section(data: dict, name: str) -> dict:
    sec = data.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(name, "missing or not a mapping")
    return sec


def _build(cls, raw: dict, where: str, extra: dict | None = None):
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}", "unknown field")
    kwargs = dict(raw)
    if extra:
        kwargs.update(extra)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(where, str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc


def plant_from_dict(sec: dict) -> SystemModel:
    areas_raw = sec.get("areas")
    if not isinstance(areas_raw, list) or not areas_raw:
        raise ConfigError("plant.areas", "must be a non-empty list")
    areas = []
    for i, a in enumerate(areas_raw):
        where = f"plant.areas[{i}]"
        gens_raw = a.get("generators")
        if not isinstance(gens_raw, list) or not gens_raw:
            raise ConfigError(f"{where}.generators", "must be a non-empty list")
        gens = []
        for j, g in enumerate(gens_raw):
            try:
                gens.append(_build(GeneratorParams, g, f"{where}.generators[{j}]"))
            except ModelError as exc:
                raise ConfigError(f"{where}.generators[{j}]", str(exc)) from exc
        rest = {k: v for k, v in a.items() if k != "generators"}
        areas.append(_build(AreaParams, rest, where, {"generators": tuple(gens)}))
    ties = [_build(TieLine, t, f"plant.ties[{k}]") for k, t in enumerate(sec.get("ties") or [])]
    try:
        return build_model(areas, ties)
    except ModelError as exc:
        raise ConfigError("plant.ties", str(exc)) from exc


def safety_from_dict(sec: dict, mode: str | None = None) -> SafetyConfig:
    raw = dict(sec)
    if mode is not None:
        raw["mode"] = mode
    raw["mode"] = MODE_ALIASES.get(str(raw.get("mode", "flag")), raw.get("mode"))
    return _build(SafetyConfig, raw, "safety")


@dataclass(frozen=True)
class TrainingSettings:
    episodes: int = 2000
    duration: float = 60.0
    agc_period: float = 2.0
    load_steps_min: int = 1
    load_steps_max: int = 3
    load_step_max: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not self.duration > 0 or not self.agc_period > 0:
            raise ValueError("duration and agc_period must be > 0")
        if not 0 <= self.load_steps_min <= self.load_steps_max:
            raise ValueError("need 0 <= load_steps_min <= load_steps_max")


@dataclass(frozen=True)
class EvaluationSettings:
    duration: float = 60.0
    agc_period: float = 2.0
    load_step: float = 0.05
    load_step_time: float = 1.0
    load_step_area: int = 0
    settle_band: float = 0.005


@dataclass(frozen=True)
class DemoSettings:
    duration: float = 60.0
    agc_period: float = 0.1
    F: float = 0.5
    alpha: tuple = (0.1, 0.1)
    ts_pred: float = 0.1
    ramp_rate: float = 0.02
    ramp_generator: int = 0
    load_step: float = 0.02
    load_step_time: float = 40.0
    load_step_area: int = 0


@dataclass(frozen=True)
class PiSettings:
    kp: tuple
    ki: tuple
    participation: tuple
    tune: bool = True
    tune_kp_grid: tuple = (0.0,)
    tune_ki_grid: tuple = (0.05,)


@dataclass
class StudyConfig:
    model: SystemModel
    safety: SafetyConfig
    reward: RewardConfig
    pi: PiSettings
    agent: AgentHyper
    training: TrainingSettings
    evaluation: EvaluationSettings
    demo: DemoSettings
    raw: dict


def load_config(source: Any = "default", mode: str | None = None) -> StudyConfig:
    """Parse and validate a study config (path, dict, or ``"default"``)."""
    data = _load_yaml(source)
    model = plant_from_dict(_section(data, "plant"))
    safety = safety_from_dict(_section(data, "safety"), mode)
    if len(safety.alpha) != model.m:
        raise ConfigError("safety.alpha", f"needs {model.m} entries, one per area")
    reward = _build(RewardConfig, _section(data, "reward"), "reward")
    if len(reward.r1) != model.m:
        raise ConfigError("reward.r1", f"needs {model.m} entries, one per area")
    pi = _build(PiSettings, _section(data, "pi"), "pi")
    agent = _build(AgentHyper, _section(data, "agent"), "agent")
    training = _build(TrainingSettings, data.get("training") or {}, "training")
    evaluation = _build(EvaluationSettings, data.get("evaluation") or {}, "evaluation")
    demo = _build(DemoSettings, data.get("demo") or {}, "demo")
    return StudyConfig(
        model=model, safety=safety, reward=reward, pi=pi, agent=agent,
        training=training, evaluation=evaluation, demo=demo, raw=data,
    )
