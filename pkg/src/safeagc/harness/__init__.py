from .compare import Comparison, StepMetrics, compare, pi_vs_agent, step_metrics, trace_csv, tune_pi
from .episode import CBF_FLAG, TIME_UP, VIOLATION, AgentPolicy, EpisodeTrace, PiPolicy, run_episode
from .scenario import LoadStep, RampAttack, Scenario, ZeroPolicy, random_schedule
from .training import TrainReport, train

__all__ = [
    "Comparison", "StepMetrics", "compare", "pi_vs_agent", "step_metrics", "trace_csv", "tune_pi",
    "CBF_FLAG", "TIME_UP", "VIOLATION", "AgentPolicy", "EpisodeTrace", "PiPolicy", "run_episode",
    "LoadStep", "RampAttack", "Scenario", "ZeroPolicy", "random_schedule",
    "TrainReport", "train",
]
