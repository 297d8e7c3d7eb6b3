from .agent import Agent, AgentHyper, ReplayBuffer, TrainingDiverged, features
from .nets import MLP, Adam, CheckpointError, load_networks, save_networks
from .pi import Observation, PiController, pi_step
from .reward import TERM_NAMES, RewardConfig, RewardTerms, reward, reward_terms, sharing_imbalance

__all__ = [
    "Agent", "AgentHyper", "ReplayBuffer", "TrainingDiverged", "features",
    "MLP", "Adam", "CheckpointError", "load_networks", "save_networks",
    "Observation", "PiController", "pi_step",
    "TERM_NAMES", "RewardConfig", "RewardTerms", "reward", "reward_terms", "sharing_imbalance",
]
