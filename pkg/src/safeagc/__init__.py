"""Barrier-function safety filter for learned automatic generation control.

Subpackages: ``plant`` (multi-area LFC model and simulation), ``safety``
(barrier screening and rectification), ``control`` (PI, reward, actor-critic
agent), ``harness`` (episodes, training, comparison) and ``cli``.
"""

from .config import ConfigError, StudyConfig, load_config
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigError", "StudyConfig", "load_config", "__version__"]
