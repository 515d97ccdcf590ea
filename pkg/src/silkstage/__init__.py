"""Two-arm silk stage: cloth physics, timing referee, weather cues and trace tools."""

__version__ = "0.1.0"

from .config import StageConfig, load_config
from .episodes import EpisodeSpan, Label, alignment_report, detect
from .policy import (Cooperator, Jitterer, LinearPolicy, PolicyParams, Rival, load_params,
                     save_params, scripted)
from .stage import Trace, read_trace, replay, run_episode, write_summary, write_trace
from .training import CemConfig, evaluate, train_cem

__all__ = [
    "CemConfig", "Cooperator", "EpisodeSpan", "Jitterer", "Label", "LinearPolicy", "PolicyParams",
    "Rival", "StageConfig", "Trace", "alignment_report", "detect", "evaluate", "load_config",
    "load_params", "read_trace", "replay", "run_episode", "save_params", "scripted", "train_cem",
    "write_summary", "write_trace",
]
