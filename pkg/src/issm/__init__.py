"""Reinforcement-learned sample selection for active skeleton action recognition."""
__version__ = "0.1.0"

from .agent import ISSMAgent, ReplayBuffer, Transition
from .alsim import EpisodeLog, PoolEnvironment, run_episode
from .datagen import Dataset, SyntheticSpec, generate, load_feature_file, split_pools
from .discrepancy import KernelConfig, mmd
from .featurize import ActionFeatures, AgentState
from .recognizer import SkeletonRecognizer, TemporalPooling

__all__ = [
    "ActionFeatures", "AgentState", "Dataset", "EpisodeLog", "ISSMAgent", "KernelConfig",
    "PoolEnvironment", "ReplayBuffer", "SkeletonRecognizer", "SyntheticSpec", "TemporalPooling",
    "Transition", "generate", "load_feature_file", "mmd", "run_episode", "split_pools",
]
