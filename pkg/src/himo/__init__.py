"""Hierarchical planning by natural path gradient ascent on tabular MDPs."""

__version__ = "0.1.0"

from .mdp import MdpModel, SaIndexMap, load_model, sa_index, validate_model
from .policy import PolicyTable, PreferenceVector, init_random_policy, policy_from_preferences
from .geometry import PathGeometry, path_geometry
from .optimizer import HimoConfig, RunTrace, StepFailure, himo_step, run_himo
from .environments import Environment, build_room_world, build_tower_of_hanoi, load_environment
from .analysis import compute_measures

__all__ = [
    "Environment",
    "HimoConfig",
    "MdpModel",
    "PathGeometry",
    "PolicyTable",
    "PreferenceVector",
    "RunTrace",
    "SaIndexMap",
    "StepFailure",
    "build_room_world",
    "build_tower_of_hanoi",
    "compute_measures",
    "himo_step",
    "init_random_policy",
    "load_environment",
    "load_model",
    "path_geometry",
    "policy_from_preferences",
    "run_himo",
    "sa_index",
    "validate_model",
]
