"""Lifted variable elimination by bisimulation of rv-elim graphs."""

from .engine import EngineParams, InferenceResult, brute_force_marginals, compare, run
from .factor import Factor
from .model import GeneratorConfig, Model, generate_layered_bn, load_model, save_model

__all__ = [
    "EngineParams",
    "Factor",
    "GeneratorConfig",
    "InferenceResult",
    "Model",
    "brute_force_marginals",
    "compare",
    "generate_layered_bn",
    "load_model",
    "run",
    "save_model",
]
