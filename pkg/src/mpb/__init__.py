"""Selection of the most probable best solution under input uncertainty."""
from .learning import LearningState, VarianceMode
from .problem import (
    NoiseKind,
    NoiseModel,
    ProblemInstance,
    Scenario,
    ScenarioSpec,
    TruthSummary,
    derive_truth,
    generate_synthetic,
    simulate_output,
)
from .samplers import RunConfig, RunTrace, SamplerKind, run

__all__ = [
    "LearningState",
    "NoiseKind",
    "NoiseModel",
    "ProblemInstance",
    "RunConfig",
    "RunTrace",
    "SamplerKind",
    "Scenario",
    "ScenarioSpec",
    "TruthSummary",
    "VarianceMode",
    "derive_truth",
    "generate_synthetic",
    "run",
    "simulate_output",
]

__version__ = "0.1.0"
