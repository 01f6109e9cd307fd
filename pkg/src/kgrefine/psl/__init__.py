from .ground import (
    Atom,
    AtomStore,
    GroundProgram,
    GroundRule,
    RuleWeights,
    ground,
    hinge_distance,
    lukasiewicz_body,
)
from .solve import BACKEND, InferenceResult, SolverConfig, infer, map_inference

__all__ = [
    "Atom",
    "AtomStore",
    "BACKEND",
    "GroundProgram",
    "GroundRule",
    "InferenceResult",
    "RuleWeights",
    "SolverConfig",
    "ground",
    "hinge_distance",
    "infer",
    "lukasiewicz_body",
    "map_inference",
]
