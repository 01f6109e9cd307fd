"""Iterative knowledge-graph refinement.

Combines rule-based soft inference over ontologies (a weighted hinge-loss
MRF with convex MAP inference) with type-supervised embedding models in a
co-training loop: infer graded fact/type scores from rules, train type-gated
embeddings on the cleaned KG, feed high-confidence predictions back as
evidence, repeat.
"""

__version__ = "0.1.0"

from .kg import (
    CandidateFact,
    CandidateLabel,
    EvalSet,
    Interner,
    KnowledgeGraph,
    Ontology,
    SplitSpec,
    generate_sameent,
    jaccard_sameent,
    load_kg,
    load_truth,
    split_balanced_halves,
    split_kg,
    write_kg,
)
from .embed import EmbeddingModel, ModelConfig, load_model, predict, save_model, train
from .evaluate import (
    AlphaConfig,
    EvalReport,
    ablate_ontology,
    alpha_combine,
    noise_recall,
    size_normalized,
    threshold_heatmap,
    tune_alpha,
    two_stage_ensemble,
    weighted_f1,
)
from .noise import NoiseSpec, assign_extraction_scores, corrupt_kg, noise_stats
from .pipeline import (
    FeedbackConfig,
    FeedbackEvidence,
    IterationReport,
    PredictionPartition,
    feedback_thresholds,
    filter_kg,
    generate_types,
    refine,
    select_feedback,
    tune_threshold,
)
from .psl import BACKEND, InferenceResult, RuleWeights, SolverConfig, ground, infer, map_inference
from .synth import SynthSpec, generate_kg

__all__ = [
    "AlphaConfig",
    "BACKEND",
    "CandidateFact",
    "CandidateLabel",
    "EmbeddingModel",
    "EvalReport",
    "EvalSet",
    "FeedbackConfig",
    "FeedbackEvidence",
    "InferenceResult",
    "Interner",
    "IterationReport",
    "KnowledgeGraph",
    "ModelConfig",
    "NoiseSpec",
    "Ontology",
    "PredictionPartition",
    "RuleWeights",
    "SolverConfig",
    "SplitSpec",
    "SynthSpec",
    "__version__",
    "ablate_ontology",
    "alpha_combine",
    "assign_extraction_scores",
    "corrupt_kg",
    "feedback_thresholds",
    "filter_kg",
    "generate_kg",
    "generate_sameent",
    "generate_types",
    "ground",
    "infer",
    "jaccard_sameent",
    "load_kg",
    "load_model",
    "load_truth",
    "map_inference",
    "noise_recall",
    "noise_stats",
    "predict",
    "refine",
    "save_model",
    "select_feedback",
    "size_normalized",
    "split_balanced_halves",
    "split_kg",
    "threshold_heatmap",
    "train",
    "tune_alpha",
    "tune_threshold",
    "two_stage_ensemble",
    "weighted_f1",
    "write_kg",
]
