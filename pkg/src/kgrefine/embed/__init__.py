from .model import (
    BASES,
    MODES,
    EmbeddingModel,
    ModelConfig,
    base_score,
    implicit_typed_score,
    load_model,
    predict,
    save_model,
    typee_score,
)
from .train import TrainingSet, bce_loss, make_training_set, negative_sample, train

__all__ = [
    "BASES",
    "MODES",
    "EmbeddingModel",
    "ModelConfig",
    "TrainingSet",
    "base_score",
    "bce_loss",
    "implicit_typed_score",
    "load_model",
    "make_training_set",
    "negative_sample",
    "predict",
    "save_model",
    "train",
    "typee_score",
]
