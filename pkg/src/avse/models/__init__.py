from .networks import (
    MODEL_KINDS,
    VAR_FLOOR,
    GenerativeModel,
    LatentGaussian,
    ModelConfig,
    build_model,
    canonical_kind,
    decode,
    embed_visual,
    encode,
    prior,
)
from .objective import Batch, elbo, evaluate_objective, frame_objectives, gaussian_kl, is_divergence
from .training import EarlyStopping, TrainingResult, train

__all__ = [
    "MODEL_KINDS", "VAR_FLOOR", "GenerativeModel", "LatentGaussian", "ModelConfig", "build_model",
    "canonical_kind", "decode", "embed_visual", "encode", "prior", "Batch", "elbo",
    "evaluate_objective", "frame_objectives", "gaussian_kl", "is_divergence", "EarlyStopping",
    "TrainingResult", "train",
]
