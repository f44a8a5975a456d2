"""Joint image-text data augmentation: interpolate images, concatenate text.

The public surface re-exports the data model, the generation rule and its
variants, the deterministic batch pipeline, feature-level ops, dataset IO,
and retrieval metrics.
"""

from . import augment, dataio, embedding, errors, metrics, pipeline, types
from .augment import concat_text, make_pair, mix_images, pick_uniform, sample_lambda, token_subset
from .embedding import FeatureMatrix, concat_text_embeddings, mix_image_embeddings
from .metrics import Direction, GroundTruth, RetrievalReport, ScoreMatrix, evaluate_retrieval, recall_at_k, rsum
from .pipeline import apply_mixgen, derive_stream_seed, plan_batches, resolve_m, run
from .types import (
    AbsoluteM,
    AugmentedPair,
    Batch,
    BetaLambda,
    FixedLambda,
    FractionM,
    ImageTensor,
    ImageTextPair,
    MixGenConfig,
    TextSequence,
    Variant,
    normalize_text,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "augment",
    "dataio",
    "embedding",
    "errors",
    "metrics",
    "pipeline",
    "types",
    "concat_text",
    "make_pair",
    "mix_images",
    "pick_uniform",
    "sample_lambda",
    "token_subset",
    "FeatureMatrix",
    "concat_text_embeddings",
    "mix_image_embeddings",
    "Direction",
    "GroundTruth",
    "RetrievalReport",
    "ScoreMatrix",
    "evaluate_retrieval",
    "recall_at_k",
    "rsum",
    "apply_mixgen",
    "derive_stream_seed",
    "plan_batches",
    "resolve_m",
    "run",
    "AbsoluteM",
    "AugmentedPair",
    "Batch",
    "BetaLambda",
    "FixedLambda",
    "FractionM",
    "ImageTensor",
    "ImageTextPair",
    "MixGenConfig",
    "TextSequence",
    "Variant",
    "normalize_text",
    "validate_config",
    "__version__",
]
