"""Feature-level wrappers over plain arrays, sharing buffers where possible."""
from __future__ import annotations

import numpy as np

from mixgen.embedding import FeatureMatrix, concat_text_embeddings, mix_image_embeddings


def _as_matrix(arr: np.ndarray) -> FeatureMatrix:
    # No copy when the input is already contiguous float32.
    return FeatureMatrix(np.ascontiguousarray(arr, dtype=np.float32))


def mix_embeddings_inproc(fa: np.ndarray, fb: np.ndarray, lambda_: float) -> np.ndarray:
    """Elementwise lambda_ * fa + (1 - lambda_) * fb over 2-d feature arrays."""
    return mix_image_embeddings(_as_matrix(fa), _as_matrix(fb), lambda_).data


def concat_text_embeddings_inproc(fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    """Stack fa's rows above fb's; both blocks preserved bit-exactly."""
    return concat_text_embeddings(_as_matrix(fa), _as_matrix(fb)).data
