"""Feature-level counterpart of the generation rule.

Image feature matrices are interpolated elementwise; text feature sequences are
concatenated along the sequence axis. Unlike pixels, feature values are
unbounded, so no range clamp is applied.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, InvalidLambda, ShapeMismatch


@dataclass(frozen=True)
class FeatureMatrix:
    """A float32 matrix: sequence length (tokens or patches) by feature dim."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 2:
            raise ValueError(f"feature matrix must be 2-d, got {getattr(d, 'shape', type(d))}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"feature matrix dims must be positive, got {d.shape}")
        if d.dtype != np.float32:
            raise ValueError(f"feature matrix must be float32, got {d.dtype}")
        if not d.flags["C_CONTIGUOUS"]:
            object.__setattr__(self, "data", np.ascontiguousarray(d))

    @classmethod
    def from_array(cls, arr) -> "FeatureMatrix":
        return cls(np.ascontiguousarray(arr, dtype=np.float32))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def mix_image_embeddings(fa: FeatureMatrix, fb: FeatureMatrix, lam: float) -> FeatureMatrix:
    """Elementwise lam * fa + (1 - lam) * fb; shape preserved, no clamp."""
    if fa.data.shape != fb.data.shape:
        raise ShapeMismatch(f"cannot mix {fa.data.shape} with {fb.data.shape}")
    if not 0.0 <= lam <= 1.0:
        raise InvalidLambda(f"lambda must lie in [0, 1], got {lam}")
    out = fa.data * np.float32(lam)
    out += fb.data * np.float32(1.0 - lam)
    return FeatureMatrix(out)


def concat_text_embeddings(fa: FeatureMatrix, fb: FeatureMatrix) -> FeatureMatrix:
    """Stack fa's rows above fb's; both blocks are preserved bit-exactly."""
    if fa.cols != fb.cols:
        raise DimMismatch(f"feature dims differ: {fa.cols} vs {fb.cols}")
    return FeatureMatrix(np.concatenate([fa.data, fb.data], axis=0))
