"""Image-text retrieval scoring: recall at K in both directions plus their sum.

Candidates are ranked by descending score with ties broken by ascending index,
so results are reproducible regardless of how scores were produced.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InconsistentGroundTruth


class Direction(Enum):
    IMAGE_TO_TEXT = "image_to_text"  # text retrieval: image query, text candidates
    TEXT_TO_IMAGE = "text_to_image"  # image retrieval: text query, image candidates


@dataclass(frozen=True)
class ScoreMatrix:
    """Similarities, image-major: scores[i, t] pairs image i with text t."""

    scores: np.ndarray

    def __post_init__(self):
        s = self.scores
        if not isinstance(s, np.ndarray) or s.ndim != 2:
            raise ValueError("scores must be a 2-d array")
        if not np.all(np.isfinite(s)):
            raise ValueError("scores must be finite")

    @classmethod
    def from_array(cls, arr) -> "ScoreMatrix":
        return cls(np.asarray(arr, dtype=np.float64))

    @property
    def n_images(self) -> int:
        return self.scores.shape[0]

    @property
    def n_texts(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class GroundTruth:
    """Mutually inverse maps between texts and their source images."""

    image_to_texts: tuple[tuple[int, ...], ...]
    text_to_image: tuple[int, ...]

    @classmethod
    def from_image_to_texts(cls, image_to_texts: Sequence[Sequence[int]]) -> "GroundTruth":
        """Build both maps from the image side, validating the partition."""
        i2t = tuple(tuple(ts) for ts in image_to_texts)
        n_texts = sum(len(ts) for ts in i2t)
        t2i = [-1] * n_texts
        for img, texts in enumerate(i2t):
            if len(texts) == 0:
                raise InconsistentGroundTruth(f"image {img} has no captions")
            for t in texts:
                if not 0 <= t < n_texts:
                    raise InconsistentGroundTruth(f"text index {t} out of range")
                if t2i[t] != -1:
                    raise InconsistentGroundTruth(f"text {t} assigned to two images")
                t2i[t] = img
        return cls(image_to_texts=i2t, text_to_image=tuple(t2i))

    def __post_init__(self):
        for img, texts in enumerate(self.image_to_texts):
            for t in texts:
                if t >= len(self.text_to_image) or self.text_to_image[t] != img:
                    raise InconsistentGroundTruth(
                        f"maps disagree: image {img} lists text {t}"
                    )
        for t, img in enumerate(self.text_to_image):
            if img >= len(self.image_to_texts) or t not in self.image_to_texts[img]:
                raise InconsistentGroundTruth(f"maps disagree: text {t} maps to image {img}")

    @property
    def n_images(self) -> int:
        return len(self.image_to_texts)

    @property
    def n_texts(self) -> int:
        return len(self.text_to_image)


@dataclass(frozen=True)
class RetrievalReport:
    """Six recalls in percent plus their sum (max 600)."""

    tr_r1: float
    tr_r5: float
    tr_r10: float
    ir_r1: float
    ir_r5: float
    ir_r10: float

    @property
    def rsum(self) -> float:
        return rsum(self.tr_r1, self.tr_r5, self.tr_r10, self.ir_r1, self.ir_r5, self.ir_r10)

    def to_json(self) -> dict:
        return {
            "text_retrieval": {"r1": self.tr_r1, "r5": self.tr_r5, "r10": self.tr_r10},
            "image_retrieval": {"r1": self.ir_r1, "r5": self.ir_r5, "r10": self.ir_r10},
            "rsum": self.rsum,
        }


def _check_dims(scores: ScoreMatrix, gt: GroundTruth) -> None:
    if scores.n_images != gt.n_images or scores.n_texts != gt.n_texts:
        raise InconsistentGroundTruth(
            f"scores are {scores.n_images}x{scores.n_texts} but ground truth has "
            f"{gt.n_images} images and {gt.n_texts} texts"
        )


def _best_ranks(scores: np.ndarray, truths: Sequence[Sequence[int]]) -> np.ndarray:
    """Per query row, the rank (0-based) of its best-placed ground-truth candidate."""
    ranks = np.empty(len(truths), dtype=np.int64)
    for q, truth in enumerate(truths):
        # Stable sort on negated scores = descending score, ties by ascending index.
        order = np.argsort(-scores[q], kind="stable")
        position = np.empty_like(order)
        position[order] = np.arange(order.size)
        ranks[q] = min(position[t] for t in truth)
    return ranks


def _query_truths(gt: GroundTruth, direction: Direction) -> list[tuple[int, ...]]:
    if direction is Direction.IMAGE_TO_TEXT:
        return list(gt.image_to_texts)
    return [(img,) for img in gt.text_to_image]


def _direction_scores(scores: ScoreMatrix, direction: Direction) -> np.ndarray:
    if direction is Direction.IMAGE_TO_TEXT:
        return scores.scores
    return scores.scores.T


def recall_at_k(scores: ScoreMatrix, gt: GroundTruth, k: int, direction: Direction) -> float:
    """Percent of queries whose ground truth appears in the top-k candidates."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    _check_dims(scores, gt)
    ranks = _best_ranks(_direction_scores(scores, direction), _query_truths(gt, direction))
    return 100.0 * float(np.count_nonzero(ranks < k)) / len(ranks)


def rsum(*recalls: float) -> float:
    """Exact sum of the six recall values, in percent-points."""
    if len(recalls) != 6:
        raise ValueError(f"rsum takes six recalls, got {len(recalls)}")
    for r in recalls:
        if not 0.0 <= r <= 100.0:
            raise ValueError(f"recalls are percentages in [0, 100], got {r}")
    return math.fsum(recalls)


def evaluate_retrieval(scores: ScoreMatrix, gt: GroundTruth) -> RetrievalReport:
    """All six recalls computed from one ranking pass per direction."""
    _check_dims(scores, gt)
    out = {}
    for prefix, direction in (("tr", Direction.IMAGE_TO_TEXT), ("ir", Direction.TEXT_TO_IMAGE)):
        ranks = _best_ranks(
            _direction_scores(scores, direction), _query_truths(gt, direction)
        )
        for k in (1, 5, 10):
            out[f"{prefix}_r{k}"] = 100.0 * float(np.count_nonzero(ranks < k)) / len(ranks)
    return RetrievalReport(**out)
