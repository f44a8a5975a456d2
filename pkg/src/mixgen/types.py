"""Shared data model: images, text, pairs, batches, and the augmentation config.

All types are immutable after construction and safe to share across workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

from .errors import InvalidBetaParams, InvalidLambda, InvalidMRatio

Tokenizer = Callable[[str], list[str]]


def whitespace_tokenize(raw: str) -> list[str]:
    """Default tokenizer: split on runs of whitespace."""
    return raw.split()


def normalize_text(raw: str) -> "TextSequence":
    """Collapse whitespace runs to single spaces and trim the ends.

    Idempotent; an empty or all-whitespace input yields an empty sequence.
    """
    return TextSequence(" ".join(raw.split()))


@dataclass(frozen=True)
class TextSequence:
    """A normalized caption. ``raw`` never has leading/trailing whitespace."""

    raw: str

    def tokens(self, tokenizer: Optional[Tokenizer] = None) -> list[str]:
        return (tokenizer or whitespace_tokenize)(self.raw)

    def __bool__(self) -> bool:
        return bool(self.raw)


@dataclass(frozen=True)
class ImageTensor:
    """A decoded image: float32 array of shape (height, width, 3), values in [0, 1].

    The array is C-contiguous, so ``data`` viewed flat is the row-major
    height x width x channels layout.
    """

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 3:
            raise ValueError(f"image data must be a 3-d array, got {getattr(d, 'shape', type(d))}")
        h, w, c = d.shape
        if c != 3:
            raise ValueError(f"images are fixed at 3 channels, got {c}")
        if h < 1 or w < 1:
            raise ValueError(f"image dims must be positive, got {h}x{w}")
        if d.dtype != np.float32:
            raise ValueError(f"image data must be float32, got {d.dtype}")
        if not d.flags["C_CONTIGUOUS"]:
            object.__setattr__(self, "data", np.ascontiguousarray(d))
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"image values must lie in [0, 1], got [{lo}, {hi}]")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageTensor":
        """Construct from any array-like, casting to a fresh float32 copy."""
        return cls(np.ascontiguousarray(arr, dtype=np.float32))

    @classmethod
    def _from_validated(cls, data: np.ndarray) -> "ImageTensor":
        # Internal fast path: caller guarantees contiguous float32 HWC in [0, 1],
        # skipping the construction scans on the hot mixing path.
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", data)
        return obj

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class ImageRef:
    """Lazy image reference (filesystem path or URL), resolved by dataio."""

    source: str


@dataclass(frozen=True)
class ImageTextPair:
    """The (image, text) unit. ``image`` may be lazy until the pipeline loads it."""

    id: str
    image: Union[ImageTensor, ImageRef]
    text: TextSequence

    def __post_init__(self):
        if not self.id:
            raise ValueError("pair id must be non-empty")


@dataclass(frozen=True)
class AugmentedPair:
    """A generated pair plus its provenance."""

    pair: ImageTextPair
    sources: tuple[str, str]
    lambda_used: float
    variant_used: "Variant"

    def __post_init__(self):
        if len(self.sources) != 2 or self.sources[0] == self.sources[1]:
            raise ValueError(f"sources must be two distinct ids, got {self.sources}")
        if not 0.0 <= self.lambda_used <= 1.0:
            raise ValueError(f"lambda_used must lie in [0, 1], got {self.lambda_used}")


@dataclass(frozen=True)
class Batch:
    """An ordered batch of pairs."""

    pairs: tuple[ImageTextPair, ...]

    def __post_init__(self):
        if len(self.pairs) < 1:
            raise ValueError("batch must contain at least one pair")

    @property
    def size(self) -> int:
        return len(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)


# --- Configuration -----------------------------------------------------------

class Variant(str, Enum):
    """Which generation rule to apply; see augment.make_pair."""

    DEFAULT = "default"
    A = "a"
    B = "b"
    C = "c"
    D = "d"
    E = "e"


@dataclass(frozen=True)
class FixedLambda:
    """Always use the same interpolation coefficient."""

    value: float = 0.5


@dataclass(frozen=True)
class BetaLambda:
    """Draw the coefficient from Beta(alpha, beta) per generated pair."""

    alpha: float = 0.1
    beta: float = 0.1


LambdaPolicy = Union[FixedLambda, BetaLambda]


@dataclass(frozen=True)
class FractionM:
    """Replace floor(fraction * B) leading samples per batch."""

    fraction: float = 0.25


@dataclass(frozen=True)
class AbsoluteM:
    """Replace a fixed number of leading samples per batch."""

    m: int = 0


MPolicy = Union[FractionM, AbsoluteM]


def canonical_lambda_policy(variant: Variant) -> LambdaPolicy:
    """The lambda policy each variant uses when none is set explicitly.

    Variants a, d, e draw from Beta(0.1, 0.1); the rest use a fixed 0.5
    (for variant c the value is a sentinel, no interpolation happens).
    """
    if variant in (Variant.A, Variant.D, Variant.E):
        return BetaLambda(0.1, 0.1)
    return FixedLambda(0.5)


@dataclass(frozen=True)
class MixGenConfig:
    """All knobs of the generation rule and the batch pipeline.

    ``seed`` drives every random decision; runs with equal configs are
    byte-identical regardless of worker count.
    """

    lambda_policy: LambdaPolicy = field(default_factory=FixedLambda)
    m_policy: MPolicy = field(default_factory=FractionM)
    variant: Variant = Variant.DEFAULT
    seed: int = 0
    target_height: int = 256
    target_width: int = 256
    max_tokens: Optional[int] = None


def validate_config(config: MixGenConfig) -> MixGenConfig:
    """Check every config invariant; returns the config unchanged on success."""
    lp = config.lambda_policy
    if isinstance(lp, FixedLambda):
        if not 0.0 <= lp.value <= 1.0:
            raise InvalidLambda(f"fixed lambda must lie in [0, 1], got {lp.value}")
    elif isinstance(lp, BetaLambda):
        if lp.alpha <= 0.0 or lp.beta <= 0.0:
            raise InvalidBetaParams(f"beta shapes must be > 0, got ({lp.alpha}, {lp.beta})")
    else:
        raise TypeError(f"unknown lambda policy {lp!r}")

    mp = config.m_policy
    if isinstance(mp, FractionM):
        if not 0.0 <= mp.fraction <= 0.5:
            raise InvalidMRatio(f"fraction must lie in [0, 0.5], got {mp.fraction}")
    elif isinstance(mp, AbsoluteM):
        if mp.m < 0:
            raise InvalidMRatio(f"absolute M must be >= 0, got {mp.m}")
    else:
        raise TypeError(f"unknown M policy {mp!r}")

    if not isinstance(config.variant, Variant):
        raise TypeError(f"unknown variant {config.variant!r}")
    if config.target_height < 1 or config.target_width < 1:
        raise ValueError("resize target dims must be positive")
    if config.max_tokens is not None and config.max_tokens < 1:
        raise ValueError("max_tokens must be positive when set")
    return config
