"""Batch augmentation over caller-owned buffers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from mixgen.pipeline import batch_rng, mix_batch, resolve_m
from mixgen.types import (
    AbsoluteM,
    Batch,
    BetaLambda,
    FixedLambda,
    FractionM,
    ImageTensor,
    ImageTextPair,
    MixGenConfig,
    Variant,
    canonical_lambda_policy,
    normalize_text,
    validate_config,
)


def make_config(
    *,
    m_ratio: float = 0.25,
    m: Optional[int] = None,
    lambda_: Optional[float] = None,
    beta: Optional[tuple[float, float]] = None,
    variant: Union[str, Variant] = "default",
    seed: int = 0,
    resize: Union[str, tuple[int, int]] = (256, 256),
    max_tokens: Optional[int] = None,
) -> MixGenConfig:
    """Build a validated config; keywords mirror the CLI flag names.

    Exactly like the CLI, when neither ``lambda_`` nor ``beta`` is given the
    variant's canonical policy applies (variants a/d/e draw from Beta(0.1, 0.1),
    the rest use a fixed 0.5).
    """
    if lambda_ is not None and beta is not None:
        raise ValueError("lambda_ and beta are mutually exclusive")
    variant = Variant(variant)
    if beta is not None:
        lambda_policy = BetaLambda(*beta)
    elif lambda_ is not None:
        lambda_policy = FixedLambda(lambda_)
    else:
        lambda_policy = canonical_lambda_policy(variant)
    if isinstance(resize, str):
        h, w = (int(part) for part in resize.lower().split("x"))
    else:
        h, w = resize
    return validate_config(MixGenConfig(
        lambda_policy=lambda_policy,
        m_policy=AbsoluteM(m) if m is not None else FractionM(m_ratio),
        variant=variant,
        seed=seed,
        target_height=h,
        target_width=w,
        max_tokens=max_tokens,
    ))


@dataclass
class BatchView:
    """A view over one trainer minibatch; the image buffer stays caller-owned.

    The buffer must not be mutated while a call borrows the view, and the view
    must not outlive the buffer.
    """

    images: np.ndarray  # (B, H, W, 3) float32, contiguous, values in [0, 1]
    texts: Sequence[str]
    config: MixGenConfig

    def __post_init__(self):
        imgs = self.images
        if not isinstance(imgs, np.ndarray) or imgs.ndim != 4 or imgs.shape[3] != 3:
            raise ValueError(
                f"images must be a (B, H, W, 3) array, got {getattr(imgs, 'shape', type(imgs))}"
            )
        if imgs.dtype != np.float32:
            raise ValueError(f"images must be float32, got {imgs.dtype}")
        if not imgs.flags["C_CONTIGUOUS"]:
            raise ValueError("images buffer must be C-contiguous to be shared without copies")
        if len(self.texts) != imgs.shape[0]:
            raise ValueError(f"{len(self.texts)} texts for batch of {imgs.shape[0]} images")
        validate_config(self.config)

    @property
    def batch_size(self) -> int:
        return self.images.shape[0]


def augment_batch(
    view: BatchView,
    batch_index: int,
    out: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, list[str]]:
    """Replace the first M entries of the batch with generated pairs.

    Numerically identical to the batch pipeline for the same config seed and
    ``batch_index``. Images land in ``out`` when provided (pass ``view.images``
    itself for in-place update); otherwise a fresh buffer is allocated. Texts
    are returned as new normalized strings.
    """
    m = resolve_m(view.config.m_policy, view.batch_size)
    if out is None:
        out = np.empty_like(view.images)
    elif out.shape != view.images.shape or out.dtype != np.float32:
        raise ValueError(
            f"out buffer must be float32 of shape {view.images.shape}, "
            f"got {out.dtype} {out.shape}"
        )

    pairs = tuple(
        ImageTextPair(
            id=f"batch{batch_index}:{i}",
            image=ImageTensor(view.images[i]),
            text=normalize_text(text),
        )
        for i, text in enumerate(view.texts)
    )
    mixed, _ = mix_batch(Batch(pairs), view.config, batch_rng(view.config, batch_index))

    in_place = out is view.images
    for i in range(m):
        np.copyto(out[i], mixed.pairs[i].image.data)
    if not in_place:
        np.copyto(out[m:], view.images[m:])
    texts = [p.text.raw for p in mixed.pairs]
    return out, texts
