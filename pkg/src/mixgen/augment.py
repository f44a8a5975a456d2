"""The generation rule: pixel interpolation of two images plus text concatenation.

Every operation is pure given an explicit random generator, so concurrent
invocation with independent generators is safe. Random consumption order inside
make_pair is fixed: lambda draw first, then uniform picks, then token subsets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidBetaParams, InvalidLambda, SelfMix, ShapeMismatch
from .types import (
    AugmentedPair,
    BetaLambda,
    FixedLambda,
    ImageTensor,
    ImageTextPair,
    LambdaPolicy,
    MixGenConfig,
    TextSequence,
    Tokenizer,
    Variant,
    normalize_text,
)


@dataclass(frozen=True)
class LambdaDraw:
    """One interpolation coefficient and where it came from."""

    value: float
    source: str  # "fixed" or "beta_sample"

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.value}")


def mix_images(a: ImageTensor, b: ImageTensor, lam: float) -> ImageTensor:
    """Elementwise lam * a + (1 - lam) * b, clamped to [0, 1].

    lam = 1 returns a's values exactly; lam = 0 returns b's.
    """
    if a.shape != b.shape:
        raise ShapeMismatch(f"cannot mix {a.shape} with {b.shape}")
    if not 0.0 <= lam <= 1.0:
        raise InvalidLambda(f"lambda must lie in [0, 1], got {lam}")
    if lam == 1.0:
        return ImageTensor._from_validated(a.data.copy())
    if lam == 0.0:
        return ImageTensor._from_validated(b.data.copy())
    # Computed as lam * (a - b) + b: one output buffer, no temporaries, and no
    # overflow risk since pixels are bounded. Differs from the two-product form
    # by at most a couple of float32 ulps.
    out = np.subtract(a.data, b.data)
    out *= np.float32(lam)
    out += b.data
    # float32 rounding can push exact-boundary sums slightly past the range;
    # after the clip the result provably satisfies the image invariants.
    np.clip(out, np.float32(0.0), np.float32(1.0), out=out)
    return ImageTensor._from_validated(out)


def concat_text(a: TextSequence, b: TextSequence) -> TextSequence:
    """a's text, a single space, then b's text; an empty side is dropped."""
    if not a.raw:
        return b
    if not b.raw:
        return a
    return TextSequence(a.raw + " " + b.raw)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def token_subset(tokens: list[str], keep_fraction: float, rng) -> list[str]:
    """Keep round(keep_fraction * n) tokens chosen uniformly without replacement.

    Relative order is preserved. Non-empty input with keep_fraction > 0 keeps
    at least one token.
    """
    if not 0.0 <= keep_fraction <= 1.0:
        raise InvalidLambda(f"keep_fraction must lie in [0, 1], got {keep_fraction}")
    n = len(tokens)
    if n == 0 or keep_fraction == 0.0:
        return []
    m = min(n, max(1, _round_half_up(keep_fraction * n)))
    keep = np.sort(rng.permutation(n)[:m])
    return [tokens[i] for i in keep]


def sample_lambda(policy: LambdaPolicy, rng) -> LambdaDraw:
    """Draw a coefficient: a fixed policy consumes no randomness."""
    if isinstance(policy, FixedLambda):
        if not 0.0 <= policy.value <= 1.0:
            raise InvalidLambda(f"fixed lambda must lie in [0, 1], got {policy.value}")
        return LambdaDraw(policy.value, "fixed")
    if isinstance(policy, BetaLambda):
        return LambdaDraw(_beta_sample(policy.alpha, policy.beta, rng), "beta_sample")
    raise TypeError(f"unknown lambda policy {policy!r}")


def _beta_sample(alpha: float, beta: float, rng) -> float:
    """One Beta(alpha, beta) draw via Johnk's rejection method on log scale.

    Stays accurate for shape parameters well below 1, where naive U**(1/alpha)
    underflows; acceptance probability is high precisely in that regime.
    """
    if alpha <= 0.0 or beta <= 0.0:
        raise InvalidBetaParams(f"beta shapes must be > 0, got ({alpha}, {beta})")
    inv_a = 1.0 / alpha
    inv_b = 1.0 / beta
    while True:
        # 1 - random() lies in (0, 1], keeping both logs finite.
        log_x = math.log(1.0 - rng.random()) * inv_a
        log_y = math.log(1.0 - rng.random()) * inv_b
        hi, lo = (log_x, log_y) if log_x >= log_y else (log_y, log_x)
        if hi + math.log1p(math.exp(lo - hi)) <= 0.0:  # accept iff x + y <= 1
            # x/(x+y) is the logistic of the log ratio; the split keeps draws
            # near both endpoints accurate down to the float64 grid.
            d = log_x - log_y
            if d >= 0.0:
                return 1.0 / (1.0 + math.exp(-d))
            e = math.exp(d)
            return e / (1.0 + e)


def pick_uniform(a, b, rng):
    """Return a or b with equal probability."""
    return a if rng.integers(0, 2) == 0 else b


def _rejoin(tokens: list[str]) -> TextSequence:
    # Re-normalize so a custom tokenizer cannot break the no-extra-whitespace invariant.
    return normalize_text(" ".join(tokens))


def make_pair(
    pi: ImageTextPair,
    pj: ImageTextPair,
    config: MixGenConfig,
    rng,
    tokenizer: Optional[Tokenizer] = None,
) -> AugmentedPair:
    """Generate one new pair from two sources according to the configured variant.

    Variant rules:
      default  mix images at the drawn lambda; concatenate both texts.
      a        same as default (canonically paired with a Beta lambda policy).
      b        mix images at the drawn lambda; keep one text, picked uniformly.
      c        keep one image, picked uniformly; concatenate both texts.
      d        mix images at lambda; keep lambda of pi's tokens and 1 - lambda
               of pj's, the single draw shared by both arms, then concatenate.
      e        mix images at lambda; concatenate all tokens, keep half of them.

    Token subsets preserve order. If config.max_tokens is set, the final text
    keeps only its leading tokens.
    """
    if pi.id == pj.id:
        raise SelfMix(f"both sources have id {pi.id!r}")
    if not isinstance(pi.image, ImageTensor) or not isinstance(pj.image, ImageTensor):
        raise TypeError("make_pair needs materialized images; load them first")

    variant = config.variant
    if variant is Variant.C:
        draw = LambdaDraw(0.5, "fixed")  # sentinel, no interpolation happens
    else:
        draw = sample_lambda(config.lambda_policy, rng)
    lam = draw.value

    if variant is Variant.C:
        image = pick_uniform(pi.image, pj.image, rng)
    else:
        image = mix_images(pi.image, pj.image, lam)

    if variant in (Variant.DEFAULT, Variant.A, Variant.C):
        text = concat_text(pi.text, pj.text)
    elif variant is Variant.B:
        text = pick_uniform(pi.text, pj.text, rng)
    elif variant is Variant.D:
        kept_i = token_subset(pi.text.tokens(tokenizer), lam, rng)
        kept_j = token_subset(pj.text.tokens(tokenizer), 1.0 - lam, rng)
        text = _rejoin(kept_i + kept_j)
    elif variant is Variant.E:
        merged = pi.text.tokens(tokenizer) + pj.text.tokens(tokenizer)
        text = _rejoin(token_subset(merged, 0.5, rng))
    else:
        raise TypeError(f"unknown variant {variant!r}")

    if config.max_tokens is not None:
        toks = text.tokens(tokenizer)
        if len(toks) > config.max_tokens:
            text = _rejoin(toks[: config.max_tokens])

    new_pair = ImageTextPair(id=f"{pi.id}+{pj.id}", image=image, text=text)
    return AugmentedPair(
        pair=new_pair,
        sources=(pi.id, pj.id),
        lambda_used=lam,
        variant_used=variant,
    )
