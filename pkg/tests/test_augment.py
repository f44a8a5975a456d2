import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixgen.augment import (
    LambdaDraw,
    concat_text,
    make_pair,
    mix_images,
    pick_uniform,
    sample_lambda,
    token_subset,
)
from mixgen.errors import InvalidBetaParams, InvalidLambda, SelfMix, ShapeMismatch
from mixgen.types import (
    BetaLambda,
    FixedLambda,
    ImageTextPair,
    MixGenConfig,
    Variant,
    normalize_text,
)
from helpers import image_of, pair_of, random_image
from oracles import BetaCdfOracle, mix_scalar_loop


class StubRng:
    """Scripted stand-in for a generator: values are consumed in call order."""

    def __init__(self, ints=(), perms=(), randoms=()):
        self._ints = list(ints)
        self._perms = list(perms)
        self._randoms = list(randoms)

    def integers(self, lo, hi):
        assert (lo, hi) == (0, 2)
        return self._ints.pop(0)

    def permutation(self, n):
        perm = self._perms.pop(0)
        assert sorted(perm) == list(range(n))
        return np.asarray(perm)

    def random(self):
        return self._randoms.pop(0)


class TestMixImages:
    def test_lambda_one_is_bitwise_identity(self, rng):
        a, b = random_image(rng, 5, 7), random_image(rng, 5, 7)
        out = mix_images(a, b, 1.0)
        assert np.array_equal(out.data, a.data)

    def test_lambda_zero_is_bitwise_identity(self, rng):
        a, b = random_image(rng, 5, 7), random_image(rng, 5, 7)
        out = mix_images(a, b, 0.0)
        assert np.array_equal(out.data, b.data)

    def test_midpoint_of_constants(self):
        out = mix_images(image_of(0.0), image_of(1.0), 0.5)
        assert np.all(out.data == 0.5)

    def test_direct_evaluation(self):
        out = mix_images(image_of(0.2), image_of(0.6), 0.5)
        np.testing.assert_allclose(out.data, 0.4, atol=1e-7)

    def test_matches_scalar_loop_oracle(self, rng):
        for _ in range(25):
            h, w = int(rng.integers(1, 16)), int(rng.integers(1, 16))
            a, b = random_image(rng, h, w), random_image(rng, h, w)
            lam = float(rng.random())
            out = mix_images(a, b, lam)
            expected = mix_scalar_loop(a.data.ravel(), b.data.ravel(), lam)
            np.testing.assert_allclose(out.data.ravel(), expected, atol=1e-6)

    def test_linearity(self, rng):
        a, b = random_image(rng, 8, 8), random_image(rng, 8, 8)
        lam = 0.37
        lhs = mix_images(a, b, lam).data + mix_images(b, a, lam).data
        np.testing.assert_allclose(lhs, a.data + b.data, atol=1e-6)

    def test_output_bounded_by_inputs(self, rng):
        a, b = random_image(rng, 8, 8), random_image(rng, 8, 8)
        out = mix_images(a, b, 0.31).data
        lo = np.minimum(a.data, b.data) - 1e-6
        hi = np.maximum(a.data, b.data) + 1e-6
        assert np.all(out >= lo) and np.all(out <= hi)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            mix_images(image_of(0.1, h=2, w=2), image_of(0.1, h=3, w=2), 0.5)

    def test_invalid_lambda(self):
        with pytest.raises(InvalidLambda):
            mix_images(image_of(0.1), image_of(0.2), 1.5)


class TestConcatText:
    def test_joins_with_single_space(self):
        out = concat_text(normalize_text("a dog"), normalize_text("a cat"))
        assert out.raw == "a dog a cat"

    def test_empty_side_returns_other(self):
        cat = normalize_text("a cat")
        assert concat_text(normalize_text(""), cat).raw == "a cat"
        assert concat_text(cat, normalize_text("")).raw == "a cat"

    def test_order_sensitive(self):
        a, b = normalize_text("a cat"), normalize_text("a dog")
        assert concat_text(a, b).raw == "a cat a dog"
        assert concat_text(a, b).raw != concat_text(b, a).raw

    @given(st.text(), st.text())
    def test_token_count_law(self, sa, sb):
        a, b = normalize_text(sa), normalize_text(sb)
        out = concat_text(a, b)
        assert len(out.tokens()) == len(a.tokens()) + len(b.tokens())


class TestTokenSubset:
    def test_counts_half_of_ten(self, rng):
        tokens = [f"t{i}" for i in range(10)]
        out = token_subset(tokens, 0.5, rng)
        assert len(out) == 5
        assert _is_subsequence(out, tokens)

    def test_identity_at_one(self, rng):
        tokens = ["a", "b", "c", "d"]
        assert token_subset(tokens, 1.0, rng) == tokens

    def test_min_one_floor_exhaustive(self):
        # All 6 permutations of 3 indices: every outcome is a single kept token,
        # and all three tokens are reachable.
        import itertools

        tokens = ["x", "y", "z"]
        outcomes = set()
        for perm in itertools.permutations(range(3)):
            out = token_subset(tokens, 0.05, StubRng(perms=[list(perm)]))
            assert len(out) == 1
            outcomes.add(out[0])
        assert outcomes == {"x", "y", "z"}

    def test_zero_fraction_and_empty_input(self, rng):
        assert token_subset(["a", "b"], 0.0, rng) == []
        assert token_subset([], 0.7, rng) == []

    def test_round_half_up(self, rng):
        # 5 tokens at 0.5 -> 2.5 rounds up to 3.
        assert len(token_subset(list("abcde"), 0.5, rng)) == 3

    @given(
        st.lists(st.sampled_from(["w1", "w2", "w3", "w4"]), max_size=30),
        st.floats(min_value=0.0, max_value=1.0),
        st.integers(min_value=0, max_value=2**31),
    )
    @settings(max_examples=200)
    def test_subsequence_and_count_law(self, tokens, frac, seed):
        out = token_subset(tokens, frac, np.random.default_rng(seed))
        assert _is_subsequence(out, tokens)
        if tokens and frac > 0.0:
            assert len(out) == min(len(tokens), max(1, math.floor(frac * len(tokens) + 0.5)))
        else:
            assert out == []


def _is_subsequence(sub, seq):
    it = iter(seq)
    return all(any(tok == cand for cand in it) for tok in sub)


class TestSampleLambda:
    def test_fixed_never_touches_rng(self):
        draw = sample_lambda(FixedLambda(0.5), rng=None)
        assert draw == LambdaDraw(0.5, "fixed")

    def test_beta_draws_stay_in_unit_interval(self, rng):
        values = [sample_lambda(BetaLambda(0.1, 0.1), rng).value for _ in range(2000)]
        assert all(0.0 <= v <= 1.0 for v in values)
        assert all(
            sample_lambda(BetaLambda(0.1, 0.1), rng).source == "beta_sample" for _ in range(3)
        )

    def test_beta_moments(self):
        rng = np.random.default_rng(99)
        n = 100_000
        draws = np.array([sample_lambda(BetaLambda(0.1, 0.1), rng).value for _ in range(n)])
        assert abs(draws.mean() - 0.5) < 0.01
        assert abs(draws.var() - 0.2083333) < 0.01

    def test_beta_asymmetric_mean(self):
        # Beta(2, 6) mean is 2/8 = 0.25; checks the sampler beyond symmetric shapes.
        rng = np.random.default_rng(7)
        draws = np.array([sample_lambda(BetaLambda(2.0, 6.0), rng).value for _ in range(20_000)])
        assert abs(draws.mean() - 0.25) < 0.01

    def test_beta_ks_against_integrated_cdf(self):
        # Beta(0.1, 0.1) piles ~1.2% of its mass within one float64 ulp of 1.0,
        # so every float sampler (numpy's included) has an atom at exactly 1.0.
        # The KS test therefore runs conditionally on the representable range,
        # and the excluded endpoint mass is checked against the oracle directly.
        from scipy.stats import kstest

        rng = np.random.default_rng(4242)
        draws = np.array([sample_lambda(BetaLambda(0.1, 0.1), rng).value for _ in range(100_000)])
        oracle = BetaCdfOracle(0.1, 0.1)

        cut = 1.0 - 1e-12
        body = draws[draws <= cut]
        scale = float(oracle(np.array([cut]))[0])
        result = kstest(body, lambda x: oracle(x) / scale)
        assert result.pvalue > 0.01

        tail_mass = 1.0 - scale
        assert abs((draws > cut).mean() - tail_mass) < 0.002
        # Mass of the float bin that collapses onto 1.0 exactly.
        one_bin = oracle.upper_tail_mass(2.0**-54)
        assert 0.0 < one_bin < 0.02
        assert abs((draws == 1.0).mean() - one_bin) < 0.002

    def test_cdf_oracle_self_check(self):
        # Two independent routes to the same CDF must agree closely.
        from scipy.special import betainc

        oracle = BetaCdfOracle(0.1, 0.1)
        xs = np.linspace(1e-6, 1 - 1e-6, 513)
        np.testing.assert_allclose(oracle(xs), betainc(0.1, 0.1, xs), atol=1e-8)

    def test_invalid_beta_params(self):
        with pytest.raises(InvalidBetaParams):
            sample_lambda(BetaLambda(0.0, 0.1), np.random.default_rng(0))


class TestPickUniform:
    def test_stubbed_choices(self):
        assert pick_uniform("a", "b", StubRng(ints=[0])) == "a"
        assert pick_uniform("a", "b", StubRng(ints=[1])) == "b"

    def test_fair_coin(self, rng):
        n = 100_000
        first = sum(pick_uniform(1, 0, rng) for _ in range(n))
        assert abs(first / n - 0.5) < 0.01


def _cfg(variant, lp=None, **kw):
    return MixGenConfig(lambda_policy=lp or FixedLambda(0.5), variant=variant, **kw)


class TestMakePair:
    def test_default_composition(self):
        pi = pair_of("i", 0.0, "a dog")
        pj = pair_of("j", 1.0, "a cat")
        out = make_pair(pi, pj, _cfg(Variant.DEFAULT), rng=None)
        assert np.all(out.pair.image.data == 0.5)
        assert out.pair.text.raw == "a dog a cat"
        assert out.sources == ("i", "j")
        assert out.lambda_used == 0.5
        assert out.variant_used is Variant.DEFAULT

    def test_default_is_deterministic_without_rng(self):
        pi, pj = pair_of("i", 0.25, "x y"), pair_of("j", 0.75, "z")
        first = make_pair(pi, pj, _cfg(Variant.DEFAULT), rng=None)
        second = make_pair(pi, pj, _cfg(Variant.DEFAULT), rng=None)
        assert np.array_equal(first.pair.image.data, second.pair.image.data)
        assert first.pair.text == second.pair.text

    def test_variant_a_uses_beta_draw(self):
        pi, pj = pair_of("i", 0.0, "a dog"), pair_of("j", 1.0, "a cat")
        rng = np.random.default_rng(3)
        out = make_pair(pi, pj, _cfg(Variant.A, lp=BetaLambda(0.1, 0.1)), rng)
        lam = out.lambda_used
        assert 0.0 <= lam <= 1.0
        np.testing.assert_allclose(out.pair.image.data, (1.0 - lam), atol=1e-6)
        assert out.pair.text.raw == "a dog a cat"

    def test_variant_b_picks_one_text(self):
        pi, pj = pair_of("i", 0.0, "a dog"), pair_of("j", 1.0, "a cat")
        out = make_pair(pi, pj, _cfg(Variant.B), StubRng(ints=[0]))
        assert np.all(out.pair.image.data == 0.5)
        assert out.pair.text.raw == "a dog"
        out = make_pair(pi, pj, _cfg(Variant.B), StubRng(ints=[1]))
        assert out.pair.text.raw == "a cat"

    def test_variant_c_picks_one_image_and_concats(self):
        pi, pj = pair_of("i", 0.25, "a dog"), pair_of("j", 0.75, "a cat")
        out = make_pair(pi, pj, _cfg(Variant.C), StubRng(ints=[0]))
        assert np.array_equal(out.pair.image.data, pi.image.data)
        assert out.pair.text.raw == "a dog a cat"
        assert out.lambda_used == 0.5  # sentinel, no interpolation happened
        out = make_pair(pi, pj, _cfg(Variant.C), StubRng(ints=[1]))
        assert np.array_equal(out.pair.image.data, pj.image.data)

    def test_variant_d_shares_lambda_between_arms(self):
        pi = pair_of("i", 0.0, "t1 t2 t3 t4 t5 t6 t7 t8 t9 t10")
        pj = pair_of("j", 1.0, "u1 u2 u3 u4 u5 u6 u7 u8 u9 u10")
        lam = 0.3
        out = make_pair(
            pi, pj, _cfg(Variant.D, lp=FixedLambda(lam)),
            StubRng(perms=[list(range(10)), list(range(10))]),
        )
        np.testing.assert_allclose(out.pair.image.data, 1.0 - lam, atol=1e-6)
        toks = out.pair.text.tokens()
        # round(0.3*10) = 3 from pi, round(0.7*10) = 7 from pj.
        assert toks[:3] == ["t1", "t2", "t3"]
        assert len(toks) == 10
        assert all(t.startswith("u") for t in toks[3:])

    def test_variant_d_min_one_floor(self):
        pi = pair_of("i", 0.0, "only")
        pj = pair_of("j", 1.0, "a b c")
        out = make_pair(
            pi, pj, _cfg(Variant.D, lp=FixedLambda(0.01)),
            StubRng(perms=[[0], [0, 1, 2]]),
        )
        toks = out.pair.text.tokens()
        assert toks[0] == "only"  # floor keeps one token from the near-zero side
        assert len(toks) == 1 + 3

    def test_variant_e_keeps_half_of_concatenation(self):
        pi = pair_of("i", 0.0, "a b c d")
        pj = pair_of("j", 1.0, "e f g h")
        out = make_pair(
            pi, pj, _cfg(Variant.E),
            StubRng(perms=[[0, 2, 4, 6, 1, 3, 5, 7]]),
        )
        assert out.pair.text.tokens() == ["a", "c", "e", "g"]

    def test_variant_e_subsequence_over_seeds(self):
        pi = pair_of("i", 0.0, "a b c d e")
        pj = pair_of("j", 1.0, "f g h")
        merged = pi.text.tokens() + pj.text.tokens()
        for seed in range(30):
            out = make_pair(
                pi, pj, _cfg(Variant.E, lp=BetaLambda(0.1, 0.1)), np.random.default_rng(seed)
            )
            toks = out.pair.text.tokens()
            assert len(toks) == 4  # round(0.5 * 8)
            assert _is_subsequence(toks, merged)

    def test_max_tokens_truncates_after_concat(self):
        pi, pj = pair_of("i", 0.0, "a b c"), pair_of("j", 1.0, "d e f")
        out = make_pair(pi, pj, _cfg(Variant.DEFAULT, max_tokens=4), rng=None)
        assert out.pair.text.raw == "a b c d"

    def test_self_mix_rejected(self):
        p = pair_of("same", 0.5, "x")
        q = ImageTextPair(id="same", image=image_of(0.1), text=normalize_text("y"))
        with pytest.raises(SelfMix):
            make_pair(p, q, _cfg(Variant.DEFAULT), rng=None)

    def test_shape_mismatch_propagates(self):
        p = pair_of("a", 0.5, "x", h=2, w=2)
        q = pair_of("b", 0.5, "y", h=3, w=3)
        with pytest.raises(ShapeMismatch):
            make_pair(p, q, _cfg(Variant.DEFAULT), rng=None)

    def test_generated_id_and_sources_order(self, rng):
        pi, pj = pair_of("first", 0.2, "x"), pair_of("second", 0.8, "y")
        for variant in Variant:
            out = make_pair(pi, pj, _cfg(variant), np.random.default_rng(5))
            assert out.sources == ("first", "second")
            assert out.pair.id == "first+second"
