import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from pmwpub.errors import DataError
from pmwpub.mechanisms import (
    SelectionScores,
    exponential_probabilities,
    exponential_select,
    gaussian_measure,
    gaussian_sigma,
    laplace_release,
    permute_and_flip_select,
)

from .oracles import em_exact_pmf, pf_exact_pmf, tv_distance

DRAWS = 100_000


def sel(scores, sensitivity=1.0, epsilon0=1.0):
    return SelectionScores(np.asarray(scores, dtype=float), sensitivity, epsilon0)


def empirical_pmf(selector, selection, seed, draws=DRAWS):
    rng = np.random.default_rng(seed)
    counts = np.zeros(len(selection.scores))
    for _ in range(draws):
        counts[selector(selection, rng)] += 1
    return counts


class TestSelectionScores:
    def test_validation(self):
        with pytest.raises(DataError):
            sel([])
        with pytest.raises(DataError):
            sel([np.inf, 0.0])
        with pytest.raises(DataError):
            sel([0.0], sensitivity=0.0)
        with pytest.raises(DataError):
            sel([0.0], epsilon0=-1.0)


class TestExponentialSelect:
    def test_equal_scores_uniform(self):
        counts = empirical_pmf(exponential_select, sel([0.7, 0.7, 0.7], epsilon0=2.0), seed=1)
        assert stats.chisquare(counts).pvalue > 1e-3
        assert tv_distance(counts, np.full(3, 1 / 3)) < 0.01

    def test_two_candidate_closed_form(self):
        # scores (1, 0), sensitivity 1, epsilon0 2: P(best) = e / (e + 1)
        probs = exponential_probabilities(sel([1.0, 0.0], epsilon0=2.0))
        np.testing.assert_allclose(probs, [math.e / (math.e + 1), 1 / (math.e + 1)], atol=1e-12)
        counts = empirical_pmf(exponential_select, sel([1.0, 0.0], epsilon0=2.0), seed=2)
        assert tv_distance(counts, probs) < 0.01

    def test_vanishing_budget_is_uniform(self):
        probs = exponential_probabilities(sel([5.0, 1.0, 0.0], epsilon0=1e-12))
        np.testing.assert_allclose(probs, np.full(3, 1 / 3), atol=1e-9)

    def test_matches_exact_pmf(self):
        scores = [0.9, 0.5, 0.2, 0.0]
        counts = empirical_pmf(exponential_select, sel(scores, epsilon0=3.0), seed=3)
        assert tv_distance(counts, em_exact_pmf(scores, 3.0, 1.0)) < 0.01


class TestPermuteAndFlipSelect:
    def test_equal_scores_uniform(self):
        counts = empirical_pmf(permute_and_flip_select, sel([0.2, 0.2, 0.2]), seed=4)
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_two_candidate_exact_enumeration(self):
        # only the (worse, best) order can pick the worse candidate, with a
        # flip probability of e^-1: P(worse) = e^-1 / 2
        pmf = pf_exact_pmf([1.0, 0.0], 2.0, 1.0)
        np.testing.assert_allclose(pmf, [1 - math.exp(-1) / 2, math.exp(-1) / 2], atol=1e-12)
        counts = empirical_pmf(permute_and_flip_select, sel([1.0, 0.0], epsilon0=2.0), seed=5)
        assert tv_distance(counts, pmf) < 0.01

    def test_three_candidates_match_enumeration(self):
        scores = [1.0, 0.5, 0.0]
        counts = empirical_pmf(permute_and_flip_select, sel(scores, epsilon0=2.0), seed=6)
        assert tv_distance(counts, pf_exact_pmf(scores, 2.0, 1.0)) < 0.01

    def test_never_worse_than_exponential(self):
        # expected selected score under PF >= under EM, both by exact
        # enumeration, across random instances
        rng = np.random.default_rng(99)
        for _ in range(200):
            k = int(rng.integers(1, 6))
            scores = rng.random(k)
            epsilon0 = float(0.05 + 3.0 * rng.random())
            pf = pf_exact_pmf(scores, epsilon0, 1.0)
            em = em_exact_pmf(scores, epsilon0, 1.0)
            assert abs(pf.sum() - 1.0) < 1e-9
            assert pf @ scores >= em @ scores - 1e-12

    @given(st.lists(st.integers(0, 20), min_size=1, max_size=5), st.integers(-50, 50))
    def test_shift_invariance_exact(self, int_scores, shift):
        # integer scores shifted by an integer keep score gaps bit-exact, so
        # both selectors' distributions must match bitwise
        base = np.array(int_scores, dtype=float)
        shifted = base + shift
        np.testing.assert_array_equal(
            exponential_probabilities(sel(base)), exponential_probabilities(sel(shifted))
        )
        np.testing.assert_array_equal(pf_exact_pmf(base, 1.0, 1.0), pf_exact_pmf(shifted, 1.0, 1.0))

    def test_all_mechanisms_deterministic_under_seed(self):
        s = sel([0.5, 0.1, 0.9], epsilon0=2.0)
        for mechanism in (
            lambda rng: permute_and_flip_select(s, rng),
            lambda rng: exponential_select(s, rng),
            lambda rng: gaussian_measure(0.4, 50, 0.2, rng),
            lambda rng: laplace_release(0.4, 0.02, 0.5, rng),
        ):
            a = [mechanism(np.random.default_rng(7)) for _ in range(10)]
            b = [mechanism(np.random.default_rng(7)) for _ in range(10)]
            assert a == b


class _FixedNormal:
    """rng stub returning a fixed normal draw; duck-types np.random.Generator."""

    def __init__(self, offset):
        self.offset = offset

    def normal(self, loc, scale):
        return loc + self.offset


class TestGaussianMeasure:
    def test_clips_above_one(self):
        assert gaussian_measure(0.999, 100, 0.1, _FixedNormal(+0.1)) == 1.0

    def test_clips_below_zero(self):
        assert gaussian_measure(0.001, 100, 0.1, _FixedNormal(-0.1)) == 0.0

    def test_unbiased_away_from_boundary(self):
        rng = np.random.default_rng(8)
        sigma = gaussian_sigma(100, 0.1)
        draws = np.array([gaussian_measure(0.5, 100, 0.1, rng) for _ in range(100_000)])
        assert abs(draws.mean() - 0.5) < 3 * sigma / math.sqrt(100_000)

    def test_noise_scale(self):
        # n=100, epsilon0=0.1: sigma = 1 / (n epsilon0) = 0.1
        assert gaussian_sigma(100, 0.1) == pytest.approx(0.1)
        rng = np.random.default_rng(9)
        draws = 0.5 + rng.normal(0.0, gaussian_sigma(100, 0.1), size=1_000_000)
        assert np.std(draws) == pytest.approx(0.1, rel=0.01)

    def test_output_always_in_unit_interval(self):
        rng = np.random.default_rng(10)
        draws = np.array([gaussian_measure(0.5, 1, 0.01, rng) for _ in range(10_000)])
        assert draws.min() >= 0.0 and draws.max() <= 1.0

    def test_preconditions(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DataError):
            gaussian_measure(0.5, 0, 0.1, rng)
        with pytest.raises(DataError):
            gaussian_measure(0.5, 10, 0.0, rng)


class TestLaplaceRelease:
    def test_noise_std_for_tiny_probe(self):
        # sensitivity 1/n with n = 10^5 and epsilon = 0.01: std = sqrt(2)/(n eps)
        scale = (1 / 1e5) / 0.01
        assert math.sqrt(2) * scale == pytest.approx(1.414e-3, rel=1e-3)
        rng = np.random.default_rng(11)
        draws = np.array([laplace_release(0.0, 1 / 1e5, 0.01, rng) for _ in range(200_000)])
        assert np.std(draws) == pytest.approx(math.sqrt(2) * scale, rel=0.02)

    def test_huge_epsilon_returns_value(self):
        assert laplace_release(0.123, 1.0, 1e12, np.random.default_rng(0)) == pytest.approx(
            0.123, abs=1e-9
        )

    def test_sample_std_matches_scale(self):
        rng = np.random.default_rng(12)
        b = 0.7
        draws = rng.laplace(0.0, b, size=1_000_000)
        assert np.std(draws) == pytest.approx(math.sqrt(2) * b, rel=0.01)

    def test_preconditions(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DataError):
            laplace_release(0.0, 0.0, 1.0, rng)
        with pytest.raises(DataError):
            laplace_release(0.0, 1.0, 0.0, rng)
