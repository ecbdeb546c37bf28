import numpy as np
import pytest

from sewda.augment import AugmentPolicy, build_lt_a, strong, weak
from sewda.data import LabeledSplit
from sewda.numerics import SeededRng


def identity_policy():
    return AugmentPolicy(sigma_weak=0.0, sigma_strong=0.0, p_drop=0.0, scale_lo=1.0, scale_hi=1.0)


class TestPolicy:
    def test_full_dropout_rejected(self):
        with pytest.raises(ValueError):
            AugmentPolicy(p_drop=1.0)

    def test_weak_stronger_than_strong_rejected(self):
        with pytest.raises(ValueError):
            AugmentPolicy(sigma_weak=0.5, sigma_strong=0.1)

    def test_scale_range_must_straddle_one(self):
        with pytest.raises(ValueError):
            AugmentPolicy(scale_lo=1.1, scale_hi=1.3)


class TestWeak:
    def test_zero_sigma_is_identity(self):
        x = np.array([0.3, -1.2, 5.0])
        out = weak(x, identity_policy(), SeededRng(0))
        np.testing.assert_array_equal(out, x)

    def test_deterministic_given_stream(self):
        x = np.linspace(-1, 1, 8)
        policy = AugmentPolicy()
        a = weak(x, policy, SeededRng(3).child("aug"))
        b = weak(x, policy, SeededRng(3).child("aug"))
        np.testing.assert_array_equal(a, b)

    def test_perturbation_magnitude_matches_chi_square_mean(self):
        # E ||out - in||^2 = d * sigma^2 for isotropic jitter
        d, sigma, n = 8, 0.1, 10_000
        policy = AugmentPolicy(sigma_weak=sigma, sigma_strong=0.25)
        rng = SeededRng(42).child("mc")
        x = np.zeros((n, d))
        sq = np.sum((weak(x, policy, rng) - x) ** 2, axis=1)
        assert np.mean(sq) == pytest.approx(d * sigma**2, rel=0.10)


class TestStrong:
    def test_neutral_policy_is_identity(self):
        x = np.array([1.0, -2.0, 0.0, 3.5])
        out = strong(x, identity_policy(), SeededRng(1))
        np.testing.assert_array_equal(out, x)

    def test_dropout_rate_matches_binomial_mean(self):
        d, n = 8, 10_000
        policy = AugmentPolicy(sigma_weak=0.0, sigma_strong=0.0, p_drop=0.25, scale_lo=1.0, scale_hi=1.0)
        rng = SeededRng(9).child("mc")
        x = np.ones((n, d))
        zeroed = np.sum(strong(x, policy, rng) == 0.0, axis=1)
        assert np.mean(zeroed) == pytest.approx(d * 0.25, rel=0.10)

    def test_deterministic_given_stream(self):
        x = np.linspace(-2, 2, 6)
        policy = AugmentPolicy()
        a = strong(x, policy, SeededRng(4).child("aug"))
        b = strong(x, policy, SeededRng(4).child("aug"))
        np.testing.assert_array_equal(a, b)


class TestBuildLtA:
    def lt(self, n=6, d=4, k=3):
        rng = SeededRng(5)
        return LabeledSplit(rng.normal(size=(n, d)), np.arange(n) % k, np.arange(n))

    def test_no_copies_equals_original(self):
        lt = self.lt()
        out = build_lt_a(lt, AugmentPolicy(), 0, 0, SeededRng(0))
        np.testing.assert_array_equal(out.x, lt.x)
        np.testing.assert_array_equal(out.y, lt._y)

    def test_size_arithmetic(self):
        lt = self.lt(n=9)
        out = build_lt_a(lt, AugmentPolicy(), 4, 4, SeededRng(0))
        assert len(out) == 9 * (1 + 4 + 4)

    def test_labels_preserved_per_origin(self):
        lt = self.lt()
        out = build_lt_a(lt, AugmentPolicy(), 3, 2, SeededRng(0))
        np.testing.assert_array_equal(out.y, lt._y[out.origin])

    def test_empty_split_rejected(self):
        lt = LabeledSplit(np.zeros((0, 3)), np.zeros(0, dtype=int), np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            build_lt_a(lt, AugmentPolicy(), 1, 1, SeededRng(0))
