"""Multi-scale merging of per-scale image vectors."""

import numpy as np
import pytest

from dspyramid import (DEFAULT_SCALES, ValidationError, check_scales,
                       l2_normalize, merge_scales)


def unit(rng, n=16):
    return l2_normalize(rng.normal(size=n))


class TestCheckScales:
    def test_default_set(self):
        assert DEFAULT_SCALES == (1.4, 1.2, 1.0, 0.8, 0.6)
        assert check_scales(DEFAULT_SCALES) == DEFAULT_SCALES

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            check_scales([])

    def test_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            check_scales([1.0, 0.0])
        with pytest.raises(ValidationError):
            check_scales([1.0, -0.5])

    def test_rejects_duplicates(self):
        with pytest.raises(ValidationError):
            check_scales([1.0, 0.8, 1.0])

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            check_scales([1.0, np.inf])


class TestMergeScales:
    def test_identical_copies_return_the_vector(self):
        rng = np.random.default_rng(0)
        v = unit(rng)
        out = merge_scales([v] * 5)
        assert np.max(np.abs(out - v)) <= 1e-12

    def test_single_vector_exact(self):
        rng = np.random.default_rng(1)
        v = unit(rng)
        out = merge_scales([v])
        assert np.array_equal(out, v)
        assert out is not v  # caller's array is not aliased

    def test_matches_manual_average(self):
        rng = np.random.default_rng(2)
        vecs = [unit(rng) for _ in range(4)]
        mean = np.mean(vecs, axis=0)
        want = mean / np.linalg.norm(mean)
        np.testing.assert_allclose(merge_scales(vecs), want, atol=1e-14)

    def test_output_unit_norm(self):
        rng = np.random.default_rng(3)
        out = merge_scales([unit(rng) for _ in range(3)])
        assert np.linalg.norm(out) == pytest.approx(1.0, rel=1e-12)

    def test_zero_vectors_stay_zero(self):
        out = merge_scales([np.zeros(8), np.zeros(8)])
        assert np.all(out == 0.0)

    def test_rejects_empty_list(self):
        with pytest.raises(ValidationError):
            merge_scales([])

    def test_rejects_length_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValidationError):
            merge_scales([unit(rng, 8), unit(rng, 9)])

    def test_order_invariant(self):
        """Averaging is the only combination step, so scale order cannot
        change the merged vector beyond float addition reordering."""
        rng = np.random.default_rng(5)
        vecs = [unit(rng) for _ in range(5)]
        a = merge_scales(vecs)
        b = merge_scales(vecs[::-1])
        np.testing.assert_allclose(a, b, atol=1e-14)
