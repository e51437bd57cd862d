"""Tests for the stochastic scalar quantizer and the context quantizer."""

import math

import numpy as np
import pytest

from bitbandit.quantizer import (
    AssumptionViolation,
    QuantizationRangeError,
    StochasticQuantizer,
    magnitude_scale,
    quantize_context,
    reconstruct_context,
)


def random_unit_ball(n, d, rng):
    """n points drawn uniformly from the d-dimensional unit ball."""
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * rng.random((n, 1)) ** (1.0 / d)


class TestStochasticQuantizer:
    def test_constructor_validation(self):
        with pytest.raises(ValueError):
            StochasticQuantizer(0)
        with pytest.raises(ValueError):
            StochasticQuantizer(4, lower=1.0, upper=1.0)
        with pytest.raises(ValueError):
            StochasticQuantizer(4, lower=2.0, upper=-2.0)

    def test_default_range_is_zero_to_levels(self):
        sq = StochasticQuantizer(7)
        assert sq.lower == 0.0
        assert sq.upper == 7.0
        assert sq.step == 1.0

    def test_levels_stay_in_range(self):
        rng = np.random.default_rng(42)
        sq = StochasticQuantizer(5, lower=-2.0, upper=3.0)
        x = rng.uniform(-2.0, 3.0, size=20_000)
        levels = sq.encode(x, rng)
        assert levels.dtype == np.int64
        assert levels.min() >= 0
        assert levels.max() <= 5

    def test_error_bounded_by_one_step(self):
        rng = np.random.default_rng(42)
        for levels, lo, hi in [(1, 0.0, 1.0), (3, -1.0, 2.0), (10, -5.0, 5.0)]:
            sq = StochasticQuantizer(levels, lo, hi)
            x = rng.uniform(lo, hi, size=50_000)
            err = np.abs(sq.roundtrip(x, rng) - x)
            assert err.max() <= sq.step + 1e-12

    def test_unbiasedness(self):
        rng = np.random.default_rng(42)
        sq = StochasticQuantizer(4, lower=-1.0, upper=1.0)
        n = 100_000
        for x in (-0.9, -1.0 / 3.0, 0.0, 0.123456, 0.77):
            vals = sq.roundtrip(np.full(n, x), rng)
            tol = 4.0 * (sq.upper - sq.lower) / (sq.levels * math.sqrt(n))
            assert abs(vals.mean() - x) <= tol

    def test_grid_points_are_exact(self):
        rng = np.random.default_rng(42)
        sq = StochasticQuantizer(6, lower=-3.0, upper=3.0)
        grid = sq.lower + np.arange(7) * sq.step
        out = sq.roundtrip(grid, rng)
        np.testing.assert_array_equal(out, grid)

    def test_out_of_range_raises(self):
        rng = np.random.default_rng(42)
        sq = StochasticQuantizer(2, 0.0, 1.0)
        with pytest.raises(QuantizationRangeError):
            sq.encode(1.001, rng)
        with pytest.raises(QuantizationRangeError):
            sq.encode(np.array([0.5, -0.1]), rng)
        with pytest.raises(QuantizationRangeError):
            sq.decode(3)
        with pytest.raises(QuantizationRangeError):
            sq.decode(-1)

    def test_boundary_fp_slack_is_absorbed(self):
        rng = np.random.default_rng(42)
        sq = StochasticQuantizer(2, 0.0, 1.0)
        assert sq.encode(1.0 + 1e-10, rng) == 2
        assert sq.encode(-1e-10, rng) == 0

    def test_scalar_in_scalar_out(self):
        rng = np.random.default_rng(42)
        sq = StochasticQuantizer(3)
        assert isinstance(sq.encode(1.5, rng), int)
        assert isinstance(sq.decode(2), float)


class TestMagnitudeScale:
    def test_is_ceil_sqrt(self):
        for d in range(1, 200):
            assert magnitude_scale(d) == math.ceil(math.sqrt(d))

    def test_known_values(self):
        assert [magnitude_scale(d) for d in (1, 2, 4, 5, 16, 17, 25, 26)] == \
            [1, 2, 2, 3, 4, 5, 5, 6]

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            magnitude_scale(0)


class TestQuantizeContext:
    def test_rejects_norm_above_one(self):
        rng = np.random.default_rng(42)
        with pytest.raises(AssumptionViolation):
            quantize_context(np.array([0.8, 0.8]), rng)

    def test_rejects_matrix_input(self):
        rng = np.random.default_rng(42)
        with pytest.raises(ValueError):
            quantize_context(np.zeros((2, 2)), rng)

    def test_sign_of_zero_is_positive(self):
        rng = np.random.default_rng(42)
        qc = quantize_context(np.zeros(4), rng)
        np.testing.assert_array_equal(qc.signs, np.ones(4))
        np.testing.assert_array_equal(qc.magnitudes, np.zeros(4))

    def test_fields_are_well_formed(self):
        rng = np.random.default_rng(42)
        for d in (1, 2, 3, 5, 8, 16):
            m = magnitude_scale(d)
            for x in random_unit_ball(200, d, rng):
                qc = quantize_context(x, rng)
                assert qc.d == d and qc.m == m
                assert set(np.unique(qc.signs)) <= {-1, 1}
                assert qc.magnitudes.min() >= 0
                assert qc.magnitudes.max() <= m
                assert np.all(np.isin(qc.sq_errors, [-3.0 / m, 3.0 / m]))

    def test_l1_budget_never_exceeded(self):
        rng = np.random.default_rng(42)
        for d in (1, 2, 3, 5, 7, 11, 16):
            x = random_unit_ball(2_000, d, rng)
            # push a share of the mass right onto the sphere, the worst case
            x[::4] /= np.maximum(np.linalg.norm(x[::4], axis=1, keepdims=True), 1e-12)
            for row in x:
                qc = quantize_context(row, rng)
                assert qc.magnitudes.sum() <= 2 * d

    def test_forced_demotion_keeps_budget_and_floors(self):
        class AlwaysCeil:
            """Stand-in rng whose uniforms are all 0, forcing round-up."""

            def random(self, shape=None):
                return np.zeros(shape) if shape is not None else 0.0

        d = 5  # m = 3, all-ceil can overshoot the budget of 10
        x = np.array([0.7, 0.357, 0.357, 0.357, 0.357])
        assert np.linalg.norm(x) <= 1.0
        qc = quantize_context(x, AlwaysCeil())
        m = qc.m
        assert qc.magnitudes.sum() == 2 * d
        # every coordinate sits on floor or ceil of m|x|
        scaled = m * np.abs(x)
        assert np.all(
            (qc.magnitudes == np.floor(scaled)) | (qc.magnitudes == np.ceil(scaled))
        )

    def test_reconstruction_error_bounds(self):
        rng = np.random.default_rng(42)
        for d in (1, 5, 25):
            m = magnitude_scale(d)
            for x in random_unit_ball(300, d, rng):
                qc = quantize_context(x, rng)
                xhat, xsq_hat = reconstruct_context(qc)
                assert np.max(np.abs(xhat) - np.abs(x)) <= 1.0 / m + 1e-12
                assert np.max(np.abs(x * x - xhat * xhat)) <= 3.0 / m + 1e-12
                # the square-bit correction is one quantizer step wide
                assert np.max(np.abs(x * x - xsq_hat)) <= 6.0 / m + 1e-12

    def test_reconstruction_is_unbiased(self):
        rng = np.random.default_rng(42)
        x = np.array([0.31, -0.47, 0.0, 0.62])
        n = 20_000
        xh = np.zeros_like(x)
        xs = np.zeros_like(x)
        for _ in range(n):
            xhat, xsq_hat = reconstruct_context(quantize_context(x, rng))
            xh += xhat
            xs += xsq_hat
        m = magnitude_scale(x.size)
        assert np.max(np.abs(xh / n - x)) <= 4.0 / (m * math.sqrt(n))
        assert np.max(np.abs(xs / n - x * x)) <= 24.0 / (m * math.sqrt(n))
