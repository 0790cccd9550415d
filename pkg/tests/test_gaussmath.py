import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.special import erf

from smallball_lab.errors import DomainError
from smallball_lab.gaussmath import (
    STREAM_BLOCK_SIZE,
    SeedSpec,
    block_generator,
    gaussian_stream,
    log_gaussian_two_sided_tail,
    log_neg_log_std_normal_interval,
    log_std_normal_interval,
    std_normal_interval,
)


class TestStdNormalInterval:
    def test_known_values(self):
        assert std_normal_interval(0.0) == 0.0
        assert std_normal_interval(1.0) == pytest.approx(0.6826894921370859, rel=1e-12)
        assert std_normal_interval(np.inf) == 1.0

    def test_array_shape_preserved(self):
        z = np.array([[0.1, 0.2], [0.3, 0.4]])
        assert std_normal_interval(z).shape == (2, 2)

    def test_scalar_returns_float(self):
        assert isinstance(std_normal_interval(0.5), float)

    @pytest.mark.parametrize("z", [-1e-9, -1.0, np.nan])
    def test_rejects_negative_and_nan(self, z):
        with pytest.raises(DomainError):
            std_normal_interval(z)


class TestLogStdNormalInterval:
    def test_zero_is_minus_inf(self):
        assert log_std_normal_interval(0.0) == -np.inf

    def test_inf_is_zero(self):
        assert log_std_normal_interval(np.inf) == 0.0

    def test_tiny_argument_relative_accuracy(self):
        z = 1e-12
        # P{|g| <= z} ~ z sqrt(2/pi)
        assert log_std_normal_interval(z) == pytest.approx(np.log(z * np.sqrt(2 / np.pi)), rel=1e-12)

    def test_large_argument_uses_complement(self):
        z = 10.0
        # log(1 - q) ~ -q with q = P{|g| > z}
        assert log_std_normal_interval(z) == pytest.approx(-np.exp(log_gaussian_two_sided_tail(z)), rel=1e-6)
        assert log_std_normal_interval(z) < 0

    @pytest.mark.parametrize("z", [1e-3 / 2, 2e-3, 0.5, 0.999, 1.001, 3.0])
    def test_matches_log_erf_across_regimes(self, z):
        assert log_std_normal_interval(z) == pytest.approx(np.log(erf(z / np.sqrt(2))), rel=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=1e-12, max_value=30.0), st.floats(min_value=1e-12, max_value=30.0))
    def test_nondecreasing(self, a, b):
        lo, hi = sorted([a, b])
        assume(hi >= lo * (1 + 1e-6))
        assert log_std_normal_interval(lo) <= log_std_normal_interval(hi)


class TestLogTail:
    def test_matches_complement(self):
        z = 1.5
        assert np.exp(log_gaussian_two_sided_tail(z)) == pytest.approx(1 - std_normal_interval(z), rel=1e-12)

    def test_far_tail_is_finite(self):
        assert np.isfinite(log_gaussian_two_sided_tail(100.0))


class TestLogNegLog:
    def test_matches_direct_formula_near_zero(self):
        z = 0.3
        assert log_neg_log_std_normal_interval(z) == pytest.approx(np.log(-np.log(std_normal_interval(z))), rel=1e-12)

    def test_finite_where_neg_log_underflows(self):
        # -log P{|g| <= 38} is below the smallest positive float
        val = log_neg_log_std_normal_interval(38.0)
        assert np.isfinite(val)
        assert val == pytest.approx(log_gaussian_two_sided_tail(38.0), rel=1e-8)

    def test_endpoints(self):
        assert log_neg_log_std_normal_interval(0.0) == np.inf
        assert log_neg_log_std_normal_interval(np.inf) == -np.inf

    @settings(max_examples=100, deadline=None)
    @given(st.floats(min_value=1e-6, max_value=35.0))
    def test_continuous_across_tail_switch(self, z):
        assert np.isfinite(log_neg_log_std_normal_interval(z))


class TestSeeding:
    def test_seed_spec_validation(self):
        with pytest.raises(DomainError):
            SeedSpec(-1)
        with pytest.raises(DomainError):
            SeedSpec(0, 2**64)
        with pytest.raises(DomainError):
            SeedSpec(1.5)

    def test_substream_wraps(self):
        assert SeedSpec(3, 2**64 - 1).substream(2) == SeedSpec(3, 1)

    def test_block_generator_reproducible(self):
        a = block_generator(SeedSpec(7, 1), block=3).standard_normal(10)
        b = block_generator(SeedSpec(7, 1), block=3).standard_normal(10)
        np.testing.assert_array_equal(a, b)

    def test_streams_and_blocks_differ(self):
        base = block_generator(SeedSpec(7, 1), block=0).standard_normal(10)
        assert not np.array_equal(base, block_generator(SeedSpec(7, 2), block=0).standard_normal(10))
        assert not np.array_equal(base, block_generator(SeedSpec(7, 1), block=1).standard_normal(10))
        assert not np.array_equal(base, block_generator(SeedSpec(8, 1), block=0).standard_normal(10))

    def test_negative_block_rejected(self):
        with pytest.raises(DomainError):
            block_generator(SeedSpec(0), block=-1)

    def test_stream_prefix_property(self):
        seed = SeedSpec(11, 4)
        long = gaussian_stream(seed, STREAM_BLOCK_SIZE + 100)
        short = gaussian_stream(seed, 50)
        np.testing.assert_array_equal(long[:50], short)

    def test_second_block_regenerated_independently(self):
        seed = SeedSpec(11, 4)
        stream = gaussian_stream(seed, STREAM_BLOCK_SIZE + 100)
        np.testing.assert_array_equal(stream[STREAM_BLOCK_SIZE:], block_generator(seed, 1).standard_normal(100))

    def test_stream_moments(self):
        x = gaussian_stream(SeedSpec(2024, 0), 200_000)
        assert abs(x.mean()) < 0.01
        assert x.std() == pytest.approx(1.0, abs=0.01)
