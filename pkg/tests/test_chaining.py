import numpy as np
import pandas as pd
import pytest

from smallball_lab import chaining
from smallball_lab.chaining import (
    SIEVE_MASS,
    MajorizingMeasure,
    PartitionChain,
    SieveChain,
    WeightSequence,
    build_partition_chain,
    h_curve,
    h_function,
    interval_chain,
    interval_entropy_integral,
    mm_lower_exponent,
    n_of_epsilon,
    sieve_ball_check,
    sieve_chain_for_sequence,
    technical_condition_fit,
)
from smallball_lab.covernum import FiniteMetricSpace
from smallball_lab.errors import ChainDepthError, ConstructionError, DomainError
from smallball_lab.weights import LogPowerWeight


def line(n: int) -> FiniteMetricSpace:
    return FiniteMetricSpace.from_points(np.linspace(0, 1, n))


@pytest.fixture(scope="module")
def line_chain():
    space = line(65)
    return space, build_partition_chain(space, depth=8)


class TestWeights:
    def test_squares_are_summable(self):
        total, tail = WeightSequence.squares().summable()
        assert total < np.pi**2 / 6 <= total + tail

    def test_fast_modulus_has_no_power_tail(self):
        # v(m) = 2^(m/2) / m^1.5 dips before it grows
        with pytest.raises(DomainError):
            WeightSequence.modulus(np.sqrt, 1.0).summable()

    def test_measure_is_normalized(self):
        mu = MajorizingMeasure(np.array([1.0, 3.0]))
        np.testing.assert_allclose(mu.weights, [0.25, 0.75])
        assert MajorizingMeasure.uniform(4).weights.sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("w", [[], [1.0, -1.0], [0.0, 0.0], [np.nan]])
    def test_invalid_measure(self, w):
        with pytest.raises(ConstructionError):
            MajorizingMeasure(np.asarray(w, dtype=float))


class TestPartitionChain:
    def test_levels_nest_and_shrink(self, line_chain):
        space, chain = line_chain
        assert chain.depth == 8
        assert chain.n_cells(0) == 1
        counts = [chain.n_cells(n) for n in range(chain.depth + 1)]
        assert counts == sorted(counts)
        assert counts[-1] == space.n_points
        chain.verify(space)

    def test_cells_partition_the_points(self, line_chain):
        space, chain = line_chain
        cells = chain.cells(3)
        assert len(cells) == chain.n_cells(3)
        assert sorted(np.concatenate(cells).tolist()) == list(range(space.n_points))
        assert 5 in chain.cell_of(5, 3)

    def test_verify_rejects_non_nested_levels(self):
        levels = [np.zeros(4, dtype=np.int64), np.array([0, 0, 1, 1]), np.array([0, 1, 1, 2])]
        with pytest.raises(ConstructionError):
            PartitionChain(levels=levels, D=1.0).verify()

    def test_verify_rejects_wide_cells(self):
        levels = [np.zeros(3, dtype=np.int64), np.zeros(3, dtype=np.int64)]
        with pytest.raises(ConstructionError):
            PartitionChain(levels=levels, D=1.0).verify(line(3))

    def test_invalid_depth(self):
        with pytest.raises(DomainError):
            build_partition_chain(line(5), depth=0)


class TestIntervalChain:
    def test_block_lengths(self):
        # delta(h) = sqrt(h): level m uses blocks of length 4^-m
        chain = interval_chain(np.linspace(0, 1, 257), lambda u: u**2, depth=3)
        assert chain.n_cells(1) == 5
        assert chain.n_cells(2) == 17
        assert chain.n_cells(3) == 65

    def test_rejects_unsorted_points(self):
        with pytest.raises(DomainError):
            interval_chain([0.0, 0.5, 0.2], lambda u: u**2, depth=2)

    def test_entropy_integral_decreases_with_level(self):
        values = [interval_entropy_integral(lambda u: u**2, lambda u: u, 1.0, n) for n in range(5)]
        assert all(v > 0 for v in values)
        assert all(b < a for a, b in zip(values, values[1:]))


class TestHFunction:
    def test_curve_is_nonincreasing(self, line_chain):
        space, chain = line_chain
        curve = h_curve(chain, MajorizingMeasure.uniform(space.n_points), WeightSequence.squares())
        assert np.all(np.diff(curve.values) <= 0)
        assert curve.values[-1] == 0.0
        assert np.isfinite(curve.tail_bound)
        assert curve.certified(3) == pytest.approx(curve.values[3] + curve.tail_bound)

    def test_h_function_matches_curve(self, line_chain):
        space, chain = line_chain
        mu, v = MajorizingMeasure.uniform(space.n_points), WeightSequence.squares()
        curve = h_curve(chain, mu, v)
        assert h_function(chain, mu, v, 2).value == curve.values[2]
        assert h_function(chain, mu, v, 50).value == 0.0
        with pytest.raises(DomainError):
            h_function(chain, mu, v, -1)

    def test_level_grows_as_radius_shrinks(self, line_chain):
        space, chain = line_chain
        mu, v = MajorizingMeasure.uniform(space.n_points), WeightSequence.squares()
        curve = h_curve(chain, mu, v)
        H0 = curve.certified(0)
        levels = [n_of_epsilon(chain, mu, v, f * H0, 1.0, curve) for f in (0.9, 0.5, 0.2, 0.1)]
        assert levels == sorted(levels)
        for n, f in zip(levels, (0.9, 0.5, 0.2, 0.1)):
            assert curve.values[n] + curve.tail_bound <= f * H0

    def test_radius_above_h0(self, line_chain):
        space, chain = line_chain
        mu, v = MajorizingMeasure.uniform(space.n_points), WeightSequence.squares()
        with pytest.raises(DomainError):
            n_of_epsilon(chain, mu, v, 100.0, 1.0)

    def test_shallow_chain(self):
        space = line(65)
        chain = build_partition_chain(space, depth=1)
        mu, v = MajorizingMeasure.uniform(65), WeightSequence.squares()
        curve = h_curve(chain, mu, v)
        with pytest.raises(ChainDepthError) as info:
            n_of_epsilon(chain, mu, v, 1e-3 * curve.values[0], 1.0, curve)
        assert info.value.required_depth > 1

    def test_lower_exponent(self, line_chain):
        space, chain = line_chain
        mu, v = MajorizingMeasure.uniform(space.n_points), WeightSequence.squares()
        H0 = h_curve(chain, mu, v).certified(0)
        eps = 0.2 * H0
        n = n_of_epsilon(chain, mu, v, eps, 1.0)
        assert mm_lower_exponent(chain, mu, v, eps, 1.0) == pytest.approx(chain.n_cells(n) * np.log(1 / eps))


class TestSieve:
    @pytest.fixture(scope="class")
    def sieve(self):
        return SieveChain(LogPowerWeight(beta=1.0), depth=3)

    def test_first_level(self, sieve):
        assert sieve.F(0) == 1
        assert sieve.D == pytest.approx(np.sqrt(2) * np.hypot(1 / np.log(3), 1 / np.log(4)))
        assert np.all(np.diff(sieve.log_F_levels) >= 0)

    def test_ball_structure(self, sieve):
        df = sieve_ball_check(sieve, n_max=300)
        assert df["singleton_violations"].sum() == 0
        assert df["tail_violations"].sum() == 0
        assert df["singleton_checked"].sum() > 0

    def test_materialized_chain(self, sieve):
        chain, mu, points = sieve.materialize(2000)
        assert points[-1] == np.inf
        assert chain.n_cells(0) == 1
        assert mu.weights.sum() == pytest.approx(1.0)
        chain.verify()

    def test_finite_restriction_stays_below_closed_form(self, sieve):
        v = WeightSequence.squares()
        chain, mu, _ = sieve.materialize(2000)
        finite = h_curve(chain, mu, v)
        closed = sieve.h_curve(v)
        assert np.all(finite.values <= closed.values + 1e-9)

    def test_constructor_returns_checked_chain_and_measure(self):
        phi = LogPowerWeight(beta=1.0)
        chain, mu = sieve_chain_for_sequence(phi, depth=4, n_max=200)
        assert isinstance(chain, PartitionChain)
        assert isinstance(mu, MajorizingMeasure)
        assert chain.depth == 4
        assert chain.n_points == 201
        assert chain.n_cells(1) == SieveChain(phi, depth=4).F(1)
        assert mu.weights[0] == pytest.approx(SIEVE_MASS)
        assert mu.weights.sum() == pytest.approx(1.0)

    def test_constructor_rejects_broken_ball_structure(self, monkeypatch):
        def broken(sieve, n_max, depth=None):
            return pd.DataFrame({"level": [0, 1], "singleton_violations": [0, 2], "tail_violations": [0, 0]})

        monkeypatch.setattr(chaining, "sieve_ball_check", broken)
        with pytest.raises(ConstructionError, match="levels \[1\]"):
            sieve_chain_for_sequence(LogPowerWeight(beta=1.0), depth=4, n_max=50)

    def test_slow_weight_rejected(self):
        with pytest.raises(DomainError):
            sieve_chain_for_sequence(LogPowerWeight(beta=0.25))

    def test_technical_condition_fit(self):
        fit = technical_condition_fit(LogPowerWeight(beta=1.0))
        assert 0 < fit["C_fit"] < 1
        assert fit["n_range"] == [3, 10**6]
