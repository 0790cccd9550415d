import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smallball_lab.covernum import (
    MATRIX_LIMIT,
    FiniteMetricSpace,
    dyadic_epsilons,
    entropy_curve,
    fit_loglog_slope,
    greedy_cover,
    greedy_packing,
)
from smallball_lab.errors import ConstructionError, DomainError
from smallball_lab.loud import LoudFamily, PadicGrid
from smallball_lab.procs import LoudSeries


def line(n: int, spacing: float = 1.0) -> FiniteMetricSpace:
    return FiniteMetricSpace.from_points(np.arange(n) * spacing)


class TestFiniteMetricSpace:
    def test_from_points_orders_sorted_lines(self):
        assert line(5).ordered
        assert not FiniteMetricSpace.from_points([0.0, 2.0, 1.0]).ordered
        assert not FiniteMetricSpace.from_points(np.eye(3)).ordered

    def test_from_matrix_rejects_non_square(self):
        with pytest.raises(ConstructionError):
            FiniteMetricSpace.from_matrix(np.zeros((2, 3)))

    def test_from_basis_is_l2(self):
        B = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert FiniteMetricSpace.from_basis(B).dist(0, 1) == pytest.approx(5.0)

    def test_large_space_is_not_materialized(self):
        space = line(MATRIX_LIMIT + 1)
        assert space.matrix is None
        assert space.dist(0, MATRIX_LIMIT) == pytest.approx(MATRIX_LIMIT)

    def test_diameter(self):
        assert line(11, 0.5).diameter() == pytest.approx(5.0)

    def test_check_metric(self):
        pts = np.random.default_rng(0).random((30, 2))
        assert FiniteMetricSpace.from_points(pts).check_metric(n_triples=500) == 0
        # squared distances break the triangle inequality on a line
        assert FiniteMetricSpace.from_points(np.arange(3.0), metric="sqeuclidean").check_metric(n_triples=500) > 0

    def test_check_metric_rejects_asymmetry(self):
        M = np.array([[0.0, 1.0], [2.0, 0.0]])
        with pytest.raises(ConstructionError):
            FiniteMetricSpace.from_matrix(M).check_metric(n_triples=50)

    def test_distinct_points_merge_zero_distances(self):
        space = FiniteMetricSpace.from_points([0.0, 0.0, 1.0, 1.0, 1.0, 2.5])
        assert space.n_points == 6
        assert space.n_distinct == 3

    def test_periodic_series_has_one_half_period_of_distinct_points(self):
        fam = LoudFamily(p=2, A=2, alpha=0.5)
        full = FiniteMetricSpace.from_basis(LoudSeries(fam).basis(PadicGrid(2, 10)))
        half = PadicGrid(2, 10, span_level=4)
        assert len(half) == 65
        assert full.n_distinct == len(half)

    def test_callable_metric(self):
        space = FiniteMetricSpace.from_points(np.arange(4.0), metric=lambda a, b: np.abs(a - b).sum(axis=1) ** 0.5)
        assert space.dist(0, 3) == pytest.approx(np.sqrt(3))


class TestGreedyCover:
    def test_line_cover_is_optimal(self):
        res = greedy_cover(line(11), 1.0)
        assert res.n_cover == 4
        assert res.centers == [1, 4, 7, 10]
        assert res.n_packing == 6

    def test_unordered_cover_is_packing(self):
        pts = np.random.default_rng(1).random((40, 2))
        res = greedy_cover(FiniteMetricSpace.from_points(pts), 0.2)
        assert res.centers == res.packing_points
        assert res.n_cover == res.n_packing

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(DomainError):
            greedy_cover(line(3), 0.0)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(min_value=0, max_value=10, allow_nan=False), min_size=1, max_size=60),
        st.floats(min_value=0.05, max_value=3.0),
    )
    def test_cover_and_packing_properties(self, xs, eps):
        space = FiniteMetricSpace.from_points(np.sort(np.asarray(xs)))
        res = greedy_cover(space, eps)
        D = space.matrix
        # every point is within eps of a center
        assert np.all(D[:, res.centers].min(axis=1) <= eps)
        # packing points are eps-separated
        P = D[np.ix_(res.packing_points, res.packing_points)]
        assert np.all(P[~np.eye(len(res.packing_points), dtype=bool)] > eps)
        assert len(greedy_packing(space, 2 * eps)) <= res.n_cover <= res.n_packing


class TestEntropyCurve:
    def test_columns_and_monotonicity(self):
        space = line(257, 1 / 256)
        df = entropy_curve(space, dyadic_epsilons(1.0, 6))
        assert list(df.columns) == ["epsilon", "n_cover", "n_packing", "n_packing_2eps", "saturated"]
        assert np.all(np.diff(df["n_cover"]) >= 0)
        assert np.all(df["n_packing_2eps"] <= df["n_cover"])
        assert np.all(df["n_cover"] <= df["n_packing"])

    def test_line_entropy_is_inverse_radius(self):
        space = line(1025, 1 / 1024)
        df = entropy_curve(space, dyadic_epsilons(1.0, 8), saturation_fraction=0.5)
        fit = fit_loglog_slope(np.column_stack([1 / df["epsilon"], df["n_cover"]]), x_range=(4, 256))
        assert fit.slope == pytest.approx(1.0, abs=0.1)

    def test_saturation_flag(self):
        df = entropy_curve(line(17, 1 / 16), [0.5, 1 / 64], saturation_fraction=0.25)
        assert df["saturated"].tolist() == [False, True]

    def test_saturation_counts_distinct_points(self):
        space = FiniteMetricSpace.from_points(np.repeat(np.arange(4.0), 8))
        df = entropy_curve(space, [2.0, 0.25], saturation_fraction=0.5)
        assert df["n_cover"].tolist() == [1, 4]
        assert df["saturated"].tolist() == [False, True]

    def test_parallel_matches_serial(self):
        pts = np.random.default_rng(2).random((80, 2))
        space = FiniteMetricSpace.from_points(pts)
        eps = dyadic_epsilons(1.0, 5)
        serial = entropy_curve(space, eps)
        parallel = entropy_curve(space, eps, n_workers=3)
        assert serial.equals(parallel)

    @pytest.mark.parametrize("eps", [[], [0.5, 0.0], [0.1, 0.2]])
    def test_invalid_radii(self, eps):
        with pytest.raises(DomainError):
            entropy_curve(line(5), eps)


class TestFit:
    def test_exact_power_law(self):
        x = np.logspace(0, 3, 10)
        fit = fit_loglog_slope(np.column_stack([x, 3 * x**2]))
        assert fit.slope == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(np.log(3))
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.n_points == 10

    def test_range_and_positivity_filter(self):
        x = np.arange(1.0, 11.0)
        y = x**-1.5
        y[0] = 0.0
        fit = fit_loglog_slope(np.column_stack([x, y]), x_range=(2, 8))
        assert fit.n_points == 7
        assert fit.slope == pytest.approx(-1.5)

    def test_constant_series(self):
        fit = fit_loglog_slope([[1, 2], [2, 2], [4, 2]])
        assert fit.slope == 0.0

    def test_too_few_points(self):
        with pytest.raises(DomainError):
            fit_loglog_slope([[1, 1], [2, 4]])

    def test_dyadic_epsilons(self):
        np.testing.assert_allclose(dyadic_epsilons(2.0, 3), [2.0, 1.0, 0.5, 0.25])
