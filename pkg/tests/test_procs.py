import numpy as np
import pytest

from smallball_lab.base.process_model import PATH_BLOCK_SIZE
from smallball_lab.errors import BudgetExceededError, ConstructionError, DomainError
from smallball_lab.gaussmath import SeedSpec
from smallball_lab.loud import LoudFamily, PadicGrid, loud_f_eval, loud_l2_increment
from smallball_lab.procs import (
    AperiodicCoprime,
    AperiodicSpec,
    IndependentSequence,
    Lifshits,
    LoudSeries,
    ScaledLoud,
    aperiodic_increment_check,
    build_process,
    condition_report,
    default_alpha,
    default_aperiodic_spec,
    fit_increment_constant,
)
from smallball_lab.weights import LogPowerWeight

FAM = LoudFamily(p=2, A=2, alpha=0.5)


class TestLoudProcesses:
    def test_scaled_loud_is_rank_one(self):
        grid = PadicGrid(2, 8)
        B = ScaledLoud(FAM).basis(grid)
        assert B.shape == (len(grid), 1)
        np.testing.assert_allclose(B[:, 0], loud_f_eval(FAM, grid.points), atol=1e-14)

    def test_scaled_loud_distance(self):
        model = ScaledLoud(FAM)
        expected = abs(loud_f_eval(FAM, 0.1) - loud_f_eval(FAM, 0.3))
        assert model.intrinsic_distance(0.1, 0.3) == pytest.approx(expected)

    def test_series_distance_matches_loud_metric(self):
        model = LoudSeries(FAM)
        assert model.intrinsic_distance(0.2, 0.45) == pytest.approx(loud_l2_increment(FAM, 0.2, 0.45), rel=1e-12)

    def test_points_outside_unit_interval(self):
        with pytest.raises(DomainError):
            LoudSeries(FAM).basis([0.5, 1.5])

    def test_covariance_is_psd(self):
        C = LoudSeries(FAM).covariance(PadicGrid(2, 5))
        np.testing.assert_allclose(C, C.T)
        assert np.linalg.eigvalsh(C).min() > -1e-12

    def test_path_modulus_shrinks_with_mesh(self):
        model = LoudSeries(FAM)
        assert model.path_modulus(2.0**-12) < model.path_modulus(2.0**-8)
        assert ScaledLoud(FAM).path_modulus(2.0**-12) < ScaledLoud(FAM).path_modulus(2.0**-8)


class TestSampling:
    def test_worker_count_does_not_change_paths(self):
        model = LoudSeries(FAM)
        grid = PadicGrid(2, 6)
        n = 3 * PATH_BLOCK_SIZE + 7
        serial = model.sample_paths(grid, n, SeedSpec(5, 1))
        parallel = model.sample_paths(grid, n, SeedSpec(5, 1), n_workers=3)
        np.testing.assert_array_equal(serial, parallel)

    def test_prefix_property(self):
        model = LoudSeries(FAM)
        grid = PadicGrid(2, 4)
        long = model.sample_paths(grid, 2 * PATH_BLOCK_SIZE, SeedSpec(5, 1))
        short = model.sample_paths(grid, PATH_BLOCK_SIZE, SeedSpec(5, 1))
        np.testing.assert_array_equal(long[:PATH_BLOCK_SIZE], short)

    def test_empirical_variance(self):
        model = LoudSeries(FAM)
        grid = PadicGrid(2, 4)
        paths = model.sample_paths(grid, 40_000, SeedSpec(9, 0))
        np.testing.assert_allclose(paths.var(axis=0), np.diag(model.covariance(grid)), rtol=0.05, atol=1e-4)

    def test_budget(self):
        with pytest.raises(BudgetExceededError):
            LoudSeries(FAM).sample_paths(PadicGrid(2, 4), 100, SeedSpec(0), budget=1000)

    def test_zero_paths(self):
        assert LoudSeries(FAM).sample_paths(PadicGrid(2, 4), 0, SeedSpec(0)).shape == (0, 17)


class TestLifshits:
    def test_basis_layout(self):
        model = Lifshits(alpha=0.5)
        t = np.array([0.0, 0.25, 1.0])
        B = model.basis(t)
        assert B.shape == (3, model.truncation + 1)
        np.testing.assert_allclose(B[:, 0], t)
        # psi({2t}) at t = 1/4 is the peak of the tent
        assert B[1, 1] == pytest.approx(2**-0.25)

    def test_invalid_alpha(self):
        with pytest.raises(ConstructionError):
            Lifshits(alpha=2.0)

    def test_increment_constant_is_positive(self):
        df = fit_increment_constant(Lifshits(alpha=0.5), exponent=0.25, lag_levels=range(2, 8), n_starts=16)
        assert list(df.columns) == ["lag", "n_pairs", "min_ratio"]
        assert np.all(df["min_ratio"] > 0)


class TestAperiodic:
    def test_default_alpha_decreasing_below_half(self):
        alphas = [default_alpha(p) for p in (3, 5, 7, 11, 13, 17, 19)]
        assert all(0 < a < 0.5 for a in alphas)
        assert all(b < a for a, b in zip(alphas, alphas[1:]))

    @pytest.mark.parametrize("prime_set", [(3, 9), (2, 3), ()])
    def test_invalid_prime_sets(self, prime_set):
        with pytest.raises(ConstructionError):
            AperiodicSpec(prime_set=prime_set, alpha_of_p={p: 0.3 for p in prime_set})

    def test_alpha_must_decrease(self):
        with pytest.raises(ConstructionError):
            AperiodicSpec(prime_set=(3, 5), alpha_of_p={3: 0.2, 5: 0.3})

    def test_condition_report(self):
        df, flags = condition_report(default_aperiodic_spec(), h=0.1)
        assert df["p"].tolist() == [3, 5, 7, 11, 13]
        assert flags["alpha_decreasing"]
        assert flags["alpha_log_p_nonincreasing"]
        assert flags["growth_increasing"]
        assert flags["sup_norm_summable"] == pytest.approx(df["sup_term"].sum())

    def test_increment_lower_bounds_hold(self):
        model = AperiodicCoprime(default_aperiodic_spec(prime_set=(3, 5, 7)))
        df = aperiodic_increment_check(model, m_values=(1, 2), max_pairs=128)
        assert len(df) == 6
        assert df["violations"].sum() == 0
        assert np.all(df["min_distance"] >= df["bound"] - 1e-10)
        assert np.all(df["n_pairs"] <= 128)

    def test_basis_has_one_column_per_base(self):
        model = AperiodicCoprime(default_aperiodic_spec(prime_set=(3, 5)))
        assert model.basis(np.linspace(0, 1, 9)).shape == (9, 2)


class TestIndependentSequence:
    def test_weights_and_infinity(self):
        phi = LogPowerWeight(beta=1.0)
        model = IndependentSequence(phi, n_max=10)
        grid = model.default_grid()
        assert grid[-1] == np.inf
        w = model.weights(grid)
        assert w[0] == pytest.approx(1 / np.log(3))
        assert w[-1] == 0.0
        B = model.basis(grid)
        assert B.shape == (11, 10)
        assert np.all(B[-1] == 0)

    def test_distances(self):
        model = IndependentSequence(LogPowerWeight(beta=1.0), n_max=10)
        assert model.intrinsic_distance(3, np.inf) == pytest.approx(1 / np.log(5))
        assert model.intrinsic_distance(4, 4) == 0.0
        assert model.sup_sigma(model.default_grid()) == pytest.approx(1 / np.log(3))

    @pytest.mark.parametrize("bad", [[0], [11], [2.5], [np.nan]])
    def test_invalid_indices(self, bad):
        with pytest.raises(DomainError):
            IndependentSequence(LogPowerWeight(beta=1.0), n_max=10).weights(bad)

    def test_paths_vanish_at_infinity(self):
        model = IndependentSequence(LogPowerWeight(beta=1.0), n_max=20)
        paths = model.sample_paths(model.default_grid(), 500, SeedSpec(1))
        assert np.all(paths[:, -1] == 0)
        assert paths.shape == (500, 21)


class TestBuildProcess:
    @pytest.mark.parametrize(
        "kind, parameters, cls",
        [
            ("ScaledLoud", {"p": 2, "A": 2, "alpha": 0.5}, ScaledLoud),
            ("LoudSeries", {"family": FAM}, LoudSeries),
            ("Lifshits", {}, Lifshits),
            ("AperiodicCoprime", {"prime_set": [3, 5]}, AperiodicCoprime),
            ("IndependentSequence", {"beta": 1.0, "n_max": 50}, IndependentSequence),
        ],
    )
    def test_kinds(self, kind, parameters, cls):
        model = build_process(kind, parameters)
        assert isinstance(model, cls)
        assert model.parameters()["kind"] == kind

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            build_process("Brownian")

    def test_missing_family_parameters(self):
        with pytest.raises(ConstructionError):
            build_process("LoudSeries", {"p": 2})

    def test_tree_required(self):
        with pytest.raises(ConstructionError):
            build_process("UltrametricZ", {})
