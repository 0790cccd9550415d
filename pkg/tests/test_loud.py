import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smallball_lab.errors import ConstructionError, DomainError
from smallball_lab.loud import (
    LoudFamily,
    PadicGrid,
    SawtoothSpec,
    loud_constants,
    loud_f_eval,
    loud_l2_increment,
    loud_lag_pairs,
    loud_sup_norm_bound,
    loud_teeth,
    lower_increment_certified,
    lower_increment_level,
    sawtooth_eval,
    teeth_at,
)

FAM = LoudFamily(p=2, A=2, alpha=0.5)


class TestSawtooth:
    @pytest.mark.parametrize("t, expected", [(0.0, 0.0), (0.5, 0.5), (1.0, 1.0), (1.5, 0.5), (2.0, 0.0), (3.25, 0.75)])
    def test_values(self, t, expected):
        assert sawtooth_eval(SawtoothSpec(1.0), t) == pytest.approx(expected)

    def test_period(self):
        spec = SawtoothSpec(0.25)
        t = np.linspace(0, 1, 33)
        np.testing.assert_allclose(sawtooth_eval(spec, t), sawtooth_eval(spec, t + spec.period), atol=1e-12)

    def test_rejects_nonpositive_half_period(self):
        with pytest.raises(DomainError):
            SawtoothSpec(0.0)


class TestLoudFamily:
    def test_derived_quantities(self):
        assert FAM.rho == pytest.approx(0.25)
        assert FAM.r == pytest.approx(0.25)
        assert FAM.period == pytest.approx(1 / 8)
        assert FAM.truncation == 20

    @pytest.mark.parametrize(
        "p, A, alpha",
        [(1, 2, 0.5), (2, 0, 0.5), (2, 2, 0.0), (2, 2, 1.0), (2, 1, 0.5), (2.0, 2, 0.5)],
    )
    def test_invalid_families(self, p, A, alpha):
        with pytest.raises(ConstructionError):
            LoudFamily(p=p, A=A, alpha=alpha)

    def test_truncation_meets_tail_tolerance(self):
        fam = LoudFamily(p=3, A=1, alpha=0.3, tail_tol=1e-9)
        K = fam.truncation
        assert fam.rho ** (K + 1) / (1 - fam.rho) < 1e-9
        assert fam.rho**K / (1 - fam.rho) >= 1e-9

    def test_constants(self):
        c = loud_constants(FAM)
        assert c.c1 == pytest.approx(1 / 16)
        assert c.c2 == pytest.approx(np.sqrt(16 / 3))
        assert c.kappa == pytest.approx(1 / 6)
        assert c.K_script == pytest.approx(16 / 3)

    def test_sup_norm_bound(self):
        assert loud_sup_norm_bound(FAM) == pytest.approx(1 / 3)
        f = loud_f_eval(FAM, np.linspace(0, 1, 1025))
        assert f.max() <= loud_sup_norm_bound(FAM) + 1e-12


class TestExactTeeth:
    def test_matches_floating_evaluation(self):
        grid = PadicGrid(2, 10)
        np.testing.assert_allclose(grid.teeth_matrix(FAM), loud_teeth(FAM, grid.points), atol=1e-14)

    def test_odd_base_coarse_teeth(self):
        fam = LoudFamily(p=3, A=1, alpha=0.3)
        grid = PadicGrid(3, 5)
        # floating reduction is only trusted while j * 3^(2k - 5) stays well inside the mantissa
        np.testing.assert_allclose(grid.teeth_matrix(fam, n_levels=6), loud_teeth(fam, grid.points, n_levels=6), atol=1e-9)

    def test_odd_base_finer_teeth_use_parity(self):
        fam = LoudFamily(p=3, A=1, alpha=0.3)
        teeth = teeth_at(fam, [0, 1, 2, 243], level=5)
        # tooth 3 has half-period 3^-6: the points j / 3^5 are multiples 3j of it
        np.testing.assert_allclose(teeth[:, 2] / fam.peak(3), [0.0, 1.0, 0.0, 1.0])

    def test_periodic_on_grid(self):
        level = 10
        j = np.arange(2**level - 128 + 1)
        # period 1/8 = 128 / 2^10
        np.testing.assert_array_equal(teeth_at(FAM, j, level), teeth_at(FAM, j + 128, level))

    def test_grid_base_mismatch(self):
        with pytest.raises(DomainError):
            PadicGrid(3, 4).teeth_matrix(FAM)

    def test_grid_shape(self):
        grid = PadicGrid(2, 3)
        assert len(grid) == 9
        assert grid.mesh == 1 / 8
        assert grid.points[-1] == 1.0

    @pytest.mark.parametrize("p, level, span_level", [(1, 3, 0), (2, -1, 0), (2, 3, 4)])
    def test_invalid_grid(self, p, level, span_level):
        with pytest.raises(DomainError):
            PadicGrid(p, level, span_level)

    def test_grid_too_fine(self):
        with pytest.raises(DomainError):
            PadicGrid(2, 63)


class TestIncrements:
    @settings(max_examples=300, deadline=None)
    @given(st.integers(min_value=0, max_value=2**12), st.integers(min_value=0, max_value=2**12))
    def test_upper_holder_bound(self, i, j):
        level = 12
        f = teeth_at(FAM, [i, j], level).sum(axis=1)
        lag = abs(i - j) / 2**level
        bound = loud_constants(FAM).K_script * lag**FAM.alpha + 2 * FAM.tail_tol
        assert abs(f[0] - f[1]) <= bound

    @pytest.mark.parametrize("m", [1, 2])
    def test_lower_bound_at_special_lags(self, m):
        grid = PadicGrid(2, 10)
        s, t, level = loud_lag_pairs(FAM, m, grid)
        assert s.size > 0
        diff = np.abs(teeth_at(FAM, s, level).sum(axis=1) - teeth_at(FAM, t, level).sum(axis=1))
        lag = 2.0 ** -(4 * (m + 1))
        assert np.all(diff >= loud_constants(FAM).kappa * lag**FAM.alpha - 2 * FAM.tail_tol)

    def test_lag_pairs_layout(self):
        s, t, level = loud_lag_pairs(FAM, 1, PadicGrid(2, 10))
        assert level == 10
        assert s.size == 256
        np.testing.assert_array_equal(t - s, 4)
        assert t.max() == 2**10

    def test_lag_pairs_refine_level(self):
        s, t, level = loud_lag_pairs(FAM, 2, PadicGrid(2, 6))
        assert level == 12
        assert np.all(s % 2**6 == 0)

    def test_lag_pairs_reject_level_zero(self):
        with pytest.raises(DomainError):
            loud_lag_pairs(FAM, 0, PadicGrid(2, 8))

    def test_lower_increment_level(self):
        m = lower_increment_level(FAM, [0, 1, 15, 16, 256], level=8)
        np.testing.assert_array_equal(m, [-1, 1, 1, 0, 0])

    def test_certified_pairs(self):
        ok = lower_increment_certified(FAM, np.array([0, 8]), np.array([15, 23]), level=8)
        np.testing.assert_array_equal(ok, [True, False])

    def test_l2_increment_bounds(self):
        c = loud_constants(FAM)
        s, t = 0.0, 2.0**-8
        d = loud_l2_increment(FAM, s, t)
        assert c.c1 * (t - s) ** FAM.alpha - 2 * FAM.tail_tol <= d <= c.c2 * (t - s) ** FAM.alpha + 2 * FAM.tail_tol
