import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smallball_lab.errors import DomainError
from smallball_lab.weights import EXACT_LOG_LIMIT, CallableWeight, LogLogWeight, LogPowerWeight


class TestLogPowerWeight:
    def test_value(self):
        phi = LogPowerWeight(beta=1.0)
        assert phi.value(1) == pytest.approx(np.log(3))
        assert phi.value_at_log(3.0) == pytest.approx(np.log(np.exp(3.0) + 2), rel=1e-14)

    def test_inverse_small(self):
        phi = LogPowerWeight(beta=1.0)
        assert phi.inverse(1.0) == 1
        assert phi.inverse(2.0) == 6
        assert phi.log_inverse(2.0) == pytest.approx(np.log(6))

    def test_inverse_beyond_exact_range(self):
        phi = LogPowerWeight(beta=1.0)
        assert phi.inverse(100.0) is None
        assert phi.log_inverse(100.0) == pytest.approx(100.0, rel=1e-12)
        assert phi.log_inverse(100.0) > EXACT_LOG_LIMIT

    def test_log_inverse_rejects_infinite_level(self):
        with pytest.raises(DomainError):
            LogPowerWeight(beta=1.0).log_inverse(np.inf)

    @settings(max_examples=200, deadline=None)
    # x^(1/beta) <= 9 keeps the inverse below e^9
    @given(st.floats(min_value=0.5, max_value=2.0), st.floats(min_value=1.2, max_value=3.0))
    def test_generalized_inverse_is_minimal(self, beta, x):
        phi = LogPowerWeight(beta=beta)
        F = phi.inverse(x)
        assert F is not None
        assert phi.value(F) >= x
        assert F == 1 or phi.value(F - 1) < x

    @pytest.mark.parametrize("beta, shift", [(0.0, 2.0), (-1.0, 2.0), (1.0, 0.0)])
    def test_invalid(self, beta, shift):
        with pytest.raises(DomainError):
            LogPowerWeight(beta=beta, shift=shift)

    def test_growth_check(self):
        assert LogPowerWeight(beta=1.0).check_growth() > 0
        # (log n)^(1/4) grows slower than sqrt(log n)
        with pytest.raises(DomainError):
            LogPowerWeight(beta=0.25).check_growth()

    def test_to_dict(self):
        assert LogPowerWeight(beta=1.5, shift=3.0).to_dict() == {"family": "log_power", "beta": 1.5, "shift": 3.0}


class TestLogLogWeight:
    def test_value_matches_log_argument(self):
        phi = LogLogWeight(h=0.5)
        u = np.array([2.0, 5.0, 20.0])
        np.testing.assert_allclose(phi.value_at_log(u), phi.value(np.exp(u)), rtol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(min_value=1.0, max_value=30.0))
    def test_generalized_inverse_is_minimal(self, x):
        phi = LogLogWeight(h=0.5)
        F = phi.inverse(x)
        if F is None:
            assert phi.log_inverse(x) >= EXACT_LOG_LIMIT
            return
        assert phi.value(F) >= x
        assert F == 1 or phi.value(F - 1) < x

    def test_huge_level_in_log_scale(self):
        phi = LogLogWeight(h=0.5)
        u = phi.log_inverse(1e4)
        assert np.isfinite(u)
        assert phi.value_at_log(u) == pytest.approx(1e4, rel=1e-9)

    def test_invalid(self):
        with pytest.raises(DomainError):
            LogLogWeight(h=0.0)
        with pytest.raises(DomainError):
            LogLogWeight(h=0.5, shift=0.5)


class TestCallableWeight:
    def test_inverse(self):
        phi = CallableWeight(np.sqrt, name="sqrt")
        assert phi.inverse(3.0) == 9
        assert phi.inverse(0.5) == 1
        assert phi.to_dict() == {"family": "callable", "name": "sqrt"}

    def test_unbounded_search_fails(self):
        phi = CallableWeight(lambda x: np.minimum(x, 10.0), name="capped")
        with pytest.raises(DomainError):
            phi.inverse(11.0)
