import numpy as np
import pandas as pd
import pytest

from pipelines.experiments.config import ExperimentParams
from pipelines.experiments.pipeline_chaining import consistency_table, ratio_spread
from pipelines.experiments.pipeline_entropy import process_entropy
from pipelines.experiments.pipeline_sequence import deficit_fit
from smallball_lab.loud import LoudFamily, PadicGrid
from smallball_lab.procs import LoudSeries, ScaledLoud
from smallball_lab.weights import LogPowerWeight

FAM = LoudFamily(p=2, A=2, alpha=0.5)

ENTROPY = {"epsilon_exponents": list(range(0, 6)), "fit_exponents": [3, 5], "saturation_fraction": 0.25, "n_workers": 1}


class TestEntropy:
    def test_half_period_slope_of_series(self):
        grid = PadicGrid(2, 14, span_level=2 * FAM.A)
        curve, fit = process_entropy(LoudSeries(FAM), grid, ENTROPY)
        assert fit["n_points"] == 3
        assert not curve["saturated"].any()
        assert 1.6 <= fit["slope"] <= 2.4
        assert fit["bracket_ok"]

    def test_scaled_loud_brackets_hold(self):
        grid = PadicGrid(2, 12, span_level=2 * FAM.A)
        _, fit = process_entropy(ScaledLoud(FAM), grid, ENTROPY)
        assert fit["bracket_ok"]
        assert np.isfinite(fit["slope"])


class TestChainingRatio:
    def test_spread_is_finite_and_within_band(self):
        params = ExperimentParams("chaining", "dev").get_params()
        phi = LogPowerWeight(beta=params["beta"], shift=params["shift"])
        df, _ = consistency_table(phi, params)
        assert df["certified"].all()
        assert (df["exponent_ratio"] > 0).all()
        spread = ratio_spread(df)
        assert np.isfinite(spread)
        assert spread < np.log(params["ratio_band"])

    def test_spread_of_known_ratios(self):
        df = pd.DataFrame({"exponent_ratio": [100.0, 150.0, 120.0]})
        assert ratio_spread(df) == pytest.approx(np.log(1.5))

    @pytest.mark.parametrize("ratios", [[100.0, np.nan], [100.0, 0.0], [100.0, -3.0], []])
    def test_missing_ratio_is_unstable(self, ratios):
        assert ratio_spread(pd.DataFrame({"exponent_ratio": ratios}, dtype=float)) == np.inf


class TestDeficitFit:
    def test_uncertified_rows_excluded(self, caplog):
        eps = np.array([0.01, 0.02, 0.05, 0.1, 0.2])
        df = pd.DataFrame({
            "epsilon": eps,
            "log_deficit": 3.0 * np.log(1 / eps),
            "certified": [True, True, True, True, False],
        })
        # the uncertified row would bend the power law
        df.loc[4, "log_deficit"] = 50.0
        fit = deficit_fit(df)
        assert fit["n_excluded"] == 1
        assert fit["n_points"] == 4
        assert "left out of the slope fit" in caplog.text

    def test_all_rows_certified(self):
        eps = np.array([0.01, 0.05, 0.1])
        df = pd.DataFrame({"epsilon": eps, "log_deficit": 1 / eps**2, "certified": True})
        fit = deficit_fit(df)
        assert fit["n_excluded"] == 0
        assert fit["slope"] == pytest.approx(2.0)
