import numpy as np
import pandas as pd

from common.logging_config import setup_logging
from smallball_lab.loud import LoudFamily, PadicGrid
from smallball_lab.procs import LoudSeries, ScaledLoud
from smallball_lab.smallball import loudseries_sandwich, mc_small_ball, scaled_loud_exact

from .config import ExperimentParams
from .functions import CheckResult, ExperimentOutput, band_check, fit_record, seed_for

import logging
logger = logging.getLogger(__name__)

pipeline_name = "dichotomy"


def x2_law_table(fam: LoudFamily, exponents) -> pd.DataFrame:
    rows = []
    for j in sorted(exponents):
        eps = 2.0 ** -float(j)
        bounds = loudseries_sandwich(fam, eps)
        rows.append({"j": j, "epsilon": eps, "log_lower": bounds.log_lower, "log_upper": bounds.log_upper})
    df = pd.DataFrame(rows)
    df["log_log_inv_eps"] = np.log(np.log(1 / df["epsilon"]))
    return df


def mc_sandwich_table(fam: LoudFamily, params: dict) -> pd.DataFrame:
    grid = PadicGrid(fam.p, params["mc_grid_level"])
    model = LoudSeries(fam)
    rows = []
    for k, eps in enumerate(sorted(params["mc_epsilons"])):
        est = mc_small_ball(
            model, grid, eps, params["n_samples"], seed_for(params, k), n_workers=params["n_workers"]
        )
        bounds = loudseries_sandwich(fam, eps, max_level=grid.level)
        rows.append({
            "epsilon": eps,
            "p_hat": est.p_hat,
            "std_err": est.std_err,
            "n_samples": est.n_samples,
            "bias_note": est.bias_note,
            "log_lower": bounds.log_lower,
            "log_upper": bounds.log_upper,
        })
        logger.info(f"X2 MC eps={eps}: p_hat={est.p_hat:.4g} +- {est.std_err:.2g}")
    return pd.DataFrame(rows)


def main(**kwargs):
    # X1 = g f: linear small-ball law
    # X2 = sum g_k phi_k: log-square law
    # Monte Carlo sandwich for X2

    logger.info(f"Running pipeline {pipeline_name}")
    params = kwargs["params"]
    output = ExperimentOutput()
    fam = LoudFamily(**params["family"])

    # ----------------------------------------------------X1 linear law-------------------------------------------------
    eps1 = np.sort(np.asarray(params["x1_epsilons"], dtype=float))
    exact = scaled_loud_exact(ScaledLoud(fam), eps1)
    x1 = pd.DataFrame({
        "epsilon": eps1,
        "p_exact": exact.value,
        "log_p_exact": exact.log_value,
        "p_lower": exact.lower,
    })
    output.tables["x1_small_ball"] = x1
    output.add_series("logP_X1", x1["epsilon"], x1["log_p_exact"])
    x1_fit = fit_record(np.column_stack([x1["epsilon"], x1["p_exact"]]))
    output.fits["x1_slope"] = x1_fit
    output.checks.append(band_check(
        "x1_linear_small_ball", x1_fit["slope"], params["x1_slope_band"], sup_f=exact.sup_f
    ))

    # ----------------------------------------------------X2 log-square law---------------------------------------------
    x2 = x2_law_table(fam, params["x2_exponents"])
    output.tables["x2_sandwich"] = x2
    output.add_series("log_lower_X2", x2["epsilon"], x2["log_lower"])
    output.add_series("log_upper_X2", x2["epsilon"], x2["log_upper"])
    inv_log = np.log(1 / x2["epsilon"])
    fit_upper = fit_record(np.column_stack([inv_log, -x2["log_upper"]]))
    fit_lower = fit_record(np.column_stack([inv_log, -x2["log_lower"]]))
    output.fits["x2_slope_upper"] = fit_upper
    output.fits["x2_slope_lower"] = fit_lower
    lo, hi = params["x2_slope_band"]
    ordered = bool(np.all(x2["log_lower"] <= x2["log_upper"]))
    output.checks.append(CheckResult(
        name="x2_log_square_law",
        passed=bool(lo <= fit_upper["slope"] <= hi and lo <= fit_lower["slope"] <= hi and ordered),
        details={
            "slope_upper": fit_upper["slope"],
            "slope_lower": fit_lower["slope"],
            "band": [lo, hi],
            "lower_below_upper": ordered,
        },
    ))

    # ----------------------------------------------------Monte Carlo sandwich------------------------------------------
    mc = mc_sandwich_table(fam, params)
    output.tables["x2_mc"] = mc
    output.add_series("mc_X2", mc["epsilon"], mc["p_hat"])
    w_lo, w_hi = params["mc_window"]
    k = params["n_sigmas"]
    window = mc[(mc["p_hat"] >= w_lo) & (mc["p_hat"] <= w_hi)]
    inside = (np.exp(window["log_lower"]) - k * window["std_err"] <= window["p_hat"]) & (
        window["p_hat"] <= np.exp(window["log_upper"]) + k * window["std_err"]
    )
    output.checks.append(CheckResult(
        name="mc_sandwich",
        passed=bool(len(window) >= params["mc_min_points"] and inside.all()),
        details={
            "epsilons_in_window": window["epsilon"].tolist(),
            "outside": window.loc[~inside, "epsilon"].tolist(),
            "n_samples": params["n_samples"],
        },
    ))

    return output


if __name__ == "__main__":
    setup_logging()
    main(params=ExperimentParams(pipeline_name, "dev").get_params())
