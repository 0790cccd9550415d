import numpy as np
import pandas as pd

from common.logging_config import setup_logging
from smallball_lab.chaining import technical_condition_fit
from smallball_lab.errors import DomainError
from smallball_lab.procs import IndependentSequence
from smallball_lab.smallball import independent_product, mc_small_ball
from smallball_lab.weights import LogLogWeight, LogPowerWeight, SequenceWeight

from .config import ExperimentParams
from .functions import ExperimentOutput, band_check, fit_record, seed_for

import logging
logger = logging.getLogger(__name__)

pipeline_name = "sequence"


def product_table(phi: SequenceWeight, epsilons) -> pd.DataFrame:
    rows = []
    for eps in sorted(epsilons):
        try:
            bound = independent_product(phi, eps)
        except DomainError as e:
            logger.warning(f"Independent product {phi.to_dict()} at eps={eps}: {e}")
            rows.append({
                "epsilon": eps, "log_value": np.nan, "log_deficit": np.nan, "tail_log_bound": np.nan, "certified": False,
            })
            continue
        rows.append({
            "epsilon": eps,
            "log_value": bound.log_value,
            "log_deficit": bound.log_deficit,
            "tail_log_bound": bound.tail_log_bound,
            "certified": bound.certified,
        })
    return pd.DataFrame(rows)


def deficit_fit(df: pd.DataFrame) -> dict:
    """Slope of log log(1/P) = log(log_deficit) against log(1/eps) over the certified rows."""
    ok = df[df["certified"] & np.isfinite(df["log_deficit"]) & (df["log_deficit"] > 0)]
    if len(ok) < len(df):
        logger.warning(f"{len(df) - len(ok)} of {len(df)} products left out of the slope fit")
    fit = fit_record(np.column_stack([1 / ok["epsilon"], ok["log_deficit"]]))
    fit["n_excluded"] = len(df) - len(ok)
    return fit


def mc_spot_table(phi: SequenceWeight, params: dict) -> pd.DataFrame:
    model = IndependentSequence(phi, n_max=params["n_max"])
    grid = model.default_grid()
    rows = []
    for k, eps in enumerate(params["mc_epsilons"]):
        est = mc_small_ball(model, grid, eps, params["n_samples"], seed_for(params, k), n_workers=params["n_workers"])
        exact = independent_product(phi, eps, n_max=params["n_max"])
        rows.append({
            "epsilon": eps,
            "p_hat": est.p_hat,
            "std_err": est.std_err,
            "p_exact": float(np.exp(exact.log_value)),
            "n_samples": est.n_samples,
        })
    return pd.DataFrame(rows)


def main(**kwargs):
    # certified products for phi = (log(n + shift))^beta
    # log-log weight variant, reported
    # Monte Carlo on the truncated sequence

    logger.info(f"Running pipeline {pipeline_name}")
    params = kwargs["params"]
    output = ExperimentOutput()
    beta = params["beta"]
    phi = LogPowerWeight(beta=beta, shift=params["shift"])

    # ----------------------------------------------------log-power law-------------------------------------------------
    df = product_table(phi, params["epsilons"])
    output.tables["sequence_products"] = df
    output.add_series("log_deficit", df["epsilon"], df["log_deficit"])
    fit = deficit_fit(df)
    output.fits["sequence_slope"] = fit
    target = 2 / (2 * beta - 1) if beta > 0.5 else np.inf
    tol = params["slope_tol"]

    # ----------------------------------------------------log-log weight------------------------------------------------
    loglog = LogLogWeight(h=params["loglog_h"], shift=params["shift"])
    df_loglog = product_table(loglog, params["loglog_epsilons"])
    output.tables["sequence_products_loglog"] = df_loglog
    output.fits["sequence_slope_loglog"] = deficit_fit(df_loglog)
    output.fits["technical_condition"] = technical_condition_fit(phi)

    # ----------------------------------------------------Monte Carlo spot check----------------------------------------
    mc = mc_spot_table(phi, params)
    output.tables["sequence_mc"] = mc
    k = params["n_sigmas"]
    agree = np.abs(mc["p_hat"] - mc["p_exact"]) <= k * np.maximum(mc["std_err"], 1 / mc["n_samples"])

    check = band_check("sequence_log_law", fit["slope"], [target - tol, target + tol], target=target)
    check.details.update({"mc_agree": agree.tolist(), "mc_epsilons": mc["epsilon"].tolist()})
    check.passed = bool(check.passed and agree.all())
    output.checks.append(check)

    return output


if __name__ == "__main__":
    setup_logging()
    main(params=ExperimentParams(pipeline_name, "dev").get_params())
