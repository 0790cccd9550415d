import numpy as np
import pandas as pd

from common.logging_config import setup_logging
from smallball_lab.smallball import geometric_ratio_constants, talagrand_lower_bound

from .config import ExperimentParams
from .functions import CheckResult, ExperimentOutput

import logging
logger = logging.getLogger(__name__)

pipeline_name = "smallball"


def ratio_table(rho: float, epsilons) -> pd.DataFrame:
    df = pd.DataFrame([geometric_ratio_constants(rho, eps) for eps in sorted(epsilons, reverse=True)])
    df.insert(0, "rho", rho)
    return df


def within_band(values: pd.Series, factor: float) -> bool:
    """All values within a factor of their median."""
    med = float(values.median())
    return bool(med > 0 and np.all(values <= factor * med) and np.all(values >= med / factor))


def main(**kwargs):
    # geometric sums: two-sided (log 1/eps)^2 constants
    # Talagrand entropy lower bound, reported

    logger.info(f"Running pipeline {pipeline_name}")
    params = kwargs["params"]
    output = ExperimentOutput()

    # ----------------------------------------------------geometric ratio constants-------------------------------------
    factor = params["band_factor"]
    per_rho = {}
    for rho in params["rhos"]:
        df = ratio_table(rho, params["epsilons"])
        output.tables[f"geometric_ratio_rho_{rho:g}"] = df
        output.add_series(f"ratio_lower_rho_{rho:g}", df["epsilon"], df["ratio_lower"])
        output.add_series(f"ratio_upper_rho_{rho:g}", df["epsilon"], df["ratio_upper"])
        per_rho[f"{rho:g}"] = {
            "lower_band": within_band(df["ratio_lower"], factor),
            "upper_band": within_band(df["ratio_upper"], factor),
            "lower_below_upper": bool(np.all(df["log_lower"] <= df["log_upper"])),
            "median_lower": float(df["ratio_lower"].median()),
            "median_upper": float(df["ratio_upper"].median()),
        }
    output.checks.append(CheckResult(
        name="geometric_ratio_band",
        passed=all(r["lower_band"] and r["upper_band"] and r["lower_below_upper"] for r in per_rho.values()),
        details={"band_factor": factor, **per_rho},
    ))

    # ----------------------------------------------------Talagrand lower bound-----------------------------------------
    exponent = params["entropy_exponent"]
    rows = []
    for eps in sorted(params["epsilons"], reverse=True):
        report = talagrand_lower_bound(lambda e: e**-exponent, params["talagrand_K"], eps)
        rows.append({"epsilon": eps, "log_bound": report.log_bound, "c1": report.c1, "c2": report.c2,
                     "doubling_ok": report.doubling_ok})
    output.tables["talagrand"] = pd.DataFrame(rows)

    return output


if __name__ == "__main__":
    setup_logging()
    main(params=ExperimentParams(pipeline_name, "dev").get_params())
