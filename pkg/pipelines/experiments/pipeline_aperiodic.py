import numpy as np

from common.logging_config import setup_logging
from smallball_lab.procs import AperiodicCoprime, aperiodic_increment_check, condition_report, default_aperiodic_spec

from .config import ExperimentParams
from .functions import CheckResult, ExperimentOutput

import logging
logger = logging.getLogger(__name__)

pipeline_name = "aperiodic"


def main(**kwargs):
    # growth conditions on alpha_p over the prime set
    # exact increment lower bounds at p-adic lags

    logger.info(f"Running pipeline {pipeline_name}")
    params = kwargs["params"]
    output = ExperimentOutput()
    spec = default_aperiodic_spec(params["prime_set"], beta=params["beta"])

    # ----------------------------------------------------conditions----------------------------------------------------
    conditions, flags = condition_report(spec, h=params["h"])
    output.tables["aperiodic_conditions"] = conditions
    output.fits["conditions"] = flags
    output.add_series("alpha_p", conditions["p"], conditions["alpha_p"])

    # ----------------------------------------------------increments----------------------------------------------------
    df = aperiodic_increment_check(AperiodicCoprime(spec), params["m_values"], params["max_pairs"])
    output.tables["aperiodic_increments"] = df
    df["margin"] = df["min_distance"] / df["bound"]
    output.fits["min_margin"] = float(df["margin"].min())
    for p, rows in df.groupby("p"):
        output.add_series(f"min_distance_p{p}", rows["lag"], rows["min_distance"])

    n_violations = int(df["violations"].sum())
    if n_violations:
        bad = df.loc[df["violations"] > 0, ["p", "m"]].to_dict("records")
        logger.warning(f"Increment bound violated at {bad}")
    output.checks.append(CheckResult(
        name="aperiodic_increments",
        passed=bool(n_violations == 0 and flags["alpha_decreasing"] and np.isfinite(flags["sup_norm_summable"])),
        details={"violations": n_violations, "n_pairs": int(df["n_pairs"].sum()), **flags},
    ))

    return output


if __name__ == "__main__":
    setup_logging()
    main(params=ExperimentParams(pipeline_name, "dev").get_params())
