import numpy as np
import pandas as pd

from common.logging_config import setup_logging
from smallball_lab.gaussmath import SeedSpec, block_generator
from smallball_lab.smallball import sidak_check

from .config import ExperimentParams
from .functions import CheckResult, ExperimentOutput, seed_for

import logging
logger = logging.getLogger(__name__)

pipeline_name = "sidak"

# matrices are drawn from this substream of the run seed, the Monte Carlo from 0..n_matrices
MATRIX_STREAM = 10_000


def random_correlation(seed: SeedSpec, dim: int) -> np.ndarray:
    """Correlation matrix of a Wishart draw; full rank almost surely."""
    A = block_generator(seed).standard_normal((dim, dim + 1))
    C = A @ A.T
    sd = np.sqrt(np.diag(C))
    C = C / np.outer(sd, sd)
    np.fill_diagonal(C, 1.0)
    return (C + C.T) / 2


def main(**kwargs):
    # random correlation matrices: product of marginals never above the joint probability
    # identity covariance: product and joint agree

    logger.info(f"Running pipeline {pipeline_name}")
    params = kwargs["params"]
    output = ExperimentOutput()
    z, dim, n = params["z"], params["dim"], params["n_samples"]

    # ----------------------------------------------------random matrices-----------------------------------------------
    rows = []
    for i in range(params["n_matrices"]):
        C = random_correlation(seed_for(params, MATRIX_STREAM + i), dim)
        report = sidak_check(C, z, n, seed_for(params, i))
        rows.append({
            "matrix": i,
            "min_offdiag": float(C[~np.eye(dim, dtype=bool)].min()),
            "max_offdiag": float(C[~np.eye(dim, dtype=bool)].max()),
            "joint_p_hat": report.joint_p_hat,
            "std_err": report.std_err,
            "product": report.product,
            "violation": report.violation,
        })
    df = pd.DataFrame(rows)
    output.tables["sidak"] = df
    output.add_series("sidak_gap", df["matrix"], df["joint_p_hat"] - df["product"])

    # ----------------------------------------------------identity------------------------------------------------------
    ident = sidak_check(np.eye(dim), z, n, seed_for(params, params["n_matrices"]))
    k = params["n_sigmas"]
    identity_agrees = bool(abs(ident.joint_p_hat - ident.product) <= k * max(ident.std_err, 1 / n))
    output.tables["sidak_identity"] = pd.DataFrame([{
        "dim": dim,
        "joint_p_hat": ident.joint_p_hat,
        "std_err": ident.std_err,
        "product": ident.product,
        "agrees": identity_agrees,
    }])

    n_violations = int(df["violation"].sum())
    output.checks.append(CheckResult(
        name="sidak_sanity",
        passed=bool(n_violations == 0 and identity_agrees),
        details={
            "n_matrices": len(df),
            "violations": n_violations,
            "identity_agrees": identity_agrees,
            "min_gap": float((df["joint_p_hat"] - df["product"]).min()),
        },
    ))

    return output


if __name__ == "__main__":
    setup_logging()
    main(params=ExperimentParams(pipeline_name, "dev").get_params())
