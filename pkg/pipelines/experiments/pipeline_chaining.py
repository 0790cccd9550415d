import numpy as np
import pandas as pd

from common.logging_config import setup_logging
from smallball_lab.chaining import (
    MajorizingMeasure,
    SieveChain,
    WeightSequence,
    h_curve,
    interval_chain,
    interval_entropy_integral,
    n_of_epsilon,
    sieve_ball_check,
    technical_condition_fit,
)
from smallball_lab.covernum import FiniteMetricSpace
from smallball_lab.errors import ChainDepthError
from smallball_lab.loud import LoudFamily, PadicGrid, loud_constants
from smallball_lab.procs import LoudSeries
from smallball_lab.smallball import independent_product
from smallball_lab.weights import LogPowerWeight, SequenceWeight

from .config import ExperimentParams
from .functions import CheckResult, ExperimentOutput

import logging
logger = logging.getLogger(__name__)

pipeline_name = "chaining"


def sieve_levels(phi: SequenceWeight, v: WeightSequence, epsilons, depth: int) -> tuple[SieveChain, object, list]:
    """Sieve deep enough to certify every radius, its H curve and the levels n(eps)."""
    while True:
        sieve = SieveChain(phi, depth)
        curve = sieve.h_curve(v)
        try:
            levels = [n_of_epsilon(sieve, None, v, eps, sieve.sigma, curve) for eps in epsilons]
            return sieve, curve, levels
        except ChainDepthError as e:
            if e.required_depth is None or e.required_depth <= depth:
                raise
            logger.warning(f"Sieve depth {depth} too shallow, rebuilding with depth {e.required_depth}")
            depth = e.required_depth


def consistency_table(phi: SequenceWeight, params: dict) -> tuple[pd.DataFrame, SieveChain]:
    """
    Exact log(-log P{sup |G_n| <= 2 eps sigma}) against log(N_{n(eps)} log(1/eps)) per radius.

    For phi = log^beta both grow like eps^(-2 / (2 beta - 1)), so their quotient
    `exponent_ratio` is the constant of the bound up to the rounding of n(eps) to a whole level.
    """
    v = WeightSequence.squares()
    epsilons = sorted(params["epsilons"])
    sieve, curve, levels = sieve_levels(phi, v, epsilons, params["sieve_depth"])
    rows = []
    for eps, n in zip(epsilons, levels):
        log_exponent = float(curve.log_n_cells[n] + np.log(np.log(1 / eps)))
        exact = independent_product(phi, 2 * eps * sieve.sigma)
        rows.append({
            "epsilon": eps,
            "level": n,
            "log_n_cells": float(curve.log_n_cells[n]),
            "H_certified": curve.certified(n),
            "log_mm_exponent": log_exponent,
            "log_deficit": exact.log_deficit,
            # log of (-log P) / (N log 1/eps)
            "log_ratio": exact.log_deficit - log_exponent,
            "exponent_ratio": log_exponent / exact.log_deficit if exact.log_deficit > 0 else np.nan,
            "certified": exact.certified,
        })
    df = pd.DataFrame(rows)
    df["bound_holds"] = df["log_deficit"] <= df["log_mm_exponent"]
    return df, sieve


def ratio_spread(df: pd.DataFrame) -> float:
    """log of max / min of `exponent_ratio`; inf when a ratio is missing or not positive."""
    ratio = df["exponent_ratio"].to_numpy(dtype=float)
    if ratio.size == 0 or not np.all(np.isfinite(ratio) & (ratio > 0)):
        return np.inf
    return float(np.log(ratio.max()) - np.log(ratio.min()))


def interval_table(params: dict) -> pd.DataFrame:
    """
    Interval chain of the Loud series with delta(h) = c2 h^alpha, D = c2, the uniform
    measure on a half-open dyadic grid and omega(u) = log2(2D/u)^-2; H(n) against the
    entropy integral.
    """
    fam = LoudFamily(p=2, A=2, alpha=0.5)
    D = loud_constants(fam).c2
    alpha = fam.alpha

    def delta_inverse(u):
        return (u / D) ** (1 / alpha)

    def omega(u):
        return 1.0 / np.log2(2 * D / np.asarray(u, dtype=float)) ** 2

    grid = PadicGrid(fam.p, params["interval_grid_level"])
    points = grid.points[:-1]
    space = FiniteMetricSpace.from_basis(LoudSeries(fam).basis(grid)[:-1], ordered=True)
    chain = interval_chain(points, delta_inverse, params["interval_depth"], D=D)
    chain.verify(space)
    curve = h_curve(chain, MajorizingMeasure.uniform(points.size), WeightSequence.modulus(omega, D))
    rows = []
    for n in params["interval_levels"]:
        H = curve.certified(n)
        integral = interval_entropy_integral(delta_inverse, omega, D, n)
        rows.append({"level": n, "H_certified": H, "integral": integral, "bound_holds": bool(H <= integral)})
    return pd.DataFrame(rows)


def main(**kwargs):
    # sieve chain of the independent sequence against its exact products
    # ball structure of the sieve
    # interval chain and its entropy integral

    logger.info(f"Running pipeline {pipeline_name}")
    params = kwargs["params"]
    output = ExperimentOutput()
    phi = LogPowerWeight(beta=params["beta"], shift=params["shift"])

    # ----------------------------------------------------lower exponent vs exact product-------------------------------
    df, sieve = consistency_table(phi, params)
    output.tables["chaining_consistency"] = df
    output.add_series("log_mm_exponent", df["epsilon"], df["log_mm_exponent"])
    output.add_series("log_deficit_2eps_sigma", df["epsilon"], df["log_deficit"])
    spread = ratio_spread(df)
    ratio_stable = bool(spread < np.log(params["ratio_band"]))
    output.fits["log_ratio_spread"] = spread
    output.fits["ratio_stable"] = ratio_stable
    output.fits["technical_condition"] = technical_condition_fit(phi)

    # ----------------------------------------------------sieve ball structure------------------------------------------
    balls = sieve_ball_check(sieve, params["ball_check_n_max"], depth=params["ball_check_depth"])
    output.tables["sieve_ball_check"] = balls
    ball_violations = int(balls["singleton_violations"].sum() + balls["tail_violations"].sum())

    # ----------------------------------------------------interval example----------------------------------------------
    interval = interval_table(params)
    output.tables["interval_bound"] = interval

    output.checks.append(CheckResult(
        name="chaining_consistency",
        passed=bool(
            df["bound_holds"].all()
            and df["certified"].all()
            and ratio_stable
            and ball_violations == 0
            and interval["bound_holds"].all()
        ),
        details={
            "bound_holds": df["bound_holds"].tolist(),
            "certified": df["certified"].tolist(),
            "ball_violations": ball_violations,
            "interval_bound_holds": interval["bound_holds"].tolist(),
            "log_ratio_spread": spread,
            "ratio_band": params["ratio_band"],
            "sieve_depth": sieve.depth,
        },
    ))

    return output


if __name__ == "__main__":
    setup_logging()
    main(params=ExperimentParams(pipeline_name, "dev").get_params())
