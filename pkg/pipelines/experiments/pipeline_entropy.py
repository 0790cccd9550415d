import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from common.logging_config import setup_logging
from smallball_lab.covernum import FiniteMetricSpace, entropy_curve
from smallball_lab.loud import (
    LoudFamily,
    PadicGrid,
    loud_constants,
    loud_lag_pairs,
    lower_increment_certified,
    teeth_at,
)
from smallball_lab.procs import Lifshits, LoudSeries, ScaledLoud, fit_increment_constant

from .config import ExperimentParams
from .functions import CheckResult, ExperimentOutput, band_check, fit_record

import logging
logger = logging.getLogger(__name__)

pipeline_name = "entropy"


def process_entropy(model, grid: PadicGrid, params: dict) -> tuple[pd.DataFrame, dict]:
    """
    Entropy curve of `model` on `grid` and the fit of log n_cover against log(1/eps)
    over the unsaturated rows with j in `fit_exponents`.
    """
    space = FiniteMetricSpace.from_basis(model.basis(grid), ordered=True)
    D = space.diameter()
    j = np.sort(np.asarray(params["epsilon_exponents"], dtype=float))
    curve = entropy_curve(
        space,
        D * 2.0**-j,
        saturation_fraction=params["saturation_fraction"],
        n_workers=params["n_workers"],
    )
    curve.insert(0, "j", j)
    j_lo, j_hi = params["fit_exponents"]
    fit_rows = curve[(curve["j"] >= j_lo) & (curve["j"] <= j_hi) & ~curve["saturated"]]
    fit = fit_record(np.column_stack([1 / fit_rows["epsilon"], fit_rows["n_cover"]]))
    fit["D"] = D
    fit["bracket_ok"] = bool(
        np.all(curve["n_packing_2eps"] <= curve["n_cover"]) and np.all(curve["n_cover"] <= curve["n_packing"])
    )
    if curve["saturated"].any():
        logger.warning(
            f"{model.kind}: {int(curve['saturated'].sum())} of {len(curve)} radii saturate the grid of {len(grid)} points"
        )
    return curve, fit


def increment_suite(fam: LoudFamily, level: int, lag_levels) -> tuple[pd.DataFrame, pd.DataFrame]:
    """
    All pairs of the level grid against the two-sided increment bounds, and the Loud
    function at its special lags.
    """
    c = loud_constants(fam)
    slack = 2 * fam.tail_tol
    grid = PadicGrid(fam.p, level)
    T = grid.teeth_matrix(fam)
    f = T.sum(axis=1)
    I, J = np.triu_indices(len(grid), 1)
    lag = (J - I) * grid.mesh
    dist = cdist(T, T)[I, J]
    df = np.abs(f[I] - f[J])
    scale = lag**fam.alpha
    certified = lower_increment_certified(fam, I, J, level)
    below = dist < c.c1 * scale - slack

    summary = pd.DataFrame([
        {"bound": "c1_lower_certified", "constant": c.c1, "n_pairs": int(certified.sum()),
         "violations": int(np.sum(certified & below))},
        {"bound": "c1_lower_uncertified", "constant": c.c1, "n_pairs": int(np.sum(~certified)),
         "violations": int(np.sum(~certified & below))},
        {"bound": "c2_upper", "constant": c.c2, "n_pairs": int(I.size),
         "violations": int(np.sum(dist > c.c2 * scale + slack))},
        {"bound": "K_script_upper", "constant": c.K_script, "n_pairs": int(I.size),
         "violations": int(np.sum(df > c.K_script * scale + slack))},
    ])

    rows = []
    for m in lag_levels:
        s, t, lag_level = loud_lag_pairs(fam, m, grid)
        lag_m = float(fam.p) ** (-2 * fam.A * (m + 1))
        diff = np.abs(teeth_at(fam, s, lag_level).sum(axis=1) - teeth_at(fam, t, lag_level).sum(axis=1))
        bound = c.kappa * lag_m**fam.alpha
        rows.append({
            "m": m,
            "lag": lag_m,
            "n_pairs": int(s.size),
            "bound": bound,
            "min_increment": float(diff.min()) if diff.size else np.nan,
            "violations": int(np.sum(diff < bound - slack)),
        })
    return summary, pd.DataFrame(rows)


def main(**kwargs) -> ExperimentOutput:
    # entropy curves of X1 and X2
    # increment bounds of the Loud family
    # Lifshits increments

    logger.info(f"Running pipeline {pipeline_name}")
    params = kwargs["params"]
    output = ExperimentOutput()
    fam = LoudFamily(**params["family"])
    # every tooth is periodic and symmetric on [0, p^-2A], so that half-period carries all
    # distances of [0, 1] and the grid spends its points there
    grid = PadicGrid(fam.p, params["grid_level"], span_level=2 * fam.A)

    # ----------------------------------------------------entropy curves------------------------------------------------
    fits = {}
    for label, model in (("X1", ScaledLoud(fam)), ("X2", LoudSeries(fam))):
        curve, fits[label] = process_entropy(model, grid, params)
        output.tables[f"entropy_{label}"] = curve
        suffix = "" if label == "X2" else f"_{label}"
        output.add_series(f"n_cover{suffix}", curve["epsilon"], curve["n_cover"])
        output.add_series(f"n_packing{suffix}", curve["epsilon"], curve["n_packing"])
        logger.info(f"{label}: entropy slope {fits[label]['slope']:.3f} over {fits[label]['n_points']} radii")
    output.fits.update({f"entropy_slope_{k}": v for k, v in fits.items()})

    slope_check = band_check(
        "entropy_slope",
        fits["X2"]["slope"],
        params["slope_band"],
        n_points=fits["X2"]["n_points"],
        slope_X1=fits["X1"]["slope"],
        bracket_ok_X1=fits["X1"]["bracket_ok"],
        bracket_ok_X2=fits["X2"]["bracket_ok"],
    )
    slope_check.passed = bool(
        slope_check.passed and fits["X2"]["n_points"] >= 3 and fits["X1"]["bracket_ok"] and fits["X2"]["bracket_ok"]
    )
    output.checks.append(slope_check)

    # ----------------------------------------------------increment bounds----------------------------------------------
    summary, lags = increment_suite(fam, params["increment_grid_level"], params["lag_levels"])
    output.tables["increment_bounds"] = summary
    output.tables["increment_lags"] = lags
    asserted = summary[summary["bound"] != "c1_lower_uncertified"]
    output.checks.append(CheckResult(
        name="increment_bounds",
        passed=bool(asserted["violations"].sum() == 0 and lags["violations"].sum() == 0),
        details={
            "violations": {row.bound: int(row.violations) for row in summary.itertuples()},
            "lag_violations": int(lags["violations"].sum()),
            "grid_level": params["increment_grid_level"],
        },
    ))

    # ----------------------------------------------------Lifshits increments-------------------------------------------
    lifshits = Lifshits(alpha=params["lifshits_alpha"])
    lifshits_fit = fit_increment_constant(lifshits, exponent=lifshits.alpha / 2)
    output.tables["lifshits_increments"] = lifshits_fit
    output.fits["lifshits_min_ratio"] = float(lifshits_fit["min_ratio"].min())

    return output


if __name__ == "__main__":
    setup_logging()
    main(params=ExperimentParams(pipeline_name, "dev").get_params())
