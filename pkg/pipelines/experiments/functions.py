import datetime as dt
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from common.csv_helper import CSVHelper
from common.utils import get_config_id, to_jsonable, write_json
from smallball_lab.covernum import fit_loglog_slope
from smallball_lab.errors import DomainError
from smallball_lab.gaussmath import SeedSpec

import logging
logger = logging.getLogger(__name__)

# key columns guarded against duplicates when a table is written
TABLE_KEYS = ("epsilon", "level", "lag", "p", "m", "rho", "space", "matrix")


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)


@dataclass
class ExperimentOutput:
    """What a pipeline hands back to the harness."""
    tables: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    # (series, x, y) triples for the long plot table
    series: list = field(default_factory=list)
    # name -> JSON-able object written as <out>/<name>.json
    artifacts: dict = field(default_factory=dict)

    def add_series(self, name: str, x, y) -> None:
        self.series.append((name, np.asarray(x, dtype=float), np.asarray(y, dtype=float)))


def seed_for(params: dict, stream: int) -> SeedSpec:
    """Substream `stream` of the run's master seed; every estimate in a run uses its own stream."""
    return SeedSpec(int(params["seed"]), int(stream))


def fit_record(points, x_range=None) -> dict:
    """Log-log fit as a plain dict; a fit with too few points is recorded with NaNs."""
    try:
        fit = fit_loglog_slope(points, x_range)
    except DomainError as e:
        logger.warning(f"Slope fit skipped: {e}")
        return {"slope": np.nan, "intercept": np.nan, "r_squared": np.nan, "n_points": 0}
    return fit._asdict()


def band_check(name: str, value: float, band, **details) -> CheckResult:
    lo, hi = band
    passed = bool(np.isfinite(value) and lo <= value <= hi)
    return CheckResult(name=name, passed=passed, details={"value": value, "band": list(band), **details})


def log_check(check: CheckResult) -> None:
    status = "PASS" if check.passed else "FAIL"
    message = f"Check {check.name}: {status} {to_jsonable(check.details)}"
    if check.passed:
        logger.info(message)
    else:
        logger.warning(message)


def plot_frame(series: list) -> pd.DataFrame:
    """Long-format (series, x, y) frame; header only when there are no series."""
    frames = [pd.DataFrame({"series": name, "x": x, "y": y}) for name, x, y in series]
    if not frames:
        return pd.DataFrame({"series": pd.Series(dtype=str), "x": pd.Series(dtype=float), "y": pd.Series(dtype=float)})
    return pd.concat(frames, ignore_index=True)


def write_tables(tables: dict, out_dir: str | Path) -> list[Path]:
    return CSVHelper(out_dir).write_tables(tables, TABLE_KEYS)


class RunLogger:
    """
    Records the lifetime of a run in `manifest.json`: the resolved config, its fingerprint,
    start and finish timestamps and the wall clock. The manifest is rewritten at finish.
    """

    def __init__(self, params: dict, out_dir: str | Path):
        self.params = params
        self.out_dir = Path(out_dir)
        self.manifest = {
            "experiment": params["experiment"],
            "seed": params["seed"],
            "config_id": get_config_id(params),
            "config": params,
        }
        self._t0 = None

    def get_manifest(self) -> dict:
        return self.manifest

    def start(self) -> Path:
        self._t0 = time.perf_counter()
        self.manifest["started_at"] = dt.datetime.now().isoformat()
        return write_json(self.manifest, self.out_dir / "manifest.json")

    def finish(self, **extra) -> Path:
        self.manifest["finished_at"] = dt.datetime.now().isoformat()
        self.manifest["wall_clock_s"] = time.perf_counter() - self._t0 if self._t0 is not None else None
        self.manifest.update(extra)
        return write_json(self.manifest, self.out_dir / "manifest.json")

    @property
    def wall_clock(self) -> float | None:
        return self.manifest.get("wall_clock_s")
