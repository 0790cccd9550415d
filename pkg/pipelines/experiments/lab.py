from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from common.csv_helper import CSVHelper
from common.logging_config import log_to_file
from common.utils import check_literal_values, format_dict_str, get_config_id, write_json

from . import (
    pipeline_aperiodic,
    pipeline_chaining,
    pipeline_dichotomy,
    pipeline_entropy,
    pipeline_sequence,
    pipeline_sidak,
    pipeline_smallball,
    pipeline_ultra,
)
from .config import ExperimentKind
from .functions import RunLogger, log_check, plot_frame, write_tables

import logging
logger = logging.getLogger(__name__)

# experiment -> pipeline entry point, one task per experiment
EXPERIMENT_PIPELINES = {
    "entropy": pipeline_entropy.main,
    "smallball": pipeline_smallball.main,
    "dichotomy": pipeline_dichotomy.main,
    "sequence": pipeline_sequence.main,
    "chaining": pipeline_chaining.main,
    "ultra": pipeline_ultra.main,
    "sidak": pipeline_sidak.main,
    "aperiodic": pipeline_aperiodic.main,
}

PLOT_FILE = "plot_data.csv"
SUMMARY_FILE = "summary.json"
RUN_LOG = "run.log"


@dataclass
class RunReport:
    """
    Outcome of one experiment run. Everything except `wall_clock` is a function of the
    resolved config alone.
    """
    experiment: str
    config: dict
    config_id: str
    tables: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    series: list = field(default_factory=list)
    wall_clock: float | None = None

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failed_checks(self) -> list[str]:
        return [check.name for check in self.checks if not check.passed]

    def summary(self) -> dict:
        """The deterministic part of the report, written to summary.json."""
        return {
            "experiment": self.experiment,
            "config_id": self.config_id,
            "seed": self.config.get("seed"),
            "passed": self.passed,
            "checks": {c.name: {"passed": c.passed, "details": c.details} for c in self.checks},
            "fits": self.fits,
            "tables": sorted(self.tables),
        }


def run_experiment(params: dict) -> RunReport:
    """
    Runs one experiment and writes its outputs under `params["out"]`: manifest.json,
    one CSV per table, summary.json, plot_data.csv, run.log and any JSON artifacts.

    Args:
        params (dict): Resolved parameters, as returned by `ExperimentParams.get_params`.

    Returns:
        RunReport: Tables, fits and checks of the run.
    """
    experiment = check_literal_values(params["experiment"], "experiment", ExperimentKind)
    out_dir = Path(params["out"])
    with log_to_file(out_dir / RUN_LOG):
        return _run_pipeline(experiment, params, out_dir)


def _run_pipeline(experiment: str, params: dict, out_dir: Path) -> RunReport:
    logger.info(format_dict_str(params, header=f"Experiment {experiment} params:"))

    run_logger = RunLogger(params, out_dir)
    run_logger.start()
    try:
        output = EXPERIMENT_PIPELINES[experiment](params=params)
    except Exception as e:
        run_logger.finish(status="error", error=f"{type(e).__name__}: {e}")
        raise

    # ----------------------------------------------------outputs-------------------------------------------------------
    write_tables(output.tables, out_dir)
    for name, obj in output.artifacts.items():
        write_json(obj, out_dir / f"{name}.json")
    for check in output.checks:
        log_check(check)

    report = RunReport(
        experiment=experiment,
        config=params,
        config_id=get_config_id(params),
        tables=output.tables,
        fits=output.fits,
        checks=output.checks,
        series=output.series,
    )
    write_json(report.summary(), out_dir / SUMMARY_FILE)
    emit_plot_data(report, out_dir / PLOT_FILE)

    run_logger.finish(status="passed" if report.passed else "failed", failed_checks=report.failed_checks())
    report.wall_clock = run_logger.wall_clock
    logger.info(f"Experiment {experiment} finished in {report.wall_clock:.2f}s, passed={report.passed}")
    return report


def emit_plot_data(report: RunReport, path: str | Path) -> Path:
    """Long-format (series, x, y) CSV of the report's plot series; header only for an empty report."""
    path = Path(path)
    return CSVHelper(path.parent).df_to_table(plot_frame(report.series), path.name)


def read_plot_data(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    return CSVHelper(path.parent).table_to_df(path.name)
