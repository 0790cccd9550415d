from copy import deepcopy
from pathlib import Path
from typing import Any, Literal

from sentinels import Sentinel

from common.utils import check_literal_values, read_json
from smallball_lab.errors import ConfigError

import logging
logger = logging.getLogger(__name__)

MISSING = Sentinel("MISSING")

# Defines params for a run
ParamsProfile = Literal["dev", "prod"]
ExperimentKind = Literal[
    "entropy", "smallball", "dichotomy", "sequence", "chaining", "ultra", "sidak", "aperiodic"
]

# keys holding epsilon schedules; they must be non-empty lists of positive numbers
SCHEDULE_SUFFIXES = ("epsilons", "exponents")
# keys of the top-level section that are not experiment specific
COMMON_KEYS = ("experiment", "profile", "seed", "out", "n_workers", "n_samples")


class ExperimentParams:
    COMMON = {
        "seed": 20240607,
        "n_workers": 1,
        "out": "results/{experiment}",
        # Monte Carlo paths per estimate; experiments without sampling ignore it
        "n_samples": {"dev": 20_000, "prod": 100_000},
    }

    LOUD_FAMILY = {"p": 2, "A": 2, "alpha": 0.5, "tail_tol": 1e-12}

    EXPERIMENTS = {
        "entropy": {
            "family": LOUD_FAMILY,
            # mesh p^-grid_level on one half-period [0, p^-2A]; 2^12 + 1 points in dev
            "grid_level": {"dev": 16, "prod": 18},
            # eps_j = 2^-j D
            "epsilon_exponents": list(range(0, 8)),
            # rows with j in this range that are not saturated enter the slope fit
            "fit_exponents": [3, 6],
            "saturation_fraction": 0.25,
            "slope_band": [1.6, 2.4],
            "increment_grid_level": {"dev": 8, "prod": 10},
            "lag_levels": [1, 2, 3, 4, 5],
            "lifshits_alpha": 0.5,
        },
        "dichotomy": {
            "family": LOUD_FAMILY,
            "x1_epsilons": [10.0**k for k in (-6, -5.5, -5, -4.5, -4, -3.5, -3, -2.5, -2)],
            "x1_slope_band": [0.98, 1.02],
            # eps = 2^-j
            "x2_exponents": list(range(8, 41)),
            "x2_slope_band": [1.7, 2.3],
            "mc_grid_level": {"dev": 10, "prod": 12},
            "mc_epsilons": [0.05, 0.075, 0.1, 0.15, 0.2, 0.3],
            "mc_window": [1e-3, 0.5],
            "mc_min_points": 3,
            "n_sigmas": 3.0,
        },
        "smallball": {
            "rhos": [0.25, 0.5],
            "epsilons": [10.0**-k for k in range(2, 13)],
            "band_factor": 4.0,
            # Talagrand bound for phi(eps) = eps^-entropy_exponent
            "entropy_exponent": 2.0,
            "talagrand_K": 1.0,
        },
        "sequence": {
            "beta": 1.0,
            "shift": 2.0,
            "epsilons": [10.0**k for k in (-3, -2.75, -2.5, -2.25, -2, -1.75, -1.5, -1.25, -1)],
            "slope_tol": 0.3,
            "loglog_h": 0.5,
            "loglog_epsilons": [0.1, 0.15, 0.2, 0.3],
            "n_max": 1000,
            "mc_epsilons": [0.8, 1.2],
            "n_sigmas": 3.0,
        },
        "chaining": {
            "beta": 1.0,
            "shift": 2.0,
            "epsilons": [10.0**k for k in (-2, -1.75, -1.5, -1.25, -1)],
            "sieve_depth": 40,
            "ball_check_n_max": {"dev": 500, "prod": 2000},
            "ball_check_depth": 20,
            "ratio_band": 3.0,
            "interval_grid_level": 10,
            "interval_depth": 8,
            "interval_levels": [0, 1, 2, 3, 4, 5, 6],
        },
        "ultra": {
            "balanced_branching": 3,
            "balanced_depth": 5,
            "n_random_spaces": {"dev": 4, "prod": 10},
            "random_branching": 3,
            "random_depth": 5,
            "max_points": 256,
            "mc_random_spaces": {"dev": 1, "prod": 2},
            "mc_levels": [2, 3],
            "ratio_tol": 1e-12,
            "n_sigmas": 3.0,
        },
        "sidak": {
            "n_matrices": 20,
            "dim": 3,
            "z": 1.0,
            "n_samples": {"dev": 100_000, "prod": 1_000_000},
            "n_sigmas": 3.0,
        },
        "aperiodic": {
            "prime_set": [3, 5, 7, 11, 13],
            "beta": 0.25,
            "m_values": [1, 2, 3],
            "max_pairs": 2048,
            "h": 0.1,
        },
    }

    def __init__(self, experiment: ExperimentKind, profile: ParamsProfile = "prod"):
        check_literal_values(experiment, "experiment", ExperimentKind)
        check_literal_values(profile, "profile", ParamsProfile)
        self.experiment = experiment
        self.profile = profile

    def resolve_env_config(self, val: Any):
        if isinstance(val, dict):
            if self.profile in val.keys():
                return val[self.profile]
        return val

    def defaults(self) -> dict:
        params = {"experiment": self.experiment, "profile": self.profile}
        for key, val in self.COMMON.items():
            params[key] = deepcopy(self.resolve_env_config(val))
        for key, val in self.EXPERIMENTS[self.experiment].items():
            params[key] = deepcopy(self.resolve_env_config(val))
        params["out"] = params["out"].format(experiment=self.experiment)
        return params

    def get_params(self, config: dict | None = None, **overrides) -> dict:
        """
        Resolved run parameters: profile defaults, then the JSON config, then CLI overrides.
        Overrides equal to MISSING are ignored.

        Raises:
            ConfigError: on schema violations, naming the field.
        """
        params = self.defaults()
        config = dict(config or {})
        if config.get("experiment", self.experiment) != self.experiment:
            raise ConfigError(
                "experiment", f"config is for '{config['experiment']}', run requested '{self.experiment}'"
            )
        config.pop("profile", None)
        validate_config(config, params)
        params.update(deepcopy(config))
        cli = {key: val for key, val in overrides.items() if val is not MISSING}
        validate_config(cli, params)
        params.update(cli)
        self.params = params
        return params


def _type_name(val: Any) -> str:
    return type(val).__name__


def _check_value(field: str, val: Any, default: Any) -> None:
    if isinstance(default, bool):
        ok = isinstance(val, bool)
    elif isinstance(default, int):
        ok = isinstance(val, int) and not isinstance(val, bool)
    elif isinstance(default, float):
        ok = isinstance(val, (int, float)) and not isinstance(val, bool)
    elif isinstance(default, (list, tuple)):
        ok = isinstance(val, (list, tuple))
    elif isinstance(default, dict):
        ok = isinstance(val, dict)
    else:
        ok = isinstance(val, type(default))
    if not ok:
        raise ConfigError(field, f"expected {_type_name(default)}, got {_type_name(val)} {val!r}")

    if isinstance(default, dict):
        for key, sub in val.items():
            if key not in default:
                raise ConfigError(f"{field}.{key}", f"unknown key, expected one of {sorted(default)}")
            _check_value(f"{field}.{key}", sub, default[key])

    if field.endswith(SCHEDULE_SUFFIXES):
        if len(val) == 0:
            raise ConfigError(field, "schedule must not be empty")
        if field.endswith("epsilons") and any(
            not isinstance(e, (int, float)) or isinstance(e, bool) or not e > 0 for e in val
        ):
            raise ConfigError(field, "epsilons must be positive numbers")


def validate_config(config: dict, defaults: dict) -> dict:
    """
    Checks a config dict against the resolved defaults of its experiment.

    Unknown keys, wrong types, empty epsilon schedules, nonpositive sample counts and
    worker counts, and invalid experiment names raise ConfigError naming the field.
    """
    if "experiment" in config:
        try:
            check_literal_values(config["experiment"], "experiment", ExperimentKind)
        except ValueError as e:
            raise ConfigError("experiment", str(e)) from e
    for key, val in config.items():
        if key in ("experiment", "profile"):
            continue
        if key not in defaults:
            raise ConfigError(key, f"unknown key for experiment '{defaults['experiment']}'")
        _check_value(key, val, defaults[key])
    for key in ("n_samples", "n_workers"):
        if key in config and config[key] < 1:
            raise ConfigError(key, f"must be a positive integer, got {config[key]}")
    if "seed" in config and config["seed"] < 0:
        raise ConfigError("seed", f"must be nonnegative, got {config['seed']}")
    return config


def load_config_file(path: str | Path) -> dict:
    """
    Reads a JSON config.

    Raises:
        ConfigError: if the file is not a JSON object.
    """
    try:
        config = read_json(path)
    except ValueError as e:
        raise ConfigError("config", f"{path} is not valid JSON: {e}") from e
    if not isinstance(config, dict):
        raise ConfigError("config", f"{path} must hold a JSON object")
    logger.info(f"Loaded config {path}")
    return config
