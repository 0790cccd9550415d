import json

import pytest

from pipelines.experiments.config import MISSING, ExperimentParams, load_config_file
from smallball_lab.errors import ConfigError


class TestDefaults:
    def test_profile_resolution(self):
        dev = ExperimentParams("entropy", "dev").get_params()
        prod = ExperimentParams("entropy", "prod").get_params()
        assert dev["grid_level"] == 16
        assert prod["grid_level"] == 18
        assert dev["n_samples"] == 20_000
        assert prod["n_samples"] == 100_000
        assert dev["out"] == "results/entropy"

    def test_experiment_section_overrides_common(self):
        assert ExperimentParams("sidak", "dev").get_params()["n_samples"] == 100_000

    def test_defaults_are_copies(self):
        params = ExperimentParams("entropy", "dev").get_params()
        params["family"]["p"] = 3
        assert ExperimentParams("entropy", "dev").get_params()["family"]["p"] == 2

    def test_unknown_experiment(self):
        with pytest.raises(ValueError):
            ExperimentParams("brownian", "dev")


class TestPrecedence:
    def test_cli_beats_config_beats_profile(self):
        params = ExperimentParams("smallball", "dev").get_params({"seed": 5, "band_factor": 2.0}, seed=7)
        assert params["seed"] == 7
        assert params["band_factor"] == 2.0

    def test_missing_overrides_are_ignored(self):
        params = ExperimentParams("smallball", "dev").get_params({"seed": 5}, seed=MISSING, out=MISSING)
        assert params["seed"] == 5
        assert params["out"] == "results/smallball"

    def test_int_accepted_for_float(self):
        assert ExperimentParams("sidak", "dev").get_params({"z": 2})["z"] == 2

    def test_nested_family_override(self):
        params = ExperimentParams("entropy", "dev").get_params({"family": {"p": 3, "A": 1, "alpha": 0.3, "tail_tol": 1e-9}})
        assert params["family"]["p"] == 3


class TestValidation:
    @pytest.mark.parametrize(
        "experiment, config, field",
        [
            ("smallball", {"rho": 0.5}, "rho"),
            ("smallball", {"seed": "x"}, "seed"),
            ("smallball", {"seed": True}, "seed"),
            ("smallball", {"seed": -1}, "seed"),
            ("smallball", {"epsilons": []}, "epsilons"),
            ("smallball", {"epsilons": [0.1, -0.1]}, "epsilons"),
            ("entropy", {"epsilon_exponents": []}, "epsilon_exponents"),
            ("entropy", {"family": {"q": 1}}, "family.q"),
            ("entropy", {"family": {"p": 2.5}}, "family.p"),
            ("sidak", {"n_samples": 0}, "n_samples"),
            ("sidak", {"n_workers": 0}, "n_workers"),
            ("sidak", {"experiment": "ultra"}, "experiment"),
            ("sidak", {"experiment": "brownian"}, "experiment"),
        ],
    )
    def test_config_errors_name_the_field(self, experiment, config, field):
        with pytest.raises(ConfigError) as info:
            ExperimentParams(experiment, "dev").get_params(config)
        assert info.value.field == field

    def test_override_errors(self):
        with pytest.raises(ConfigError) as info:
            ExperimentParams("sidak", "dev").get_params(n_samples=-5)
        assert info.value.field == "n_samples"


class TestConfigFile:
    def test_load(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 3}))
        assert load_config_file(path) == {"seed": 3}

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{seed: 3")
        with pytest.raises(ConfigError):
            load_config_file(path)

    def test_not_an_object(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config_file(path)
