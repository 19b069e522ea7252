"""Configuration-loading tests: happy path, exhaustive error reporting, and
unknown-key rejection."""

import math
from pathlib import Path

import numpy as np
import pytest

from qsysid.config import ConfigError, load_config, validate_config

GOOD = """
[model]
family = "one_qubit_2param"

[prior]
mean = [4.1, 6.2]
sigma = [0.5, 0.5]

[backend]
kind = "simulated"
g_true = [4.0, 6.0]
shots = 1000
seed = 11

[pulses]
families = ["pwc_amplitude"]
n_segments = 10

[cost]
kind = "apc"

[optimizer]
restarts = 4
budget = 200

[loop]
max_iterations = 8
population_size = 2000
seed = 3

[output]
directory = "out"
"""


def write(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text)
    return path


class TestHappyPath:
    def test_full_config(self, tmp_path):
        cfg = load_config(write(tmp_path, GOOD))
        assert cfg.model.family == "one_qubit_2param"
        assert np.allclose(cfg.prior.mean, [4.1, 6.2])
        assert np.allclose(cfg.prior.covariance, np.diag([0.25, 0.25]))
        assert cfg.backend.kind == "simulated"
        assert cfg.backend.g_true == (4.0, 6.0)
        assert cfg.families[0].kind == "pwc_amplitude"
        assert cfg.families[0].n_segments == 10
        assert cfg.optimizer.restarts == 4
        assert cfg.max_iterations == 8
        assert cfg.seed == 3
        assert cfg.output_directory == tmp_path / "out"

    def test_defaults(self):
        cfg = validate_config(
            {
                "model": {"family": "one_qubit_2param"},
                "prior": {"mean": [4.0, 6.0], "sigma": [0.5, 0.5]},
                "backend": {"g_true": [4.0, 6.0]},
            }
        )
        assert cfg.cost_kind == "apc"
        assert cfg.convention == "paper"
        assert cfg.grid_size == 64
        assert cfg.population_size == 2000
        assert cfg.stall_window == 3
        assert cfg.stall_ratio == 0.8
        assert cfg.families[0].kind == "rabi"

    def test_covariance_matrix_form(self):
        cfg = validate_config(
            {
                "model": {"family": "one_qubit_2param"},
                "prior": {"mean": [4.0, 6.0], "covariance": [[0.25, 0.01], [0.01, 0.25]]},
                "backend": {"g_true": [4.0, 6.0]},
            }
        )
        assert cfg.prior.covariance[0, 1] == 0.01

    def test_two_qubit_pwc(self):
        cfg = validate_config(
            {
                "model": {"family": "two_qubit_5param"},
                "prior": {"mean": [4.1, 5.5, 4.0, 6.0, 0.5], "sigma": [0.3, 0.3, 0.3, 0.3, 0.03]},
                "backend": {"g_true": [4.1, 5.5, 4.0, 6.0, 0.5]},
                "pulses": {"families": ["pwc_amplitude"], "n_segments": 10},
            }
        )
        assert cfg.families[0].channel_count == 2
        assert cfg.families[0].n_variables == 21

    def test_remote_backend(self):
        cfg = validate_config(
            {
                "model": {"family": "one_qubit_2param"},
                "prior": {"mean": [4.0, 6.0], "sigma": [0.5, 0.5]},
                "backend": {"kind": "remote", "host": "lab01", "port": 9000},
            }
        )
        assert cfg.backend.host == "lab01"


class TestErrors:
    def test_all_problems_reported_at_once(self):
        with pytest.raises(ConfigError) as excinfo:
            validate_config(
                {
                    "model": {"family": "three_qubit"},
                    "prior": {"sigma": [0.5]},
                    "backend": {"kind": "simulated"},
                    "junk": {"x": 1},
                }
            )
        problems = excinfo.value.problems
        text = "\n".join(problems)
        assert len(problems) >= 4
        assert "model.family" in text
        assert "prior.mean" in text
        assert "g_true" in text
        assert "unknown section [junk]" in text

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key loop.itreations"):
            validate_config(
                {
                    "model": {"family": "one_qubit_2param"},
                    "prior": {"mean": [4.0, 6.0], "sigma": [0.5, 0.5]},
                    "backend": {"g_true": [4.0, 6.0]},
                    "loop": {"itreations": 8},
                }
            )

    def test_sigma_and_covariance_exclusive(self):
        with pytest.raises(ConfigError, match="not both"):
            validate_config(
                {
                    "model": {"family": "one_qubit_2param"},
                    "prior": {"mean": [4.0, 6.0], "sigma": [0.5, 0.5], "covariance": [[1, 0], [0, 1]]},
                    "backend": {"g_true": [4.0, 6.0]},
                }
            )

    def test_remote_requires_host_port(self):
        with pytest.raises(ConfigError, match="host"):
            validate_config(
                {
                    "model": {"family": "one_qubit_2param"},
                    "prior": {"mean": [4.0, 6.0], "sigma": [0.5, 0.5]},
                    "backend": {"kind": "remote"},
                }
            )

    def test_g_true_rejected_for_remote(self):
        with pytest.raises(ConfigError, match="only meaningful"):
            validate_config(
                {
                    "model": {"family": "one_qubit_2param"},
                    "prior": {"mean": [4.0, 6.0], "sigma": [0.5, 0.5]},
                    "backend": {"kind": "remote", "host": "h", "port": 1, "g_true": [4, 6]},
                }
            )

    def test_two_qubit_rejects_single_channel_families(self):
        with pytest.raises(ConfigError, match="single-channel"):
            validate_config(
                {
                    "model": {"family": "two_qubit_5param"},
                    "prior": {"mean": [0, 1, 0, 1, 0.1], "sigma": [1, 1, 1, 1, 1]},
                    "backend": {"g_true": [0, 1, 0, 1, 0.1]},
                    "pulses": {"families": ["rabi"]},
                }
            )

    def test_bad_cost_and_convention(self):
        with pytest.raises(ConfigError) as excinfo:
            validate_config(
                {
                    "model": {"family": "one_qubit_2param"},
                    "prior": {"mean": [4.0, 6.0], "sigma": [0.5, 0.5]},
                    "backend": {"g_true": [4.0, 6.0]},
                    "cost": {"kind": "entropy", "likelihood_variance_convention": "bayes"},
                }
            )
        text = "\n".join(excinfo.value.problems)
        assert "cost.kind" in text and "convention" in text

    def test_non_spd_prior(self):
        with pytest.raises(ConfigError, match="prior"):
            validate_config(
                {
                    "model": {"family": "one_qubit_2param"},
                    "prior": {"mean": [4.0, 6.0], "covariance": [[1.0, 2.0], [2.0, 1.0]]},
                    "backend": {"g_true": [4.0, 6.0]},
                }
            )

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "absent.toml")


class TestOutputDirectory:
    def test_relative_to_config_file(self, tmp_path):
        cfg = load_config(write(tmp_path, GOOD))
        assert cfg.output_directory.is_absolute()
        assert cfg.output_directory.parent == tmp_path

    def test_duration_cap_default_infinite(self, tmp_path):
        cfg = load_config(write(tmp_path, GOOD))
        assert cfg.families[0].duration_cap == math.inf
