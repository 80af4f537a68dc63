"""
Unit tests for runtime settings and the strict JSON config loader.
"""
import json

import pytest

from pcaboost.autoenc import TrainConfig
from pcaboost.bench import ExperimentConfig
from pcaboost.config import AppConfig, ConfigError, load_dataclass, load_json_config


@pytest.fixture
def no_dotenv(mocker):
    """Keeps a stray .env file from leaking into the environment."""
    return mocker.patch("pcaboost.config.load_dotenv")


def test_from_env_defaults(monkeypatch, no_dotenv):
    for name in ("PCABOOST_LOG_LEVEL", "PCABOOST_LOG_FILE", "PCABOOST_JOBS"):
        monkeypatch.delenv(name, raising=False)
    config = AppConfig.from_env()
    assert config.log_level == "INFO"
    assert config.log_file is None
    assert config.jobs is None
    no_dotenv.assert_called_once()


def test_from_env_reads_variables(monkeypatch, no_dotenv):
    monkeypatch.setenv("PCABOOST_LOG_LEVEL", "debug")
    monkeypatch.setenv("PCABOOST_LOG_FILE", "run.log")
    monkeypatch.setenv("PCABOOST_JOBS", "3")
    config = AppConfig.from_env()
    assert config.log_level == "DEBUG"
    assert config.log_file == "run.log"
    assert config.jobs == 3


def test_from_env_ignores_bad_values(monkeypatch, no_dotenv):
    monkeypatch.setenv("PCABOOST_LOG_LEVEL", "LOUD")
    monkeypatch.setenv("PCABOOST_JOBS", "many")
    config = AppConfig.from_env()
    assert config.log_level == "INFO"
    assert config.jobs is None


def test_load_dataclass_nested():
    config = load_dataclass(ExperimentConfig, {
        "dataset": {"exponent": 1.1, "count": 500},
        "train": {"learning_rate": 0.01, "max_epochs": 5},
        "sample_sizes": [20, 30],
    })
    assert config.dataset.exponent == 1.1
    assert config.train.max_epochs == 5
    assert config.sample_sizes == [20, 30]


def test_load_dataclass_int_is_accepted_for_float():
    assert load_dataclass(TrainConfig, {"learning_rate": 1}).learning_rate == 1.0


@pytest.mark.parametrize(
    "data, fragment",
    [
        ({"epochs": 3}, "unknown key"),
        ({"train": {"lr": 0.1}}, "train: unknown key"),
        ({"repetitions": "50"}, "repetitions"),
        ({"scale": 1}, "scale"),
        ({"train": {"max_epochs": 2.5}}, "train.max_epochs"),
        ({"sample_sizes": 20}, "sample_sizes"),
    ],
)
def test_load_dataclass_rejects_bad_input(data, fragment):
    with pytest.raises(ConfigError) as excinfo:
        load_dataclass(ExperimentConfig, data)
    assert fragment in str(excinfo.value)


def test_load_dataclass_wraps_validation_errors():
    with pytest.raises(ConfigError):
        load_dataclass(ExperimentConfig, {"split_fractions": [0.5, 0.2, 0.2]})


def test_json_config_round_trip(tmp_path):
    config = ExperimentConfig(repetitions=3, seed=42)
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(config.to_dict()))
    assert load_json_config(path, ExperimentConfig) == config


def test_json_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_json_config(tmp_path / "absent.json", ExperimentConfig)


def test_json_config_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"seed\": ")
    with pytest.raises(ConfigError) as excinfo:
        load_json_config(path, ExperimentConfig)
    assert "line 1" in str(excinfo.value)


def test_json_config_requires_object(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_json_config(path, ExperimentConfig)
