"""
Pytest fixtures for the test suite.
"""
import numpy as np
import pytest

from pcaboost.autoenc import AeParams, Architecture, TrainConfig
from pcaboost.bench import DatasetSource, ExperimentConfig
from pcaboost.config import AppConfig
from pcaboost.cli import CommandHandler


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow", action="store_true", default=False,
        help="run long acceptance experiments",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance experiment")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    """A fixed-seed random generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def power_arch() -> Architecture:
    """The 3-20-3-2-3-20-3 vase used for the synthetic surfaces."""
    return Architecture.parse("3-20-3-2-3-20-3")


@pytest.fixture
def centered_data(rng: np.random.Generator) -> np.ndarray:
    """40 rows of centered 3-D data with a dominant 2-D structure."""
    base = rng.standard_normal((40, 3)) * np.array([3.0, 1.5, 0.2])
    return base - base.mean(axis=0)


def make_random_params(widths, rng, alpha_low=0.5, alpha_high=1.5, prelu_output=False) -> AeParams:
    """Random weights, biases and slopes for gradient and evaluator checks."""
    n_layers = len(widths) - 1
    n_alpha = n_layers if prelu_output else n_layers - 1
    return AeParams(
        weights=[rng.standard_normal((widths[i], widths[i + 1])) * 0.7 for i in range(n_layers)],
        biases=[rng.standard_normal(widths[i + 1]) * 0.3 for i in range(n_layers)],
        alphas=[rng.uniform(alpha_low, alpha_high, widths[i + 1]) for i in range(n_alpha)],
    )


@pytest.fixture
def quick_train_config() -> TrainConfig:
    """Short training run for harness tests."""
    return TrainConfig(learning_rate=1e-3, max_epochs=20, patience=5)


@pytest.fixture
def tiny_experiment(quick_train_config: TrainConfig) -> ExperimentConfig:
    """A 2-method x 2-size x 3-repetition synthetic grid that runs in seconds."""
    return ExperimentConfig(
        dataset=DatasetSource(kind="synthetic", exponent=4.0, count=200, test_count=50),
        methods=["PCA", "PCA-Robust"],
        sample_sizes=[20, 30],
        repetitions=3,
        restarts=2,
        train=quick_train_config,
        seed=7,
    )


@pytest.fixture
def command_handler() -> CommandHandler:
    """Returns a CommandHandler with environment-independent settings."""
    return CommandHandler(AppConfig(log_level="WARNING", jobs=1))
