"""
Experiment harness.

One trial runs split -> transform -> init -> train -> select -> evaluate for
a single (method, sample size, repetition). ``run_experiment`` runs the
full grid, optionally on a process pool, and aggregates the test errors.

Seed tree: every random stream is a ``numpy.random.SeedSequence`` with the
experiment seed as entropy and a spawn key naming its role:

    data stream:  (0, sample_size, repetition)
    init stream:  (1, train.seed, sample_size, repetition, restart)

The method never enters a key, so within a repetition every method sees the
same rows and the same restart streams.
"""
import functools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import pca
from .autoenc import (
    AeParams,
    Architecture,
    ArchitectureError,
    TrainConfig,
    TrainHistory,
    predict,
    random_init,
    train,
)
from .config import ConfigError, to_plain
from .datagen import (
    Dataset,
    DatasetError,
    SplitSpec,
    Splits,
    TransformParams,
    apply_transform,
    fit_transform,
    gen_power_surface,
    inverse_transform,
    load_csv,
    split,
)
from .numlin import Matrix, NumericalError, ShapeError
from .pca import PcaError
from .pcainit import pca_naive_init, pca_robust_init

logger = logging.getLogger(__name__)

METHOD_PCA = "PCA"
METHOD_ROBUST = "PCA-Robust"
METHOD_NAIVE = "PCA-Naive"
METHOD_RANDOM = "Random"
METHODS = (METHOD_PCA, METHOD_ROBUST, METHOD_NAIVE, METHOD_RANDOM)
AE_METHODS = (METHOD_ROBUST, METHOD_NAIVE, METHOD_RANDOM)

_DATA_STREAM = 0
_INIT_STREAM = 1
_TIE_TOLERANCE = 1e-12

RESULT_COLUMNS = ["method", "sample_size", "repetition", "test_error", "selected_restart", "epochs", "failed"]
AGGREGATE_COLUMNS = ["method", "sample_size", "mean", "sem", "n", "failures"]
_FLOAT_FORMAT = "%.17g"

# Layer widths of every autoencoder in the published experiments
PAPER_ARCHITECTURES = {
    "power": "3-20-3-2-3-20-3",
    "grating-coupler": "5-20-5-2-5-20-5",
    "power-splitter-4": "10-20-10-4-10-20-10",
    "power-splitter-5": "10-20-10-5-10-20-10",
    "breast-cancer": "30-100-30-15-30-100-30",
    "gene-expression": "6-20-6-2-6-20-6",
}


@dataclass
class DatasetSource:
    """
    Where trial data comes from.

    ``synthetic``: a fresh power surface of ``count`` points per repetition.
    ``csv``: one fixed file, resampled per repetition. The test set is
    ``test_count`` rows or ``test_frac`` of the data; when neither is given
    synthetic data holds out 250 rows and CSV data holds out half.
    """
    kind: str = "synthetic"
    exponent: float = 4.0
    count: int = 1000
    csv_path: Optional[str] = None
    test_count: Optional[int] = None
    test_frac: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ("synthetic", "csv"):
            raise ConfigError(f"dataset.kind must be 'synthetic' or 'csv', got '{self.kind}'")
        if self.kind == "csv" and not self.csv_path:
            raise ConfigError("dataset.csv_path is required when kind is 'csv'")
        if self.kind == "synthetic" and (self.exponent < 1 or self.count < 1):
            raise ConfigError("synthetic data needs exponent >= 1 and count >= 1")
        if self.test_count is not None and self.test_frac is not None:
            raise ConfigError("set dataset.test_count or dataset.test_frac, not both")

    def test_holdout(self) -> Tuple[Optional[int], Optional[float]]:
        if self.test_count is None and self.test_frac is None:
            return (250, None) if self.kind == "synthetic" else (None, 0.5)
        return self.test_count, self.test_frac


@dataclass
class ExperimentConfig:
    """Declarative description of a grid run."""
    dataset: DatasetSource = field(default_factory=DatasetSource)
    architecture: str = PAPER_ARCHITECTURES["power"]
    q: Optional[int] = None
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    sample_sizes: List[int] = field(default_factory=lambda: [20, 30, 40, 50, 80, 100])
    repetitions: int = 50
    restarts: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)
    split_fractions: List[float] = field(default_factory=lambda: [0.8, 0.1, 0.1])
    scale: bool = False
    error_units: str = "original"
    prelu_output: bool = False
    independent_decoder: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        try:
            arch = Architecture.parse(self.architecture)
        except ArchitectureError as e:
            raise ConfigError(f"architecture: {e}") from e
        if self.q is not None and self.q != arch.q:
            raise ConfigError(f"q={self.q} does not match the bottleneck width {arch.q} of {arch}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"methods must be a non-empty subset of {list(METHODS)}, got {self.methods}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError(f"duplicate methods in {self.methods}")
        if not self.sample_sizes or any(s < 10 for s in self.sample_sizes):
            raise ConfigError(f"sample sizes must each be >= 10, got {self.sample_sizes}")
        if self.repetitions < 1 or self.restarts < 1:
            raise ConfigError("repetitions and restarts must be >= 1")
        if len(self.split_fractions) != 3:
            raise ConfigError("split_fractions must list train, val and select fractions")
        try:
            self.split_spec(max(self.sample_sizes), 0)
        except DatasetError as e:
            raise ConfigError(f"split_fractions: {e}") from e
        if self.error_units not in ("original", "scaled"):
            raise ConfigError(f"error_units must be 'original' or 'scaled', got '{self.error_units}'")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.dataset.kind == "synthetic" and arch.n != 3:
            raise ConfigError(f"synthetic data has 3 columns but {arch} expects {arch.n}")
        if any(m in (METHOD_ROBUST, METHOD_NAIVE) for m in self.methods):
            try:
                arch.check_vase()
            except ArchitectureError as e:
                raise ConfigError(f"architecture: {e}") from e
        self._check_sizes(arch)

    def _check_sizes(self, arch: Architecture) -> None:
        """Every sample size must leave at least q training rows; synthetic data must cover the grid."""
        _, val_frac, select_frac = self.split_fractions
        for size in self.sample_sizes:
            n_train = size - math.floor(size * val_frac) - math.floor(size * select_frac)
            if n_train < arch.q:
                raise ConfigError(
                    f"sample size {size} leaves {n_train} training rows, fewer than q={arch.q}"
                )
        if self.dataset.kind == "synthetic":
            count = self.dataset.count
            test_count, test_frac = self.dataset.test_holdout()
            n_test = test_count if test_count is not None else math.floor(count * (test_frac or 0.0))
            needed = n_test + max(self.sample_sizes)
            if needed > count:
                raise ConfigError(
                    f"dataset.count={count} cannot hold a test set of {n_test} plus "
                    f"a sample of {max(self.sample_sizes)} rows"
                )

    @property
    def arch(self) -> Architecture:
        return Architecture.parse(self.architecture)

    def split_spec(self, pool_size: int, seed: int) -> SplitSpec:
        test_count, test_frac = self.dataset.test_holdout()
        train_frac, val_frac, select_frac = self.split_fractions
        return SplitSpec(
            train_frac=train_frac, val_frac=val_frac, select_frac=select_frac,
            test_count=test_count, test_frac=test_frac, pool_size=pool_size, seed=seed,
        )

    def to_dict(self) -> Dict[str, Any]:
        return to_plain(self)


_REAL_DATA_METHODS = [METHOD_PCA, METHOD_ROBUST, METHOD_RANDOM]
_REAL_DATA_SIZES = [20, 30, 40, 80, 100]


def _csv_preset(csv_path: str, arch_key: str, **overrides: Any) -> ExperimentConfig:
    """A half-held-out CSV protocol; ``csv_path`` is a placeholder to point at the real file."""
    settings: Dict[str, Any] = dict(
        dataset=DatasetSource(kind="csv", csv_path=csv_path, test_frac=0.5),
        architecture=PAPER_ARCHITECTURES[arch_key],
        methods=list(_REAL_DATA_METHODS),
        sample_sizes=list(_REAL_DATA_SIZES),
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)


def preset(name: str) -> ExperimentConfig:
    """Published protocols by name; see PRESETS."""
    if name == "power-4":
        return ExperimentConfig(dataset=DatasetSource(exponent=4.0))
    if name == "power-1.1":
        return ExperimentConfig(dataset=DatasetSource(exponent=1.1))
    if name == "grating-coupler-1":
        return _csv_preset("grating_coupler_1.csv", "grating-coupler")
    if name == "grating-coupler-2":
        # one column is a material index, orders of magnitude off the segment widths
        return _csv_preset("grating_coupler_2.csv", "grating-coupler", scale=True)
    if name == "power-splitter-4":
        return _csv_preset("power_splitter.csv", "power-splitter-4")
    if name == "power-splitter-5":
        return _csv_preset("power_splitter.csv", "power-splitter-5")
    if name == "breast-cancer":
        return _csv_preset(
            "breast_cancer.csv", "breast-cancer",
            methods=list(METHODS), sample_sizes=[30, 40, 50, 80, 100], repetitions=25,
        )
    if name == "gene-expression":
        return _csv_preset("gene_expression.csv", "gene-expression")
    raise ConfigError(f"unknown preset '{name}' (choose from {', '.join(PRESETS)})")


PRESETS = (
    "power-4", "power-1.1", "grating-coupler-1", "grating-coupler-2",
    "power-splitter-4", "power-splitter-5", "breast-cancer", "gene-expression",
)


@dataclass
class TrialResult:
    """Outcome of one (method, sample size, repetition) cell."""
    method: str
    sample_size: int
    repetition: int
    test_error: float
    selected_restart: int
    epochs_trained: int
    failed: bool = False

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.sample_size, self.repetition, METHODS.index(self.method))

    def to_row(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "sample_size": self.sample_size,
            "repetition": self.repetition,
            "test_error": self.test_error,
            "selected_restart": self.selected_restart,
            "epochs": self.epochs_trained,
            "failed": self.failed,
        }


@dataclass
class CellStats:
    method: str
    sample_size: int
    mean: float
    sem: float
    n: int
    failures: int

    @property
    def present(self) -> bool:
        return self.n > 0


@dataclass
class AggregateStats:
    cells: List[CellStats]

    def get(self, method: str, sample_size: int) -> Optional[CellStats]:
        for cell in self.cells:
            if cell.method == method and cell.sample_size == sample_size:
                return cell
        return None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[c.method, c.sample_size, c.mean, c.sem, c.n, c.failures] for c in self.cells],
            columns=AGGREGATE_COLUMNS,
        )


@dataclass
class TrialData:
    """Raw and transformed partitions of one (sample size, repetition)."""
    dataset: Dataset
    splits: Splits
    transform: TransformParams
    train: Matrix
    val: Matrix
    select: Matrix
    test: Matrix

    def raw(self, part: str) -> Matrix:
        return self.dataset.x[getattr(self.splits, part)]


@dataclass
class TrialOutcome:
    """A TrialResult plus the selected model, for callers that keep artifacts."""
    result: TrialResult
    params: Optional[AeParams] = None
    history: Optional[TrainHistory] = None
    pca_model: Optional[pca.PcaModel] = None
    transform: Optional[TransformParams] = None


@dataclass
class ExperimentResult:
    results: List[TrialResult]
    stats: AggregateStats
    splits: Dict[str, Dict[str, List[int]]]

    def results_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_row() for r in self.results], columns=RESULT_COLUMNS)


def data_seed(master: int, sample_size: int, repetition: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(_DATA_STREAM, sample_size, repetition))


def init_seed(
    master: int, train_seed: int, sample_size: int, repetition: int, restart: int
) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        master, spawn_key=(_INIT_STREAM, train_seed, sample_size, repetition, restart)
    )


@functools.lru_cache(maxsize=4)
def _cached_csv(path: str) -> Dataset:
    return load_csv(path)


def load_source(config: ExperimentConfig) -> Optional[Dataset]:
    """The fixed dataset of a CSV source; None for synthetic sources."""
    if config.dataset.kind != "csv":
        return None
    data = _cached_csv(str(config.dataset.csv_path))
    if data.n_cols != config.arch.n:
        raise ShapeError(f"{config.dataset.csv_path} has {data.n_cols} columns, {config.arch} expects {config.arch.n}")
    return data


def prepare_trial_data(
    config: ExperimentConfig, sample_size: int, repetition: int, source: Optional[Dataset] = None
) -> TrialData:
    """Draw (or resample) data, split it and fit the transform on train only."""
    rng = np.random.default_rng(data_seed(config.seed, sample_size, repetition))
    if config.dataset.kind == "synthetic":
        dataset = gen_power_surface(config.dataset.count, config.dataset.exponent, rng)
    else:
        dataset = source if source is not None else load_source(config)
        assert dataset is not None
    split_seed = int(rng.integers(0, 2**63 - 1))
    splits = split(dataset, config.split_spec(sample_size, split_seed))

    train_set, transform = fit_transform(dataset.subset(splits.train), scale=config.scale)
    val_set = apply_transform(dataset.subset(splits.val), transform)
    select_set = apply_transform(dataset.subset(splits.select), transform)
    test_set = apply_transform(dataset.subset(splits.test), transform)
    return TrialData(
        dataset=dataset, splits=splits, transform=transform,
        train=train_set.x, val=val_set.x, select=select_set.x, test=test_set.x,
    )


def _ae_error(params: AeParams, x: Matrix, transform: TransformParams, units: str) -> float:
    """Mean L2 distance between rows and reconstructions, in the configured units."""
    out = predict(params, x)
    if units == "original":
        diff = inverse_transform(out, transform) - inverse_transform(x, transform)
    else:
        diff = out - x
    return float(np.mean(np.linalg.norm(diff, axis=1)))


def _init_params(
    config: ExperimentConfig, method: str, data: TrialData, rng: np.random.Generator
) -> AeParams:
    arch = config.arch
    if method == METHOD_ROBUST:
        return pca_robust_init(
            data.train, arch, rng,
            independent_decoder=config.independent_decoder, prelu_output=config.prelu_output,
        )
    if method == METHOD_NAIVE:
        return pca_naive_init(data.train, arch, rng, prelu_output=config.prelu_output)
    return random_init(arch, rng, prelu_output=config.prelu_output)


def fit_trial(
    config: ExperimentConfig,
    method: str,
    sample_size: int,
    repetition: int,
    source: Optional[Dataset] = None,
    data: Optional[TrialData] = None,
) -> TrialOutcome:
    """
    Run one trial and keep the selected model.

    PCA is fitted and evaluated directly. Autoencoder methods train
    ``config.restarts`` candidates and keep the one with the lowest
    selection-set error (ties go to the lower restart index); only that
    model is evaluated on the test set.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method '{method}'")
    if data is None:
        data = prepare_trial_data(config, sample_size, repetition, source)
    units = config.error_units

    if method == METHOD_PCA:
        model = pca.fit(data.raw("train"), config.arch.q, scale=config.scale)
        error = pca.avg_projection_error(model, data.raw("test"), scaled_units=units == "scaled")
        result = TrialResult(method, sample_size, repetition, error, 0, 0)
        return TrialOutcome(result=result, pca_model=model, transform=data.transform)

    best: Optional[Tuple[float, int, AeParams, TrainHistory]] = None
    for restart in range(config.restarts):
        rng = np.random.default_rng(init_seed(config.seed, config.train.seed, sample_size, repetition, restart))
        try:
            params = _init_params(config, method, data, rng)
            trained, history = train(params, data.train, data.val, config.train)
            select_error = _ae_error(trained, data.select, data.transform, units)
        except NumericalError as e:
            logger.warning(f"{method} n={sample_size} rep={repetition} restart {restart} failed: {e}")
            continue
        if not math.isfinite(select_error):
            logger.warning(f"{method} n={sample_size} rep={repetition} restart {restart}: non-finite selection error")
            continue
        # near-equal candidates keep the earlier restart
        if best is None or select_error < best[0] - _TIE_TOLERANCE * max(1.0, best[0]):
            best = (select_error, restart, trained, history)

    if best is None:
        logger.error(f"{method} n={sample_size} rep={repetition}: all {config.restarts} restarts failed")
        result = TrialResult(method, sample_size, repetition, float("nan"), -1, 0, failed=True)
        return TrialOutcome(result=result, transform=data.transform)

    _, restart, params, history = best
    error = _ae_error(params, data.test, data.transform, units)
    result = TrialResult(method, sample_size, repetition, error, restart, history.epochs_trained)
    logger.debug(f"{method} n={sample_size} rep={repetition}: test error {error:.6g} (restart {restart})")
    return TrialOutcome(result=result, params=params, history=history, transform=data.transform)


def run_trial(
    config: ExperimentConfig,
    method: str,
    sample_size: int,
    repetition: int,
    source: Optional[Dataset] = None,
) -> TrialResult:
    return fit_trial(config, method, sample_size, repetition, source).result


def _trial_job(
    config: ExperimentConfig, sample_size: int, repetition: int
) -> Tuple[int, int, Optional[Dict[str, List[int]]], List[TrialResult]]:
    """
    All methods of one (size, repetition) on shared data; runs in a worker.

    Returns the split manifest entry (None when the data could not be
    prepared) and one result row per method. A data failure marks every
    method of the cell as failed instead of aborting the grid.
    """
    try:
        data = prepare_trial_data(config, sample_size, repetition, load_source(config))
    except (NumericalError, DatasetError, ShapeError, PcaError) as e:
        logger.error(f"n={sample_size} rep={repetition}: could not prepare data: {e}")
        return sample_size, repetition, None, [
            _failed_result(method, sample_size, repetition) for method in config.methods
        ]
    results = []
    for method in config.methods:
        try:
            results.append(fit_trial(config, method, sample_size, repetition, data=data).result)
        except (NumericalError, DatasetError, ShapeError, PcaError) as e:
            logger.error(f"{method} n={sample_size} rep={repetition} failed: {e}")
            results.append(_failed_result(method, sample_size, repetition))
    return sample_size, repetition, data.splits.to_dict(), results


def _failed_result(method: str, sample_size: int, repetition: int) -> TrialResult:
    return TrialResult(method, sample_size, repetition, float("nan"), -1, 0, failed=True)


class _PartialWriter:
    """Appends result rows to a side file as they arrive."""

    def __init__(self, path: Optional[Path]):
        self.path = path
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            pd.DataFrame(columns=RESULT_COLUMNS).to_csv(path, index=False, lineterminator="\n")

    def write(self, rows: Iterable[TrialResult]) -> None:
        if self.path is None:
            return
        frame = pd.DataFrame([r.to_row() for r in rows], columns=RESULT_COLUMNS)
        frame.to_csv(self.path, mode="a", header=False, index=False,
                     float_format=_FLOAT_FORMAT, lineterminator="\n")

    def close(self) -> None:
        if self.path is not None and self.path.exists():
            self.path.unlink()


def run_experiment(
    config: ExperimentConfig,
    jobs: int = 1,
    results_path: Optional[Union[str, Path]] = None,
    progress: bool = False,
) -> ExperimentResult:
    """
    Run the full method x sample size x repetition grid.

    Each (size, repetition) is one job, so every method in it shares the
    same split. With ``results_path`` set, rows are streamed to
    ``<results_path>.partial`` as jobs finish and the final file is written
    in grid order once all jobs are done.
    """
    grid = [(size, rep) for size in config.sample_sizes for rep in range(config.repetitions)]
    load_source(config)  # a missing or mis-shaped file fails before any job starts
    prepared: Dict[Tuple[int, int], Dict[str, List[int]]] = {}

    partial_path = Path(f"{results_path}.partial") if results_path else None
    writer = _PartialWriter(partial_path)
    collected: List[TrialResult] = []
    total = len(grid) * len(config.methods)
    logger.info(f"Running {total} trials ({len(grid)} jobs) with {jobs} worker(s)")

    with tqdm(desc="Trials", total=total, disable=not progress, leave=False) as bar:
        if jobs <= 1:
            for size, rep in grid:
                _, _, splits, rows = _trial_job(config, size, rep)
                if splits is not None:
                    prepared[(size, rep)] = splits
                collected.extend(rows)
                writer.write(rows)
                bar.update(len(rows))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_trial_job, config, size, rep) for size, rep in grid]
                for future in as_completed(futures):
                    size, rep, splits, rows = future.result()
                    if splits is not None:
                        prepared[(size, rep)] = splits
                    collected.extend(rows)
                    writer.write(rows)
                    bar.update(len(rows))

    manifest = {f"{size}/{rep}": prepared[(size, rep)] for size, rep in grid if (size, rep) in prepared}
    results = sorted(collected, key=lambda r: r.key)
    if results_path is not None:
        write_results(results, results_path)
        writer.close()
    failed = sum(r.failed for r in results)
    if failed:
        logger.warning(f"{failed} of {len(results)} trials failed")
    return ExperimentResult(results=results, stats=aggregate(results), splits=manifest)


def aggregate(results: Sequence[TrialResult]) -> AggregateStats:
    """
    Mean and standard error of the test error per (method, sample size).

    Failed trials are excluded and counted. A cell with a single success
    reports sem 0 and n 1; a cell where every trial failed has n 0 and NaN
    mean/sem.
    """
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    frame = pd.DataFrame([r.to_row() for r in results], columns=RESULT_COLUMNS)
    cells = []
    for (method, size), group in frame.groupby(["method", "sample_size"], sort=False):
        ok = group.loc[~group["failed"].astype(bool), "test_error"].to_numpy(dtype=float)
        failures = int(group["failed"].astype(bool).sum())
        n = int(ok.size)
        if n == 0:
            mean, sem = float("nan"), float("nan")
        elif n == 1:
            mean, sem = float(ok[0]), 0.0
        else:
            mean = float(ok.mean())
            sem = float(ok.std(ddof=1) / math.sqrt(n))
        cells.append(CellStats(str(method), int(size), mean, sem, n, failures))
    cells.sort(key=lambda c: (METHODS.index(c.method), c.sample_size))
    return AggregateStats(cells=cells)


def write_results(results: Sequence[TrialResult], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([r.to_row() for r in results], columns=RESULT_COLUMNS)
    frame.to_csv(path, index=False, float_format=_FLOAT_FORMAT, lineterminator="\n")
    return path


def write_aggregates(stats: AggregateStats, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stats.to_frame().to_csv(path, index=False, float_format=_FLOAT_FORMAT, lineterminator="\n")
    return path


def default_jobs() -> int:
    return os.cpu_count() or 1
