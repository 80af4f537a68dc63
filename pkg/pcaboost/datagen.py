"""
Datasets: synthetic power surfaces, CSV ingestion, centering/scaling, splits.
"""
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from .numlin import Matrix, Vector, as_matrix

logger = logging.getLogger(__name__)

_CSV_FLOAT_FORMAT = "%.17g"


class DatasetError(ValueError):
    """Base exception for dataset problems."""
    pass


class CsvParseError(DatasetError):
    """Malformed CSV input; ``row`` and ``column`` are 1-based file positions."""

    def __init__(self, path: Union[str, Path], message: str, row: Optional[int] = None,
                 column: Optional[int] = None):
        self.path = str(path)
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f" at row {row}" + (f", column {column}" if column is not None else "")
        super().__init__(f"{self.path}{where}: {message}")


class ZeroVarianceError(DatasetError):
    """A column cannot be scaled because its standard deviation is zero."""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"column '{column}' has zero variance and cannot be scaled")


class SplitConfigError(DatasetError):
    """The requested split would leave a partition empty or overdraw rows."""
    pass


@dataclass(frozen=True)
class Dataset:
    """
    A data matrix plus the transform that produced it.

    ``center`` and ``scale`` are zeros/ones for untransformed data.
    """
    x: Matrix
    feature_names: Optional[List[str]] = None
    center: Optional[Vector] = None
    scale: Optional[Vector] = None
    is_transformed: bool = False

    def __post_init__(self) -> None:
        x = as_matrix(self.x, "dataset")
        object.__setattr__(self, "x", x)
        cols = x.shape[1]
        if self.center is None:
            object.__setattr__(self, "center", np.zeros(cols))
        if self.scale is None:
            object.__setattr__(self, "scale", np.ones(cols))
        if self.center.shape != (cols,) or self.scale.shape != (cols,):
            raise DatasetError(f"center/scale must have length {cols}")
        if np.any(self.scale <= 0):
            raise DatasetError("scale entries must be positive")
        if self.feature_names is not None and len(self.feature_names) != cols:
            raise DatasetError(f"{len(self.feature_names)} feature names for {cols} columns")

    @property
    def n_rows(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.x.shape[1])

    def column_name(self, j: int) -> str:
        return self.feature_names[j] if self.feature_names else f"x{j}"

    def subset(self, indices: npt.ArrayLike) -> "Dataset":
        return replace(self, x=self.x[np.asarray(indices, dtype=int)])


@dataclass(frozen=True)
class TransformParams:
    """Column centering and scaling fitted on a training split."""
    center: Vector
    scale: Vector

    def to_dict(self) -> Dict[str, Any]:
        return {"center": self.center.tolist(), "scale": self.scale.tolist()}


@dataclass
class SplitSpec:
    """
    How to partition a dataset.

    The test set is drawn first, either ``test_count`` rows or ``test_frac``
    of all rows. When ``pool_size`` is set, a pool of that many rows is
    sampled from the remainder; otherwise the whole remainder is the pool.
    The pool is split into train/val/select by fraction: val and select
    sizes are floored, train gets the rest.
    """
    train_frac: float = 0.8
    val_frac: float = 0.1
    select_frac: float = 0.1
    test_count: Optional[int] = None
    test_frac: Optional[float] = None
    pool_size: Optional[int] = None
    seed: int = 0

    def __post_init__(self) -> None:
        fracs = (self.train_frac, self.val_frac, self.select_frac)
        if any(f <= 0 for f in fracs):
            raise SplitConfigError(f"split fractions must be positive, got {fracs}")
        if not math.isclose(sum(fracs), 1.0, abs_tol=1e-9):
            raise SplitConfigError(f"train/val/select fractions must sum to 1, got {sum(fracs)}")
        if self.test_count is not None and self.test_frac is not None:
            raise SplitConfigError("set test_count or test_frac, not both")
        if self.test_count is not None and self.test_count < 1:
            raise SplitConfigError(f"test_count must be >= 1, got {self.test_count}")
        if self.test_frac is not None and not 0 < self.test_frac < 1:
            raise SplitConfigError(f"test_frac must lie in (0, 1), got {self.test_frac}")
        if self.pool_size is not None and self.pool_size < 3:
            raise SplitConfigError(f"pool_size must be >= 3, got {self.pool_size}")


@dataclass
class Splits:
    """Row indices of the four partitions."""
    train: npt.NDArray[np.int64]
    val: npt.NDArray[np.int64]
    select: npt.NDArray[np.int64]
    test: npt.NDArray[np.int64]
    unused: npt.NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def sizes(self) -> Dict[str, int]:
        return {
            "train": int(self.train.size),
            "val": int(self.val.size),
            "select": int(self.select.size),
            "test": int(self.test.size),
        }

    def to_dict(self) -> Dict[str, List[int]]:
        return {
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "select": self.select.tolist(),
            "test": self.test.tolist(),
        }


def gen_power_surface(count: int, exponent: float, rng: np.random.Generator) -> Dataset:
    """
    Points on the surface x^n + y^n = z with (x, y) uniform on [0, 1]^2.

    Raises:
        DatasetError: If count < 1 or exponent < 1.
    """
    if count < 1:
        raise DatasetError(f"count must be >= 1, got {count}")
    if exponent < 1:
        raise DatasetError(f"exponent must be >= 1, got {exponent}")
    xy = rng.uniform(0.0, 1.0, size=(count, 2))
    z = xy[:, 0] ** exponent + xy[:, 1] ** exponent
    return Dataset(x=np.column_stack([xy, z]), feature_names=["x", "y", "z"])


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path: Union[str, Path]) -> Dataset:
    """
    Read a rectangular numeric CSV with an optional single header row.

    The first row is taken as a header when any of its cells is not numeric.

    Raises:
        CsvParseError: On an empty file, ragged rows or non-numeric cells.
    """
    path = Path(path)
    try:
        raw = pd.read_csv(
            path, header=None, dtype=str, keep_default_na=False,
            skip_blank_lines=True, encoding="utf-8",
        )
    except pd.errors.EmptyDataError as e:
        raise CsvParseError(path, "file is empty") from e
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        row = int(match.group(1)) if match else None
        raise CsvParseError(path, f"ragged row ({e})", row) from e

    cells = raw.to_numpy(dtype=object)
    if cells.size == 0:
        raise CsvParseError(path, "file is empty")

    names: Optional[List[str]] = None
    first_data_row = 0
    if not all(isinstance(c, str) and _is_number(c.strip()) for c in cells[0]):
        names = [str(c).strip() for c in cells[0]]
        first_data_row = 1
    body = cells[first_data_row:]
    if body.shape[0] == 0:
        raise CsvParseError(path, "no data rows after the header")

    values = np.empty(body.shape, dtype=np.float64)
    for i, row in enumerate(body):
        for j, cell in enumerate(row):
            file_row, file_col = i + first_data_row + 1, j + 1
            if not isinstance(cell, str) or cell.strip() == "":
                raise CsvParseError(path, "missing value (ragged row)", file_row, file_col)
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise CsvParseError(path, f"non-numeric cell '{cell}'", file_row, file_col) from None
            if not np.isfinite(values[i, j]):
                raise CsvParseError(path, f"non-finite value '{cell}'", file_row, file_col)

    logger.info(f"Loaded {values.shape[0]} x {values.shape[1]} dataset from {path}")
    return Dataset(x=values, feature_names=names)


def save_csv(dataset: Dataset, path: Union[str, Path]) -> None:
    """Write the data matrix with 17 significant digits so it reloads exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.x, columns=dataset.feature_names)
    frame.to_csv(
        path, index=False, header=dataset.feature_names is not None,
        float_format=_CSV_FLOAT_FORMAT, lineterminator="\n",
    )
    logger.debug(f"Wrote {dataset.n_rows} rows to {path}")


def fit_transform(dataset: Dataset, scale: bool = False) -> Tuple[Dataset, TransformParams]:
    """
    Center the columns and optionally divide by the population standard deviation.

    Fit this on the training split only and carry the params to the others
    with ``apply_transform``.

    Raises:
        DatasetError: If the dataset is already transformed.
        ZeroVarianceError: If a column is constant while scaling.
    """
    if dataset.is_transformed:
        raise DatasetError("dataset is already transformed")
    center = dataset.x.mean(axis=0)
    if scale:
        std = dataset.x.std(axis=0)
        zero = np.flatnonzero(std <= 0)
        if zero.size:
            raise ZeroVarianceError(dataset.column_name(int(zero[0])))
    else:
        std = np.ones(dataset.n_cols)
    params = TransformParams(center=center, scale=std)
    return apply_transform(dataset, params), params


def apply_transform(dataset: Dataset, params: TransformParams) -> Dataset:
    if dataset.is_transformed:
        raise DatasetError("dataset is already transformed")
    return replace(
        dataset,
        x=(dataset.x - params.center) / params.scale,
        center=params.center,
        scale=params.scale,
        is_transformed=True,
    )


def inverse_transform(data: Union[Dataset, npt.ArrayLike], params: TransformParams) -> Matrix:
    """Undo centering/scaling on a Dataset or a raw matrix in transformed units."""
    x = data.x if isinstance(data, Dataset) else as_matrix(data, "x")
    return x * params.scale + params.center


def split(dataset: Dataset, spec: SplitSpec) -> Splits:
    """
    Partition row indices into train/val/select/test.

    Deterministic for a given ``spec.seed``.

    Raises:
        SplitConfigError: If any partition would be empty or the pool is too large.
    """
    total = dataset.n_rows
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(total)

    if spec.test_count is not None:
        n_test = spec.test_count
    elif spec.test_frac is not None:
        n_test = int(math.floor(total * spec.test_frac))
    else:
        n_test = 0
    if n_test >= total:
        raise SplitConfigError(f"test set of {n_test} rows leaves no pool out of {total}")
    test, rest = order[:n_test], order[n_test:]

    if spec.pool_size is not None:
        if spec.pool_size > rest.size:
            raise SplitConfigError(f"pool of {spec.pool_size} rows requested, only {rest.size} available")
        pool, unused = rest[: spec.pool_size], rest[spec.pool_size:]
    else:
        pool, unused = rest, rest[:0]

    n_val = int(math.floor(pool.size * spec.val_frac))
    n_select = int(math.floor(pool.size * spec.select_frac))
    n_train = pool.size - n_val - n_select
    sizes = {"train": n_train, "val": n_val, "select": n_select}
    if spec.test_count is not None or spec.test_frac is not None:
        sizes["test"] = n_test
    empty = [name for name, size in sizes.items() if size < 1]
    if empty:
        raise SplitConfigError(f"split leaves empty partition(s) {empty} from a pool of {pool.size}")

    return Splits(
        train=np.sort(pool[:n_train]),
        val=np.sort(pool[n_train:n_train + n_val]),
        select=np.sort(pool[n_train + n_val:]),
        test=np.sort(test),
        unused=np.sort(unused),
    )
