"""
Rank-q principal component analysis.

Projection, reconstruction and the average projection error metric
(mean Euclidean distance between a row and its reconstruction).
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np
import numpy.typing as npt

from .numlin import Matrix, ShapeError, Vector, as_matrix, svd

logger = logging.getLogger(__name__)

# singular values below this fraction of the largest count as zero for rank checks
_RANK_RTOL = 1e-10


class PcaError(ValueError):
    """Invalid PCA request (bad q, too few rows)."""
    pass


@dataclass(frozen=True)
class PcaModel:
    """
    Fitted rank-q PCA.

    Attributes:
        mean: Column means of the fitting data (length n).
        scale: Per-column divisors (all ones when unscaled).
        v: Loadings, n x q with orthonormal columns.
        s: Leading q singular values of the centered (scaled) data.
        q: Bottleneck dimension.
        explained_variance_ratio: Fraction of total variance per component.
        rank_deficient: True when q exceeds the numerical rank of the data.
    """
    mean: Vector
    scale: Vector
    v: Matrix
    s: Vector
    q: int
    explained_variance_ratio: Vector = field(default_factory=lambda: np.zeros(0))
    rank_deficient: bool = False

    @property
    def n_features(self) -> int:
        return int(self.mean.size)

    @property
    def projector(self) -> Matrix:
        """V V^T, the orthogonal projector onto the principal subspace."""
        return self.v @ self.v.T

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q": self.q,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            # column-major: one list per loading vector
            "v": self.v.T.tolist(),
            "s": self.s.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "rank_deficient": self.rank_deficient,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PcaModel":
        v = np.asarray(data["v"], dtype=np.float64).T
        return cls(
            mean=np.asarray(data["mean"], dtype=np.float64),
            scale=np.asarray(data["scale"], dtype=np.float64),
            v=v.reshape(len(data["mean"]), int(data["q"])),
            s=np.asarray(data["s"], dtype=np.float64),
            q=int(data["q"]),
            explained_variance_ratio=np.asarray(
                data.get("explained_variance_ratio", []), dtype=np.float64
            ),
            rank_deficient=bool(data.get("rank_deficient", False)),
        )


def _fix_signs(v: Matrix) -> Matrix:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def fit(x: npt.ArrayLike, q: int, scale: bool = False) -> PcaModel:
    """
    Fit a rank-q PCA to the rows of ``x``.

    Args:
        x: Data matrix, m x n with m >= 2.
        q: Number of components, 1 <= q <= min(m, n).
        scale: Divide each centered column by its population standard deviation.

    Returns:
        PcaModel: The fitted model. ``rank_deficient`` is set when the data
        has fewer than q numerically nonzero singular values.

    Raises:
        PcaError: If q is out of range, there are fewer than two rows, or a
            column has zero variance while scaling.
    """
    data = as_matrix(x, "x")
    m, n = data.shape
    if m < 2:
        raise PcaError(f"PCA needs at least 2 rows, got {m}")
    if not 1 <= q <= min(m, n):
        raise PcaError(f"q must be in [1, {min(m, n)}], got {q}")

    mean = data.mean(axis=0)
    centered = data - mean
    if scale:
        std = centered.std(axis=0)
        if np.any(std <= 0):
            bad = int(np.flatnonzero(std <= 0)[0])
            raise PcaError(f"column {bad} has zero variance and cannot be scaled")
    else:
        std = np.ones(n)
    centered = centered / std

    dec = svd(centered)
    total = float(np.sum(dec.s ** 2))
    ratio = (dec.s[:q] ** 2) / total if total > 0 else np.zeros(q)
    rank = int(np.sum(dec.s > _RANK_RTOL * max(float(dec.s[0]), np.finfo(float).tiny)))
    deficient = rank < q
    if deficient:
        logger.warning(f"PCA requested q={q} but data rank is {rank}; trailing components are ~0")

    return PcaModel(
        mean=mean,
        scale=std,
        v=_fix_signs(dec.v[:, :q]),
        s=dec.s[:q].copy(),
        q=q,
        explained_variance_ratio=ratio,
        rank_deficient=deficient,
    )


def _check_cols(model: PcaModel, x: Matrix, cols: int, what: str) -> None:
    if x.shape[1] != cols:
        raise ShapeError(f"{what} has {x.shape[1]} columns, model expects {cols}")


def project(model: PcaModel, x: npt.ArrayLike) -> Matrix:
    """Scores of ``x`` in the principal subspace (m x q)."""
    data = as_matrix(x, "x")
    _check_cols(model, data, model.n_features, "x")
    return ((data - model.mean) / model.scale) @ model.v


def reconstruct(model: PcaModel, scores: npt.ArrayLike) -> Matrix:
    """Map scores back to the original (unscaled, uncentered) space (m x n)."""
    codes = as_matrix(scores, "scores")
    _check_cols(model, codes, model.q, "scores")
    return (codes @ model.v.T) * model.scale + model.mean


def projection_errors(
    model: PcaModel, x: npt.ArrayLike, scaled_units: bool = False
) -> Vector:
    """Per-row Euclidean distance between ``x`` and its PCA reconstruction."""
    data = as_matrix(x, "x")
    diff = data - reconstruct(model, project(model, data))
    if scaled_units:
        diff = diff / model.scale
    return np.linalg.norm(diff, axis=1)


def avg_projection_error(
    model: PcaModel, x: npt.ArrayLike, scaled_units: bool = False
) -> float:
    """
    Mean L2 distance between each row and its reconstruction.

    Distances are measured in original units unless ``scaled_units`` is set.
    """
    return float(np.mean(projection_errors(model, x, scaled_units=scaled_units)))


def mean_squared_error(model: PcaModel, x: npt.ArrayLike) -> float:
    """Mean over rows of the squared reconstruction distance."""
    return float(np.mean(projection_errors(model, x) ** 2))
