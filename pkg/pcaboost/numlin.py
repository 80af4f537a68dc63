"""
Dense real-matrix primitives used by every other module.

Matrices are plain 2-D float64 numpy arrays (row = sample, column = feature).
Decompositions go through scipy's LAPACK wrappers.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt
from scipy import linalg

logger = logging.getLogger(__name__)

Matrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]

# LAPACK drivers tried in order; gesdd is fast, gesvd is the slower fallback
_SVD_DRIVERS = ("gesdd", "gesvd")


class NumericalError(ArithmeticError):
    """Base exception for numerical failures."""
    pass


class SvdConvergenceError(NumericalError):
    """Raised when no LAPACK driver converges on an SVD."""

    def __init__(self, shape: Sequence[int], drivers: Sequence[str]):
        self.shape = tuple(shape)
        self.drivers = tuple(drivers)
        super().__init__(
            f"SVD of {self.shape[0]}x{self.shape[1]} matrix did not converge "
            f"after {len(self.drivers)} attempt(s) (drivers: {', '.join(self.drivers)})"
        )


class NonFiniteError(NumericalError):
    """Raised when a matrix contains NaN or Inf."""
    pass


class ShapeError(ValueError):
    """Raised on incompatible matrix shapes."""
    pass


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(s) @ v.T``, singular values descending."""
    u: Matrix
    s: Vector
    v: Matrix


def as_matrix(a: npt.ArrayLike, name: str = "matrix") -> Matrix:
    """
    Validate and convert input to a finite 2-D float64 array.

    Raises:
        ShapeError: If the input is not 2-D or has an empty dimension.
        NonFiniteError: If any entry is NaN or Inf.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {arr.ndim}-D")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf entries")
    return arr


def svd(a: npt.ArrayLike) -> SvdResult:
    """
    Thin singular value decomposition with r = min(rows, cols).

    Args:
        a: Finite 2-D matrix.

    Returns:
        SvdResult: u (m x r), s (r,), v (n x r).

    Raises:
        SvdConvergenceError: If every LAPACK driver fails to converge.
    """
    mat = as_matrix(a)
    tried = []
    for driver in _SVD_DRIVERS:
        tried.append(driver)
        try:
            u, s, vh = linalg.svd(
                mat, full_matrices=False, check_finite=False, lapack_driver=driver
            )
        except linalg.LinAlgError as e:
            logger.warning(f"SVD driver {driver} failed on {mat.shape} matrix: {e}")
            continue
        return SvdResult(u=u, s=s, v=vh.T)
    raise SvdConvergenceError(mat.shape, tried)


def default_pinv_tol(a: Matrix, s_max: float) -> float:
    """Standard cutoff max(m, n) * eps * s_max."""
    return max(a.shape) * float(np.finfo(np.float64).eps) * s_max


def pinv(a: npt.ArrayLike, tol: Optional[float] = None) -> Matrix:
    """
    Moore-Penrose pseudo-inverse via SVD.

    Singular values at or below ``tol`` are treated as zero. When ``tol`` is
    None the standard ``max(m, n) * eps * s_max`` cutoff is used.
    """
    mat = as_matrix(a)
    if tol is not None and tol < 0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    dec = svd(mat)
    s_max = float(dec.s[0]) if dec.s.size else 0.0
    cutoff = default_pinv_tol(mat, s_max) if tol is None else tol
    keep = dec.s > cutoff
    if not np.any(keep):
        return np.zeros((mat.shape[1], mat.shape[0]))
    # A+ = V_k diag(1/s_k) U_k^T
    return (dec.v[:, keep] / dec.s[keep]) @ dec.u[:, keep].T


def random_orthonormal(m: int, n: int, rng: np.random.Generator) -> Matrix:
    """
    Haar-distributed random matrix with orthonormal columns (m >= n) or rows (m < n).

    Gaussian fill, thin QR, then each Q column is multiplied by the sign of
    the matching R diagonal entry so the result is exactly Haar.
    """
    if m < 1 or n < 1:
        raise ShapeError(f"dimensions must be positive, got ({m}, {n})")
    if m < n:
        return random_orthonormal(n, m, rng).T
    gauss = rng.standard_normal((m, n))
    q, r = linalg.qr(gauss, mode="economic", check_finite=False)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def chain_product(matrices: Sequence[Matrix], dim: Optional[int] = None) -> Matrix:
    """
    Left-to-right product of a list of matrices.

    An empty list yields the identity of size ``dim``.
    """
    if not matrices:
        if dim is None:
            raise ShapeError("empty product needs an explicit dimension")
        return np.eye(dim)
    out = matrices[0]
    for mat in matrices[1:]:
        if out.shape[1] != mat.shape[0]:
            raise ShapeError(f"cannot multiply {out.shape} by {mat.shape}")
        out = out @ mat
    return out


def condition_number(a: npt.ArrayLike) -> float:
    """Ratio of largest to smallest singular value over min(m, n) values."""
    s = svd(a).s
    if s[-1] == 0:
        return float("inf")
    return float(s[0] / s[-1])
