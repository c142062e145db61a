"""Projection primitives shared by every estimator and test.

Projections are built from a rank-revealing QR factorization with column
pivoting; columns whose pivot falls below ``rtol`` times the largest column
norm are treated as collinear and dropped.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import linalg

from manyiv.errors import ManyIVError

DEFAULT_RTOL = 1e-10


class ProjectionError(ManyIVError):
    """Raised for malformed projection inputs (shape, non-finite entries)."""


class ProjectionResult(BaseModel):
    """A symmetric idempotent projection together with the basis it came from.

    ``basis`` has orthonormal columns spanning the retained columns, and
    ``triangular`` maps coefficients on that basis back to the retained
    columns taken in ``pivot_order``: cols[:, pivot_order] = basis @ triangular.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    rank: int
    retained: list[int]
    pivot_order: list[int]
    basis: np.ndarray
    triangular: np.ndarray
    degenerate: bool = False

    @property
    def hat_values(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    def coefficients(self, basis_coef: np.ndarray) -> np.ndarray:
        """Map coefficients on ``basis`` to coefficients on the retained columns (sorted order)."""
        if self.rank == 0:
            return np.zeros(0)
        pivot_coef = linalg.solve_triangular(self.triangular, basis_coef, lower=False)
        order = np.argsort(self.pivot_order)
        return pivot_coef[order]


def _as_matrix(cols: np.ndarray) -> np.ndarray:
    arr = np.asarray(cols, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ProjectionError(f"expected a 2-D matrix, got {arr.ndim} dimensions")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ProjectionError(f"projection needs N >= 1 and K >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ProjectionError("non-finite entries in projection input")
    return arr


def _pivoted_qr(arr: np.ndarray, rtol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    q, r, piv = linalg.qr(arr, mode="economic", pivoting=True)
    scale = float(np.max(np.linalg.norm(arr, axis=0)))
    if scale == 0.0:
        return q, r, piv, 0
    pivots = np.abs(np.diag(r))
    rank = int(np.sum(pivots > rtol * scale))
    return q, r, piv, rank


def retained_columns(cols: np.ndarray, rtol: float = DEFAULT_RTOL) -> list[int]:
    """Indices (sorted) of a maximal non-collinear subset of the columns."""
    arr = _as_matrix(cols)
    _, _, piv, rank = _pivoted_qr(arr, rtol)
    return sorted(int(i) for i in piv[:rank])


def build_projection(cols: np.ndarray, rtol: float = DEFAULT_RTOL) -> ProjectionResult:
    """Orthogonal projection onto the column span of ``cols``.

    An all-zero input yields the zero matrix with ``degenerate=True``.
    """
    arr = _as_matrix(cols)
    n = arr.shape[0]
    q, r, piv, rank = _pivoted_qr(arr, rtol)
    if rank == 0:
        return ProjectionResult(
            matrix=np.zeros((n, n)),
            rank=0,
            retained=[],
            pivot_order=[],
            basis=np.zeros((n, 0)),
            triangular=np.zeros((0, 0)),
            degenerate=True,
        )

    basis = q[:, :rank]
    proj = basis @ basis.T
    proj = (proj + proj.T) / 2.0
    return ProjectionResult(
        matrix=proj,
        rank=rank,
        retained=sorted(int(i) for i in piv[:rank]),
        pivot_order=[int(i) for i in piv[:rank]],
        basis=basis,
        triangular=r[:rank, :rank],
    )


def group_projection(labels: np.ndarray) -> ProjectionResult:
    """Exact projection onto group indicators: P_ij = 1/n_g when i and j share group g.

    Columns are the indicators of the sorted distinct labels.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ProjectionError("group labels must be a non-empty vector")
    groups, codes, sizes = np.unique(labels, return_inverse=True, return_counts=True)
    n, k = labels.size, groups.size

    same = codes[:, None] == codes[None, :]
    proj = np.where(same, 1.0 / sizes[codes][:, None], 0.0)

    root = np.sqrt(sizes.astype(float))
    basis = np.zeros((n, k))
    basis[np.arange(n), codes] = 1.0 / root[codes]
    return ProjectionResult(
        matrix=proj,
        rank=k,
        retained=list(range(k)),
        pivot_order=list(range(k)),
        basis=basis,
        triangular=np.diag(root),
    )


def residualize(values: np.ndarray, annihilator: np.ndarray) -> np.ndarray:
    """Apply an annihilator (residual-maker) to a vector or matrix."""
    mat = np.asarray(annihilator, dtype=float)
    vals = np.asarray(values, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ProjectionError(f"annihilator must be square, got shape {mat.shape}")
    if vals.shape[0] != mat.shape[0]:
        raise ProjectionError(
            f"dimension mismatch: annihilator is {mat.shape[0]}x{mat.shape[1]}, values have {vals.shape[0]} rows"
        )
    return mat @ vals
