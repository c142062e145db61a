"""Leave-k-out quantities for the instrument projection by Woodbury downdating.

Dropping the rows D from the first-stage regression changes the projection to

    P̃ = P + P[:, D] (I − P[D, D])⁻¹ P[D, :]

evaluated on the retained rows, so nothing is refitted.
"""

from collections.abc import Sequence

import numpy as np

from manyiv.core.projections import ProjectionBundle
from manyiv.errors import ManyIVError
from manyiv.utils.linalg import ProjectionResult

MAX_DROP = 3
DETERMINANT_TOL = 1e-12


class RankCollapseError(ManyIVError):
    """The instruments lose rank once the dropped rows are removed."""

    def __init__(self, drop: Sequence[int], determinant: float) -> None:
        self.drop = tuple(int(i) for i in drop)
        self.determinant = determinant
        super().__init__(
            f"dropping observations {self.drop} collapses the instrument rank "
            f"(det(I - P_DD) = {determinant:.3e})"
        )


class LeaveOut:
    """Projection quantities with the rows in ``drop`` removed from the fit.

    Rows and columns keep their full-sample indexing; entries that refer to a
    dropped row as a regressor are reported as zero where the reduced fit has
    no such row.
    """

    def __init__(
        self,
        projection: np.ndarray,
        drop: Sequence[int] = (),
        basis: ProjectionResult | None = None,
        tol: float = DETERMINANT_TOL,
    ) -> None:
        self.drop = tuple(sorted({int(i) for i in drop}))
        if len(self.drop) > MAX_DROP:
            raise ValueError(f"at most {MAX_DROP} observations can be dropped, got {len(self.drop)}")
        n = projection.shape[0]
        if any(i < 0 or i >= n for i in self.drop):
            raise IndexError(f"drop indices {self.drop} out of range for N={n}")

        self._p = projection
        self._basis = basis
        d = list(self.drop)
        if d:
            block = np.eye(len(d)) - projection[np.ix_(d, d)]
            det = float(np.linalg.det(block))
            if det <= tol:
                raise RankCollapseError(self.drop, det)
            self._g = np.linalg.inv(block)
            self._pd = projection[:, d]
            # P̃[:, D] = P[:, D] G
            self._pdg = self._pd @ self._g
        else:
            self._g = np.zeros((0, 0))
            self._pd = np.zeros((n, 0))
            self._pdg = np.zeros((n, 0))

    @property
    def n(self) -> int:
        return self._p.shape[0]

    def projection_row(self, i: int) -> np.ndarray:
        """Row i of the downdated projection P̃ (full-sample column indexing)."""
        return self._p[i] + self._pdg[i] @ self._pd.T

    def projection_matrix(self) -> np.ndarray:
        return self._p + self._pdg @ self._pd.T

    def leverage(self) -> np.ndarray:
        """Diagonal of P̃."""
        return np.diag(self._p) + np.sum(self._pdg * self._pd, axis=1)

    def annihilator_row(self, i: int) -> np.ndarray:
        """M̃_{ik} = 1{k = i} − P̃_ik·1{k ∉ D}."""
        row = -self.projection_row(i)
        if self.drop:
            row[list(self.drop)] = 0.0
        row[i] += 1.0
        return row

    def fitted(self, values: np.ndarray, full_fit: np.ndarray | None = None) -> np.ndarray:
        """Fitted values at every observation from the regression on the retained rows.

        ``full_fit`` is P·values when the caller already has it.
        """
        v = np.asarray(values, dtype=float)
        out = self._p @ v if full_fit is None else np.asarray(full_fit, dtype=float)
        if self.drop:
            d = list(self.drop)
            out = out + self._pdg @ (out[d] - v[d])
        return out

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """Coefficients on the retained instrument columns from the reduced-sample fit."""
        if self._basis is None:
            raise ValueError("coefficients need the factored instrument basis")
        q = self._basis.basis
        v = np.asarray(values, dtype=float)
        rhs = q.T @ v
        if self.drop:
            d = list(self.drop)
            q_d = q[d]
            rhs = rhs - q_d.T @ v[d]
            rhs = rhs + q_d.T @ (self._g @ (q_d @ rhs))
        return self._basis.coefficients(rhs)


def leave_out_projection(bundle: ProjectionBundle, drop: Sequence[int] = ()) -> LeaveOut:
    """Leave-k-out view of the bundle's instrument projection (k ≤ 3)."""
    return LeaveOut(bundle.P, drop, basis=bundle.basis_z)
