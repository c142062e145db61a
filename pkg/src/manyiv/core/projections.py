"""Cached projection and annihilator matrices for one dataset.

The bundle is immutable after construction and is shared read-only by every
estimator, variance estimator and test evaluated on the dataset.
"""

from functools import cached_property

import numpy as np
from pydantic import BaseModel, ConfigDict

from manyiv.errors import ManyIVError
from manyiv.logger import get_logger
from manyiv.models.dataset import Dataset, DatasetError
from manyiv.models.outcomes import BalanceReport
from manyiv.utils.linalg import (
    DEFAULT_RTOL,
    ProjectionResult,
    build_projection,
    group_projection,
)

logger = get_logger(__name__)

IDEMPOTENCY_TOL = 1e-9
SYMMETRY_TOL = 1e-12
TRACE_TOL = 1e-8
MIN_ANNIHILATOR_DIAG = 1e-10


class InvariantViolationError(ManyIVError):
    """Raised when a stored projection fails a structural check."""

    def __init__(self, name: str, deviation: float, tolerance: float) -> None:
        self.name = name
        self.deviation = deviation
        self.tolerance = tolerance
        super().__init__(f"{name}: deviation {deviation:.3e} exceeds {tolerance:.1e}")


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def _zero_diagonal(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    np.fill_diagonal(out, 0.0)
    return out


class ProjectionBundle(BaseModel):
    """P, M = I − P, P⊥, M_W and M_ZW with their hat values.

    ``P`` projects onto Z alone; ``P_perp`` onto M_W·Z. Without controls
    M_W = I, P⊥ = P and M_ZW = M. ``k_z`` is the effective instrument count
    (rank of P⊥) that enters every √K normalizer.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n: int
    k_z: int
    k_w: int
    rank_z: int
    P: np.ndarray
    M: np.ndarray
    P_perp: np.ndarray
    M_W: np.ndarray
    M_ZW: np.ndarray
    basis_z: ProjectionResult
    grouped: bool = False

    @property
    def has_controls(self) -> bool:
        return self.k_w > 0

    @property
    def hat_p(self) -> np.ndarray:
        return np.diag(self.P).copy()

    @property
    def hat_m(self) -> np.ndarray:
        return np.diag(self.M).copy()

    @property
    def hat_perp(self) -> np.ndarray:
        return np.diag(self.P_perp).copy()

    @property
    def hat_mw(self) -> np.ndarray:
        return np.diag(self.M_W).copy()

    @property
    def hat_mzw(self) -> np.ndarray:
        return np.diag(self.M_ZW).copy()

    @cached_property
    def jack(self) -> np.ndarray:
        """P with its diagonal removed."""
        return _zero_diagonal(self.P)

    @cached_property
    def jack_sq(self) -> np.ndarray:
        """P_ij² off the diagonal, zero on it."""
        return self.jack**2

    @cached_property
    def jack_perp(self) -> np.ndarray:
        """P⊥ with its diagonal removed."""
        return _zero_diagonal(self.P_perp)

    @cached_property
    def cross_fit_sq(self) -> np.ndarray:
        """P̃_ij² = P_ij² / (M_ii M_jj + M_ij²) off the diagonal."""
        return cross_fit_weights(self.jack, self.M)

    @cached_property
    def perp_cross_fit_sq(self) -> np.ndarray:
        """Diagonal-removed P⊥ squared over M_ZW,ii M_ZW,jj + M_ZW,ij²."""
        return cross_fit_weights(self.jack_perp, self.M_ZW)

    @cached_property
    def residual_sq_weights(self) -> np.ndarray:
        """P_ij² / (M_ii M_jj + 2M_ij²) off the diagonal, for squared residual proxies."""
        return cross_fit_weights(self.jack, self.M, pair_factor=2.0)

    @cached_property
    def perp_residual_sq_weights(self) -> np.ndarray:
        return cross_fit_weights(self.jack_perp, self.M_ZW, pair_factor=2.0)

    @classmethod
    def build(
        cls,
        dataset: Dataset,
        verify: bool = True,
        rtol: float = DEFAULT_RTOL,
    ) -> "ProjectionBundle":
        """Factor Z, W and [Z W] and assemble every projection the library uses."""
        n = dataset.n
        eye = np.eye(n)

        proj_z = build_projection(dataset.Z, rtol)
        if proj_z.degenerate:
            raise DatasetError("instrument matrix has rank zero")
        p = proj_z.matrix
        m = eye - p

        if dataset.has_controls:
            proj_w = build_projection(dataset.W, rtol)
            m_w = eye - proj_w.matrix
            k_w = proj_w.rank
            proj_perp = build_projection(m_w @ dataset.Z, rtol)
            if proj_perp.degenerate:
                raise DatasetError("instruments are spanned by the controls")
            p_perp = proj_perp.matrix
            m_zw = eye - build_projection(np.hstack([dataset.Z, dataset.W]), rtol).matrix
            k_z = proj_perp.rank
        else:
            m_w, k_w, p_perp, m_zw, k_z = eye, 0, p, m, proj_z.rank

        bundle = cls(
            n=n,
            k_z=k_z,
            k_w=k_w,
            rank_z=proj_z.rank,
            P=p,
            M=m,
            P_perp=p_perp,
            M_W=m_w,
            M_ZW=m_zw,
            basis_z=proj_z,
        )
        if verify:
            bundle.verify()
        logger.debug("bundle_built", n=n, k_z=k_z, k_w=k_w, rank_z=proj_z.rank)
        return bundle

    @classmethod
    def from_groups(
        cls, dataset: Dataset, labels: np.ndarray | None = None, verify: bool = True
    ) -> "ProjectionBundle":
        """Exact bundle for group-indicator instruments without controls.

        Z must equal the indicator matrix of the sorted distinct labels.
        """
        labels = dataset.group_labels if labels is None else np.asarray(labels)
        if labels is None:
            raise DatasetError("group labels are required for the group fast path")
        if dataset.has_controls:
            raise DatasetError("the group fast path does not support controls")

        groups, codes = np.unique(labels, return_inverse=True)
        indicators = np.zeros((dataset.n, groups.size))
        indicators[np.arange(dataset.n), codes] = 1.0
        if indicators.shape != dataset.Z.shape or not np.array_equal(indicators, dataset.Z):
            raise DatasetError("Z is not the indicator matrix of the group labels")

        proj = group_projection(labels)
        p = proj.matrix
        m = np.eye(dataset.n) - p
        bundle = cls(
            n=dataset.n,
            k_z=proj.rank,
            k_w=0,
            rank_z=proj.rank,
            P=p,
            M=m,
            P_perp=p,
            M_W=np.eye(dataset.n),
            M_ZW=m,
            basis_z=proj,
            grouped=True,
        )
        if verify:
            bundle.verify()
        return bundle

    @classmethod
    def for_dataset(cls, dataset: Dataset, verify: bool = True) -> "ProjectionBundle":
        """Group fast path when the dataset carries group labels and no controls."""
        if dataset.group_labels is not None and not dataset.has_controls:
            return cls.from_groups(dataset, verify=verify)
        return cls.build(dataset, verify=verify)

    def verify(self) -> None:
        """Assert idempotency, symmetry, trace and nesting invariants."""
        projections = {"P": self.P, "M": self.M, "M_W": self.M_W, "M_ZW": self.M_ZW}
        if self.has_controls:
            projections["P_perp"] = self.P_perp
        for name, q in projections.items():
            sym = _max_abs(q - q.T)
            if sym > SYMMETRY_TOL:
                raise InvariantViolationError(f"{name} symmetry", sym, SYMMETRY_TOL)
            idem = _max_abs(q @ q - q)
            if idem > IDEMPOTENCY_TOL:
                raise InvariantViolationError(f"{name} idempotency", idem, IDEMPOTENCY_TOL)

        trace_p = abs(float(np.trace(self.P)) - self.rank_z)
        if trace_p > TRACE_TOL:
            raise InvariantViolationError("trace(P)", trace_p, TRACE_TOL)
        trace_perp = abs(float(np.trace(self.P_perp)) - self.k_z)
        if trace_perp > TRACE_TOL:
            raise InvariantViolationError("trace(P_perp)", trace_perp, TRACE_TOL)
        trace_mw = abs(float(np.trace(self.M_W)) - (self.n - self.k_w))
        if trace_mw > TRACE_TOL:
            raise InvariantViolationError("trace(M_W)", trace_mw, TRACE_TOL)

        if self.has_controls:
            left = _max_abs(self.M_W @ self.P_perp - self.P_perp)
            right = _max_abs(self.P_perp @ self.M_W - self.P_perp)
            nested = max(left, right)
            if nested > IDEMPOTENCY_TOL:
                raise InvariantViolationError("M_W P_perp = P_perp", nested, IDEMPOTENCY_TOL)


def cross_fit_weights(weights: np.ndarray, annihilator: np.ndarray, pair_factor: float = 1.0) -> np.ndarray:
    """Squared zero-diagonal weights divided by M_ii M_jj + c·M_ij².

    c = 1 matches products e_i·(Me)_i; c = 2 matches squared residuals
    (Me)_i², whose pairwise Gaussian moment is σ⁴(M_ii M_jj + 2M_ij²).

    Raises when an annihilator diagonal entry is not positive (an observation
    fitted perfectly by the projection).
    """
    m_diag = np.diag(annihilator)
    bad = np.flatnonzero(m_diag <= MIN_ANNIHILATOR_DIAG)
    if bad.size:
        raise PerfectFitError(int(bad[0]), float(m_diag[bad[0]]))
    out = weights**2 / (np.outer(m_diag, m_diag) + pair_factor * annihilator**2)
    np.fill_diagonal(out, 0.0)
    return out


class PerfectFitError(ManyIVError):
    """An annihilator diagonal entry is (numerically) zero."""

    def __init__(self, index: int, value: float) -> None:
        self.index = index
        self.value = value
        super().__init__(f"observation {index} is perfectly fitted (annihilator diagonal {value:.3e})")


def balance_check(
    bundle: ProjectionBundle, delta: float = 0.99, warn_level: float = 0.9
) -> BalanceReport:
    """Leverage balance of the instrument projection: max_i P_ii ≤ δ < 1."""
    hat = bundle.hat_p
    idx = int(np.argmax(hat))
    max_hat = float(hat[idx])
    report = BalanceReport(
        max_hat=max_hat,
        argmax=idx,
        delta=delta,
        warn_level=warn_level,
        passed=max_hat <= delta,
        warning=max_hat > warn_level,
    )
    if not report.passed:
        logger.warning("leverage_unbalanced", max_hat=max_hat, index=idx, delta=delta)
    return report
