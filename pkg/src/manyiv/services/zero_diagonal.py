"""Zero-diagonal weight matrix for many controls and the balanced-design checks.

θ solves (M_W ∘ M_W) θ = diag(P⊥) so that A = P⊥ − M_W D_θ M_W has a zero
diagonal. A annihilates W because both terms do, and Σ A_ij² = K_Z − θ′diag(P⊥).
"""

import numpy as np
from scipy import linalg

from manyiv.core.projections import InvariantViolationError, ProjectionBundle
from manyiv.errors import ManyIVError
from manyiv.logger import get_logger
from manyiv.models.outcomes import AssumptionReport, ZeroDiagA

logger = get_logger(__name__)

RCOND_TOL = 1e-12
DIAG_TOL = 1e-10
ANNIHILATION_TOL = 1e-8
THETA_TOL = 1e-10
SUM_TOL = 1e-8


class ThetaSolveError(ManyIVError):
    """(M_W ∘ M_W) θ = diag(P⊥) could not be solved reliably."""


class AssumptionViolationError(ManyIVError):
    def __init__(self, report: AssumptionReport) -> None:
        self.report = report
        failed = [
            name
            for name, ok in (
                ("min M_W,ii > 1/2", report.mw_diag_ok),
                ("theta >= 0", report.theta_ok),
                ("max P_perp,ii / M_W,ii^2 <= delta", report.leverage_ok),
            )
            if not ok
        ]
        super().__init__("balanced-design check failed: " + ", ".join(failed))


def _solve_theta(m_w: np.ndarray, target: np.ndarray) -> np.ndarray:
    gram = m_w * m_w
    try:
        factor = linalg.cho_factor(gram, lower=False, check_finite=False)
    except linalg.LinAlgError as exc:
        raise ThetaSolveError(f"M_W∘M_W is not positive definite: {exc}") from exc
    pivots = np.abs(np.diag(factor[0]))
    rcond = float((pivots.min() / pivots.max()) ** 2)
    if rcond < RCOND_TOL:
        raise ThetaSolveError(f"M_W∘M_W is singular to working precision (rcond≈{rcond:.2e})")
    return linalg.cho_solve(factor, target, check_finite=False)


def compute_theta(
    bundle: ProjectionBundle,
    controls: np.ndarray | None = None,
    verify: bool = True,
) -> ZeroDiagA:
    """Build A = P⊥ − M_W D_θ M_W and check its structural properties.

    Without controls this is P with its diagonal removed. ``controls`` is W,
    used for the A·W check; without it A·(I − M_W) is checked instead.
    """
    m_w = bundle.M_W
    d = bundle.hat_perp
    theta = _solve_theta(m_w, d)

    a = bundle.P_perp - (m_w * theta) @ m_w
    a = (a + a.T) / 2.0

    mw_diag = bundle.hat_mw
    sum_squares = float(np.sum(a**2))
    min_theta = float(theta.min())
    max_theta = float(theta.max())
    bounds_checked = min_theta >= -THETA_TOL

    if verify:
        diag_dev = float(np.max(np.abs(np.diag(a))))
        if diag_dev > DIAG_TOL:
            raise InvariantViolationError("diag(A) = 0", diag_dev, DIAG_TOL)

        if controls is not None and controls.shape[1]:
            annihilation = float(np.max(np.abs(a @ controls)))
        elif bundle.has_controls:
            annihilation = float(np.max(np.abs(a - a @ m_w)))
        else:
            annihilation = 0.0
        if annihilation > ANNIHILATION_TOL:
            raise InvariantViolationError("A W = 0", annihilation, ANNIHILATION_TOL)

        k = bundle.k_z
        identity_dev = abs(sum_squares - (k - float(theta @ d)))
        if identity_dev > SUM_TOL * max(1.0, k):
            raise InvariantViolationError("sum A^2 = K_Z - theta'd", identity_dev, SUM_TOL)
        if bounds_checked:
            lower = (1.0 - max_theta) * k
            if sum_squares < lower - SUM_TOL or sum_squares > k + SUM_TOL:
                dev = max(lower - sum_squares, sum_squares - k)
                raise InvariantViolationError("sum A^2 within [(1 - max theta) K_Z, K_Z]", dev, SUM_TOL)

    if not bounds_checked:
        logger.info("theta_negative", min_theta=min_theta, note="sum-of-squares bounds not checked")

    return ZeroDiagA(
        A=a,
        theta=theta,
        min_mw_diag=float(mw_diag.min()),
        max_theta=max_theta,
        max_leverage_ratio=float(np.max(d / mw_diag**2)),
        sum_squares=sum_squares,
        lemma_bounds_checked=bounds_checked,
    )


def check_balanced_design(
    bundle: ProjectionBundle,
    theta: np.ndarray | None,
    delta: float = 0.99,
    warn_level: float = 0.9,
) -> AssumptionReport:
    """Report the many-controls balance conditions; never raises.

    Passes iff min M_W,ii > 1/2, min θ ≥ 0 (to 1e−10) and
    max P⊥_ii / M_W,ii² ≤ δ. A missing θ (solve failed) fails the θ check.
    """
    mw_diag = bundle.hat_mw
    ratio = float(np.max(bundle.hat_perp / mw_diag**2))
    min_mw = float(mw_diag.min())
    min_theta = None if theta is None else float(np.min(theta))

    warnings: list[str] = []
    if ratio > warn_level:
        warnings.append(f"max P_perp,ii / M_W,ii^2 = {ratio:.4f} exceeds {warn_level}")
    if min_mw <= 0.5:
        warnings.append(f"min M_W,ii = {min_mw:.4f} is not above 1/2")
    if min_theta is None:
        warnings.append("theta unavailable")
    elif min_theta < -THETA_TOL:
        warnings.append(f"min theta = {min_theta:.4g} is negative")

    report = AssumptionReport(
        min_mw_diag=min_mw,
        min_theta=min_theta,
        max_leverage_ratio=ratio,
        delta=delta,
        warn_level=warn_level,
        mw_diag_ok=min_mw > 0.5,
        theta_ok=min_theta is not None and min_theta >= -THETA_TOL,
        leverage_ok=ratio <= delta,
        warnings=warnings,
    )
    if not report.passed:
        logger.warning("balanced_design_violated", warnings=warnings)
    return report


def require_balanced_design(
    bundle: ProjectionBundle,
    theta: np.ndarray | None,
    delta: float = 0.99,
    warn_level: float = 0.9,
) -> AssumptionReport:
    report = check_balanced_design(bundle, theta, delta, warn_level)
    if not report.passed:
        raise AssumptionViolationError(report)
    return report
