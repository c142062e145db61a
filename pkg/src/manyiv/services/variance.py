"""Normalizing-factor estimators for the leave-one-out AR and LM statistics.

All estimators are evaluated at implied errors e₀ = Y − β₀X supplied by the
caller. Cross-fit versions replace e_i² by e_i·(M e)_i, which is unbiased for
σ_i² under the null; they can be negative in finite samples, so every result
is floored and the unfloored value kept in ``raw``.
"""

from collections.abc import Callable

import numpy as np

from manyiv.core.leave_out import LeaveOut, RankCollapseError
from manyiv.core.projections import ProjectionBundle, cross_fit_weights
from manyiv.errors import ManyIVError
from manyiv.logger import get_logger
from manyiv.models.dataset import Dataset
from manyiv.models.outcomes import VarianceEstimate, VarianceId, ZeroDiagA

logger = get_logger(__name__)

VARIANCE_FLOOR = 1e-12
PHI3_MAX_N = 2000
LEVERAGE_TOL = 1e-12


class VarianceInputError(ManyIVError):
    """Implied errors or regressors that do not fit the bundle."""


def _vector(values: np.ndarray, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape[0] != n:
        raise VarianceInputError(f"{name} has {arr.shape[0]} entries, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise VarianceInputError(f"non-finite entries in {name}")
    return arr


def _k(bundle: ProjectionBundle) -> int:
    if bundle.k_z < 1:
        raise VarianceInputError("normalizers need at least one instrument")
    return bundle.k_z


def _floored(
    raw: float,
    estimator_id: VarianceId,
    floor: float,
    beta0: float | None,
    components: dict[str, float] | None = None,
) -> VarianceEstimate:
    return VarianceEstimate(
        value=max(raw, floor),
        raw=raw,
        floor=floor,
        estimator_id=estimator_id,
        beta0=beta0,
        components=components or {},
    )


def phi1(
    e0: np.ndarray,
    bundle: ProjectionBundle,
    beta0: float | None = None,
    floor: float = VARIANCE_FLOOR,
) -> VarianceEstimate:
    """Φ̂₁ = (2/K) Σ_{i≠j} P_ij² e_i² e_j²."""
    e = _vector(e0, bundle.n, "e0")
    s = e**2
    raw = 2.0 / _k(bundle) * float(s @ bundle.jack_sq @ s)
    return _floored(raw, VarianceId.PHI1, floor, beta0)


def phi2(
    e0: np.ndarray,
    bundle: ProjectionBundle,
    beta0: float | None = None,
    floor: float = VARIANCE_FLOOR,
) -> VarianceEstimate:
    """Φ̂₂ = (2/K) Σ_{i≠j} P̃_ij² (e_i M_i e)(e_j M_j e)."""
    e = _vector(e0, bundle.n, "e0")
    a = e * (bundle.M @ e)
    raw = 2.0 / _k(bundle) * float(a @ bundle.cross_fit_sq @ a)
    return _floored(raw, VarianceId.PHI2, floor, beta0)


def phi3(
    e0: np.ndarray,
    bundle: ProjectionBundle,
    beta0: float | None = None,
    floor: float = VARIANCE_FLOOR,
    max_n: int = PHI3_MAX_N,
    allow_large: bool = False,
) -> VarianceEstimate:
    """Leave-three-out Φ̂₃ = (2/K) Σ_{i≠j} P_ij² ŝ_ij.

    ŝ_ij = e_i e_j Σ_k M̃_ik e_k (e_j − fit_j) where M̃ is the annihilator
    without rows i, j and fit_j is the first-stage fit at j without i, j, k.
    The k-th leave-three-out fit is a rank-one update of the leave-two-out one,
    so each pair costs O(N).
    """
    n = bundle.n
    if n > max_n and not allow_large:
        raise VarianceInputError(
            f"phi3 is limited to N <= {max_n} (got N={n}); pass allow_large to override"
        )
    e = _vector(e0, n, "e0")
    p = bundle.P
    full_fit = p @ e

    rows, cols = np.nonzero(np.triu(bundle.jack, k=1))
    total = 0.0
    for i, j in zip(rows.tolist(), cols.tolist()):
        lo = LeaveOut(p, (i, j))
        fit = lo.fitted(e, full_fit)
        resid = e - fit
        lev = lo.leverage()
        slack = 1.0 - lev
        slack[[i, j]] = 1.0
        bad = np.flatnonzero(slack <= LEVERAGE_TOL)
        if bad.size:
            raise RankCollapseError((i, j, int(bad[0])), float(slack[bad[0]]))

        row_i = lo.projection_row(i)
        row_j = lo.projection_row(j)
        scaled = resid / slack
        total += p[i, j] ** 2 * (
            _pair_proxy(i, j, e, resid, row_i, row_j, scaled)
            + _pair_proxy(j, i, e, resid, row_j, row_i, scaled)
        )

    raw = 2.0 / _k(bundle) * total
    return _floored(raw, VarianceId.PHI3, floor, beta0)


def _pair_proxy(
    i: int,
    j: int,
    e: np.ndarray,
    resid: np.ndarray,
    row_i: np.ndarray,
    row_j: np.ndarray,
    scaled: np.ndarray,
) -> float:
    weights = -row_i * e
    weights[[i, j]] = 0.0
    inner = e[i] * resid[j] + float(weights @ (resid[j] + row_j * scaled))
    return e[i] * e[j] * inner


def psi1(
    e0: np.ndarray,
    x: np.ndarray,
    bundle: ProjectionBundle,
    beta0: float | None = None,
    floor: float = VARIANCE_FLOOR,
) -> VarianceEstimate:
    """Ψ̂₁ with σ̂_i² = e_i² and γ̂_i = X_i e_i."""
    e = _vector(e0, bundle.n, "e0")
    xv = _vector(x, bundle.n, "x")
    k = _k(bundle)
    q = bundle.jack @ xv
    g = xv * e
    first = float(np.sum(e**2 * q**2)) / k
    second = float(g @ bundle.jack_sq @ g) / k
    return _floored(
        first + second, VarianceId.PSI1, floor, beta0, {"first": first, "second": second}
    )


def psi2(
    e0: np.ndarray,
    x: np.ndarray,
    bundle: ProjectionBundle,
    beta0: float | None = None,
    floor: float = VARIANCE_FLOOR,
) -> VarianceEstimate:
    """Cross-fit Ψ̂₂: σ̂_i² = e_i M_i e / M_ii and γ̂_i = X_i M_i e with P̃² weights."""
    e = _vector(e0, bundle.n, "e0")
    xv = _vector(x, bundle.n, "x")
    k = _k(bundle)
    weights = bundle.cross_fit_sq
    me = bundle.M @ e
    q = bundle.jack @ xv
    g = xv * me
    first = float(np.sum(e * me / bundle.hat_m * q**2)) / k
    second = float(g @ weights @ g) / k
    return _floored(
        first + second, VarianceId.PSI2, floor, beta0, {"first": first, "second": second}
    )


def phi_w(
    e0: np.ndarray,
    bundle: ProjectionBundle,
    weights: ZeroDiagA,
    beta0: float | None = None,
    floor: float = VARIANCE_FLOOR,
    cross_fit: np.ndarray | None = None,
) -> VarianceEstimate:
    """Φ̂_W = (2/K_Z) Σ_{i,j} A_ij²/(M_ZW,ii M_ZW,jj + M_ZW,ij²) σ̂_i² σ̂_j², σ̂_i² = e_i (M_ZW e)_i.

    ``cross_fit`` takes the precomputed weight matrix when the same A is
    evaluated at many β₀.
    """
    e = _vector(e0, bundle.n, "e0")
    w = cross_fit_weights(weights.A, bundle.M_ZW) if cross_fit is None else cross_fit
    s = e * (bundle.M_ZW @ e)
    raw = 2.0 / _k(bundle) * float(s @ w @ s)
    return _floored(raw, VarianceId.PHI_W, floor, beta0)


def phi_perp(
    e0: np.ndarray,
    bundle: ProjectionBundle,
    beta0: float | None = None,
    floor: float = VARIANCE_FLOOR,
) -> VarianceEstimate:
    """Cross-fit normalizer for the naive many-controls AR statistics.

    Weights are diagonal-removed P⊥ squared over M_ZW,ii M_ZW,jj + M_ZW,ij²;
    proxies are e_i (M_ZW e)_i.
    """
    e = _vector(e0, bundle.n, "e0")
    w = bundle.perp_cross_fit_sq
    s = e * (bundle.M_ZW @ e)
    raw = 2.0 / _k(bundle) * float(s @ w @ s)
    return _floored(raw, VarianceId.PHI_PERP, floor, beta0)


def true_phi(sigma2: np.ndarray, bundle: ProjectionBundle) -> float:
    """Φ₀ = (2/K) Σ_{i≠j} P_ij² σ_i² σ_j² from known error variances."""
    s = _vector(sigma2, bundle.n, "sigma2")
    return 2.0 / _k(bundle) * float(s @ bundle.jack_sq @ s)


def true_psi(
    sigma2: np.ndarray, gamma: np.ndarray, x: np.ndarray, bundle: ProjectionBundle
) -> float:
    """Ψ from known σ_i² and γ_i = E[X_i e_i], with the realized X in the first summand."""
    k = _k(bundle)
    s = _vector(sigma2, bundle.n, "sigma2")
    g = _vector(gamma, bundle.n, "gamma")
    q = bundle.jack @ _vector(x, bundle.n, "x")
    return float(np.sum(s * q**2)) / k + float(g @ bundle.jack_sq @ g) / k


ArVariance = Callable[..., VarianceEstimate]

AR_VARIANCES: dict[VarianceId, ArVariance] = {
    VarianceId.PHI1: phi1,
    VarianceId.PHI2: phi2,
    VarianceId.PHI3: phi3,
}

LM_VARIANCES: dict[VarianceId, ArVariance] = {
    VarianceId.PSI1: psi1,
    VarianceId.PSI2: psi2,
}


def proxy_polynomial(
    variance_id: VarianceId,
    dataset: Dataset,
    bundle: ProjectionBundle,
    weights: ZeroDiagA | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
    """Write an AR normalizer as Φ̂(b) = scale · a(b)′ W a(b) with a(b) = c0 + c1 b + c2 b².

    Returns (c0, c1, c2, W, scale). Only the quartic normalizers qualify.
    """
    y = np.asarray(dataset.y)
    x = np.asarray(dataset.x)
    if variance_id == VarianceId.PHI1:
        annihilator, w = None, bundle.jack_sq
    elif variance_id == VarianceId.PHI2:
        annihilator, w = bundle.M, bundle.cross_fit_sq
    elif variance_id == VarianceId.PHI_W:
        if weights is None:
            raise VarianceInputError("phiw needs the zero-diagonal weight matrix")
        annihilator, w = bundle.M_ZW, cross_fit_weights(weights.A, bundle.M_ZW)
    else:
        raise VarianceInputError(f"{variance_id} is not a quartic AR normalizer")

    if annihilator is None:
        my, mx = y, x
    else:
        my, mx = annihilator @ y, annihilator @ x
    # e(b) = y − b x, proxy e·(Me) = y·My − b(y·Mx + x·My) + b² x·Mx
    c0 = y * my
    c1 = -(y * mx + x * my)
    c2 = x * mx
    return c0, c1, c2, w, 2.0 / _k(bundle)


def upsilon(
    x: np.ndarray,
    bundle: ProjectionBundle,
    floor: float = VARIANCE_FLOOR,
    residualized: bool = False,
) -> VarianceEstimate:
    """First-stage uncertainty Υ̂ = (2/K) Σ_{i≠j} P_ij² (MX)_i² (MX)_j² / (M_ii M_jj + 2M_ij²).

    The proxies (MX)_i² carry no first-stage signal because MZ = 0, so Υ̂
    does not shrink as identification gets stronger and is never negative.
    Under homoskedastic Gaussian first-stage errors it is unbiased for
    (2/K) Σ_{i≠j} P_ij² σ⁴. With ``residualized`` the weights come from P⊥
    and M_ZW and X is expected to be M_W X already.
    """
    xv = _vector(x, bundle.n, "x")
    if residualized:
        a = (bundle.M_ZW @ xv) ** 2
        w = bundle.perp_residual_sq_weights
    else:
        a = (bundle.M @ xv) ** 2
        w = bundle.residual_sq_weights
    raw = 2.0 / _k(bundle) * float(a @ w @ a)
    return _floored(raw, VarianceId.UPSILON, floor, None)
