"""Confidence sets by test inversion: {β₀ : test not rejected at level α}.

Two engines. The grid engine evaluates any test on a grid around the JIVE
estimate, extends it while an end is still accepted, scans log-spaced points
out to the far tails, and refines interval ends by bisection. The polynomial
engine handles AR statistics in closed form: the numerator is quadratic and
the normalizer quartic in β₀, so the rejection region is bounded by real
polynomial roots.
"""

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Literal

import numpy as np
from numpy.polynomial import Polynomial
from scipy import stats

from manyiv.core.interfaces import QuarticForm, RobustTest
from manyiv.core.projections import ProjectionBundle
from manyiv.errors import ManyIVError
from manyiv.logger import get_logger
from manyiv.models.dataset import Dataset
from manyiv.models.outcomes import (
    AssumptionReport,
    ConfidenceSet,
    Flag,
    Interval,
    StatisticId,
    ZeroDiagA,
)
from manyiv.models.run_config import GridSpec
from manyiv.services.estimators import beta3_zero_diag, jive2
from manyiv.services.robust_tests import build_test
from manyiv.services.variance import VARIANCE_FLOOR
from manyiv.services.zero_diagonal import compute_theta

logger = get_logger(__name__)

Engine = Literal["auto", "grid", "polynomial"]

FALLBACK_SPREAD = 10.0
ROOT_IMAG_TOL = 1e-7
NEWTON_STEPS = 4


def default_center(
    dataset: Dataset,
    bundle: ProjectionBundle,
    weights: ZeroDiagA | None = None,
    halfwidth_se: float = 20.0,
) -> tuple[float, float]:
    """Centre and half width of the starting grid.

    JIVE (β̂₃ with controls) ± ``halfwidth_se`` standard errors; when the
    estimate or its standard error is unavailable, 0 ± 10·sd(Y)/sd(X).
    """
    try:
        if bundle.has_controls and weights is not None:
            est = beta3_zero_diag(dataset, bundle, weights)
        else:
            est = jive2(dataset, bundle)
        if est.std_error is not None:
            return est.beta_hat, halfwidth_se * est.std_error
    except ManyIVError as exc:
        logger.info("grid_center_fallback", error=str(exc), error_type=type(exc).__name__)

    sd_y = float(np.std(dataset.y))
    sd_x = float(np.std(dataset.x))
    spread = FALLBACK_SPREAD * (sd_y / sd_x if sd_x > 0 else max(sd_y, 1.0))
    return 0.0, spread if spread > 0 else FALLBACK_SPREAD


def _evaluate_many(accept: Callable[[float], bool], points: Sequence[float], workers: int) -> list[bool]:
    if workers <= 1:
        return [accept(float(b)) for b in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(accept, (float(b) for b in points)))


def _bisect(accept: Callable[[float], bool], rejected: float, accepted: float, rtol: float) -> float:
    """Boundary between a rejected and an accepted point, returned from the accepted side."""
    while abs(accepted - rejected) > rtol * max(abs(accepted), abs(rejected), 1.0):
        mid = 0.5 * (accepted + rejected)
        if accept(mid):
            accepted = mid
        else:
            rejected = mid
    return accepted


def _set_flags(intervals: list[Interval]) -> list[Flag]:
    if not intervals:
        return [Flag.EMPTY]
    if len(intervals) == 1 and intervals[0].lower is None and intervals[0].upper is None:
        return [Flag.WHOLE_LINE]
    flags = []
    if any(i.lower is None for i in intervals):
        flags.append(Flag.UNBOUNDED_BELOW)
    if any(i.upper is None for i in intervals):
        flags.append(Flag.UNBOUNDED_ABOVE)
    return flags


def _tail_offsets(start: float, scale: float, spec: GridSpec) -> list[float]:
    """Log-spaced distances from the centre beyond ``start``, out to 10^decades · scale."""
    reach = max(start, scale) * 10.0**spec.tail_decades
    if reach <= start:
        return []
    count = max(int(np.ceil(np.log10(reach / start) * spec.tail_points_per_decade)), 1)
    return list(np.geomspace(start, reach, count + 1)[1:])


def grid_inversion(
    test: RobustTest,
    alpha: float,
    center: float,
    halfwidth: float,
    spec: GridSpec | None = None,
    workers: int = 1,
) -> ConfidenceSet:
    """Invert ``test`` on a grid around ``center``.

    After the linear window (extended while an end stays accepted) a
    log-spaced scan runs outwards to ``tail_decades`` decades past the
    window, so accepted regions away from the centre are found too. A side
    whose outermost scan point is still accepted is unbounded.
    """
    spec = spec or GridSpec()

    def accept(b: float) -> bool:
        return not test.evaluate(b, alpha).rejected

    points = list(np.linspace(center - halfwidth, center + halfwidth, spec.points))
    accepted = _evaluate_many(accept, points, workers)
    extra = max(spec.points // 2, 2)

    reach = halfwidth
    for _ in range(spec.max_extensions):
        if not accepted[0]:
            break
        new = list(np.linspace(center - 2.0 * reach, points[0], extra + 1)[:-1])
        points = new + points
        accepted = _evaluate_many(accept, new, workers) + accepted
        reach *= 2.0

    reach = halfwidth
    for _ in range(spec.max_extensions):
        if not accepted[-1]:
            break
        new = list(np.linspace(points[-1], center + 2.0 * reach, extra + 1)[1:])
        points = points + new
        accepted = accepted + _evaluate_many(accept, new, workers)
        reach *= 2.0

    below = [center - d for d in _tail_offsets(center - points[0], halfwidth, spec)][::-1]
    above = [center + d for d in _tail_offsets(points[-1] - center, halfwidth, spec)]
    if below or above:
        scanned = _evaluate_many(accept, below + above, workers)
        points = below + points + above
        accepted = scanned[: len(below)] + accepted + scanned[len(below) :]
        logger.debug("grid_tail_scan", points=len(below) + len(above), accepted=sum(scanned))
    unbounded_below = accepted[0]
    unbounded_above = accepted[-1]

    intervals: list[Interval] = []
    i, n = 0, len(points)
    while i < n:
        if not accepted[i]:
            i += 1
            continue
        start = i
        while i + 1 < n and accepted[i + 1]:
            i += 1
        stop = i
        if start == 0 and unbounded_below:
            lower = None
        else:
            lower = _bisect(accept, points[start - 1], points[start], spec.rtol)
        if stop == n - 1 and unbounded_above:
            upper = None
        else:
            upper = _bisect(accept, points[stop + 1], points[stop], spec.rtol)
        intervals.append(Interval(lower=lower, upper=upper))
        i += 1

    return ConfidenceSet(
        statistic_id=test.statistic_id,
        alpha=alpha,
        engine="grid",
        intervals=intervals,
        flags=_set_flags(intervals),
    )


def _real_roots(poly: Polynomial) -> list[float]:
    coef = poly.coef
    scale = float(np.max(np.abs(coef))) if coef.size else 0.0
    if scale == 0.0:
        return []
    poly = poly.trim(tol=1e-14 * scale)
    if poly.degree() < 1:
        return []
    deriv = poly.deriv()
    roots = []
    for r in poly.roots():
        if abs(r.imag) > ROOT_IMAG_TOL * max(1.0, abs(r.real)):
            continue
        x = float(r.real)
        for _ in range(NEWTON_STEPS):
            slope = deriv(x)
            if slope == 0.0:
                break
            x -= poly(x) / slope
        roots.append(x)
    return roots


def quartic_normalizer(form: QuarticForm) -> Polynomial:
    """Φ̂(b) = scale · a(b)′ W a(b) expanded into a degree-4 polynomial."""
    w = form.weights
    c0, c1, c2 = form.c0, form.c1, form.c2
    q00 = c0 @ w @ c0
    q01 = c0 @ w @ c1
    q02 = c0 @ w @ c2
    q11 = c1 @ w @ c1
    q12 = c1 @ w @ c2
    q22 = c2 @ w @ c2
    return form.scale * Polynomial([q00, 2.0 * q01, q11 + 2.0 * q02, 2.0 * q12, q22])


def polynomial_inversion(
    form: QuarticForm,
    alpha: float,
    statistic_id: StatisticId,
    floor: float = VARIANCE_FLOOR,
) -> ConfidenceSet:
    """Closed-form AR inversion.

    b is rejected iff N(b) > 0, Φ̂(b) ≥ ε and N(b)² − z²·K·Φ̂(b) > 0; every
    breakpoint itself is accepted.
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"polynomial inversion needs 0 < alpha < 0.5, got {alpha}")
    z = float(stats.norm.isf(alpha))
    numerator = Polynomial([form.n0, form.n1, form.n2])
    normalizer = quartic_normalizer(form)
    boundary = numerator**2 - z**2 * form.k * normalizer

    breaks = sorted(
        set(_real_roots(numerator) + _real_roots(boundary) + _real_roots(normalizer - floor))
    )

    def rejected(b: float) -> bool:
        num = numerator(b)
        return num > 0.0 and normalizer(b) >= floor and boundary(b) > 0.0

    if not breaks:
        intervals = [] if rejected(0.0) else [Interval(lower=None, upper=None)]
        return ConfidenceSet(
            statistic_id=statistic_id,
            alpha=alpha,
            engine="polynomial",
            intervals=intervals,
            flags=_set_flags(intervals),
        )

    edges = [-np.inf, *breaks, np.inf]
    status = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if np.isinf(lo):
            mid = hi - max(1.0, abs(hi))
        elif np.isinf(hi):
            mid = lo + max(1.0, abs(lo))
        else:
            mid = 0.5 * (lo + hi)
        status.append(not rejected(mid))

    intervals: list[Interval] = []
    start: float | None = None
    open_run = False
    for idx, ok in enumerate(status):
        lo = edges[idx]
        if ok and not open_run:
            start = None if np.isinf(lo) else float(lo)
            open_run = True
        elif not ok and open_run:
            intervals.append(Interval(lower=start, upper=float(lo)))
            open_run = False
    if open_run:
        intervals.append(Interval(lower=start, upper=None))

    return ConfidenceSet(
        statistic_id=statistic_id,
        alpha=alpha,
        engine="polynomial",
        intervals=intervals,
        flags=_set_flags(intervals),
    )


def invert(
    test: RobustTest,
    alpha: float,
    center: float,
    halfwidth: float,
    spec: GridSpec | None = None,
    engine: Engine = "auto",
    workers: int = 1,
    floor: float = VARIANCE_FLOOR,
) -> ConfidenceSet:
    form = test.quartic_form() if engine in ("auto", "polynomial") else None
    if engine == "polynomial" and form is None:
        raise ValueError(f"{test.statistic_id} has no closed form in beta0; use the grid engine")
    if form is not None and 0.0 < alpha < 0.5:
        return polynomial_inversion(form, alpha, test.statistic_id, floor)
    return grid_inversion(test, alpha, center, halfwidth, spec, workers)


def invert_test(
    dataset: Dataset,
    bundle: ProjectionBundle,
    statistic_id: StatisticId | str,
    alpha: float = 0.05,
    spec: GridSpec | None = None,
    engine: Engine = "auto",
    weights: ZeroDiagA | None = None,
    assumption: AssumptionReport | None = None,
    workers: int = 1,
    floor: float = VARIANCE_FLOOR,
) -> ConfidenceSet:
    """Confidence set for the statistic registered under ``statistic_id``."""
    spec = spec or GridSpec()
    if bundle.has_controls and weights is None:
        weights = compute_theta(bundle, np.asarray(dataset.W))
    test = build_test(statistic_id, dataset, bundle, weights=weights, assumption=assumption, floor=floor)
    center, halfwidth = default_center(dataset, bundle, weights, spec.halfwidth_se)
    if spec.center is not None:
        center = spec.center
    if spec.halfwidth is not None:
        halfwidth = spec.halfwidth
    result = invert(test, alpha, center, halfwidth, spec, engine, workers, floor)
    logger.debug(
        "confidence_set_built",
        statistic=str(result.statistic_id),
        engine=result.engine,
        intervals=len(result.intervals),
    )
    return result
