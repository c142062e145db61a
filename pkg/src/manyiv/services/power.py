"""Local-power predictions for the leave-one-out AR and LM tests.

Under local alternatives AR ⇒ Δ²μ²/√(KΦ) + N(0,1) and
LM^{1/2} ⇒ Δμ²/√(KΨ) + N(0,1).
"""

from collections.abc import Iterable

import numpy as np
from scipy import stats

from manyiv.models.outcomes import PowerPrediction


def theoretical_power(
    mu2: float,
    k: int,
    phi: float,
    psi: float,
    delta: float,
    alpha: float = 0.05,
) -> PowerPrediction:
    if phi <= 0.0 or psi <= 0.0:
        raise ValueError(f"normalizers must be positive, got Phi={phi}, Psi={psi}")
    if k < 1:
        raise ValueError(f"need K >= 1, got {k}")
    ar_shift = delta**2 * mu2 / np.sqrt(k * phi)
    ar_power = float(stats.norm.sf(stats.norm.isf(alpha) - ar_shift))

    m = delta * mu2 / np.sqrt(k * psi)
    z = stats.norm.isf(alpha / 2.0)
    lm_power = float(stats.norm.sf(z - m) + stats.norm.cdf(-z - m))
    return PowerPrediction(
        delta=float(delta), ar_power=ar_power, lm_power=min(1.0, lm_power)
    )


def power_curve(
    mu2: float,
    k: int,
    phi: float,
    psi: float,
    deltas: Iterable[float],
    alpha: float = 0.05,
) -> list[PowerPrediction]:
    return [theoretical_power(mu2, k, phi, psi, d, alpha) for d in deltas]
