"""Abstract interfaces for robust tests.

Confidence-set inversion, the simulation runners and the CLI depend on these
contracts only; concrete tests are wired up in ``manyiv.services.robust_tests``.
"""

from abc import ABC, abstractmethod

import numpy as np
from pydantic import BaseModel, ConfigDict

from manyiv.models.outcomes import Sidedness, StatisticId, TestOutcome


class QuarticForm(BaseModel):
    """An AR statistic written as a function of β₀.

    numerator(b) = n0 + n1 b + n2 b²;
    normalizer(b) = scale · a(b)′ W a(b) with a(b) = c0 + c1 b + c2 b²;
    statistic(b) = numerator(b) / √(k · normalizer(b)).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n0: float
    n1: float
    n2: float
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    weights: np.ndarray
    scale: float
    k: int


class RobustTest(ABC):
    """A test of H₀: β = β₀ bound to one dataset and its projection bundle."""

    statistic_id: StatisticId
    sidedness: Sidedness

    @abstractmethod
    def evaluate(self, beta0: float, alpha: float) -> TestOutcome: ...

    def quartic_form(self) -> QuarticForm | None:
        """Closed form in β₀ when the statistic supports polynomial inversion."""
        return None
