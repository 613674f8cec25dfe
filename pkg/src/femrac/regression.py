"""Value types passed between the regression pipelines and the adaptive law."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegressionPair:
    """Scalar-regressor equation ``Y = Delta * theta``."""

    Y: np.ndarray
    Delta: float

    def residual(self, theta):
        return np.asarray(self.Y) - self.Delta * np.asarray(theta)


@dataclass(frozen=True)
class NormalizedRegression:
    """Forgetting-filtered pair: ``Omega = int e^{-s t} Delta^2``, ``Upsilon = int e^{-s t} Delta Y``."""

    Omega: float
    Upsilon: np.ndarray

    def __post_init__(self):
        if self.Omega < 0:
            raise ValueError("Omega must be non-negative")
