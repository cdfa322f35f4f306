"""Product-limit curve schema."""

from dataclasses import dataclass

import numpy as np

from expertkm.modules.survival.schemas import StepCurve


@dataclass(frozen=True, eq=False)
class KmCurve:
    """
    A product-limit CDF estimate.

    ``at_risk[j]`` is the number of observations with W >= curve.jump_times[j].
    The curve is held constant beyond ``last_obs``.
    """

    curve: StepCurve
    at_risk: np.ndarray
    last_obs: float

    def evaluate(self, t):
        return self.curve.evaluate(t)

    def left_limit(self, t):
        return self.curve.left_limit(t)

    __call__ = evaluate

    @property
    def jump_times(self) -> np.ndarray:
        return self.curve.jump_times

    @property
    def values(self) -> np.ndarray:
        return self.curve.values
