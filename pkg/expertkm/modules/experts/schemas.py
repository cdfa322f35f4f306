"""Expert-augmented sample and kernel-mixture curve."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from expertkm.modules.kernels.schemas import BeliefKernel
from expertkm.modules.kernels.service import KernelService
from expertkm.modules.survival.schemas import SortedSample
from expertkm.utils.exceptions import ValidationError


@dataclass(frozen=True, eq=False)
class ExpertSample:
    """
    A sorted sample with either crude judgments or sophisticated beliefs.

    Both arrays are aligned with ``base`` (sorted order). ``beliefs[i]`` is
    None exactly where delta is 0.
    """

    base: SortedSample
    judgments: Optional[np.ndarray] = None
    beliefs: Optional[tuple[Optional[BeliefKernel], ...]] = None

    def __post_init__(self):
        if self.judgments is not None and self.beliefs is not None:
            raise ValidationError("an expert sample carries judgments or beliefs, not both")
        if self.judgments is not None:
            judgments = np.array(self.judgments, dtype=float)
            if judgments.shape != (self.base.n,):
                raise ValidationError(f"judgments has shape {judgments.shape}, expected ({self.base.n},)")
            judgments.setflags(write=False)
            object.__setattr__(self, "judgments", judgments)
        if self.beliefs is not None:
            beliefs = tuple(self.beliefs)
            if len(beliefs) != self.base.n:
                raise ValidationError(f"{len(beliefs)} beliefs for {self.base.n} observations")
            object.__setattr__(self, "beliefs", beliefs)

    @property
    def n(self) -> int:
        return self.base.n


@dataclass(frozen=True, eq=False)
class MixtureCurve:
    """
    F(t) = sum_i weights_i K_i(t), a nondecreasing mixture of kernel CDFs.

    ``weights`` already include the 1/n factor.
    """

    kernels: tuple[BeliefKernel, ...]
    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        if weights.shape != (len(self.kernels),):
            raise ValidationError(f"{weights.size} weights for {len(self.kernels)} kernels")
        weights.setflags(write=False)
        object.__setattr__(self, "kernels", tuple(self.kernels))
        object.__setattr__(self, "weights", weights)

    def evaluate(self, t):
        return KernelService.mixture_cdf(self.kernels, self.weights, t)

    def left_limit(self, t):
        return KernelService.mixture_cdf(self.kernels, self.weights, t, left=True)

    __call__ = evaluate

    @property
    def total(self) -> float:
        """Total IPCW mass (1/n) sum delta_i / (1 - G(W_i-))."""
        return float(self.weights.sum())

    def export_grid(self, grid) -> np.ndarray:
        """Values on a grid, for serialization."""
        return np.asarray(self.evaluate(np.asarray(grid, dtype=float)), dtype=float)
