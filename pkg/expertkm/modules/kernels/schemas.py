"""Belief kernel schema."""

import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special

from expertkm.utils import constants


KernelKind = Literal["dirac", "truncated-gaussian", "truncated-gamma", "uniform"]


class BeliefKernel(BaseModel):
    """
    An expert's belief about the final size of one closed claim, supported on [lower, inf).

    Parameters by kind:
        dirac: p1 = atom (>= lower, may be +inf)
        truncated-gaussian: p1 = location m, p2 = scale s > 0
        truncated-gamma: p1 = shape alpha > 0, p2 = rate beta > 0
        uniform: p1 = upper bound > lower
    """

    model_config = ConfigDict(frozen=True)

    kind: KernelKind
    lower: float = Field(..., ge=0, allow_inf_nan=False)
    p1: float
    p2: Optional[float] = None

    @model_validator(mode="after")
    def check_params(self) -> "BeliefKernel":
        if math.isnan(self.p1) or (self.p2 is not None and math.isnan(self.p2)):
            raise ValueError("kernel parameters must not be NaN")

        if self.kind == "dirac":
            if self.p1 < self.lower:
                raise ValueError(f"dirac atom {self.p1!r} below lower bound {self.lower!r}")
        elif self.kind == "uniform":
            if not math.isfinite(self.p1) or self.p1 <= self.lower:
                raise ValueError(f"uniform upper bound {self.p1!r} must be finite and > lower {self.lower!r}")
        else:
            if self.p2 is None or not math.isfinite(self.p1) or not math.isfinite(self.p2) or self.p2 <= 0:
                raise ValueError(f"{self.kind} requires finite p1 and p2 > 0")
            if self.kind == "truncated-gaussian":
                normalizer = special.ndtr(-(self.lower - self.p1) / self.p2)
            else:
                if self.p1 <= 0:
                    raise ValueError("truncated-gamma shape must be > 0")
                normalizer = special.gammaincc(self.p1, self.p2 * self.lower)
            if not normalizer >= constants.EPS_DIV:
                raise ValueError(f"{self.kind} kernel has negligible mass {normalizer:.3g} on [lower, inf)")
        return self

    @property
    def is_atomic(self) -> bool:
        return self.kind == "dirac"
