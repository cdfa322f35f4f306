"""Parametric model and fit result schemas."""

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


Family = Literal["exponential", "pareto"]
FitMode = Literal["crude", "sophisticated"]
FitMethod = Literal["closed-form", "numeric"]


class ParametricModel(BaseModel):
    """One-parameter family f_theta: Exponential(lambda) or Pareto(alpha) with known sigma."""

    model_config = ConfigDict(frozen=True)

    family: Family
    sigma: Optional[float] = Field(None, gt=0, allow_inf_nan=False, description="Pareto scale (known)")

    @model_validator(mode="after")
    def check_sigma(self) -> "ParametricModel":
        if self.family == "pareto" and self.sigma is None:
            raise ValueError("pareto model requires sigma > 0")
        if self.family == "exponential" and self.sigma is not None:
            raise ValueError("exponential model takes no sigma")
        return self

    @property
    def support_lower(self) -> float:
        return self.sigma if self.family == "pareto" else 0.0

    def log_density(self, t, theta: float):
        """log f_theta(t); -inf outside the support."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.family == "exponential":
                out = np.where(t >= 0, np.log(theta) - theta * t, -np.inf)
            else:
                out = np.where(
                    t >= self.sigma,
                    np.log(theta) - np.log(self.sigma) - (theta + 1.0) * np.log(t / self.sigma),
                    -np.inf,
                )
        return float(out) if out.ndim == 0 else out


class FitResult(BaseModel):
    """Outcome of a closed-form or numeric KL fit."""

    estimate: float = Field(..., gt=0, description="lambda (exponential) or alpha (pareto)")
    weight_mass: float = Field(..., description="Numerator of the estimator: total weight mass used")
    method: FitMethod
    residual: float = Field(0.0, ge=0, description="Relative score residual |dPhi/dtheta| theta / mass; 0 for closed forms")
    numerator: float
    denominator: float
    family: Family
    mode: FitMode
    sigma: Optional[float] = None
    k: Optional[int] = None
    mass_cross_check: Optional[float] = Field(None, description="n F(W_{n:n}) of the underlying curve")
