"""Simulation scenario schemas."""

from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from expertkm.utils import constants
from expertkm.utils.exceptions import ConfigurationError


class HazardSpec(BaseModel):
    """
    Disability scenario hazards on [0, horizon].

    total rate exp(a - b t); contaminant rate w1 exp(a - b t) + w2 exp(a - c t);
    the event (true closure) rate is their difference.
    """

    model_config = ConfigDict(frozen=True)

    a: float = Field(constants.HAZARD_A, allow_inf_nan=False)
    b: float = Field(constants.HAZARD_B, gt=0, allow_inf_nan=False)
    c: float = Field(constants.HAZARD_C, gt=0, allow_inf_nan=False)
    horizon: float = Field(constants.HAZARD_HORIZON, gt=0, allow_inf_nan=False)
    contaminant_weights: tuple[float, float] = constants.CONTAMINANT_WEIGHTS

    @model_validator(mode="after")
    def check_event_rate(self) -> "HazardSpec":
        w1, w2 = self.contaminant_weights
        if w1 < 0 or w2 < 0:
            raise ValueError("contaminant weights must be >= 0")
        t = np.linspace(0.0, self.horizon, 2001)
        event_rate = (1.0 - w1) * np.exp(self.a - self.b * t) - w2 * np.exp(self.a - self.c * t)
        if not np.all(event_rate > 0):
            raise ValueError("event rate must be strictly positive on [0, horizon]")
        return self


class SophisticatedNoise(BaseModel):
    """
    Gamma(shape, rate) noise for the sophisticated expert's truncated Gaussian kernels.

    Kernel location X + shrink V1, scale shrink (X + V2).
    """

    model_config = ConfigDict(frozen=True)

    mean_shape: float = Field(..., gt=0)
    mean_rate: float = Field(..., gt=0)
    sd_shape: float = Field(..., gt=0)
    sd_rate: float = Field(..., gt=0)
    shrink: float = Field(1.0, ge=0, allow_inf_nan=False)

    @classmethod
    def preset(cls, name: str, shrink: float = 1.0) -> "SophisticatedNoise":
        try:
            (mean_shape, mean_rate), (sd_shape, sd_rate) = constants.SOPH_NOISE_PRESETS[name]
        except KeyError:
            raise ConfigurationError(f"unknown noise preset {name!r}; choose from {sorted(constants.SOPH_NOISE_PRESETS)}")
        return cls(mean_shape=mean_shape, mean_rate=mean_rate, sd_shape=sd_shape, sd_rate=sd_rate, shrink=shrink)


class UniformReopen(BaseModel):
    """Reopen each closed claim with probability q."""

    scheme: Literal["uniform-reopen"] = "uniform-reopen"
    q: float = Field(constants.UNIFORM_REOPEN_Q, ge=0, le=1)


class TopQuantileReopen(BaseModel):
    """Above the empirical (1 - fraction) quantile of W, keep closed claims with probability keep."""

    scheme: Literal["top-quantile-reopen"] = "top-quantile-reopen"
    fraction: float = Field(constants.TOP_QUANTILE_FRACTION, gt=0, le=1)
    keep: float = Field(constants.TOP_QUANTILE_KEEP, ge=0, le=1)


class ProportionalKernel(BaseModel):
    """Truncated Gaussian kernels with location m_mult W and scale sd_a + sd_b W."""

    scheme: Literal["proportional-kernel"] = "proportional-kernel"
    m_mult: float = Field(constants.PROPORTIONAL_KERNEL[0], gt=0)
    sd_a: float = Field(constants.PROPORTIONAL_KERNEL[1], ge=0)
    sd_b: float = Field(constants.PROPORTIONAL_KERNEL[2], ge=0)


class TopQuantileKernel(BaseModel):
    """Proportional kernels above the empirical (1 - fraction) quantile, Dirac at W elsewhere."""

    scheme: Literal["top-quantile-kernel"] = "top-quantile-kernel"
    fraction: float = Field(constants.TOP_QUANTILE_KERNEL[0], gt=0, le=1)
    m_mult: float = Field(constants.TOP_QUANTILE_KERNEL[1], gt=0)
    sd_a: float = Field(constants.TOP_QUANTILE_KERNEL[2], ge=0)
    sd_b: float = Field(constants.TOP_QUANTILE_KERNEL[3], ge=0)


DatasetScheme = Annotated[
    Union[UniformReopen, TopQuantileReopen, ProportionalKernel, TopQuantileKernel],
    Field(discriminator="scheme"),
]


class ScenarioConfig(BaseModel):
    """A simulated scenario: hazards, sample size, seed and the expert schemes to generate."""

    hazards: HazardSpec = Field(default_factory=HazardSpec)
    n: int = Field(constants.DEFAULT_SAMPLE_SIZE, ge=1)
    seed: int = Field(constants.DEFAULT_SEED, ge=0)
    censoring: Literal["uniform"] = "uniform"
    crude_p0: Optional[float] = Field(None, ge=0, le=1)
    soph_noise: Optional[SophisticatedNoise] = None
    dataset_scheme: Optional[DatasetScheme] = None
