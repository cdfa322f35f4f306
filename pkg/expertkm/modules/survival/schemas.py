"""Survival data schemas: observations, sorted samples and step curves."""

from dataclasses import dataclass, field
import math
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from expertkm.utils.exceptions import ValidationError


Direction = Literal["event-first", "censor-first"]


class Observation(BaseModel):
    """One subject's observed (W, delta) pair, optionally with a crude judgment and hidden truth."""

    model_config = ConfigDict(frozen=True)

    w: float = Field(..., ge=0, allow_inf_nan=False, description="Observed size or duration W")
    delta: int = Field(..., ge=0, le=1, description="1 if the claim is closed, 0 if it is open")
    eta: Optional[float] = Field(None, ge=0, le=1, description="Crude expert judgment of 1{W = X}")
    x_true: Optional[float] = Field(None, ge=0, description="Simulated X (may be +inf)")
    y_true: Optional[float] = Field(None, ge=0, description="Simulated contamination time Y (may be +inf)")
    c_true: Optional[float] = Field(None, ge=0, description="Simulated censoring time C (may be +inf)")

    @model_validator(mode="after")
    def check_consistency(self) -> "Observation":
        if self.delta == 0 and self.eta is not None and self.eta != 0:
            raise ValueError("an open claim (delta=0) cannot be judged closed (eta must be 0)")

        if self.x_true is not None and self.y_true is not None and self.c_true is not None:
            first = min(self.x_true, self.y_true)
            expected_w = min(first, self.c_true)
            if not math.isclose(self.w, expected_w, rel_tol=1e-12, abs_tol=0.0):
                raise ValueError(f"w={self.w!r} differs from min(x_true, y_true, c_true)={expected_w!r}")
            if self.delta != int(first <= self.c_true):
                raise ValueError("delta inconsistent with hidden truth: delta = 1 iff min(x_true, y_true) <= c_true")
        return self

    @property
    def contaminated(self) -> Optional[bool]:
        """True for a falsely closed claim (delta = 1 and Y < X); None without hidden truth."""
        if self.x_true is None or self.y_true is None:
            return None
        return self.delta == 1 and self.y_true < self.x_true


def _frozen(array, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SortedSample:
    """
    Observations in ascending W with the tie convention materialized.

    Within a tie group closed claims precede open claims and, among closed
    claims, larger judgments precede smaller ones. ``tie_rank`` is the 1-based
    position i used in the product-limit factors 1 - weight / (n - i + 1).
    """

    obs: tuple[Observation, ...]
    w: np.ndarray
    delta: np.ndarray
    eta: np.ndarray
    order: np.ndarray
    tie_rank: np.ndarray
    direction: Direction

    @property
    def n(self) -> int:
        return len(self.obs)

    @property
    def has_judgments(self) -> bool:
        return bool(self.n) and not np.any(np.isnan(self.eta))

    @property
    def last_obs(self) -> float:
        return float(self.w[-1])

    def hidden(self, name: Literal["x_true", "y_true", "c_true"]) -> np.ndarray:
        """Hidden-truth column in sorted order, NaN where absent."""
        return _frozen([getattr(o, name) if getattr(o, name) is not None else np.nan for o in self.obs])

    def at_risk(self) -> np.ndarray:
        """Number of observations with W_j >= W_i, i.e. n (1 - H(W_i-)), per sorted position."""
        first_in_group = np.searchsorted(self.w, self.w, side="left")
        return (self.n - first_in_group).astype(float)


@dataclass(frozen=True, eq=False)
class StepCurve:
    """
    Right-continuous step function.

    ``values[j]`` is the value on [jump_times[j], jump_times[j + 1]) and
    ``initial_value`` the value before the first jump.
    """

    jump_times: np.ndarray
    values: np.ndarray
    initial_value: float = 0.0
    _padded: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = _frozen(self.jump_times)
        values = _frozen(self.values)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValidationError("jump_times and values must be 1-dimensional arrays of equal length")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("jump_times must be strictly increasing")
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "initial_value", float(self.initial_value))
        object.__setattr__(self, "_padded", _frozen(np.concatenate(([self.initial_value], values))))

    @classmethod
    def from_atoms(cls, times, masses, scale: float = 1.0, initial_value: float = 0.0) -> "StepCurve":
        """
        Build initial_value + (1/scale) * sum of masses at times <= t.

        Masses at equal times are aggregated; times whose aggregated mass is
        zero do not become jumps.
        """
        times = np.asarray(times, dtype=float)
        masses = np.asarray(masses, dtype=float)
        keep = np.isfinite(times) & (masses != 0)
        if not np.any(keep):
            return cls(np.empty(0), np.empty(0), initial_value)
        distinct, inverse = np.unique(times[keep], return_inverse=True)
        aggregated = np.bincount(inverse, weights=masses[keep], minlength=len(distinct))
        nonzero = aggregated != 0
        values = initial_value + np.cumsum(aggregated[nonzero]) / scale
        return cls(distinct[nonzero], values, initial_value)

    def evaluate(self, t):
        """Value at t (right-continuous)."""
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")
        out = self._padded[idx]
        return float(out) if np.ndim(out) == 0 else out

    def left_limit(self, t):
        """Value just before t."""
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="left")
        out = self._padded[idx]
        return float(out) if np.ndim(out) == 0 else out

    __call__ = evaluate

    @property
    def total(self) -> float:
        """Value after the last jump."""
        return float(self._padded[-1])

    def is_distribution(self, atol: float = 1e-12) -> bool:
        """Nondecreasing with all values in [0, 1]."""
        padded = self._padded
        return bool(
            np.all(np.diff(padded) >= -atol) and padded.min() >= -atol and padded.max() <= 1 + atol
        )
