"""Survival data service: validation, sorting and empirical counting processes."""

from typing import Iterable, Optional, Sequence

import numpy as np
import pydantic
from loguru import logger

from expertkm.modules.survival.schemas import Direction, Observation, SortedSample, StepCurve
from expertkm.utils.exceptions import ValidationError


def _optional(values: Optional[Sequence], i: int) -> Optional[float]:
    if values is None:
        return None
    value = values[i]
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return None
    return float(value)


class SurvivalService:
    """Service for building and sorting observations and empirical curves."""

    @staticmethod
    def build_observations(
        w: Sequence[float],
        delta: Sequence[int],
        eta: Optional[Sequence[Optional[float]]] = None,
        x_true: Optional[Sequence[Optional[float]]] = None,
        y_true: Optional[Sequence[Optional[float]]] = None,
        c_true: Optional[Sequence[Optional[float]]] = None,
    ) -> list[Observation]:
        """
        Validate parallel columns and build observations.

        Args:
            w: Observed sizes/durations
            delta: Closed (1) / open (0) indicators
            eta: Optional crude judgments (None or NaN for absent entries)
            x_true, y_true, c_true: Optional hidden truth (simulated data)

        Returns:
            List of Observation in input order

        Raises:
            ValidationError: If any row is invalid; lists every offending index
        """
        n = len(w)
        for name, column in (("delta", delta), ("eta", eta), ("x_true", x_true), ("y_true", y_true), ("c_true", c_true)):
            if column is not None and len(column) != n:
                raise ValidationError(f"column {name} has length {len(column)}, expected {n}")

        observations: list[Observation] = []
        bad: list[int] = []
        messages: list[str] = []
        for i in range(n):
            try:
                observations.append(
                    Observation(
                        w=float(w[i]),
                        delta=float(delta[i]),
                        eta=_optional(eta, i),
                        x_true=_optional(x_true, i),
                        y_true=_optional(y_true, i),
                        c_true=_optional(c_true, i),
                    )
                )
            except pydantic.ValidationError as exc:
                bad.append(i)
                if len(messages) < 5:
                    first = exc.errors()[0]
                    field = ".".join(str(part) for part in first.get("loc", ())) or "row"
                    messages.append(f"index {i} ({field}): {first['msg']}")
            except (TypeError, ValueError) as exc:
                bad.append(i)
                if len(messages) < 5:
                    messages.append(f"index {i}: {exc}")

        if bad:
            logger.warning(f"❌ {len(bad)} invalid observations, first at index {bad[0]}")
            raise ValidationError(
                f"invalid observations at indices {bad[:20]}{'...' if len(bad) > 20 else ''}: " + "; ".join(messages),
                indices=bad,
            )
        return observations

    @staticmethod
    def sort_sample(obs: Iterable[Observation], direction: Direction = "event-first") -> SortedSample:
        """
        Sort observations by W with the tie convention stored on the sample.

        Ties are resolved closed-before-open in both directions: for the
        censoring side the convention reads "1 - delta = 0 precedes". Among
        closed claims, larger judgments eta precede smaller ones, then input
        order.

        Raises:
            ValidationError: Negative or non-finite w, delta outside {0, 1}
        """
        obs = tuple(obs)
        if direction not in ("event-first", "censor-first"):
            raise ValidationError(f"unknown tie direction {direction!r}")

        w = np.array([o.w for o in obs], dtype=float)
        delta = np.array([o.delta for o in obs], dtype=float)
        bad = np.flatnonzero(~np.isfinite(w) | (w < 0) | ~np.isin(delta, (0.0, 1.0)))
        if bad.size:
            raise ValidationError(
                f"negative/non-finite w or delta outside {{0,1}} at indices {bad.tolist()[:20]}",
                indices=bad.tolist(),
            )

        eta = np.array([np.nan if o.eta is None else o.eta for o in obs], dtype=float)
        eta_key = np.where(np.isnan(eta), delta, eta)
        original = np.arange(len(obs))
        order = np.lexsort((original, -eta_key, -delta, w))

        sorted_obs = tuple(obs[i] for i in order)
        frozen = {}
        for name, values, dtype in (
            ("w", w[order], float),
            ("delta", delta[order], float),
            ("eta", eta[order], float),
            ("order", order, int),
            ("tie_rank", np.arange(1, len(obs) + 1), int),
        ):
            array = np.array(values, dtype=dtype)
            array.setflags(write=False)
            frozen[name] = array

        logger.debug(f"Sorted {len(obs)} observations ({direction})")
        return SortedSample(obs=sorted_obs, direction=direction, **frozen)

    @staticmethod
    def check_weights(sample: SortedSample, weights, name: str = "weights") -> np.ndarray:
        """Validate per-observation weights in [0, 1] aligned with the sorted sample."""
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (sample.n,):
            raise ValidationError(f"{name} has shape {weights.shape}, expected ({sample.n},)")
        bad = np.flatnonzero(~(weights >= 0) | ~(weights <= 1))
        if bad.size:
            raise ValidationError(
                f"{name} outside [0, 1] at sorted positions {bad.tolist()[:20]}",
                indices=sample.order[bad].tolist(),
            )
        return weights

    @staticmethod
    def ecdf(sample: SortedSample) -> StepCurve:
        """Empirical distribution H(t) = (1/n) #{W_i <= t}."""
        if sample.n == 0:
            raise ValidationError("ecdf of an empty sample")
        return SurvivalService.sub_ecdf(sample, np.ones(sample.n))

    @staticmethod
    def sub_ecdf(sample: SortedSample, weights) -> StepCurve:
        """
        Weighted sub-distribution (1/n) sum 1{W_i <= t} weight_i.

        With weights = delta this is H_1; with weights = eta it is the crude
        expert analogue.
        """
        if sample.n == 0:
            raise ValidationError("sub_ecdf of an empty sample")
        weights = SurvivalService.check_weights(sample, weights)
        return StepCurve.from_atoms(sample.w, weights, scale=sample.n)
