"""Product-limit (Kaplan-Meier) machinery and its IPCW representation."""

from typing import Optional

import numpy as np
from loguru import logger

from expertkm.modules.product_limit.schemas import KmCurve
from expertkm.modules.survival.schemas import SortedSample, StepCurve
from expertkm.modules.survival.service import SurvivalService
from expertkm.utils import constants
from expertkm.utils.exceptions import DegenerateWeightError, ValidationError


class ProductLimitService:
    """Service for Kaplan-Meier, censoring-side Kaplan-Meier, hazards and IPCW curves."""

    @staticmethod
    def _product_limit(sample: SortedSample, weights: np.ndarray) -> KmCurve:
        """1 - F(t) = prod over ranks i with W_(i) <= t of (1 - weight_(i) / (n - i + 1))."""
        n = sample.n
        if n == 0:
            raise ValidationError("product-limit estimate of an empty sample")

        remaining = n - sample.tie_rank + 1
        survival = np.cumprod(1.0 - weights / remaining)

        distinct = np.unique(sample.w)
        group_last = np.searchsorted(sample.w, distinct, side="right") - 1
        group_first = np.searchsorted(sample.w, distinct, side="left")
        group_mass = np.add.reduceat(weights, group_first)
        jumps = group_mass > 0

        curve = StepCurve(distinct[jumps], 1.0 - survival[group_last[jumps]], 0.0)
        at_risk = (n - group_first[jumps]).astype(int)
        return KmCurve(curve=curve, at_risk=at_risk, last_obs=sample.last_obs)

    @staticmethod
    def km_event(sample: SortedSample, weights=None) -> KmCurve:
        """
        Kaplan-Meier estimate of F from (W, weights).

        Args:
            sample: Sorted sample (closed claims first within ties)
            weights: Per-observation weights in [0, 1]; delta by default,
                eta for the crude expert estimator

        Returns:
            KmCurve with F(t) = 1 - prod (1 - weight_(i) / (n - i + 1))
        """
        weights = sample.delta if weights is None else SurvivalService.check_weights(sample, weights)
        km = ProductLimitService._product_limit(sample, weights)
        logger.debug(f"km_event: n={sample.n}, jumps={len(km.jump_times)}, F(last)={km.curve.total:.6g}")
        return km

    @staticmethod
    def km_censor(sample: SortedSample, weights=None) -> KmCurve:
        """
        Kaplan-Meier estimate of the censoring law G from (W, 1 - weights).

        With weights = delta (default) this is G^(n); with weights = eta it is
        the censoring-side curve of the crude expert. The stored tie order
        (closed claims first, i.e. 1 - delta = 0 precedes) is used as is.
        """
        weights = sample.delta if weights is None else SurvivalService.check_weights(sample, weights)
        return ProductLimitService._product_limit(sample, 1.0 - weights)

    @staticmethod
    def cumulative_hazard(sample: SortedSample, weights=None) -> StepCurve:
        """
        Empirical cumulative hazard sum_{W_i <= t} weight_i / (n (1 - H(W_i-))).

        Tied observations share the at-risk count #{j : W_j >= W_i}.
        """
        if sample.n == 0:
            raise ValidationError("cumulative hazard of an empty sample")
        weights = sample.delta if weights is None else SurvivalService.check_weights(sample, weights)
        return StepCurve.from_atoms(sample.w, weights / sample.at_risk())

    @staticmethod
    def ipcw_weights(sample: SortedSample, numerator_weights, censor_curve: KmCurve, eps: Optional[float] = None) -> np.ndarray:
        """
        Inverse probability of censoring weights weight_i / (1 - G(W_i-)).

        Raises:
            DegenerateWeightError: If 1 - G(W_i-) <= eps for a positively weighted point
        """
        eps = constants.EPS_DIV if eps is None else eps
        weights = SurvivalService.check_weights(sample, numerator_weights, "numerator_weights")
        denominator = 1.0 - np.asarray(censor_curve.left_limit(sample.w), dtype=float)

        degenerate = np.flatnonzero((weights > 0) & (denominator <= eps))
        if degenerate.size:
            position = int(degenerate[0])
            index = int(sample.order[position])
            logger.warning(f"⚠️ IPCW denominator {denominator[position]:.3g} at observation {index} (W={sample.w[position]:.6g})")
            raise DegenerateWeightError(
                f"1 - G(W-) = {denominator[position]:.3g} <= {eps:g} at observation {index} "
                f"(W={sample.w[position]!r}); evaluation beyond the identifiable region",
                index=index,
            )

        out = np.zeros(sample.n)
        positive = weights > 0
        out[positive] = weights[positive] / denominator[positive]
        return out

    @staticmethod
    def km_ipcw(sample: SortedSample, numerator_weights, censor_curve: KmCurve) -> StepCurve:
        """IPCW representation (1/n) sum 1{W_i <= t} weight_i / (1 - G(W_i-))."""
        ipcw = ProductLimitService.ipcw_weights(sample, numerator_weights, censor_curve)
        return StepCurve.from_atoms(sample.w, ipcw, scale=sample.n)
