"""Contamination-aware Kaplan-Meier estimators: crude, sophisticated and oracle."""

from typing import Optional, Sequence, Union

import numpy as np
from loguru import logger

from expertkm.modules.experts.schemas import ExpertSample, MixtureCurve
from expertkm.modules.kernels.schemas import BeliefKernel
from expertkm.modules.product_limit.schemas import KmCurve
from expertkm.modules.product_limit.service import ProductLimitService
from expertkm.modules.survival.schemas import SortedSample, StepCurve
from expertkm.modules.survival.service import SurvivalService
from expertkm.utils import constants
from expertkm.utils.exceptions import ConfigurationError, ValidationError


def _base(sample: Union[ExpertSample, SortedSample]) -> SortedSample:
    return sample.base if isinstance(sample, ExpertSample) else sample


class ExpertService:
    """Service for building expert samples and running the expert estimators."""

    @staticmethod
    def build_crude(sample: SortedSample, judgments: Optional[Sequence[float]] = None) -> ExpertSample:
        """
        Attach crude judgments eta.

        Args:
            sample: Sorted sample
            judgments: eta in the ORIGINAL input order; when omitted the eta
                stored on the observations is used

        Raises:
            ConfigurationError: No judgments given and none stored
            ValidationError: eta outside [0, 1] or positive on an open claim
        """
        if judgments is None:
            if not sample.has_judgments:
                raise ConfigurationError("crude estimator requires a judgment (eta) for every observation")
            return ExpertSample(base=sample, judgments=sample.eta)

        judgments = np.asarray(judgments, dtype=float)
        if judgments.shape != (sample.n,):
            raise ValidationError(f"judgments has shape {judgments.shape}, expected ({sample.n},)")
        original = [None] * sample.n
        for position, index in enumerate(sample.order):
            original[index] = sample.obs[position]
        columns = {name: [getattr(o, name) for o in original] for name in ("w", "delta", "x_true", "y_true", "c_true")}
        observations = SurvivalService.build_observations(eta=judgments, **columns)
        resorted = SurvivalService.sort_sample(observations, sample.direction)
        return ExpertSample(base=resorted, judgments=resorted.eta)

    @staticmethod
    def build_sophisticated(sample: SortedSample, kernels: Sequence[Optional[BeliefKernel]]) -> ExpertSample:
        """
        Attach belief kernels given in the ORIGINAL input order (None for open claims).

        Raises:
            ValidationError: Kernel on an open claim, kernel mass below W_i
            ConfigurationError: Missing kernel on a closed claim
        """
        kernels = list(kernels)
        if len(kernels) != sample.n:
            raise ValidationError(f"{len(kernels)} kernels for {sample.n} observations")

        beliefs: list[Optional[BeliefKernel]] = []
        missing, misplaced, below = [], [], []
        for position, index in enumerate(sample.order):
            kernel = kernels[index]
            if sample.delta[position] == 0:
                if kernel is not None:
                    misplaced.append(int(index))
                beliefs.append(None)
                continue
            if kernel is None:
                missing.append(int(index))
            elif kernel.lower < sample.w[position]:
                below.append(int(index))
            beliefs.append(kernel)

        if misplaced:
            raise ValidationError(f"kernels attached to open claims at indices {misplaced[:20]}", indices=misplaced)
        if below:
            raise ValidationError(f"kernels with mass below W at indices {below[:20]}", indices=below)
        if missing:
            raise ConfigurationError(f"sophisticated estimator requires a kernel for every closed claim; missing at {missing[:20]}")
        return ExpertSample(base=sample, beliefs=tuple(beliefs))

    @staticmethod
    def crude_km(sample: ExpertSample) -> KmCurve:
        """Crude expert Kaplan-Meier estimator: the product limit with weights eta."""
        if sample.judgments is None:
            raise ConfigurationError("crude estimator requires judgments")
        km = ProductLimitService.km_event(sample.base, sample.judgments)
        logger.info(f"✅ Crude expert KM: n={sample.n}, F(last)={km.curve.total:.6g}")
        return km

    @staticmethod
    def crude_km_ipcw(sample: ExpertSample) -> StepCurve:
        """IPCW form of the crude estimator, with the censoring side built from (W, 1 - eta)."""
        if sample.judgments is None:
            raise ConfigurationError("crude estimator requires judgments")
        censor = ProductLimitService.km_censor(sample.base, sample.judgments)
        return ProductLimitService.km_ipcw(sample.base, sample.judgments, censor)

    @staticmethod
    def sophisticated_km(sample: ExpertSample) -> MixtureCurve:
        """
        Sophisticated expert estimator (1/n) sum_i K_i(t) delta_i / (1 - G(W_i-)).

        G is the usual censoring-side Kaplan-Meier curve.
        """
        if sample.beliefs is None:
            raise ConfigurationError("sophisticated estimator requires belief kernels")
        base = sample.base
        censor = ProductLimitService.km_censor(base)
        ipcw = ProductLimitService.ipcw_weights(base, base.delta, censor)

        closed = np.flatnonzero(base.delta == 1)
        curve = MixtureCurve(kernels=tuple(sample.beliefs[i] for i in closed), weights=ipcw[closed] / base.n)
        logger.info(f"✅ Sophisticated expert KM: n={base.n}, closed={closed.size}, mass={curve.total:.6g}")
        return curve

    @staticmethod
    def oracle_km(sample: Union[ExpertSample, SortedSample]) -> StepCurve:
        """
        Oracle estimator (1/n) sum_i 1{X_i <= t} delta_i / (1 - G(W_i-)).

        Needs the hidden X on every closed claim; infinite X contributes no atom.
        """
        base = _base(sample)
        x_true = base.hidden("x_true")
        closed = base.delta == 1
        missing = np.flatnonzero(closed & np.isnan(x_true))
        if missing.size:
            raise ConfigurationError(
                f"oracle estimator requires x_true on every closed claim; missing at indices {base.order[missing].tolist()[:20]}"
            )
        censor = ProductLimitService.km_censor(base)
        ipcw = ProductLimitService.ipcw_weights(base, base.delta, censor)
        return StepCurve.from_atoms(np.where(closed, x_true, np.inf), ipcw, scale=base.n)

    @staticmethod
    def perfect_judgments(sample: SortedSample) -> np.ndarray:
        """eta = delta 1{X <= Y} from the hidden truth, in the original input order (as build_crude takes it)."""
        x_true, y_true = sample.hidden("x_true"), sample.hidden("y_true")
        closed = sample.delta == 1
        missing = np.flatnonzero(closed & (np.isnan(x_true) | np.isnan(y_true)))
        if missing.size:
            raise ConfigurationError("perfect judgments require x_true and y_true on every closed claim")
        with np.errstate(invalid="ignore"):
            sorted_eta = np.where(closed & (x_true <= y_true), 1.0, 0.0)
        eta = np.empty(sample.n)
        eta[sample.order] = sorted_eta
        return eta

    @staticmethod
    def export_grid(sample: SortedSample, points: Optional[int] = None) -> np.ndarray:
        """Union of the observed W and equispaced points on [0, max W]."""
        points = constants.GRID_POINTS if points is None else points
        if points < 2:
            raise ValidationError(f"grid needs at least 2 points, got {points}")
        return np.union1d(sample.w, np.linspace(0.0, sample.last_obs, points))

    @staticmethod
    def theta_hat(sample: SortedSample, quantile: Optional[float] = None) -> float:
        """Empirical quantile of W bounding the region where sup-errors are measured."""
        quantile = constants.THETA_QUANTILE if quantile is None else quantile
        return float(np.quantile(sample.w, quantile))
