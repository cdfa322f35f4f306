"""KL-minimizing parametric fits on top of the expert estimators."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
from typing import Callable, Iterable, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel
from scipy import optimize

from expertkm.modules.experts.schemas import ExpertSample
from expertkm.modules.experts.service import ExpertService
from expertkm.modules.kernels.service import KernelService
from expertkm.modules.product_limit.service import ProductLimitService
from expertkm.modules.semiparametric.schemas import FitMode, FitResult, ParametricModel
from expertkm.utils import constants
from expertkm.utils.exceptions import (
    ConfigurationError,
    DegenerateFitError,
    DomainError,
    ExpertKMError,
    OptimizerError,
    ValidationError,
)

_BRACKET_STEPS = 200
_BRENT_XATOL = 1e-10
_DIFF_STEP = 1e-4
_NEWTON_STEPS = 5


class SweepRow(BaseModel):
    """One k of a Hill sweep; `estimate` is None when the fit failed."""

    k: int
    estimate: Optional[float] = None
    error: Optional[str] = None


@dataclass(frozen=True)
class _HillInputs:
    n: int
    w: np.ndarray
    weights: np.ndarray
    log_moments: np.ndarray
    curve: object
    mode: str


def _require(sample: ExpertSample, mode: FitMode) -> None:
    if mode == "crude" and sample.judgments is None:
        raise ConfigurationError("crude fit requires judgments")
    if mode == "sophisticated" and sample.beliefs is None:
        raise ConfigurationError("sophisticated fit requires belief kernels")
    if mode not in ("crude", "sophisticated"):
        raise ValidationError(f"unknown fit mode {mode!r}")


class FitService:
    """Service for the Exponential, Pareto and Hill-type expert estimators."""

    @staticmethod
    def weights(sample: ExpertSample, mode: FitMode) -> np.ndarray:
        """
        Per-observation weights in sorted order.

        crude: eta_i / (1 - L'(W_i-)) with L' the censoring-side product limit of (W, 1 - eta)
        sophisticated: delta_i / (1 - G(W_i-))
        """
        _require(sample, mode)
        base = sample.base
        if mode == "crude":
            censor = ProductLimitService.km_censor(base, sample.judgments)
            return ProductLimitService.ipcw_weights(base, sample.judgments, censor)
        censor = ProductLimitService.km_censor(base)
        return ProductLimitService.ipcw_weights(base, base.delta, censor)

    @staticmethod
    def mass_cross_check(sample: ExpertSample, mode: FitMode) -> float:
        """n F(W_{n:n}) for the crude or sophisticated curve."""
        curve = ExpertService.crude_km(sample) if mode == "crude" else ExpertService.sophisticated_km(sample)
        return sample.n * float(curve.evaluate(sample.base.last_obs))

    @staticmethod
    def _kernel_moments(sample: ExpertSample, weights: np.ndarray, statistic) -> np.ndarray:
        """E_{K_i}[statistic] for every positively weighted closed claim, NaN elsewhere."""
        out = np.full(sample.n, np.nan)
        for i in np.flatnonzero(weights > 0):
            kernel = sample.beliefs[i]
            if kernel.is_atomic:
                out[i] = statistic(kernel.p1)
            else:
                out[i] = KernelService.kernel_expectation(kernel, statistic)
            if not np.isfinite(out[i]):
                raise DomainError(
                    f"kernel of observation {int(sample.base.order[i])} has an infinite moment",
                    indices=[int(sample.base.order[i])],
                )
        return out

    @staticmethod
    def _result(numerator: float, denominator: float, **fields) -> FitResult:
        if not (numerator > 0):
            raise DegenerateFitError(f"empty effective numerator ({numerator!r})")
        if not (denominator > 0 and np.isfinite(denominator)):
            raise DegenerateFitError(f"degenerate denominator ({denominator!r})")
        return FitResult(
            estimate=numerator / denominator,
            weight_mass=numerator,
            numerator=numerator,
            denominator=denominator,
            method="closed-form",
            residual=0.0,
            **fields,
        )

    @staticmethod
    def fit_exponential_crude(sample: ExpertSample) -> FitResult:
        """
        Crude semi-parametric Exponential estimator.

        lambda = sum weights_i / sum weights_i W_i with weights_i = eta_i / (1 - L'(W_i-)).
        """
        weights = FitService.weights(sample, "crude")
        result = FitService._result(
            float(weights.sum()),
            float(np.dot(weights, sample.base.w)),
            family="exponential",
            mode="crude",
            mass_cross_check=FitService.mass_cross_check(sample, "crude"),
        )
        logger.info(f"✅ Exponential crude fit: lambda={result.estimate:.6g}")
        return result

    @staticmethod
    def fit_exponential_sophisticated(sample: ExpertSample) -> FitResult:
        """
        Sophisticated semi-parametric Exponential estimator.

        lambda = sum c_i / sum c_i mean(K_i) with c_i = delta_i / (1 - G(W_i-)).
        """
        weights = FitService.weights(sample, "sophisticated")
        positive = np.flatnonzero(weights > 0)
        means = np.array([KernelService.kernel_mean(sample.beliefs[i]) for i in positive])
        infinite = positive[~np.isfinite(means)]
        if infinite.size:
            indices = sample.base.order[infinite].tolist()
            raise DomainError(f"kernels with infinite mean at indices {indices[:20]}", indices=indices)

        result = FitService._result(
            float(weights[positive].sum()),
            float(np.dot(weights[positive], means)),
            family="exponential",
            mode="sophisticated",
            mass_cross_check=FitService.mass_cross_check(sample, "sophisticated"),
        )
        logger.info(f"✅ Exponential sophisticated fit: lambda={result.estimate:.6g}")
        return result

    @staticmethod
    def _pareto_support(sample: ExpertSample, weights: np.ndarray, sigma: float) -> np.ndarray:
        """Mask of weighted points strictly above sigma; DomainError for weighted points below."""
        if not (np.isfinite(sigma) and sigma > 0):
            raise ValidationError(f"pareto sigma must be finite and > 0, got {sigma!r}")
        w = sample.base.w
        below = np.flatnonzero((weights > 0) & (w < sigma))
        if below.size:
            indices = sample.base.order[below].tolist()
            raise DomainError(f"observations below sigma={sigma:g} carry weight at indices {indices[:20]}", indices=indices)
        return (weights > 0) & (w > sigma)

    @staticmethod
    def fit_pareto(sample: ExpertSample, sigma: float, mode: FitMode) -> FitResult:
        """
        Pareto tail index with known sigma.

        crude: alpha = sum weights_i / sum weights_i log(W_i / sigma)
        sophisticated: the log term is replaced by the integral of log(t / sigma) dK_i.
        Points exactly at sigma are threshold points and carry no information.
        """
        weights = FitService.weights(sample, mode)
        support = FitService._pareto_support(sample, weights, sigma)
        if mode == "crude":
            log_terms = np.log(sample.base.w[support] / sigma)
        else:
            log_terms = FitService._kernel_moments(sample, np.where(support, weights, 0.0), lambda t: math.log(t / sigma))[support]

        result = FitService._result(
            float(weights[support].sum()),
            float(np.dot(weights[support], log_terms)),
            family="pareto",
            mode=mode,
            sigma=sigma,
            mass_cross_check=FitService.mass_cross_check(sample, mode),
        )
        logger.info(f"✅ Pareto {mode} fit: sigma={sigma:g}, alpha={result.estimate:.6g}")
        return result

    @staticmethod
    def _hill_curve(sample: ExpertSample, mode: FitMode):
        """Curve behind the Hill numerator: the crude estimator, or the usual KM for kernels."""
        return ExpertService.crude_km(sample) if mode == "crude" else ProductLimitService.km_event(sample.base)

    @staticmethod
    def _hill_inputs(sample: ExpertSample, mode: FitMode, k_max: int) -> _HillInputs:
        weights = FitService.weights(sample, mode)
        n = sample.n
        top = np.zeros(n, dtype=bool)
        top[n - k_max:] = True
        curve = FitService._hill_curve(sample, mode)
        if mode == "crude":
            with np.errstate(divide="ignore"):
                log_moments = np.where(top & (weights > 0), np.log(sample.base.w), np.nan)
        else:
            log_moments = FitService._kernel_moments(sample, np.where(top, weights, 0.0), math.log)
        return _HillInputs(n=n, w=sample.base.w, weights=weights, log_moments=log_moments, curve=curve, mode=mode)

    @staticmethod
    def _hill_from_inputs(inputs: _HillInputs, k: int) -> FitResult:
        n = inputs.n
        if not (1 <= k <= n - 1):
            raise ValidationError(f"k must be in [1, {n - 1}], got {k}")
        threshold = float(inputs.w[n - k - 1])
        if threshold <= 0:
            raise DomainError(f"threshold W_(n-k) = {threshold!r} must be > 0")

        top = slice(n - k, n)
        weights = inputs.weights[top]
        used = weights > 0
        denominator = float(np.dot(weights[used], inputs.log_moments[top][used] - math.log(threshold)))
        numerator = n * (1.0 - float(inputs.curve.evaluate(threshold)))
        return FitService._result(numerator, denominator, family="pareto", mode=inputs.mode, sigma=threshold, k=k)

    @staticmethod
    def fit_hill(sample: ExpertSample, k: int, mode: FitMode) -> FitResult:
        """
        Hill-type estimator over the top k order statistics with threshold u = W_(n-k).

        crude: n (1 - F_crude(u)) / sum_{top k} weights_i log(W_i / u)
        sophisticated: n (1 - F_km(u)) / sum_{top k} c_i integral log(t / u) dK_i
        """
        _require(sample, mode)
        n = sample.n
        if not (1 <= k <= n - 1):
            raise ValidationError(f"k must be in [1, {n - 1}], got {k}")
        result = FitService._hill_from_inputs(FitService._hill_inputs(sample, mode, k), k)
        logger.info(f"✅ Hill {mode} fit: k={k}, alpha={result.estimate:.6g}")
        return result

    @staticmethod
    def fit_hill_sweep(
        sample: ExpertSample, mode: FitMode, ks: Optional[Iterable[int]] = None, max_workers: Optional[int] = None
    ) -> list[SweepRow]:
        """
        Hill estimates for every k (1..n-1 by default).

        A k whose fit fails is reported with its error message.
        """
        _require(sample, mode)
        n = sample.n
        ks = list(range(1, n)) if ks is None else [int(k) for k in ks]
        if not ks:
            return []
        bad = [k for k in ks if not (1 <= k <= n - 1)]
        if bad:
            raise ValidationError(f"k values out of [1, {n - 1}]: {bad[:20]}")

        inputs = FitService._hill_inputs(sample, mode, max(ks))

        def run(k: int) -> SweepRow:
            try:
                return SweepRow(k=k, estimate=FitService._hill_from_inputs(inputs, k).estimate)
            except ExpertKMError as exc:
                return SweepRow(k=k, error=str(exc))

        max_workers = constants.SWEEP_WORKERS if max_workers is None else max_workers
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                rows = list(pool.map(run, ks))
        else:
            rows = [run(k) for k in ks]

        failed = sum(row.error is not None for row in rows)
        logger.info(f"✅ Hill {mode} sweep: {len(rows)} values of k, {failed} degenerate")
        return rows

    @staticmethod
    def _maximize(objective: Callable[[float], float], mass: float) -> tuple[float, float]:
        """
        Maximize a concave objective over theta > 0.

        A geometric walk from theta = 1 brackets the maximum, bounded Brent
        locates it and Newton steps on central differences polish it.

        Returns:
            theta and the relative score residual |objective'(theta)| theta / mass

        Raises:
            OptimizerError: No bracket found, or the residual exceeds GRAD_TOL
        """
        low, mid, high = 0.5, 1.0, 2.0
        f_low, f_mid, f_high = objective(low), objective(mid), objective(high)
        for _ in range(_BRACKET_STEPS):
            if f_mid >= f_low and f_mid >= f_high:
                break
            if f_high > f_mid:
                low, f_low, mid, f_mid = mid, f_mid, high, f_high
                high *= 2.0
                f_high = objective(high)
            else:
                high, f_high, mid, f_mid = mid, f_mid, low, f_low
                low /= 2.0
                f_low = objective(low)
        else:
            raise OptimizerError("no bracket for the maximum", {"bracket": (low, mid, high), "values": (f_low, f_mid, f_high)})

        found = optimize.minimize_scalar(
            lambda t: -objective(t), bounds=(low, high), method="bounded", options={"xatol": _BRENT_XATOL * mid}
        )
        theta = float(found.x)

        def derivatives(t: float) -> tuple[float, float]:
            h = _DIFF_STEP * t
            up, centre, down = objective(t + h), objective(t), objective(t - h)
            return (up - down) / (2.0 * h), (up - 2.0 * centre + down) / h**2

        for _ in range(_NEWTON_STEPS):
            slope, curvature = derivatives(theta)
            if not curvature < 0:
                break
            step = -slope / curvature
            if not theta + step > 0:
                break
            theta += step
            if abs(step) <= 4.0 * np.finfo(float).eps * theta:
                break

        slope, _ = derivatives(theta)
        residual = abs(slope) * theta / mass
        if residual > constants.GRAD_TOL:
            raise OptimizerError(
                f"score residual {residual:.3g} exceeds {constants.GRAD_TOL:g}",
                {"theta": theta, "bracket": (low, high), "residual": residual, "optimizer": found.message},
            )
        return theta, residual

    @staticmethod
    def _kl_objective(
        sample: ExpertSample, model: ParametricModel, mode: FitMode, indices: np.ndarray, weights: np.ndarray, mass: float
    ) -> Callable[[float], float]:
        """
        theta -> sum_i weights_i E_{K_i}[log f_theta] + (mass - sum_i weights_i) log theta.

        K_i is a Dirac at W_i in crude mode and the belief kernel otherwise;
        `mass` sets the weight in front of the normalizing term log theta.
        """
        if mode == "crude":
            kernels = [KernelService.make_kernel("dirac", float(w), float(w)) for w in sample.base.w[indices]]
        else:
            kernels = [sample.beliefs[i] for i in indices]
        extra = mass - float(weights.sum())

        def objective(theta: float) -> float:
            terms = [KernelService.expected_log_density(k, model, theta, method="quadrature") for k in kernels]
            return float(np.dot(weights, terms)) + extra * math.log(theta)

        return objective

    @staticmethod
    def fit_numeric(sample: ExpertSample, model: ParametricModel, mode: FitMode) -> FitResult:
        """
        Maximize sum_i weights_i E_{K_i}[log f_theta] numerically.

        Every expected log-density goes through quadrature (point values for
        the crude mode and Dirac kernels), so the result is independent of the
        closed-form estimators.

        Raises:
            OptimizerError: No bracket found, or the score residual exceeds GRAD_TOL
        """
        weights = FitService.weights(sample, mode)
        if model.family == "pareto":
            used = np.flatnonzero(FitService._pareto_support(sample, weights, model.sigma))
        else:
            used = np.flatnonzero(weights > 0)
        mass = float(weights[used].sum())
        if not (mass > 0):
            raise DegenerateFitError("no positively weighted observations in the model support")

        objective = FitService._kl_objective(sample, model, mode, used, weights[used], mass)
        theta, residual = FitService._maximize(objective, mass)

        logger.info(f"✅ Numeric {model.family} {mode} fit: theta={theta:.6g}, residual={residual:.2g}")
        return FitResult(
            estimate=theta,
            weight_mass=mass,
            method="numeric",
            residual=residual,
            numerator=mass,
            denominator=mass / theta,
            family=model.family,
            mode=mode,
            sigma=model.sigma,
        )

    @staticmethod
    def fit_hill_numeric(sample: ExpertSample, k: int, mode: FitMode) -> FitResult:
        """
        Numeric counterpart of `fit_hill`.

        Maximizes the Pareto(sigma = W_(n-k)) objective over the top k with
        n (1 - F(u)) in front of log alpha.
        """
        _require(sample, mode)
        n = sample.n
        if not (1 <= k <= n - 1):
            raise ValidationError(f"k must be in [1, {n - 1}], got {k}")
        threshold = float(sample.base.w[n - k - 1])
        if threshold <= 0:
            raise DomainError(f"threshold W_(n-k) = {threshold!r} must be > 0")

        weights = FitService.weights(sample, mode)
        top = np.arange(n - k, n)
        used = top[weights[top] > 0]
        if used.size == 0:
            raise DegenerateFitError(f"no positively weighted observations among the top {k}")
        tail_mass = n * (1.0 - float(FitService._hill_curve(sample, mode).evaluate(threshold)))
        if not (tail_mass > 0):
            raise DegenerateFitError(f"empty effective numerator ({tail_mass!r})")

        model = ParametricModel(family="pareto", sigma=threshold)
        objective = FitService._kl_objective(sample, model, mode, used, weights[used], tail_mass)
        alpha, residual = FitService._maximize(objective, tail_mass)

        logger.info(f"✅ Numeric Hill {mode} fit: k={k}, alpha={alpha:.6g}, residual={residual:.2g}")
        return FitResult(
            estimate=alpha,
            weight_mass=tail_mass,
            method="numeric",
            residual=residual,
            numerator=tail_mass,
            denominator=tail_mass / alpha,
            family="pareto",
            mode=mode,
            sigma=threshold,
            k=k,
        )
