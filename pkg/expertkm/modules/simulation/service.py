"""Contaminated claim-size simulation and expert scenario generators."""

import math
from typing import Callable, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy import integrate, optimize

from expertkm.modules.experts.service import ExpertService
from expertkm.modules.kernels.schemas import BeliefKernel
from expertkm.modules.kernels.service import KernelService
from expertkm.modules.product_limit.service import ProductLimitService
from expertkm.modules.simulation.schemas import (
    DatasetScheme,
    HazardSpec,
    ProportionalKernel,
    ScenarioConfig,
    SophisticatedNoise,
    TopQuantileKernel,
    TopQuantileReopen,
    UniformReopen,
)
from expertkm.modules.survival.schemas import Observation
from expertkm.modules.survival.service import SurvivalService
from expertkm.utils import constants
from expertkm.utils.exceptions import ConfigurationError, ValidationError

# One independent random stream per purpose; draw k of each stream belongs to observation k
STREAMS = {"x": 0, "y": 1, "c": 2, "crude": 3, "noise1": 4, "noise2": 5, "scheme": 6}

StudyEstimator = Literal["km", "crude", "perfect-crude", "sophisticated", "oracle"]


def _array(t) -> np.ndarray:
    return np.asarray(t, dtype=float)


def _out(values: np.ndarray, t):
    return float(values) if np.ndim(t) == 0 else values


class SimulationService:
    """Service for the disability scenario: hazards, sampling and expert information."""

    # ======================== HAZARDS ========================

    @staticmethod
    def total_rate(h: HazardSpec, t):
        return _out(np.exp(h.a - h.b * _array(t)), t)

    @staticmethod
    def contaminant_rate(h: HazardSpec, t):
        w1, w2 = h.contaminant_weights
        t_arr = _array(t)
        return _out(w1 * np.exp(h.a - h.b * t_arr) + w2 * np.exp(h.a - h.c * t_arr), t)

    @staticmethod
    def event_rate(h: HazardSpec, t):
        """Cause-specific rate of a true closure: total minus contaminant."""
        t_arr = _array(t)
        return _out(SimulationService.total_rate(h, t_arr) - SimulationService.contaminant_rate(h, t_arr), t)

    @staticmethod
    def cumulative_total(h: HazardSpec, t):
        return _out(math.exp(h.a) * -np.expm1(-h.b * _array(t)) / h.b, t)

    @staticmethod
    def cumulative_contaminant(h: HazardSpec, t):
        w1, w2 = h.contaminant_weights
        t_arr = _array(t)
        values = w1 * math.exp(h.a) * -np.expm1(-h.b * t_arr) / h.b + w2 * math.exp(h.a) * -np.expm1(-h.c * t_arr) / h.c
        return _out(values, t)

    @staticmethod
    def cumulative_event(h: HazardSpec, t):
        t_arr = _array(t)
        return _out(SimulationService.cumulative_total(h, t_arr) - SimulationService.cumulative_contaminant(h, t_arr), t)

    @staticmethod
    def total_hazard_mass(h: HazardSpec) -> dict[str, float]:
        """Cumulative hazards at infinity; exp(-mass) is the probability of never leaving."""
        w1, w2 = h.contaminant_weights
        total = math.exp(h.a) / h.b
        contaminant = w1 * math.exp(h.a) / h.b + w2 * math.exp(h.a) / h.c
        return {"total": total, "contaminant": contaminant, "event": total - contaminant}

    @staticmethod
    def true_cdf(h: HazardSpec, t):
        """F(t) = 1 - exp(-Lambda_01(t)), the law of X (improper when the event hazard mass is finite)."""
        t_arr = _array(t)
        return _out(-np.expm1(-SimulationService.cumulative_event(h, np.maximum(t_arr, 0.0))), t)

    @staticmethod
    def mark_function(h: HazardSpec, w):
        """p(w) = mu_01(w) / (mu_01(w) + mu_02(w)) on [0, horizon]."""
        w_arr = _array(w)
        if np.any(~(w_arr >= 0) | (w_arr > h.horizon)):
            raise ValidationError(f"mark function is defined on [0, {h.horizon:g}]")
        return _out(SimulationService.event_rate(h, w_arr) / SimulationService.total_rate(h, w_arr), w)

    @staticmethod
    def expert_mark(h: HazardSpec, w, p0: float):
        """Expert weighted conditional mark p0 p(w) + 1 - p0."""
        if not 0 <= p0 <= 1:
            raise ValidationError(f"p0 must be in [0, 1], got {p0!r}")
        w_arr = _array(w)
        return _out(p0 * SimulationService.mark_function(h, w_arr) + 1.0 - p0, w)

    # ======================== SAMPLING ========================

    @staticmethod
    def generator(seed: int, stream: str) -> np.random.Generator:
        """Counter-based generator for one purpose, derived from the scenario seed."""
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(STREAMS[stream],))))

    @staticmethod
    def invert_cumulative_hazard(cumulative: Callable[[float], float], mass: float, e: float) -> float:
        """Smallest t with Lambda(t) = e; +inf when e exhausts the total hazard mass."""
        if e >= mass:
            return math.inf
        high = 1.0
        while cumulative(high) < e:
            high *= 2.0
        return float(optimize.brentq(lambda t: cumulative(t) - e, 0.0, high, xtol=constants.INVERSION_XTOL))

    @staticmethod
    def sample_event_times(cfg: ScenarioConfig) -> list[Observation]:
        """
        Simulate (W, delta) with hidden (X, Y, C).

        X and Y are independent draws from the event and contaminant hazards
        by inverse transform of exponential variates; C ~ Uniform(0, horizon).
        W = min(X, Y, C) and delta = 1{min(X, Y) <= C}.
        """
        h = cfg.hazards
        mass = SimulationService.total_hazard_mass(h)
        e_x = SimulationService.generator(cfg.seed, "x").standard_exponential(cfg.n)
        e_y = SimulationService.generator(cfg.seed, "y").standard_exponential(cfg.n)
        c = SimulationService.generator(cfg.seed, "c").uniform(0.0, h.horizon, cfg.n)

        x = np.array([
            SimulationService.invert_cumulative_hazard(lambda t: SimulationService.cumulative_event(h, t), mass["event"], e)
            for e in e_x
        ])
        y = np.array([
            SimulationService.invert_cumulative_hazard(lambda t: SimulationService.cumulative_contaminant(h, t), mass["contaminant"], e)
            for e in e_y
        ])
        first = np.minimum(x, y)
        w = np.minimum(first, c)
        delta = (first <= c).astype(int)

        observations = SurvivalService.build_observations(w, delta, x_true=x, y_true=y, c_true=c)
        logger.info(
            f"✅ Simulated n={cfg.n} (seed={cfg.seed}): closed={delta.mean():.2%}, "
            f"contaminated among closed={SimulationService.contamination_fraction(observations):.2%}"
        )
        return observations

    @staticmethod
    def contamination_fraction(obs: Sequence[Observation], among: Literal["closed", "all"] = "closed") -> float:
        """Share of falsely closed claims (delta = 1 and Y < X) among closed claims, or among all observations."""
        flags = [o.contaminated for o in obs]
        if not flags or any(flag is None for flag in flags):
            raise ConfigurationError("contamination fraction requires x_true and y_true on every observation")
        if among == "closed":
            flags = [flag for flag, o in zip(flags, obs) if o.delta == 1]
            if not flags:
                return 0.0
        return float(np.mean(flags))

    @staticmethod
    def expected_contamination_fraction(h: HazardSpec, among: Literal["closed", "all"] = "closed") -> float:
        """
        Population value of `contamination_fraction` under C ~ Uniform(0, horizon).

        A claim leaves at t through cause j with density mu_j(t) exp(-Lambda(t))
        and is seen closed when C >= t, which has probability 1 - t / horizon.
        """
        def closed_density(rate: Callable) -> Callable[[float], float]:
            return lambda t: rate(h, t) * math.exp(-SimulationService.cumulative_total(h, t)) * (1.0 - t / h.horizon)

        contaminated, _ = integrate.quad(closed_density(SimulationService.contaminant_rate), 0.0, h.horizon, epsabs=1e-13, epsrel=1e-10)
        if among == "all":
            return contaminated
        closed, _ = integrate.quad(closed_density(SimulationService.total_rate), 0.0, h.horizon, epsabs=1e-13, epsrel=1e-10)
        return contaminated / closed

    # ======================== EXPERTS ========================

    @staticmethod
    def crude_expert_scenario(obs: Sequence[Observation], h: HazardSpec, p0: float, seed: int) -> np.ndarray:
        """eta_k = delta_k B_k with B_k | W_k ~ Bernoulli(p0 p(W_k) + 1 - p0), in input order."""
        w = np.array([o.w for o in obs])
        delta = np.array([o.delta for o in obs], dtype=float)
        u = SimulationService.generator(seed, "crude").random(len(obs))
        keep = u < SimulationService.expert_mark(h, w, p0)
        return delta * keep

    @staticmethod
    def _gaussian_or_dirac(lower: float, location: float, scale: float, index: int) -> BeliefKernel:
        if scale == 0 or not math.isfinite(location):
            return KernelService.make_kernel("dirac", lower, max(location, lower), index=index)
        return KernelService.make_kernel("truncated-gaussian", lower, location, scale, index=index)

    @staticmethod
    def sophisticated_expert_scenario(obs: Sequence[Observation], noise: SophisticatedNoise, seed: int) -> list[Optional[BeliefKernel]]:
        """
        Truncated Gaussian beliefs on [W_k, inf) for closed claims, None for open ones.

        Location X + shrink V1, scale shrink (X + V2) with V1 ~ Gamma(mean_shape, mean_rate)
        and V2 ~ Gamma(sd_shape, sd_rate). Infinite X gives a Dirac at +inf.
        """
        n = len(obs)
        v1 = SimulationService.generator(seed, "noise1").gamma(noise.mean_shape, 1.0 / noise.mean_rate, n)
        v2 = SimulationService.generator(seed, "noise2").gamma(noise.sd_shape, 1.0 / noise.sd_rate, n)

        kernels: list[Optional[BeliefKernel]] = []
        for k, o in enumerate(obs):
            if o.delta == 0:
                kernels.append(None)
                continue
            if o.x_true is None:
                raise ConfigurationError(f"sophisticated expert scenario requires x_true (observation {k})")
            location = o.x_true + noise.shrink * v1[k]
            scale = noise.shrink * (o.x_true + v2[k]) if math.isfinite(location) else 0.0
            kernels.append(SimulationService._gaussian_or_dirac(o.w, location, scale, k))
        return kernels

    @staticmethod
    def dataset_expert_scenario(
        obs: Sequence[Observation], scheme: DatasetScheme, seed: int
    ) -> Union[np.ndarray, list[Optional[BeliefKernel]]]:
        """
        Expert information constructed from (W, delta) alone.

        Reopen schemes return judgments eta (input order); kernel schemes return beliefs.
        """
        w = np.array([o.w for o in obs])
        delta = np.array([o.delta for o in obs], dtype=float)
        draws = SimulationService.generator(seed, "scheme").random(len(obs))

        if isinstance(scheme, UniformReopen):
            return delta * (draws >= scheme.q)
        if isinstance(scheme, TopQuantileReopen):
            top = w > np.quantile(w, 1.0 - scheme.fraction)
            return delta * np.where(top, draws < scheme.keep, True)

        if isinstance(scheme, TopQuantileKernel):
            top = w > np.quantile(w, 1.0 - scheme.fraction)
        elif isinstance(scheme, ProportionalKernel):
            top = np.ones(len(obs), dtype=bool)
        else:
            raise ValidationError(f"unknown dataset scheme {scheme!r}")

        kernels: list[Optional[BeliefKernel]] = []
        for k, o in enumerate(obs):
            if o.delta == 0:
                kernels.append(None)
            elif top[k]:
                kernels.append(SimulationService._gaussian_or_dirac(o.w, scheme.m_mult * o.w, scheme.sd_a + scheme.sd_b * o.w, k))
            else:
                kernels.append(KernelService.make_kernel("dirac", o.w, o.w, index=k))
        return kernels

    # ======================== STUDY ========================

    @staticmethod
    def sup_error(curve, truth: Callable, theta: float, points: Optional[np.ndarray] = None) -> float:
        """
        sup over t <= theta of |curve(t) - truth(t)|.

        Right values and left limits are compared at every jump of a step
        curve, on `points` and on an equispaced grid of [0, theta].
        """
        grid = np.linspace(0.0, theta, 4 * constants.GRID_POINTS)
        jumps = getattr(curve, "jump_times", None)
        extra = [np.asarray(a, dtype=float) for a in (jumps, points) if a is not None]
        grid = np.union1d(grid, np.concatenate(extra)) if extra else grid
        grid = grid[(grid >= 0) & (grid <= theta)]

        truth_values = np.asarray(truth(grid), dtype=float)
        right = np.abs(np.asarray(curve.evaluate(grid), dtype=float) - truth_values)
        left = np.abs(np.asarray(curve.left_limit(grid), dtype=float) - truth_values)
        return float(max(right.max(), left.max()))

    @staticmethod
    def run_study(
        cfg: ScenarioConfig,
        sizes: Sequence[int],
        seeds: Sequence[int],
        estimators: Optional[Sequence[StudyEstimator]] = None,
        noise_shrink: Literal["fixed", "root-n"] = "fixed",
    ) -> pd.DataFrame:
        """
        Monte-Carlo sup-errors against the true F on [0, theta].

        theta is the empirical THETA_QUANTILE quantile of W per dataset. The
        crude estimator needs cfg.crude_p0 and the sophisticated one
        cfg.soph_noise; `root-n` scales the noise by 1/sqrt(n).

        Returns:
            DataFrame with columns n, seed, estimator, theta, sup_error
        """
        if estimators is None:
            estimators = ["km", "perfect-crude", "oracle"]
            if cfg.crude_p0 is not None:
                estimators.append("crude")
            if cfg.soph_noise is not None:
                estimators.append("sophisticated")
        if "crude" in estimators and cfg.crude_p0 is None:
            raise ConfigurationError("study of the crude estimator requires crude_p0")
        if "sophisticated" in estimators and cfg.soph_noise is None:
            raise ConfigurationError("study of the sophisticated estimator requires soph_noise")

        truth = lambda t: SimulationService.true_cdf(cfg.hazards, t)
        rows = []
        for n in sizes:
            for seed in seeds:
                run = cfg.model_copy(update={"n": int(n), "seed": int(seed)})
                obs = SimulationService.sample_event_times(run)
                sample = SurvivalService.sort_sample(obs)
                theta = ExpertService.theta_hat(sample)
                curves = {}
                if "km" in estimators:
                    curves["km"] = ProductLimitService.km_event(sample)
                if "perfect-crude" in estimators:
                    perfect = ExpertService.build_crude(sample, ExpertService.perfect_judgments(sample))
                    curves["perfect-crude"] = ExpertService.crude_km(perfect)
                if "crude" in estimators:
                    eta = SimulationService.crude_expert_scenario(obs, run.hazards, run.crude_p0, run.seed)
                    curves["crude"] = ExpertService.crude_km(ExpertService.build_crude(sample, eta))
                if "sophisticated" in estimators:
                    noise = run.soph_noise
                    if noise_shrink == "root-n":
                        noise = noise.model_copy(update={"shrink": noise.shrink / math.sqrt(n)})
                    kernels = SimulationService.sophisticated_expert_scenario(obs, noise, run.seed)
                    curves["sophisticated"] = ExpertService.sophisticated_km(ExpertService.build_sophisticated(sample, kernels))
                if "oracle" in estimators:
                    curves["oracle"] = ExpertService.oracle_km(sample)

                for name, curve in curves.items():
                    rows.append({
                        "n": int(n),
                        "seed": int(seed),
                        "estimator": name,
                        "theta": theta,
                        "sup_error": SimulationService.sup_error(curve, truth, theta, points=sample.w),
                    })
                logger.debug(f"Study n={n} seed={seed} done")

        study = pd.DataFrame(rows, columns=["n", "seed", "estimator", "theta", "sup_error"])
        logger.info(f"✅ Study finished: {len(sizes)} sizes x {len(seeds)} seeds, {len(study)} rows")
        return study

    @staticmethod
    def summarize_study(study: pd.DataFrame) -> pd.DataFrame:
        """Median sup-error per estimator and sample size."""
        return study.groupby(["estimator", "n"], as_index=False)["sup_error"].median()
