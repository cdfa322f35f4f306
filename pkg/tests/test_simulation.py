import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from expertkm.modules.kernels.service import KernelService
from expertkm.modules.product_limit.service import ProductLimitService
from expertkm.modules.simulation.schemas import (
    HazardSpec,
    ProportionalKernel,
    ScenarioConfig,
    SophisticatedNoise,
    TopQuantileKernel,
    TopQuantileReopen,
    UniformReopen,
)
from expertkm.modules.simulation.service import SimulationService
from expertkm.modules.survival.schemas import Observation
from expertkm.utils.exceptions import ConfigurationError, ValidationError


def closed_claims(w):
    return [Observation(w=float(wi), delta=1) for wi in w]


class TestHazards:
    def test_mark_at_zero(self):
        assert SimulationService.mark_function(HazardSpec(), 0.0) == pytest.approx(0.625)

    def test_mark_in_unit_interval(self):
        p = SimulationService.mark_function(HazardSpec(), np.linspace(0, 20, 2001))
        assert np.all((p > 0) & (p < 1))

    def test_mark_outside_horizon(self):
        with pytest.raises(ValidationError):
            SimulationService.mark_function(HazardSpec(), 21.0)

    def test_expert_mark(self):
        h = HazardSpec()
        assert SimulationService.expert_mark(h, 0.0, 0.75) == pytest.approx(0.71875)
        assert SimulationService.expert_mark(h, 3.0, 0.0) == 1.0
        assert SimulationService.expert_mark(h, 3.0, 1.0) == pytest.approx(SimulationService.mark_function(h, 3.0))

    def test_no_contamination_marks_one(self):
        h = HazardSpec(contaminant_weights=(0.0, 0.0))
        np.testing.assert_allclose(SimulationService.mark_function(h, np.linspace(0, 20, 50)), 1.0)

    def test_total_hazard_mass(self):
        mass = SimulationService.total_hazard_mass(HazardSpec())
        assert mass["total"] == pytest.approx(0.7367, abs=2e-4)
        assert math.exp(-mass["total"]) == pytest.approx(0.4787, abs=1e-4)
        value, _ = integrate.quad(lambda t: SimulationService.total_rate(HazardSpec(), t), 0, math.inf)
        assert mass["total"] == pytest.approx(value, rel=1e-9)

    def test_cumulative_event_matches_quadrature(self):
        h = HazardSpec()
        for t in (0.1, 1.0, 5.0):
            value, _ = integrate.quad(lambda s: SimulationService.event_rate(h, s), 0, t)
            assert SimulationService.cumulative_event(h, t) == pytest.approx(value, rel=1e-9)

    def test_event_rate_must_stay_positive(self):
        with pytest.raises(ValueError):
            HazardSpec(contaminant_weights=(0.9, 0.5))

    def test_inversion(self):
        h = HazardSpec()
        cumulative = lambda t: SimulationService.cumulative_total(h, t)
        mass = SimulationService.total_hazard_mass(h)["total"]
        t = SimulationService.invert_cumulative_hazard(cumulative, mass, 0.3)
        assert cumulative(t) == pytest.approx(0.3, abs=1e-10)
        assert SimulationService.invert_cumulative_hazard(cumulative, mass, mass) == math.inf


class TestSampling:
    def test_reproducible(self):
        cfg = ScenarioConfig(n=200, seed=5)
        first = SimulationService.sample_event_times(cfg)
        second = SimulationService.sample_event_times(cfg)
        assert [o.w for o in first] == [o.w for o in second]
        other = SimulationService.sample_event_times(cfg.model_copy(update={"seed": 6}))
        assert [o.w for o in first] != [o.w for o in other]

    def test_assembly(self):
        for o in SimulationService.sample_event_times(ScenarioConfig(n=300, seed=2)):
            assert o.w == min(o.x_true, o.y_true, o.c_true)
            assert o.delta == int(min(o.x_true, o.y_true) <= o.c_true)
            assert 0 <= o.c_true <= 20

    def test_zero_contaminant(self):
        cfg = ScenarioConfig(n=500, seed=3, hazards=HazardSpec(contaminant_weights=(0.0, 0.0)))
        obs = SimulationService.sample_event_times(cfg)
        assert SimulationService.contamination_fraction(obs) == 0.0
        assert all(o.y_true == math.inf for o in obs)

    def test_fraction_requires_truth(self):
        with pytest.raises(ConfigurationError):
            SimulationService.contamination_fraction(closed_claims([1.0]))

    def test_fraction_denominators(self):
        obs = [
            Observation(w=1.0, delta=1, x_true=3.0, y_true=1.0, c_true=5.0),
            Observation(w=2.0, delta=1, x_true=2.0, y_true=4.0, c_true=5.0),
            Observation(w=0.5, delta=0, x_true=3.0, y_true=1.0, c_true=0.5),
            Observation(w=0.7, delta=0, x_true=3.0, y_true=2.0, c_true=0.7),
        ]
        assert SimulationService.contamination_fraction(obs) == 0.5
        assert SimulationService.contamination_fraction(obs, among="all") == 0.25
        assert SimulationService.contamination_fraction(obs[2:]) == 0.0

    def test_expected_contamination_fraction(self):
        h = HazardSpec()
        among_all = SimulationService.expected_contamination_fraction(h, among="all")
        among_closed = SimulationService.expected_contamination_fraction(h)
        assert among_all == pytest.approx(0.1472, abs=1e-3)
        assert among_closed == pytest.approx(0.2903, abs=1e-3)
        # a 30.23 % share at n = 5000 is within sampling error of this value
        assert abs(among_closed - 0.3023) <= 0.015
        assert SimulationService.expected_contamination_fraction(HazardSpec(contaminant_weights=(0.0, 0.0))) == 0.0

    @pytest.mark.slow
    def test_contamination_fraction(self):
        h = HazardSpec()
        expected_closed = SimulationService.expected_contamination_fraction(h)
        expected_all = SimulationService.expected_contamination_fraction(h, among="all")
        closed, among_all = [], []
        for seed in range(1, 11):
            obs = SimulationService.sample_event_times(ScenarioConfig(n=5000, seed=seed))
            closed.append(SimulationService.contamination_fraction(obs))
            among_all.append(SimulationService.contamination_fraction(obs, among="all"))
        # about 2550 closed claims per seed: binomial sd near 0.009
        assert np.all(np.abs(np.array(closed) - expected_closed) <= 0.035)
        assert np.mean(closed) == pytest.approx(expected_closed, abs=0.01)
        assert np.mean(among_all) == pytest.approx(expected_all, abs=0.005)

    @pytest.mark.slow
    def test_event_time_law(self):
        h = HazardSpec()
        obs = SimulationService.sample_event_times(ScenarioConfig(n=10000, seed=9))
        x = np.sort([o.x_true for o in obs])
        first = np.sort([min(o.x_true, o.y_true) for o in obs])
        grid = np.linspace(0, 20, 2001)

        empirical = np.searchsorted(x, grid, side="right") / x.size
        assert np.max(np.abs(empirical - SimulationService.true_cdf(h, grid))) < 0.02
        empirical = np.searchsorted(first, grid, side="right") / first.size
        expected = -np.expm1(-SimulationService.cumulative_total(h, grid))
        assert np.max(np.abs(empirical - expected)) < 0.02


class TestExperts:
    def test_uninformative_crude_expert(self):
        obs = SimulationService.sample_event_times(ScenarioConfig(n=300, seed=4))
        eta = SimulationService.crude_expert_scenario(obs, HazardSpec(), 0.0, seed=4)
        np.testing.assert_array_equal(eta, [o.delta for o in obs])

    def test_crude_expert_never_closes_open_claims(self):
        obs = SimulationService.sample_event_times(ScenarioConfig(n=500, seed=4))
        eta = SimulationService.crude_expert_scenario(obs, HazardSpec(), 0.75, seed=4)
        assert all(e == 0 for e, o in zip(eta, obs) if o.delta == 0)

    def test_crude_flip_rate(self):
        h = HazardSpec()
        obs = closed_claims(np.zeros(20000))
        eta = SimulationService.crude_expert_scenario(obs, h, 0.75, seed=1)
        assert eta.mean() == pytest.approx(0.71875, abs=0.015)

    def test_noise_presets(self):
        expert2 = SophisticatedNoise.preset("expert2")
        assert expert2.mean_shape / expert2.mean_rate == pytest.approx(1.0)
        assert expert2.sd_shape / expert2.sd_rate == pytest.approx(0.01)
        with pytest.raises(ConfigurationError):
            SophisticatedNoise.preset("expert3")

    def test_sophisticated_kernels(self):
        obs = SimulationService.sample_event_times(ScenarioConfig(n=300, seed=7))
        kernels = SimulationService.sophisticated_expert_scenario(obs, SophisticatedNoise.preset("expert1"), seed=7)
        for o, kernel in zip(obs, kernels):
            assert (kernel is None) == (o.delta == 0)
            if kernel is not None:
                assert kernel.lower == o.w
                assert KernelService.kernel_left_cdf(kernel, o.w) == 0.0

    def test_zero_noise_collapses_to_true_size(self):
        obs = SimulationService.sample_event_times(ScenarioConfig(n=200, seed=8))
        kernels = SimulationService.sophisticated_expert_scenario(obs, SophisticatedNoise.preset("expert1", shrink=0.0), seed=8)
        for o, kernel in zip(obs, kernels):
            if kernel is not None:
                assert kernel.kind == "dirac"
                assert kernel.p1 == o.x_true

    def test_infinite_size_gives_dirac_without_warnings(self):
        obs = [Observation(w=1.0, delta=1, x_true=math.inf, y_true=1.0, c_true=5.0)]
        for shrink in (0.0, 1.0):
            with warnings.catch_warnings():
                warnings.simplefilter("error", RuntimeWarning)
                kernel = SimulationService.sophisticated_expert_scenario(obs, SophisticatedNoise.preset("expert1", shrink=shrink), seed=1)[0]
            assert kernel.kind == "dirac"
            assert kernel.p1 == math.inf

    def test_requires_true_size(self):
        with pytest.raises(ConfigurationError):
            SimulationService.sophisticated_expert_scenario(closed_claims([1.0]), SophisticatedNoise.preset("expert1"), seed=1)

    def test_proportional_kernel(self):
        kernel = SimulationService.dataset_expert_scenario(closed_claims([2.0]), ProportionalKernel(), seed=1)[0]
        assert kernel.kind == "truncated-gaussian"
        assert (kernel.lower, kernel.p1, kernel.p2) == pytest.approx((2.0, 2.1, 1.1))

    def test_top_quantile_kernel(self):
        obs = closed_claims(np.arange(1, 101))
        kernels = SimulationService.dataset_expert_scenario(obs, TopQuantileKernel(), seed=1)
        w = np.arange(1, 101)
        top = w > np.quantile(w, 0.9)
        assert all(k.kind == "truncated-gaussian" for k, t in zip(kernels, top) if t)
        assert all(k.kind == "dirac" and k.p1 == k.lower for k, t in zip(kernels, top) if not t)

    def test_uniform_reopen_rate(self):
        eta = SimulationService.dataset_expert_scenario(closed_claims(np.ones(50000)), UniformReopen(), seed=2)
        assert 1 - eta.mean() == pytest.approx(0.02, abs=0.003)

    def test_top_quantile_reopen(self):
        w = np.linspace(0.1, 10, 20000)
        eta = SimulationService.dataset_expert_scenario(closed_claims(w), TopQuantileReopen(), seed=3)
        top = w > np.quantile(w, 0.9)
        assert np.all(eta[~top] == 1)
        assert 1 - eta[top].mean() == pytest.approx(0.2, abs=0.03)

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            TopQuantileReopen(fraction=0.0)


class TestStudy:
    def test_small_study(self):
        cfg = ScenarioConfig(crude_p0=0.75, soph_noise=SophisticatedNoise.preset("expert2"))
        study = SimulationService.run_study(cfg, sizes=[200], seeds=[1, 2])
        assert set(study["estimator"]) == {"km", "perfect-crude", "oracle", "crude", "sophisticated"}
        assert len(study) == 10
        assert np.all((study["sup_error"] >= 0) & (study["sup_error"] <= 1))
        summary = SimulationService.summarize_study(study)
        assert len(summary) == 5

    def test_missing_scheme(self):
        with pytest.raises(ConfigurationError):
            SimulationService.run_study(ScenarioConfig(), sizes=[50], seeds=[1], estimators=["crude"])

    def test_sup_error_sees_left_limits(self, make_sample):
        km = ProductLimitService.km_event(make_sample([1.0], [1]))
        error = SimulationService.sup_error(km, lambda t: np.where(np.asarray(t) >= 1.0, 0.5, 0.0), theta=2.0)
        assert error == pytest.approx(0.5)

    @pytest.mark.slow
    def test_consistency(self):
        seeds = range(1, 21)
        cfg = ScenarioConfig(soph_noise=SophisticatedNoise.preset("expert1"))
        study = SimulationService.run_study(cfg, sizes=[500, 5000], seeds=seeds, noise_shrink="root-n")
        medians = study.groupby(["estimator", "n"])["sup_error"].median()
        for name in ("perfect-crude", "sophisticated", "oracle"):
            assert medians[(name, 5000)] < medians[(name, 500)]
            assert medians[(name, 5000)] < 0.05
        assert medians[("km", 5000)] >= 2 * medians[("perfect-crude", 5000)]

        clean = ScenarioConfig(hazards=HazardSpec(contaminant_weights=(0.0, 0.0)))
        study = SimulationService.run_study(clean, sizes=[500, 5000], seeds=seeds, estimators=["km"])
        medians = study.groupby("n")["sup_error"].median()
        assert medians[5000] < medians[500]
        assert medians[5000] < 0.05
