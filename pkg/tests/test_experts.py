import math

import numpy as np
import pytest

from expertkm.modules.experts.schemas import ExpertSample
from expertkm.modules.experts.service import ExpertService
from expertkm.modules.kernels.service import KernelService
from expertkm.modules.product_limit.service import ProductLimitService
from expertkm.utils.exceptions import ConfigurationError, ValidationError


def dirac_kernels(w, delta):
    return [KernelService.make_kernel("dirac", wi, wi) if di == 1 else None for wi, di in zip(w, delta)]


class TestCrude:
    def test_eta_equal_delta_is_kaplan_meier(self, make_sample, random_censored):
        rng = np.random.default_rng(10)
        for _ in range(50):
            w, delta = random_censored(rng, 40)
            sample = make_sample(np.round(w, 1), delta)
            crude = ExpertService.crude_km(ExpertService.build_crude(sample, delta))
            km = ProductLimitService.km_event(sample)
            grid = np.linspace(0, sample.last_obs + 1, 101)
            np.testing.assert_allclose(crude.evaluate(grid), km.evaluate(grid), atol=1e-14)

    def test_single_unit_judgment(self, make_sample):
        sample = make_sample([1, 2, 3], [1, 0, 1])
        crude = ExpertService.crude_km(ExpertService.build_crude(sample, [0, 0, 1]))
        assert crude.evaluate(2.999) == 0.0
        assert crude.evaluate(3.0) == pytest.approx(1.0)

    def test_zero_judgments(self, make_sample):
        sample = make_sample([1, 2, 3], [1, 0, 1])
        crude = ExpertService.crude_km(ExpertService.build_crude(sample, [0, 0, 0]))
        assert crude.evaluate(10.0) == 0.0

    def test_judgments_follow_input_order(self, make_sample):
        sample = make_sample([3, 1, 2], [1, 1, 0])
        expert = ExpertService.build_crude(sample, [1, 0, 0])
        np.testing.assert_array_equal(expert.base.w, [1, 2, 3])
        np.testing.assert_array_equal(expert.judgments, [0, 0, 1])

    def test_stored_judgments(self, make_sample):
        sample = make_sample([1, 2, 3], [1, 0, 1], eta=[1, 0, 0.5])
        expert = ExpertService.build_crude(sample)
        np.testing.assert_array_equal(expert.judgments, [1, 0, 0.5])

    def test_missing_judgments(self, make_sample):
        with pytest.raises(ConfigurationError):
            ExpertService.build_crude(make_sample([1, 2], [1, 0]))

    def test_positive_judgment_on_open_claim(self, make_sample):
        with pytest.raises(ValidationError):
            ExpertService.build_crude(make_sample([1, 2], [1, 0]), [1, 1])

    def test_ipcw_form_matches_product_for_binary_judgments(self, make_sample, random_censored):
        rng = np.random.default_rng(11)
        for _ in range(30):
            w, delta = random_censored(rng, 30)
            eta = delta * (rng.uniform(size=30) < 0.7)
            expert = ExpertService.build_crude(make_sample(w, delta), eta)
            grid = np.linspace(0, expert.base.last_obs, 60)
            np.testing.assert_allclose(
                ExpertService.crude_km_ipcw(expert).evaluate(grid), ExpertService.crude_km(expert).evaluate(grid), atol=1e-12
            )

    def test_fractional_judgments_stay_a_distribution(self, make_sample, random_censored):
        rng = np.random.default_rng(12)
        w, delta = random_censored(rng, 200)
        expert = ExpertService.build_crude(make_sample(w, delta), delta * rng.uniform(size=200))
        assert ExpertService.crude_km(expert).curve.is_distribution()


class TestSophisticated:
    def test_dirac_kernels_give_kaplan_meier(self, make_sample, random_censored):
        rng = np.random.default_rng(13)
        w, delta = random_censored(rng, 60)
        sample = make_sample(w, delta)
        curve = ExpertService.sophisticated_km(ExpertService.build_sophisticated(sample, dirac_kernels(w, delta)))
        grid = np.linspace(0, sample.last_obs, 200)
        np.testing.assert_allclose(curve.evaluate(grid), ProductLimitService.km_event(sample).evaluate(grid), atol=1e-12)

    def test_uniform_and_dirac(self, make_sample):
        sample = make_sample([1, 2], [1, 1])
        kernels = [KernelService.make_kernel("uniform", 1.0, 3.0), KernelService.make_kernel("dirac", 2.0, 2.0)]
        curve = ExpertService.sophisticated_km(ExpertService.build_sophisticated(sample, kernels))
        assert curve.evaluate(2.0) == pytest.approx(0.75)
        assert curve.left_limit(2.0) == pytest.approx(0.25)
        assert curve.total == pytest.approx(1.0)

    def test_all_open(self, make_sample):
        sample = make_sample([1, 2, 3], [0, 0, 0])
        curve = ExpertService.sophisticated_km(ExpertService.build_sophisticated(sample, [None] * 3))
        assert curve.evaluate(100.0) == 0.0

    def test_kernel_below_observation(self, make_sample):
        sample = make_sample([1, 2], [1, 1])
        kernels = [KernelService.make_kernel("dirac", 1.0, 1.0), KernelService.make_kernel("uniform", 1.0, 3.0)]
        with pytest.raises(ValidationError) as exc:
            ExpertService.build_sophisticated(sample, kernels)
        assert exc.value.indices == [1]

    def test_kernel_on_open_claim(self, make_sample):
        sample = make_sample([1, 2], [1, 0])
        kernels = [KernelService.make_kernel("dirac", 1.0, 1.0), KernelService.make_kernel("dirac", 2.0, 2.0)]
        with pytest.raises(ValidationError):
            ExpertService.build_sophisticated(sample, kernels)

    def test_missing_kernel(self, make_sample):
        with pytest.raises(ConfigurationError):
            ExpertService.build_sophisticated(make_sample([1, 2], [1, 1]), [None, None])

    def test_beliefs_and_judgments_are_exclusive(self, make_sample):
        sample = make_sample([1], [1])
        with pytest.raises(ValidationError):
            ExpertSample(base=sample, judgments=[1.0], beliefs=(KernelService.make_kernel("dirac", 1.0, 1.0),))

    def test_export_grid_matches_evaluation(self, make_sample):
        sample = make_sample([1, 2], [1, 1])
        kernels = [KernelService.make_kernel("truncated-gaussian", 1.0, 2.0, 1.0), KernelService.make_kernel("dirac", 2.0, 2.0)]
        curve = ExpertService.sophisticated_km(ExpertService.build_sophisticated(sample, kernels))
        grid = ExpertService.export_grid(sample, points=11)
        np.testing.assert_array_equal(curve.export_grid(grid), curve.evaluate(grid))


class TestOracle:
    def test_true_sizes_equal_observed(self, make_sample, random_censored):
        rng = np.random.default_rng(14)
        w, delta = random_censored(rng, 50)
        sample = make_sample(w, delta, x_true=np.where(delta == 1, w, np.nan))
        grid = np.linspace(0, sample.last_obs, 100)
        np.testing.assert_allclose(
            ExpertService.oracle_km(sample).evaluate(grid), ProductLimitService.km_event(sample).evaluate(grid), atol=1e-12
        )

    def test_two_closed_claims(self, make_sample):
        sample = make_sample([1, 2], [1, 1], x_true=[4, 2])
        oracle = ExpertService.oracle_km(sample)
        assert oracle.evaluate(2.0) == pytest.approx(0.5)
        assert oracle.evaluate(4.0) == pytest.approx(1.0)

    def test_infinite_size_adds_no_atom(self, make_sample):
        sample = make_sample([1, 2], [1, 1], x_true=[math.inf, 2])
        assert ExpertService.oracle_km(sample).total == pytest.approx(0.5)

    def test_all_open(self, make_sample):
        assert ExpertService.oracle_km(make_sample([1, 2], [0, 0])).total == 0.0

    def test_requires_truth(self, make_sample):
        with pytest.raises(ConfigurationError):
            ExpertService.oracle_km(make_sample([1, 2], [1, 1], x_true=[1, None]))


class TestUpperBounds:
    def test_perfect_crude_below_kaplan_meier(self, make_sample):
        rng = np.random.default_rng(15)
        for _ in range(20):
            x = rng.exponential(2.0, 80)
            y = rng.exponential(4.0, 80)
            c = rng.uniform(0, 10, 80)
            w = np.minimum(np.minimum(x, y), c)
            delta = (np.minimum(x, y) <= c).astype(int)
            sample = make_sample(w, delta, x_true=x, y_true=y, c_true=c)
            grid = np.linspace(0, sample.last_obs, 120)
            km = ProductLimitService.km_event(sample).evaluate(grid)
            crude = ExpertService.crude_km(ExpertService.build_crude(sample, ExpertService.perfect_judgments(sample)))
            assert np.all(crude.evaluate(grid) <= km + 1e-12)

    def test_sophisticated_below_kaplan_meier(self, make_sample, random_censored):
        rng = np.random.default_rng(16)
        for _ in range(20):
            w, delta = random_censored(rng, 60)
            sample = make_sample(w, delta)
            kernels = [
                KernelService.make_kernel("truncated-gaussian", wi, wi + float(rng.uniform(0, 2)), float(rng.uniform(0.1, 1)))
                if di
                else None
                for wi, di in zip(w, delta)
            ]
            curve = ExpertService.sophisticated_km(ExpertService.build_sophisticated(sample, kernels))
            grid = np.linspace(0, sample.last_obs + 2, 150)
            assert np.all(curve.evaluate(grid) <= ProductLimitService.km_event(sample).evaluate(grid) + 1e-12)


class TestHelpers:
    def test_perfect_judgments_in_input_order(self, make_sample):
        sample = make_sample([3, 1, 2], [1, 1, 0], x_true=[3, 5, 4], y_true=[9, 1, 6], c_true=[9, 9, 2])
        np.testing.assert_array_equal(ExpertService.perfect_judgments(sample), [1, 0, 0])

    def test_export_grid(self, make_sample):
        grid = ExpertService.export_grid(make_sample([0.5, 3], [1, 0]), points=4)
        np.testing.assert_allclose(grid, [0, 0.5, 1, 2, 3])

    def test_theta_hat(self, make_sample):
        sample = make_sample(np.arange(1, 101), np.ones(100))
        assert ExpertService.theta_hat(sample, 0.5) == pytest.approx(50.5)
