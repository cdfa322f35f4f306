import numpy as np
import pytest

from expertkm.modules.product_limit.service import ProductLimitService
from expertkm.modules.survival.schemas import StepCurve
from expertkm.modules.survival.service import SurvivalService
from expertkm.utils.exceptions import DegenerateWeightError, ValidationError


@pytest.fixture
def three(make_sample):
    return make_sample([1.0, 2.0, 3.0], [1, 0, 1])


class TestKmEvent:
    def test_hand_product(self, three):
        km = ProductLimitService.km_event(three)
        assert km(1.0) == pytest.approx(1 / 3)
        assert km(2.0) == pytest.approx(1 / 3)
        assert km(3.0) == 1.0
        assert km(0.5) == 0.0
        assert km.at_risk.tolist() == [3, 1]

    def test_constant_beyond_last_observation(self, three):
        km = ProductLimitService.km_event(three)
        assert km.last_obs == 3.0
        assert km(100.0) == km(3.0)

    def test_no_events(self, make_sample):
        km = ProductLimitService.km_event(make_sample([1.0, 2.0], [0, 0]))
        assert km(5.0) == 0.0

    def test_uncensored_equals_ecdf(self, make_sample):
        rng = np.random.default_rng(0)
        sample = make_sample(rng.exponential(size=30), np.ones(30, dtype=int))
        grid = np.concatenate([sample.w, np.linspace(0, 4, 50)])
        np.testing.assert_allclose(
            ProductLimitService.km_event(sample)(grid), SurvivalService.ecdf(sample)(grid), rtol=0, atol=1e-12
        )

    def test_smaller_weights_give_smaller_curve(self, make_sample, random_censored):
        rng = np.random.default_rng(1)
        for _ in range(50):
            w, delta = random_censored(rng, 40)
            eta = delta * rng.uniform(size=40)
            sample = make_sample(w, delta, eta=eta)
            grid = np.linspace(0, w.max(), 100)
            upper = ProductLimitService.km_event(sample)(grid)
            lower = ProductLimitService.km_event(sample, sample.eta)(grid)
            assert np.all(lower <= upper + 1e-15)

    def test_is_a_distribution(self, make_sample, random_censored):
        rng = np.random.default_rng(2)
        w, delta = random_censored(rng, 100)
        assert ProductLimitService.km_event(make_sample(w, delta)).curve.is_distribution()


class TestKmCensor:
    def test_hand_product(self, three):
        g = ProductLimitService.km_censor(three)
        assert g(1.0) == 0.0
        assert g(2.0) == pytest.approx(0.5)

    def test_no_censoring(self, make_sample):
        assert ProductLimitService.km_censor(make_sample([1.0, 2.0], [1, 1]))(10.0) == 0.0

    def test_all_censored_is_ecdf(self, make_sample):
        sample = make_sample([1.0, 2.0, 3.0], [0, 0, 0])
        np.testing.assert_allclose(ProductLimitService.km_censor(sample)([1.0, 2.0, 3.0]), [1 / 3, 2 / 3, 1.0])

    def test_either_direction(self, make_sample):
        a = ProductLimitService.km_censor(make_sample([1.0, 1.0, 2.0], [0, 1, 0]))
        b = ProductLimitService.km_censor(make_sample([1.0, 1.0, 2.0], [0, 1, 0], direction="censor-first"))
        np.testing.assert_array_equal(a.values, b.values)


class TestCumulativeHazard:
    def test_hand_sum(self, three):
        hazard = ProductLimitService.cumulative_hazard(three)
        assert hazard(1.0) == pytest.approx(1 / 3)
        assert hazard(3.0) == pytest.approx(4 / 3)

    def test_zero_weights(self, three):
        assert ProductLimitService.cumulative_hazard(three, np.zeros(3))(3.0) == 0.0

    def test_single_event(self, make_sample):
        assert ProductLimitService.cumulative_hazard(make_sample([5.0], [1]))(5.0) == 1.0

    def test_ties_share_at_risk(self, make_sample):
        hazard = ProductLimitService.cumulative_hazard(make_sample([1.0, 1.0, 2.0], [1, 1, 1]))
        assert hazard(1.0) == pytest.approx(2 / 3)
        assert hazard(2.0) == pytest.approx(2 / 3 + 1)


class TestIpcw:
    def test_matches_product_form(self, three):
        km = ProductLimitService.km_ipcw(three, three.delta, ProductLimitService.km_censor(three))
        assert km(1.0) == pytest.approx(1 / 3)
        assert km(3.0) == pytest.approx(1.0)

    def test_no_censoring_is_sub_ecdf(self, make_sample):
        sample = make_sample([1.0, 2.0, 3.0], [1, 1, 1])
        weights = np.array([1.0, 0.0, 1.0])
        km = ProductLimitService.km_ipcw(sample, weights, ProductLimitService.km_censor(sample))
        np.testing.assert_allclose(km([1.0, 2.0, 3.0]), SurvivalService.sub_ecdf(sample, weights)([1.0, 2.0, 3.0]))

    def test_zero_weights(self, three):
        km = ProductLimitService.km_ipcw(three, np.zeros(3), ProductLimitService.km_censor(three))
        assert km(3.0) == 0.0

    def test_degenerate_denominator_names_original_index(self, make_sample):
        sample = make_sample([2.0, 1.0], [1, 1])
        censor = StepCurve(np.array([1.5]), np.array([1.0]))
        with pytest.raises(DegenerateWeightError) as exc:
            ProductLimitService.ipcw_weights(sample, sample.delta, censor)
        assert exc.value.index == 0

    def test_weights_out_of_range(self, three):
        with pytest.raises(ValidationError):
            ProductLimitService.ipcw_weights(three, [0.0, 2.0, 1.0], ProductLimitService.km_censor(three))


class TestPathwiseIdentities:
    def test_survival_product_equals_ecdf_complement(self, make_sample, random_censored):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(1, 201))
            w, delta = random_censored(rng, n, censor_rate=float(rng.uniform(0.1, 2.0)))
            sample = make_sample(w, delta)
            f = ProductLimitService.km_event(sample)(sample.w)
            g = ProductLimitService.km_censor(sample)(sample.w)
            h = SurvivalService.ecdf(sample)(sample.w)
            np.testing.assert_allclose((1 - f) * (1 - g), 1 - h, rtol=1e-12, atol=1e-12)

    def test_product_and_ipcw_forms_agree(self, make_sample, random_censored):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(1, 201))
            w, delta = random_censored(rng, n, censor_rate=float(rng.uniform(0.1, 2.0)))
            sample = make_sample(w, delta)
            grid = np.union1d(sample.w, np.linspace(0, sample.last_obs * 1.1, 25))
            product = ProductLimitService.km_event(sample)(grid)
            ipcw = ProductLimitService.km_ipcw(sample, sample.delta, ProductLimitService.km_censor(sample))(grid)
            np.testing.assert_allclose(ipcw, product, rtol=1e-12, atol=1e-12)

    def test_identity_with_ties(self, make_sample):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(2, 60))
            sample = make_sample(rng.integers(0, 6, n).astype(float), rng.integers(0, 2, n))
            grid = np.unique(sample.w)
            f = ProductLimitService.km_event(sample)(grid)
            g = ProductLimitService.km_censor(sample)(grid)
            h = SurvivalService.ecdf(sample)(grid)
            np.testing.assert_allclose((1 - f) * (1 - g), 1 - h, rtol=1e-12, atol=1e-12)
