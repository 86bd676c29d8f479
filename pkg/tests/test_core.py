import math

import numpy as np
import pytest

from choosiow import (
    AmplitudeVector,
    GainsMatrix,
    MaritalDistribution,
    PopulationVector,
    ScalingError,
    marriage_distribution,
    objective_E,
    objective_H,
    residual,
    validate_market,
)
from conftest import make_market


class TestValidateMarket:
    def test_smallest_market_valid(self):
        market = make_market([[1.0]], [100.0, 100.0])
        assert market.flags == ()
        assert not market.degenerate

    def test_zero_row_flagged_not_rejected(self):
        market = make_market([[0.0], [1.0]], [1.0, 1.0, 1.0])
        assert market.flags == ("row 1 of the gains matrix is zero",)
        assert market.degenerate

    def test_nonpositive_population_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            make_market([[1.0]], [100.0, -1.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="expected"):
            make_market([[1.0]], [1.0, 1.0, 1.0])

    def test_negative_gains_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            GainsMatrix([[-1.0]])

    def test_nan_gains_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            GainsMatrix([[np.nan]])


class TestResidual:
    def test_closed_form_1x1_root(self):
        # beta = (4/sqrt5, 1/sqrt5) solves beta1^2 + beta1*beta2 = 4 and
        # beta2^2 + beta1*beta2 = 1 exactly.
        market = make_market([[1.0]], [4.0, 1.0])
        beta = np.array([4.0, 1.0]) / math.sqrt(5.0)
        assert residual(beta, market) == pytest.approx([0.0, 0.0], abs=1e-14)

    def test_zero_gains_sqrt_nu_is_root(self):
        market = make_market(np.zeros((3, 2)), [4.0, 9.0, 16.0, 25.0, 36.0])
        beta = np.sqrt(market.population.counts)
        assert residual(beta, market) == pytest.approx(np.zeros(5), abs=0)

    def test_direct_evaluation(self):
        market = make_market([[1.0]], [100.0, 100.0])
        assert residual(np.array([1.0, 1.0]), market) == pytest.approx([-98.0, -98.0])

    def test_accepts_amplitude_vector(self):
        market = make_market([[1.0]], [100.0, 100.0])
        amp = AmplitudeVector.from_beta([1.0, 1.0])
        np.testing.assert_allclose(residual(amp, market), [-98.0, -98.0])


class TestMarriageDistribution:
    def test_symmetric_solution(self):
        gains = GainsMatrix([[1.0]])
        beta = np.array([math.sqrt(50.0), math.sqrt(50.0)])
        dist = marriage_distribution(beta, gains)
        assert dist.married[0, 0] == pytest.approx(50.0)
        assert dist.single_men[0] == pytest.approx(50.0)
        assert dist.single_women[0] == pytest.approx(50.0)

    def test_asymmetric_solution(self):
        gains = GainsMatrix([[1.0]])
        beta = np.array([4.0, 1.0]) / math.sqrt(5.0)
        dist = marriage_distribution(beta, gains)
        assert dist.married[0, 0] == pytest.approx(0.8)
        assert dist.single_men[0] == pytest.approx(3.2)
        assert dist.single_women[0] == pytest.approx(0.2)

    def test_zero_gains_all_single(self):
        gains = GainsMatrix(np.zeros((2, 3)))
        dist = marriage_distribution(np.ones(5), gains)
        assert np.all(dist.married == 0)

    def test_clearing_when_residual_zero(self):
        market = make_market([[1.0]], [4.0, 1.0])
        beta = np.array([4.0, 1.0]) / math.sqrt(5.0)
        dist = marriage_distribution(beta, market.gains)
        assert dist.clears(market.population)


class TestObjectiveE:
    def test_zero_gains(self):
        market = make_market([[0.0]], [1.0, 1.0])
        assert objective_E(np.array([1.0, 1.0]), market) == pytest.approx(1.0)

    def test_unit_gains(self):
        market = make_market([[1.0]], [1.0, 1.0])
        assert objective_E(np.array([1.0, 1.0]), market) == pytest.approx(2.0)

    def test_hyperplane_divergence(self):
        market = make_market([[1.0]], [1.0, 1.0])
        assert objective_E(np.array([0.0, 1.0]), market) == math.inf


class TestObjectiveH:
    def test_hessian_at_symmetric_solution(self):
        gains = GainsMatrix([[1.0]])
        b = np.full(2, 0.5 * math.log(50.0))
        _, _, hess = objective_H(b, gains)
        np.testing.assert_allclose(hess, [[150.0, 50.0], [50.0, 150.0]])

    def test_zero_gains_decoupled(self):
        gains = GainsMatrix(np.zeros((2, 2)))
        b = np.array([0.1, -0.3, 0.7, 0.0])
        _, _, hess = objective_H(b, gains)
        np.testing.assert_allclose(hess, np.diag(2.0 * np.exp(2.0 * b)))

    def test_value_and_gradient_at_origin(self):
        gains = GainsMatrix([[1.0]])
        value, grad, _ = objective_H(np.zeros(2), gains)
        assert value == pytest.approx(2.0)
        np.testing.assert_allclose(grad, [2.0, 2.0])

    def test_scaling_guard(self):
        gains = GainsMatrix([[1.0]])
        with pytest.raises(ScalingError):
            objective_H(np.array([400.0, 0.0]), gains)


class TestCoreIdentities:
    """Randomized checks tying residual, E, and H together."""

    def _random_case(self, rng):
        n_men = int(rng.integers(1, 6))
        n_women = int(rng.integers(1, 6))
        market = make_market(
            rng.uniform(0, 5, size=(n_men, n_women)),
            np.exp(rng.uniform(0, 6, size=n_men + n_women)),
        )
        b = rng.uniform(-2, 4, size=n_men + n_women)
        return market, b

    def test_residual_is_gradient_minus_nu(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            market, b = self._random_case(rng)
            _, grad, _ = objective_H(b, market.gains)
            expected = grad - market.population.counts
            actual = residual(np.exp(b), market)
            np.testing.assert_allclose(actual, expected, rtol=1e-12, atol=1e-12)

    def test_E_equals_H_minus_inner_product(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            market, b = self._random_case(rng)
            value, _, _ = objective_H(b, market.gains)
            lhs = objective_E(np.exp(b), market)
            rhs = value - market.population.counts @ b
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_hessian_spd_via_cholesky(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            market, b = self._random_case(rng)
            _, _, hess = objective_H(b, market.gains)
            np.testing.assert_allclose(hess, hess.T, rtol=1e-12)
            np.linalg.cholesky(hess)  # raises if not positive definite

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        market, b = self._random_case(rng)
        _, grad, hess = objective_H(b, market.gains)
        h = 1e-6
        for k in range(b.size):
            e = np.zeros_like(b)
            e[k] = h
            v_hi, g_hi, _ = objective_H(b + e, market.gains)
            v_lo, g_lo, _ = objective_H(b - e, market.gains)
            fd_grad = (v_hi - v_lo) / (2 * h)
            assert fd_grad == pytest.approx(grad[k], rel=1e-6)
            fd_hess_col = (g_hi - g_lo) / (2 * h)
            np.testing.assert_allclose(fd_hess_col, hess[:, k], rtol=1e-5)


class TestTypes:
    def test_amplitude_round_trip(self):
        amp = AmplitudeVector.from_log(np.array([0.0, 1.0]))
        np.testing.assert_allclose(amp.beta, [1.0, math.e])
        assert np.all(amp.log_beta == np.log(amp.beta))

    def test_amplitude_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            AmplitudeVector.from_beta([1.0, 0.0])

    def test_distribution_rejects_negative(self):
        with pytest.raises(ValueError):
            MaritalDistribution(np.array([[-1.0]]), np.array([1.0]), np.array([1.0]))

    def test_population_rejects_short_vector(self):
        with pytest.raises(ValueError):
            PopulationVector([1.0])

    def test_arrays_are_immutable(self):
        gains = GainsMatrix([[1.0]])
        with pytest.raises(ValueError):
            gains.entries[0, 0] = 2.0
