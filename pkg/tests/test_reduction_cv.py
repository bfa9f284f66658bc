"""
Unit tests for the reduction_cv module.

Tests cover:
- PCA of the log-return covariance
- Reduced terminal prices in both truncation bases
- Control value by adaptive cubature (deterministic and one-factor cases)
- Control-variate Monte Carlo estimator
"""
import math
from types import SimpleNamespace

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import brentq
from scipy.stats import norm

from adaptive import AdaptiveConfig
from cubature_errors import CubatureConfigError, NonPositiveEigenvalue
from model import Estimate, ModelSpec, PayoffKind, PayoffSpec, equicorrelation, mc_price
from presets.option_examples import get_preset
from reduction_cv import (
    TruncationBasis,
    build_pca,
    control_expectation,
    covariance_matrix,
    cv_estimator,
    cv_sweep,
    reduced_terminal,
)

CALL = PayoffSpec(PayoffKind.BASKET_CALL)
ONE_FACTOR_CONFIG = AdaptiveConfig(iterations=200, q1=8, q2=12)


def basket(d, rho, vols=0.2, strike=45.0):
    return ModelSpec(spots=np.full(d, 50.0), vols=vols, rate=0.05, maturity=1.0,
                     correlation=equicorrelation(d, rho), strike=strike)


def one_factor_call_oracle(model, loading):
    """Closed-form call on the basket driven by the single factor x ~ N(0, 1)"""
    root_t = math.sqrt(model.maturity)
    scale = model.weights * model.spots * np.exp(model.drift)
    c = root_t * loading

    def basket_minus_strike(x):
        return float(np.sum(scale * np.exp(c * x))) - model.strike

    kink = brentq(basket_minus_strike, -40.0, 40.0)
    increasing = np.all(c > 0)
    if increasing:
        tail = np.sum(scale * np.exp(0.5 * c * c) * norm.cdf(c - kink)) - model.strike * norm.sf(kink)
    else:
        tail = np.sum(scale * np.exp(0.5 * c * c) * norm.cdf(kink - c)) - model.strike * norm.cdf(kink)
    return model.discount * float(tail)


# =============================================================================
# PCA
# =============================================================================

class TestBuildPca:

    def test_reconstructs_covariance(self):
        model = ModelSpec(spots=np.full(5, 50.0), vols=[0.156, 0.442, 0.325, 0.134, 0.114], rate=0.05,
                          maturity=1.0, correlation=equicorrelation(5, 0.9), strike=45.0)
        pca = build_pca(model)
        sigma = covariance_matrix(model)
        assert_allclose((pca.P.T * pca.D) @ pca.P, sigma, atol=1e-14)
        assert_allclose(pca.H @ pca.H, sigma, atol=1e-14)
        assert_allclose(pca.H, pca.H.T, atol=0)
        assert np.all(np.diff(pca.D) <= 0)
        assert pca.explained_variance_ratio.sum() == pytest.approx(1.0)

    def test_equicorrelated_leading_eigenvalue(self):
        pca = build_pca(basket(4, 0.5))
        assert pca.D[0] == pytest.approx(0.04 * (1.0 + 3 * 0.5))
        assert_allclose(pca.D[1:], 0.04 * 0.5)

    def test_singular_covariance(self):
        singular = SimpleNamespace(vols=np.array([0.2, 0.2]), correlation=np.ones((2, 2)))
        with pytest.raises(NonPositiveEigenvalue):
            build_pca(singular)

    def test_loading_shapes(self):
        pca = build_pca(basket(3, 0.1))
        assert pca.loading(2).shape == (3, 2)
        assert pca.loading(0).shape == (3, 0)
        assert_allclose(pca.loading(2, 'literal'), pca.H[:, :2])
        with pytest.raises(CubatureConfigError):
            pca.loading(4)


class TestReducedTerminal:

    def test_zero_components_is_deterministic(self, rng):
        model = basket(3, 0.1)
        prices = reduced_terminal(build_pca(model), model, rng.normal(size=(4, 3)), 0)
        assert_allclose(prices, np.tile(50.0 * np.exp(model.drift), (4, 1)))

    @pytest.mark.parametrize("basis", ['principal', 'literal'])
    def test_all_components_use_symmetric_root(self, rng, basis):
        model = basket(3, 0.3)
        pca = build_pca(model)
        g = rng.normal(size=(6, 3))
        expected = 50.0 * np.exp(model.drift + g @ pca.H.T)
        assert_allclose(reduced_terminal(pca, model, g, 3, basis), expected, rtol=1e-13)

    def test_one_principal_component_moves_along_first_direction(self, rng):
        model = basket(3, 0.3)
        pca = build_pca(model)
        log_returns = np.log(reduced_terminal(pca, model, rng.normal(size=(5, 3)), 1) / 50.0) - model.drift
        for row in log_returns:
            assert_allclose(np.cross(row, pca.P[0]), 0.0, atol=1e-13)

    def test_literal_zeroes_trailing_entries(self):
        model = basket(2, 0.5)
        pca = build_pca(model)
        g = np.array([0.7, -1.3])
        expected = 50.0 * np.exp(model.drift + pca.H[:, 0] * 0.7)
        assert_allclose(reduced_terminal(pca, model, g, 1, TruncationBasis.LITERAL), expected, rtol=1e-13)


# =============================================================================
# Control Value
# =============================================================================

class TestControlExpectation:

    def test_deterministic_control(self):
        model = basket(3, 0.1)
        control = control_expectation(build_pca(model), model, CALL, 0, 12.0, ONE_FACTOR_CONFIG)
        forward_basket = float(np.mean(50.0 * np.exp(model.drift)))
        assert control.value == pytest.approx(model.discount * (forward_basket - 45.0), rel=1e-14)
        assert control.eval_count == 1

    def test_one_factor_against_closed_form(self):
        model = basket(2, 0.6)
        pca = build_pca(model)
        control = control_expectation(pca, model, CALL, 1, 12.0, ONE_FACTOR_CONFIG)
        oracle = one_factor_call_oracle(model, pca.loading(1)[:, 0])
        assert control.value == pytest.approx(oracle, abs=1e-7)
        assert control.adaptive_result.region_count == 201

    def test_out_of_range(self):
        model = basket(2, 0.6)
        with pytest.raises(CubatureConfigError):
            control_expectation(build_pca(model), model, CALL, 3, 12.0, ONE_FACTOR_CONFIG)


# =============================================================================
# Control-Variate Estimator
# =============================================================================

class TestCvEstimator:

    def test_full_dimension_has_zero_width(self):
        model = basket(3, 0.1)
        control = Estimate(value=6.5, uncertainty=0.0, eval_count=17)
        estimate = cv_estimator(build_pca(model), model, CALL, 3, 2000, seed=4, truncation=12.0,
                                config=ONE_FACTOR_CONFIG, control=control)
        assert estimate.value == 6.5
        assert estimate.ci_half_width == 0.0
        assert math.isinf(estimate.variance_ratio)
        assert estimate.total_eval_count == 2000 + 17

    def test_deterministic_control_is_crude_mc_shifted(self):
        model = basket(3, 0.1)
        pca = build_pca(model)
        estimate = cv_estimator(pca, model, CALL, 0, 5000, seed=2, truncation=12.0, config=ONE_FACTOR_CONFIG)
        assert estimate.ci_half_width == pytest.approx(estimate.crude_half_width, rel=1e-12)
        assert estimate.variance_ratio == pytest.approx(1.0, rel=1e-12)

    def test_consistent_with_crude_monte_carlo(self):
        model = basket(3, 0.1)
        pca = build_pca(model)
        control = control_expectation(pca, model, CALL, 1, 12.0, ONE_FACTOR_CONFIG)
        estimate = cv_estimator(pca, model, CALL, 1, 20_000, seed=5, truncation=12.0,
                                config=ONE_FACTOR_CONFIG, control=control)
        crude = mc_price(model, CALL, 400_000, seed=99)
        assert abs(estimate.value - crude.value) <= 2.0 * (estimate.ci_half_width + crude.uncertainty)

    def test_variance_reduction_for_strong_correlation(self):
        model = ModelSpec(spots=np.full(5, 50.0), vols=[0.156, 0.442, 0.325, 0.134, 0.114], rate=0.05,
                          maturity=1.0, correlation=equicorrelation(5, 0.9), strike=45.0)
        pca = build_pca(model)
        control = control_expectation(pca, model, CALL, 1, 12.0, ONE_FACTOR_CONFIG)
        estimate = cv_estimator(pca, model, CALL, 1, 20_000, seed=1, truncation=12.0,
                                config=ONE_FACTOR_CONFIG, control=control)
        assert estimate.variance_ratio > 5.0
        assert estimate.ci_half_width < estimate.crude_half_width

    def test_sweep_shares_draws(self):
        model = basket(2, 0.5)
        estimates = cv_sweep(build_pca(model), model, CALL, [0, 1, 2], 3000, seed=8, truncation=12.0,
                             config=ONE_FACTOR_CONFIG)
        assert [e.l for e in estimates] == [0, 1, 2]
        assert len({e.crude_value for e in estimates}) == 1
        assert estimates[2].ci_half_width == 0.0

    def test_to_dict(self):
        model = basket(2, 0.5)
        estimate = cv_estimator(build_pca(model), model, CALL, 0, 100, seed=0, truncation=12.0,
                                config=ONE_FACTOR_CONFIG)
        assert set(estimate.to_dict()) >= {'l', 'value', 'ci_half_width', 'control_value', 'variance_ratio'}

    def test_needs_two_samples(self):
        model = basket(2, 0.5)
        with pytest.raises(CubatureConfigError):
            cv_estimator(build_pca(model), model, CALL, 1, 1, seed=0, truncation=12.0, config=ONE_FACTOR_CONFIG)


@pytest.mark.slow
class TestReferenceBaskets:

    def test_five_asset_sweep(self):
        model, payoff_spec = get_preset('Ex17')
        pca = build_pca(model)
        estimates = cv_sweep(pca, model, payoff_spec, [0, 1, 2, 3], 100_000, seed=0, truncation=12.0,
                             config=AdaptiveConfig(iterations=6000))
        widths = [e.ci_half_width for e in estimates]
        assert all(a > b for a, b in zip(widths, widths[1:]))
        assert estimates[3].value == pytest.approx(8.61404, abs=0.002)

        control = Estimate(value=estimates[3].value, uncertainty=0.0, eval_count=0)
        full = cv_estimator(pca, model, payoff_spec, 5, 10_000, seed=0, truncation=12.0,
                            config=AdaptiveConfig(), control=control)
        assert full.ci_half_width == 0.0
        assert full.value == control.value

    def test_ten_asset_block_correlation(self):
        model, payoff_spec = get_preset('Ex20')
        estimate = cv_estimator(build_pca(model), model, payoff_spec, 3, 100_000, seed=0, truncation=12.0,
                                config=AdaptiveConfig(iterations=6000))
        assert estimate.crude_half_width / estimate.ci_half_width >= 5.0
