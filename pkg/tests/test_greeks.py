"""
Unit tests for the greeks module.

Tests cover:
- Perturbation windows and Tchebychef nodes
- Interpolated derivative
- Delta by interpolation of adaptive prices
- Finite-difference Monte Carlo Delta with and without common random numbers
"""
import numpy as np
import pytest

from adaptive import AdaptiveConfig
from cubature_errors import CubatureConfigError, EvaluationError
from greeks import (
    DeltaConfig,
    WindowMode,
    delta_mc_fd,
    delta_tcheb,
    fd_step,
    interpolation_delta,
    tchebychef_nodes,
    window,
)
from model import ModelSpec, PayoffKind, PayoffSpec, bs_delta_1d, equicorrelation
from presets.option_examples import get_preset

CALL = PayoffSpec(PayoffKind.BASKET_CALL)


# =============================================================================
# Windows and Nodes
# =============================================================================

class TestWindow:

    def test_absolute(self):
        assert window(50.0, 0.1) == pytest.approx((49.9, 50.1))

    def test_relative(self):
        assert window(50.0, 0.1, WindowMode.RELATIVE) == pytest.approx((45.0, 55.0))

    def test_must_stay_positive(self):
        with pytest.raises(CubatureConfigError):
            window(0.05, 0.1)


class TestTchebychefNodes:

    def test_three_nodes(self):
        nodes = tchebychef_nodes(50.0, 0.05, 3)
        expected = 50.0 + 0.05 * np.array([-np.sqrt(3.0) / 2.0, 0.0, np.sqrt(3.0) / 2.0])
        np.testing.assert_allclose(nodes, expected, atol=1e-13)

    def test_strictly_inside_and_increasing(self):
        nodes = tchebychef_nodes(20.0, 0.2, 7, WindowMode.RELATIVE)
        assert np.all(np.diff(nodes) > 0)
        assert nodes[0] > 16.0 and nodes[-1] < 24.0

    def test_needs_two_nodes(self):
        with pytest.raises(CubatureConfigError):
            tchebychef_nodes(50.0, 0.1, 1)


class TestInterpolationDelta:

    def test_exact_for_polynomials(self):
        nodes = tchebychef_nodes(2.0, 0.5, 5)
        prices = nodes ** 4 - 3.0 * nodes
        assert interpolation_delta(nodes, prices, 2.0, 1.5, 2.5) == pytest.approx(4.0 * 8.0 - 3.0, abs=1e-8)

    def test_node_order_does_not_matter(self):
        nodes = tchebychef_nodes(1.0, 0.2, 4)
        prices = np.sin(nodes)
        forward = interpolation_delta(nodes, prices, 1.0, 0.8, 1.2)
        backward = interpolation_delta(nodes[::-1], prices[::-1], 1.0, 0.8, 1.2)
        assert forward == pytest.approx(backward, abs=1e-12)
        assert forward == pytest.approx(np.cos(1.0), abs=1e-4)

    def test_non_finite_price(self):
        nodes = tchebychef_nodes(1.0, 0.2, 3)
        with pytest.raises(EvaluationError):
            interpolation_delta(nodes, [1.0, np.nan, 2.0], 1.0, 0.8, 1.2)


# =============================================================================
# Interpolated Delta
# =============================================================================

class TestDeltaTcheb:

    def test_config_validation(self):
        with pytest.raises(CubatureConfigError):
            DeltaConfig(m=1)
        with pytest.raises(CubatureConfigError):
            DeltaConfig(h=1.5, h_mode='relative')
        with pytest.raises(CubatureConfigError):
            DeltaConfig(h=1.5)
        with pytest.raises(CubatureConfigError):
            DeltaConfig(h=0.0)
        assert DeltaConfig(h_mode='relative').h_mode == WindowMode.RELATIVE

    def test_one_asset_call(self, one_asset_model):
        cfg = DeltaConfig(m=5, h=0.1, pricing=AdaptiveConfig(iterations=200, q1=8, q2=12))
        assert delta_tcheb(one_asset_model, CALL, cfg) == pytest.approx(bs_delta_1d(one_asset_model, CALL), abs=1e-5)

    def test_threads_do_not_change_result(self, one_asset_model):
        pricing = AdaptiveConfig(iterations=50, q1=8, q2=12)
        serial = delta_tcheb(one_asset_model, CALL, DeltaConfig(m=3, h=0.05, pricing=pricing))
        threaded = delta_tcheb(one_asset_model, CALL, DeltaConfig(m=3, h=0.05, pricing=pricing, workers=3))
        assert serial == threaded

    def test_asset_out_of_range(self, one_asset_model):
        with pytest.raises(CubatureConfigError):
            delta_tcheb(one_asset_model, CALL, DeltaConfig(asset_index=1))

    @pytest.mark.slow
    def test_three_asset_basket_call(self):
        model, payoff_spec = get_preset('Ex13')
        pricing = AdaptiveConfig(iterations=6000)
        narrow = delta_tcheb(model, payoff_spec, DeltaConfig(m=3, h=0.05, pricing=pricing))
        wide = delta_tcheb(model, payoff_spec, DeltaConfig(m=5, h=0.1, pricing=pricing))
        assert narrow == pytest.approx(0.3002853, abs=5e-4)
        # both node sets agree to four digits
        assert wide == pytest.approx(narrow, abs=1e-4)


# =============================================================================
# Finite-Difference Monte Carlo Delta
# =============================================================================

class TestDeltaMcFd:

    def test_step(self):
        assert fd_step(10 ** 6) == pytest.approx(0.1)

    def test_deterministic_limit_equals_weight(self):
        model = ModelSpec(spots=[50.0, 50.0], vols=[1e-8, 1e-8], rate=0.05, maturity=1.0,
                          correlation=equicorrelation(2, 0.1), strike=45.0, weights=[0.3, 0.7])
        assert delta_mc_fd(model, CALL, 0, 10_000, seed=1) == pytest.approx(0.3, abs=1e-6)
        assert delta_mc_fd(model, CALL, 1, 10_000, seed=1) == pytest.approx(0.7, abs=1e-6)

    def test_close_to_closed_form(self, one_asset_model):
        delta = delta_mc_fd(one_asset_model, CALL, 0, 200_000, seed=3)
        assert delta == pytest.approx(bs_delta_1d(one_asset_model, CALL), abs=0.01)

    def test_common_random_numbers_reduce_variance(self, one_asset_model):
        shared = [delta_mc_fd(one_asset_model, CALL, 0, 10_000, seed=s) for s in range(50)]
        independent = [delta_mc_fd(one_asset_model, CALL, 0, 10_000, seed=s, common_random_numbers=False)
                       for s in range(50)]
        assert np.var(shared, ddof=1) < np.var(independent, ddof=1)

    def test_reproducible_across_workers(self, two_asset_model):
        first = delta_mc_fd(two_asset_model, CALL, 1, 5000, seed=9)
        second = delta_mc_fd(two_asset_model, CALL, 1, 5000, seed=9, workers=2)
        assert first == second

    def test_invalid_arguments(self, one_asset_model):
        with pytest.raises(CubatureConfigError):
            delta_mc_fd(one_asset_model, CALL, 0, 1, seed=0)
        with pytest.raises(CubatureConfigError):
            delta_mc_fd(one_asset_model, CALL, 2, 100, seed=0)
