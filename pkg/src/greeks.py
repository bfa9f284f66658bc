import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence

import numpy as np
from numpy.polynomial import Chebyshev

from adaptive import AdaptiveConfig
from cubature_errors import CubatureConfigError, EvaluationError
from model import ModelSpec, PayoffSpec, payoff, price_adaptive, terminal_price
from sampling import block_moments, combine_moments, map_blocks

logger = logging.getLogger(__name__)

# Key offset of the second stream when common random numbers are switched off
INDEPENDENT_STREAM_OFFSET = 1 << 64


class WindowMode(str, Enum):
    ABSOLUTE = 'absolute'
    RELATIVE = 'relative'


@dataclass(frozen=True)
class DeltaConfig:
    """
    Interpolation Delta settings

    The window is ]x0 - h, x0 + h[ in absolute mode and ]x0(1 - h), x0(1 + h)[
    in relative mode. Every node is priced with the same pricing config,
    hence the same GRS seed.
    """
    asset_index: int = 0
    m: int = 5
    h: float = 0.1
    h_mode: WindowMode = WindowMode.ABSOLUTE
    truncation: float = 12.0
    pricing: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'h_mode', WindowMode(self.h_mode))
        if self.m < 2:
            raise CubatureConfigError(f"m must be >= 2, got {self.m}")
        if not 0 < self.h < 1:
            raise CubatureConfigError(f"h must be in ]0, 1[, got {self.h}")
        if self.truncation <= 0:
            raise CubatureConfigError(f"Truncation A must be positive, got {self.truncation}")
        if self.workers < 1:
            raise CubatureConfigError(f"workers must be >= 1, got {self.workers}")


# =====================================================
# TCHEBYCHEF INTERPOLATION
# =====================================================
def window(x0: float, h: float, mode: WindowMode = WindowMode.ABSOLUTE):
    half = h * x0 if WindowMode(mode) == WindowMode.RELATIVE else h
    lower, upper = x0 - half, x0 + half
    if lower <= 0:
        raise CubatureConfigError(f"Spot window ]{lower}, {upper}[ must stay positive")
    return lower, upper


def tchebychef_nodes(x0: float, h: float, m: int, mode: WindowMode = WindowMode.ABSOLUTE) -> np.ndarray:
    """
    Tchebychef-Gauss nodes of the perturbation window around x0

    Args:
        x0: Centre of the window (current spot)
        h: Window half-width (absolute) or fraction of x0 (relative)
        m: Number of nodes
        mode: Window interpretation

    Returns:
        (m,) increasing nodes strictly inside the window
    """
    if m < 2:
        raise CubatureConfigError(f"m must be >= 2, got {m}")
    lower, upper = window(x0, h, mode)
    k = np.arange(m)
    reference = np.cos((2 * k + 1) * np.pi / (2 * m))[::-1]
    return 0.5 * (lower + upper) + 0.5 * (upper - lower) * reference


def interpolation_delta(nodes: Sequence[float], prices: Sequence[float], x0: float,
                        lower: float, upper: float) -> float:
    """
    Derivative at x0 of the degree m-1 Chebyshev interpolant through (nodes, prices)

    Args:
        nodes: Distinct interpolation nodes in [lower, upper]
        prices: Option prices at the nodes
        x0: Point where the derivative is taken
        lower: Window lower bound
        upper: Window upper bound

    Returns:
        Interpolated Delta
    """
    nodes = np.asarray(nodes, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if nodes.shape != prices.shape or nodes.ndim != 1 or nodes.shape[0] < 2:
        raise CubatureConfigError("Need at least two nodes with one price each")
    if not np.all(np.isfinite(prices)):
        bad = int(np.argmin(np.isfinite(prices)))
        raise EvaluationError(np.array([nodes[bad]]), f"Non-finite node price at x={nodes[bad]}")
    order = np.argsort(nodes, kind='stable')
    interpolant = Chebyshev.fit(nodes[order], prices[order], deg=nodes.shape[0] - 1, domain=[lower, upper])
    return float(interpolant.deriv()(x0))


def delta_tcheb(model: ModelSpec, payoff_spec: PayoffSpec, cfg: DeltaConfig) -> float:
    """
    Delta of the adaptive price with respect to one spot by Tchebychef interpolation

    Args:
        model: Model specification
        payoff_spec: Contract kind
        cfg: Asset, node count, window and pricing settings

    Returns:
        Derivative of the interpolated price at the current spot
    """
    if not 0 <= cfg.asset_index < model.d:
        raise CubatureConfigError(f"asset_index {cfg.asset_index} outside [0, {model.d})")
    x0 = float(model.spots[cfg.asset_index])
    lower, upper = window(x0, cfg.h, cfg.h_mode)
    nodes = tchebychef_nodes(x0, cfg.h, cfg.m, cfg.h_mode)

    def price_at(x: float) -> float:
        return price_adaptive(model.with_spot(cfg.asset_index, x), payoff_spec, cfg.truncation, cfg.pricing).value

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.workers, cfg.m)) as executor:
            prices: List[float] = list(executor.map(price_at, nodes))
    else:
        prices = [price_at(x) for x in nodes]

    delta = interpolation_delta(nodes, prices, x0, lower, upper)
    logger.info(f"Tchebychef Delta (asset {cfg.asset_index}, m={cfg.m}, h={cfg.h} {cfg.h_mode.value}): {delta:.10g}")
    return delta


# =====================================================
# FINITE-DIFFERENCE MONTE CARLO
# =====================================================
def fd_step(n: int) -> float:
    return n ** (-1.0 / 6.0)


def delta_mc_fd(model: ModelSpec, payoff_spec: PayoffSpec, asset_index: int, n: int, seed: int,
                workers: int = 1, common_random_numbers: bool = True) -> float:
    """
    Central finite difference of Monte Carlo prices at s^i +/- h_n/2, h_n = n^(-1/6)

    Args:
        model: Model specification
        payoff_spec: Contract kind
        asset_index: Bumped asset
        n: Samples per price (>= 2)
        seed: Key of the Gaussian stream
        workers: Threads sampling disjoint blocks
        common_random_numbers: Share the draws between both bumped prices

    Returns:
        Finite-difference Delta
    """
    if n < 2:
        raise CubatureConfigError(f"n must be >= 2, got {n}")
    if not 0 <= asset_index < model.d:
        raise CubatureConfigError(f"asset_index {asset_index} outside [0, {model.d})")
    step = fd_step(n)
    spot = float(model.spots[asset_index])
    if spot - 0.5 * step <= 0:
        raise CubatureConfigError(f"Step {step} too large for spot {spot}")
    up = model.with_spot(asset_index, spot + 0.5 * step)
    down = model.with_spot(asset_index, spot - 0.5 * step)

    def bumped_payoff(bumped: ModelSpec, g: np.ndarray) -> np.ndarray:
        return payoff(payoff_spec, bumped, terminal_price(bumped, g))

    if common_random_numbers:
        partials = map_blocks(lambda g: block_moments(bumped_payoff(up, g) - bumped_payoff(down, g)),
                              n, seed, model.d, workers)
        difference = combine_moments(partials)[1]
    else:
        up_mean = combine_moments(map_blocks(lambda g: block_moments(bumped_payoff(up, g)),
                                             n, seed, model.d, workers))[1]
        down_mean = combine_moments(map_blocks(lambda g: block_moments(bumped_payoff(down, g)),
                                               n, seed + INDEPENDENT_STREAM_OFFSET, model.d, workers))[1]
        difference = up_mean - down_mean

    delta = math.exp(-model.rate * model.maturity) * difference / step
    logger.info(f"FD Monte Carlo Delta (asset {asset_index}, n={n}, crn={common_random_numbers}): {delta:.8g}")
    return delta
