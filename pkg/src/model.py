import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from adaptive import (
    AdaptiveConfig,
    AdaptiveResult,
    HyperRectangle,
    ReplicationSummary,
    integrate_adaptive,
    make_domain,
    run_replications,
)
from cubature_errors import (
    CorrelationOutOfRange,
    CubatureConfigError,
    MissingBarriers,
    UnsupportedDimension,
)
from sampling import block_moments, combine_moments, map_blocks, sample_variance

logger = logging.getLogger(__name__)

Z_95 = 1.96
CHOLESKY_TOLERANCE = 1e-12


# =====================================================
# PAYOFFS
# =====================================================
class PayoffKind(str, Enum):
    BASKET_CALL = 'basket_call'
    BASKET_PUT = 'basket_put'
    DIGITAL_BASKET = 'digital_basket'
    PUT_ON_MIN = 'put_on_min'

    @classmethod
    def parse(cls, value) -> 'PayoffKind':
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        aliases = {
            'basketcall': cls.BASKET_CALL, 'call': cls.BASKET_CALL,
            'basketput': cls.BASKET_PUT, 'put': cls.BASKET_PUT,
            'digitalbasket': cls.DIGITAL_BASKET, 'digital': cls.DIGITAL_BASKET,
            'putonmin': cls.PUT_ON_MIN, 'min': cls.PUT_ON_MIN,
        }
        key = text.replace('_', '').replace('-', '').lower()
        if key in aliases:
            return aliases[key]
        raise CubatureConfigError(f"Unknown payoff kind: {value}")


@dataclass(frozen=True)
class PayoffSpec:
    kind: PayoffKind

    def __post_init__(self):
        object.__setattr__(self, 'kind', PayoffKind.parse(self.kind))


# =====================================================
# MODEL
# =====================================================
@dataclass(frozen=True, eq=False)
class ModelSpec:
    """
    Multi-asset Black-Scholes model with the basket contract terms

    weights default to 1/d (homogeneous basket); barriers are only needed
    by the digital basket payoff.
    """
    spots: np.ndarray
    vols: np.ndarray
    rate: float
    maturity: float
    correlation: np.ndarray
    strike: float
    weights: Optional[np.ndarray] = None
    barriers: Optional[np.ndarray] = None
    cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        spots = np.atleast_1d(np.asarray(self.spots, dtype=float))
        d = spots.shape[0]
        vols = np.broadcast_to(np.asarray(self.vols, dtype=float), (d,)).copy()
        correlation = np.asarray(self.correlation, dtype=float)
        if d == 1 and correlation.size == 1:
            correlation = correlation.reshape(1, 1)
        if correlation.shape != (d, d):
            raise CorrelationOutOfRange(f"Correlation must be a ({d}, {d}) matrix, got shape {correlation.shape}")
        weights = np.full(d, 1.0 / d) if self.weights is None else np.broadcast_to(np.asarray(self.weights, dtype=float), (d,)).copy()
        barriers = None if self.barriers is None else np.broadcast_to(np.asarray(self.barriers, dtype=float), (d,)).copy()

        if np.any(spots <= 0):
            raise CubatureConfigError(f"Spots must be positive, got {spots}")
        if np.any(vols <= 0):
            raise CubatureConfigError(f"Volatilities must be positive, got {vols}")
        if self.maturity <= 0:
            raise CubatureConfigError(f"Maturity must be positive, got {self.maturity}")
        if self.strike <= 0:
            raise CubatureConfigError(f"Strike must be positive, got {self.strike}")
        if barriers is not None and np.any(barriers <= 0):
            raise CubatureConfigError(f"Barriers must be positive, got {barriers}")

        cholesky = cholesky_factor(correlation)
        for name, value in (('spots', spots), ('vols', vols), ('correlation', correlation),
                            ('weights', weights), ('barriers', barriers), ('cholesky', cholesky)):
            if value is not None:
                value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, 'rate', float(self.rate))
        object.__setattr__(self, 'maturity', float(self.maturity))
        object.__setattr__(self, 'strike', float(self.strike))

    @property
    def d(self) -> int:
        return self.spots.shape[0]

    @property
    def discount(self) -> float:
        return math.exp(-self.rate * self.maturity)

    @property
    def drift(self) -> np.ndarray:
        return (self.rate - 0.5 * self.vols ** 2) * self.maturity

    @property
    def full_loading(self) -> np.ndarray:
        """diag(sigma) C, the loading of the independent Gaussian coordinates"""
        return self.vols[:, None] * self.cholesky

    def with_spot(self, index: int, value: float) -> 'ModelSpec':
        spots = np.array(self.spots)
        spots[index] = value
        return replace(self, spots=spots)


def cholesky_factor(correlation: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a correlation matrix, validating its shape"""
    correlation = np.asarray(correlation, dtype=float)
    if correlation.ndim != 2 or correlation.shape[0] != correlation.shape[1]:
        raise CorrelationOutOfRange(f"Correlation must be a square matrix, got shape {correlation.shape}")
    if not np.allclose(correlation, correlation.T, atol=1e-14):
        raise CorrelationOutOfRange("Correlation matrix is not symmetric")
    if not np.allclose(np.diag(correlation), 1.0, atol=1e-14):
        raise CorrelationOutOfRange("Correlation matrix must have a unit diagonal")
    try:
        factor = np.linalg.cholesky(correlation)
    except np.linalg.LinAlgError as e:
        raise CorrelationOutOfRange(f"Correlation matrix is not positive definite: {e}") from e
    if np.max(np.abs(factor @ factor.T - correlation)) > CHOLESKY_TOLERANCE:
        raise CorrelationOutOfRange("Cholesky factorization does not reproduce the correlation matrix")
    return factor


def equicorrelation(d: int, rho: float) -> np.ndarray:
    """
    Equicorrelation matrix Gamma_ij = delta_ij + rho (1 - delta_ij)

    Args:
        d: Number of assets
        rho: Common correlation in ]-1/(d-1), 1[

    Returns:
        (d, d) positive definite correlation matrix
    """
    if d < 1:
        raise CubatureConfigError(f"d must be >= 1, got {d}")
    if d > 1:
        lower_bound = -1.0 / (d - 1)
        if not lower_bound < rho < 1.0:
            raise CorrelationOutOfRange(f"rho={rho} outside ]{lower_bound}, 1[ for d={d}")
    gamma = np.full((d, d), float(rho))
    np.fill_diagonal(gamma, 1.0)
    cholesky_factor(gamma)
    return gamma


def terminal_price(model: ModelSpec, g: np.ndarray, loading: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Terminal prices S^i = s^i exp((r - sigma_i^2/2) T + sqrt(T) (L g)_i)

    Args:
        model: Model specification
        g: Gaussian vector (k,) or batch (n, k)
        loading: (d, k) loading L, defaults to diag(sigma) C

    Returns:
        Prices with shape (d,) or (n, d)
    """
    loading = model.full_loading if loading is None else loading
    g = np.asarray(g, dtype=float)
    log_prices = np.log(model.spots) + model.drift + math.sqrt(model.maturity) * (g @ loading.T)
    return np.exp(log_prices)


def payoff(payoff_spec: PayoffSpec, model: ModelSpec, s: np.ndarray) -> np.ndarray:
    """
    Payoff psi of the selected contract

    Args:
        payoff_spec: Contract kind
        model: Carries strike, weights and barriers
        s: Prices (d,) or batch (n, d)

    Returns:
        Non-negative payoff values, scalar or (n,)
    """
    s = np.asarray(s, dtype=float)
    kind = payoff_spec.kind
    if kind == PayoffKind.BASKET_CALL:
        return np.maximum(s @ model.weights - model.strike, 0.0)
    if kind == PayoffKind.BASKET_PUT:
        return np.maximum(model.strike - s @ model.weights, 0.0)
    if kind == PayoffKind.DIGITAL_BASKET:
        if model.barriers is None:
            raise MissingBarriers("Digital basket payoff needs barriers U")
        inside = np.all(s <= model.barriers, axis=-1)
        return np.maximum(s @ model.weights - model.strike, 0.0) * inside
    if kind == PayoffKind.PUT_ON_MIN:
        return np.maximum(model.strike - np.min(s, axis=-1), 0.0)
    raise CubatureConfigError(f"Unsupported payoff kind {kind}")


# =====================================================
# TRUNCATED GAUSSIAN INTEGRAND
# =====================================================
class Integrand:
    """
    x -> psi(S_T(x)) p(x) on the cube [-A, A]^k

    The default loading diag(sigma) C gives the full model (k = d); a reduced
    loading with k < d columns gives a lower-dimensional model on the same
    assets.
    """

    def __init__(self, model: ModelSpec, payoff_spec: PayoffSpec, truncation: float,
                 loading: Optional[np.ndarray] = None):
        if truncation <= 0:
            raise CubatureConfigError(f"Truncation A must be positive, got {truncation}")
        if payoff_spec.kind == PayoffKind.DIGITAL_BASKET and model.barriers is None:
            raise MissingBarriers("Digital basket payoff needs barriers U")
        self.model = model
        self.payoff = payoff_spec
        self.truncation = float(truncation)
        self.loading = model.full_loading if loading is None else np.asarray(loading, dtype=float)
        if self.loading.ndim != 2 or self.loading.shape[0] != model.d or self.loading.shape[1] < 1:
            raise CubatureConfigError(f"Loading must have shape ({model.d}, k>=1), got {self.loading.shape}")
        self.dimension = self.loading.shape[1]
        self._log_norm = -0.5 * self.dimension * math.log(2.0 * math.pi)

    @property
    def cholesky(self) -> np.ndarray:
        return self.model.cholesky

    def density(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self._log_norm - 0.5 * np.sum(x * x, axis=-1))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        prices = terminal_price(self.model, x, self.loading)
        return payoff(self.payoff, self.model, prices) * self.density(x)

    def domain(self) -> HyperRectangle:
        bound = np.full(self.dimension, self.truncation)
        return make_domain(-bound, bound)


# =====================================================
# PRICING
# =====================================================
@dataclass
class Estimate:
    """Price with its uncertainty (indicator, 95% half-width or replication std)"""
    value: float
    uncertainty: float
    eval_count: int
    kind: str = 'indicator'
    adaptive_result: Optional[AdaptiveResult] = field(default=None, repr=False)
    replications: Optional[ReplicationSummary] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        out = {'value': self.value, 'uncertainty': self.uncertainty, 'uncertainty_kind': self.kind,
               'eval_count': self.eval_count}
        if self.replications is not None:
            out.update({'runs': len(self.replications.per_run), 'mean': self.replications.mean,
                        'median': self.replications.median, 'std': self.replications.std})
        return out


def price_adaptive(model: ModelSpec, payoff_spec: PayoffSpec, truncation: float,
                   config: AdaptiveConfig) -> Estimate:
    """
    Discounted adaptive price e^{-rT} I(A)

    Args:
        model: Model specification
        payoff_spec: Contract kind
        truncation: Half-width A of the integration cube
        config: Adaptive integration configuration

    Returns:
        Estimate whose uncertainty is the discounted total error indicator
    """
    integrand = Integrand(model, payoff_spec, truncation)
    result = integrate_adaptive(integrand, integrand.domain(), config)
    discount = model.discount
    estimate = Estimate(
        value=discount * result.estimate,
        uncertainty=discount * result.total_indicator,
        eval_count=result.eval_count,
        kind='indicator',
        adaptive_result=result,
    )
    logger.info(f"Adaptive price ({payoff_spec.kind.value}, d={model.d}, A={truncation}): "
                f"{estimate.value:.12g} (indicator {estimate.uncertainty:.3e}, {estimate.eval_count} evals)")
    return estimate


def price_replicated(model: ModelSpec, payoff_spec: PayoffSpec, truncation: float,
                     config: AdaptiveConfig, runs: int = 10) -> Estimate:
    """Mean of independent GRS prices, with Err = std of the discounted runs"""
    integrand = Integrand(model, payoff_spec, truncation)
    summary = run_replications(integrand, integrand.domain(), config, runs)
    discount = model.discount
    discounted = ReplicationSummary(
        mean=discount * summary.mean,
        median=discount * summary.median,
        std=discount * summary.std,
        per_run=[discount * v for v in summary.per_run],
        eval_count=summary.eval_count,
    )
    return Estimate(value=discounted.mean, uncertainty=discounted.std, eval_count=summary.eval_count,
                    kind='std', replications=discounted)


def parity_residual(call_value: float, put_value: float, model: ModelSpec) -> float:
    """Call-put parity criterion |V - U - sum lambda_i s^i + K e^{-rT}|"""
    return abs(call_value - put_value - float(model.weights @ model.spots) + model.strike * model.discount)


# =====================================================
# ONE-DIMENSIONAL CLOSED FORMS
# =====================================================
def _check_closed_form(model: ModelSpec, payoff_spec: PayoffSpec) -> float:
    if model.d != 1:
        raise UnsupportedDimension(f"Closed form needs d = 1, got d = {model.d}")
    if payoff_spec.kind not in (PayoffKind.BASKET_CALL, PayoffKind.BASKET_PUT):
        raise UnsupportedDimension(f"Closed form only covers calls and puts, got {payoff_spec.kind.value}")
    weight = float(model.weights[0])
    if weight <= 0:
        raise UnsupportedDimension(f"Closed form needs a positive weight, got {weight}")
    return weight


def _d1_d2(spot: float, strike: float, rate: float, vol: float, maturity: float) -> Tuple[float, float]:
    vol_sqrt_t = vol * math.sqrt(maturity)
    d1 = (math.log(spot / strike) + (rate + 0.5 * vol * vol) * maturity) / vol_sqrt_t
    return d1, d1 - vol_sqrt_t


def bs_closed_form_1d(model: ModelSpec, payoff_spec: PayoffSpec) -> float:
    """
    Black-Scholes price of (lambda S - K)_+ or (K - lambda S)_+ for one asset

    Args:
        model: One-asset model
        payoff_spec: BasketCall or BasketPut

    Returns:
        Closed-form price
    """
    weight = _check_closed_form(model, payoff_spec)
    spot = weight * float(model.spots[0])
    strike, rate, vol, maturity = model.strike, model.rate, float(model.vols[0]), model.maturity
    discounted_strike = strike * math.exp(-rate * maturity)
    d1, d2 = _d1_d2(spot, strike, rate, vol, maturity)
    if payoff_spec.kind == PayoffKind.BASKET_CALL:
        return spot * norm.cdf(d1) - discounted_strike * norm.cdf(d2)
    return discounted_strike * norm.cdf(-d2) - spot * norm.cdf(-d1)


def bs_delta_1d(model: ModelSpec, payoff_spec: PayoffSpec) -> float:
    """Closed-form Delta with respect to the spot: lambda N(d1) or lambda (N(d1) - 1)"""
    weight = _check_closed_form(model, payoff_spec)
    d1, _ = _d1_d2(weight * float(model.spots[0]), model.strike, model.rate, float(model.vols[0]), model.maturity)
    if payoff_spec.kind == PayoffKind.BASKET_CALL:
        return weight * norm.cdf(d1)
    return weight * (norm.cdf(d1) - 1.0)


# =====================================================
# CRUDE MONTE CARLO
# =====================================================
def mc_price(model: ModelSpec, payoff_spec: PayoffSpec, n: int, seed: int, workers: int = 1) -> Estimate:
    """
    Crude Monte Carlo price with a 95% confidence half-width

    Args:
        model: Model specification
        payoff_spec: Contract kind
        n: Number of samples (>= 2)
        seed: Key of the counter-based Gaussian stream
        workers: Threads sampling disjoint blocks

    Returns:
        Estimate with kind 'ci95'
    """
    if n < 2:
        raise CubatureConfigError(f"n must be >= 2, got {n}")

    def block(g: np.ndarray):
        return block_moments(payoff(payoff_spec, model, terminal_price(model, g)))

    count, mean, m2 = combine_moments(map_blocks(block, n, seed, model.d, workers))
    discount = model.discount
    half_width = Z_95 * discount * math.sqrt(sample_variance(count, m2) / count)
    logger.info(f"MC price ({payoff_spec.kind.value}, n={n}): {discount * mean:.8g} +/- {half_width:.2e}")
    return Estimate(value=discount * mean, uncertainty=half_width, eval_count=count, kind='ci95')


# =====================================================
# JSON MODEL CONFIGURATION
# =====================================================
def load_model_config(document: Dict[str, Any]) -> Tuple[ModelSpec, PayoffSpec]:
    """
    Parse a model document into (ModelSpec, PayoffSpec)

    Args:
        document: Keys d, spots, vols, rate, maturity, correlation {rho | matrix},
            weights, strike, barriers, payoff

    Returns:
        Validated model and payoff specifications
    """
    try:
        spots = np.atleast_1d(np.asarray(document['spots'], dtype=float))
        d = int(document.get('d', spots.shape[0]))
        spots = np.broadcast_to(spots, (d,))
        correlation = document.get('correlation', {'rho': 0.0})
        if isinstance(correlation, dict) and 'matrix' in correlation:
            gamma = np.asarray(correlation['matrix'], dtype=float)
        elif isinstance(correlation, dict):
            gamma = equicorrelation(d, float(correlation.get('rho', 0.0)))
        else:
            gamma = equicorrelation(d, float(correlation))
        model = ModelSpec(
            spots=spots,
            vols=document['vols'],
            rate=float(document['rate']),
            maturity=float(document['maturity']),
            correlation=gamma,
            strike=float(document['strike']),
            weights=document.get('weights'),
            barriers=document.get('barriers'),
        )
        payoff_spec = PayoffSpec(document.get('payoff', PayoffKind.BASKET_CALL))
    except KeyError as e:
        raise CubatureConfigError(f"Model config is missing key {e}") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, CubatureConfigError):
            raise
        raise CubatureConfigError(f"Invalid model config: {e}") from e

    if payoff_spec.kind == PayoffKind.DIGITAL_BASKET and model.barriers is None:
        raise MissingBarriers("Digital basket config needs 'barriers'")
    return model, payoff_spec


def model_config_from_file(path: str) -> Tuple[ModelSpec, PayoffSpec]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except FileNotFoundError as e:
        raise CubatureConfigError(f"Model config not found: {path}") from e
    except json.JSONDecodeError as e:
        raise CubatureConfigError(f"Model config {path} is not valid JSON: {e}") from e
    return load_model_config(document)
