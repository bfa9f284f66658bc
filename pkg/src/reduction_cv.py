"""
Dimension reduction of the volatility structure and the control-variate
Monte Carlo estimator built on it.

The covariance Sigma = diag(sigma) Gamma diag(sigma) is diagonalised as
Sigma = P^t D P. Keeping the l leading principal coordinates gives a reduced
model whose expectation is computed by adaptive cubature in dimension l and
used as the control value of a Monte Carlo estimator on the full model.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from adaptive import AdaptiveConfig, integrate_adaptive
from cubature_errors import CubatureConfigError, NonPositiveEigenvalue
from model import Z_95, Estimate, Integrand, ModelSpec, PayoffSpec, payoff
from sampling import block_moments, combine_moments, map_blocks, sample_variance

logger = logging.getLogger(__name__)


class TruncationBasis(str, Enum):
    # zero the trailing principal coordinates of the noise
    PRINCIPAL = 'principal'
    # zero the trailing entries of g itself before applying H
    LITERAL = 'literal'


# =====================================================
# PCA
# =====================================================
@dataclass(frozen=True, eq=False)
class PCAModel:
    """Sigma = P^t diag(D) P with D sorted decreasing and H = P^t D^(1/2) P"""
    sigma_matrix: np.ndarray
    P: np.ndarray
    D: np.ndarray
    H: np.ndarray

    @property
    def d(self) -> int:
        return self.D.shape[0]

    @property
    def loadings(self) -> np.ndarray:
        """P^t D^(1/2): column k is the k-th principal direction scaled by sqrt(D_k)"""
        return self.P.T * np.sqrt(self.D)

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return self.D / np.sum(self.D)

    def loading(self, l: int, basis: TruncationBasis = TruncationBasis.PRINCIPAL) -> np.ndarray:
        """(d, l) loading of the reduced model on its l retained coordinates"""
        if not 0 <= l <= self.d:
            raise CubatureConfigError(f"l must be in [0, {self.d}], got {l}")
        if TruncationBasis(basis) == TruncationBasis.LITERAL:
            return self.H[:, :l]
        return self.loadings[:, :l]


def covariance_matrix(model: ModelSpec) -> np.ndarray:
    return model.vols[:, None] * model.correlation * model.vols[None, :]


def build_pca(model: ModelSpec) -> PCAModel:
    """
    Eigendecomposition of the covariance of the log-returns

    Args:
        model: Model specification (sigma, Gamma)

    Returns:
        PCAModel with decreasing eigenvalues and the symmetric square root H
    """
    sigma_matrix = covariance_matrix(model)
    eigenvalues, eigenvectors = np.linalg.eigh(sigma_matrix)
    if np.any(eigenvalues <= 0):
        raise NonPositiveEigenvalue(f"Covariance has non-positive eigenvalues: {eigenvalues}")

    order = np.argsort(-eigenvalues, kind='stable')
    D = eigenvalues[order]
    P = eigenvectors[:, order].T
    H = (P.T * np.sqrt(D)) @ P
    H = 0.5 * (H + H.T)

    for array in (sigma_matrix, P, D, H):
        array.setflags(write=False)
    logger.debug(f"PCA built: eigenvalues {D}, explained variance {D / D.sum()}")
    return PCAModel(sigma_matrix=sigma_matrix, P=P, D=D, H=H)


def reduced_terminal(pca: PCAModel, model: ModelSpec, g: np.ndarray, l: int,
                     basis: TruncationBasis = TruncationBasis.PRINCIPAL) -> np.ndarray:
    """
    Terminal prices driven by the truncated noise G-hat

    Args:
        pca: PCA of the model covariance
        model: Model specification
        g: Gaussian vector (d,) or batch (n, d)
        l: Number of retained components, 0 <= l <= d
        basis: Coordinates in which the trailing components are zeroed

    Returns:
        Prices with the shape of g
    """
    if not 0 <= l <= pca.d:
        raise CubatureConfigError(f"l must be in [0, {pca.d}], got {l}")
    g = np.asarray(g, dtype=float)
    if l == pca.d:
        shock = g @ pca.H.T
    elif TruncationBasis(basis) == TruncationBasis.LITERAL:
        shock = g[..., :l] @ pca.H[:, :l].T
    else:
        z = g @ pca.P.T
        shock = z[..., :l] @ pca.loadings[:, :l].T
    return np.exp(np.log(model.spots) + model.drift + math.sqrt(model.maturity) * shock)


# =====================================================
# CONTROL VALUE
# =====================================================
def control_expectation(pca: PCAModel, model: ModelSpec, payoff_spec: PayoffSpec, l: int,
                        truncation: float, config: AdaptiveConfig,
                        basis: TruncationBasis = TruncationBasis.PRINCIPAL) -> Estimate:
    """
    Discounted expectation I-hat of the reduced payoff, by adaptive cubature on [-A, A]^l

    Args:
        pca: PCA of the model covariance
        model: Model specification
        payoff_spec: Contract kind
        l: Retained components (0 means the deterministic model)
        truncation: Half-width A of the cube
        config: Adaptive configuration (GRS in normal use)
        basis: Truncation basis of the reduced model

    Returns:
        Estimate of I-hat with the discounted indicator as uncertainty
    """
    if not 0 <= l <= pca.d:
        raise CubatureConfigError(f"l must be in [0, {pca.d}], got {l}")
    discount = model.discount
    if l == 0:
        deterministic = reduced_terminal(pca, model, np.zeros(pca.d), 0)
        value = discount * float(payoff(payoff_spec, model, deterministic))
        return Estimate(value=value, uncertainty=0.0, eval_count=1, kind='indicator')

    integrand = Integrand(model, payoff_spec, truncation, loading=pca.loading(l, basis))
    result = integrate_adaptive(integrand, integrand.domain(), config)
    estimate = Estimate(value=discount * result.estimate, uncertainty=discount * result.total_indicator,
                        eval_count=result.eval_count, kind='indicator', adaptive_result=result)
    logger.info(f"Control value (l={l}, {TruncationBasis(basis).value}): {estimate.value:.10g} "
                f"(indicator {estimate.uncertainty:.3e}, {estimate.eval_count} evals)")
    return estimate


# =====================================================
# CONTROL-VARIATE ESTIMATOR
# =====================================================
@dataclass
class CVEstimate:
    value: float
    ci_half_width: float
    control_value: float
    n: int
    l: int
    variance_ratio: float
    crude_value: float = math.nan
    crude_half_width: float = math.nan
    control_eval_count: int = 0
    control: Optional[Estimate] = field(default=None, repr=False)

    @property
    def total_eval_count(self) -> int:
        return self.n + self.control_eval_count

    def to_dict(self) -> Dict[str, Any]:
        return {
            'l': self.l,
            'value': self.value,
            'ci_half_width': self.ci_half_width,
            'control_value': self.control_value,
            'n': self.n,
            'variance_ratio': self.variance_ratio,
            'crude_value': self.crude_value,
            'crude_half_width': self.crude_half_width,
            'control_eval_count': self.control_eval_count,
        }


def cv_estimator(pca: PCAModel, model: ModelSpec, payoff_spec: PayoffSpec, l: int, n: int, seed: int,
                 truncation: float, config: AdaptiveConfig, control: Optional[Estimate] = None,
                 workers: int = 1, basis: TruncationBasis = TruncationBasis.PRINCIPAL) -> CVEstimate:
    """
    Control-variate Monte Carlo price e^{-rT} mean(psi(S) - psi(S-hat)) + I-hat

    S and S-hat are driven by the same Gaussian draws; the crude estimator on
    those draws is reported alongside.

    Args:
        pca: PCA of the model covariance
        model: Model specification
        payoff_spec: Contract kind
        l: Retained components
        n: Number of samples (>= 2)
        seed: Key of the Gaussian stream
        truncation: Half-width A for the control integral
        config: Adaptive configuration for the control integral
        control: Precomputed control value, reused instead of integrating again
        workers: Threads sampling disjoint blocks
        basis: Truncation basis of the reduced model

    Returns:
        CVEstimate with the 95% half-width and the variance ratio against crude MC
    """
    if n < 2:
        raise CubatureConfigError(f"n must be >= 2, got {n}")
    if control is None:
        control = control_expectation(pca, model, payoff_spec, l, truncation, config, basis)

    full_loading = pca.loading(pca.d, basis)
    reduced_loading = pca.loading(l, basis)
    log_base = np.log(model.spots) + model.drift
    root_t = math.sqrt(model.maturity)

    def block(g: np.ndarray):
        # g holds the retained coordinates first in either basis
        psi = payoff(payoff_spec, model, np.exp(log_base + root_t * (g @ full_loading.T)))
        psi_hat = payoff(payoff_spec, model, np.exp(log_base + root_t * (g[:, :l] @ reduced_loading.T)))
        return block_moments(psi - psi_hat), block_moments(psi)

    partials = map_blocks(block, n, seed, model.d, workers)
    count, diff_mean, diff_m2 = combine_moments([p[0] for p in partials])
    _, crude_mean, crude_m2 = combine_moments([p[1] for p in partials])

    discount = model.discount
    diff_var = sample_variance(count, diff_m2)
    crude_var = sample_variance(count, crude_m2)
    if diff_var > 0:
        variance_ratio = crude_var / diff_var
    else:
        variance_ratio = math.inf if crude_var > 0 else 1.0

    estimate = CVEstimate(
        value=discount * diff_mean + control.value,
        ci_half_width=Z_95 * discount * math.sqrt(diff_var / count),
        control_value=control.value,
        n=count,
        l=l,
        variance_ratio=variance_ratio,
        crude_value=discount * crude_mean,
        crude_half_width=Z_95 * discount * math.sqrt(crude_var / count),
        control_eval_count=control.eval_count,
        control=control,
    )
    logger.info(f"CV estimate (l={l}, n={count}): {estimate.value:.8g} +/- {estimate.ci_half_width:.2e} "
                f"(crude {estimate.crude_value:.8g} +/- {estimate.crude_half_width:.2e})")
    return estimate


def cv_sweep(pca: PCAModel, model: ModelSpec, payoff_spec: PayoffSpec, components: Sequence[int], n: int,
             seed: int, truncation: float, config: AdaptiveConfig, workers: int = 1,
             basis: TruncationBasis = TruncationBasis.PRINCIPAL) -> List[CVEstimate]:
    """Estimators for several l on the same seed, hence the same draws"""
    return [cv_estimator(pca, model, payoff_spec, l, n, seed, truncation, config, workers=workers, basis=basis)
            for l in components]
