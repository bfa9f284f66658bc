import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import qmc

from cubature_errors import CubatureConfigError, DegenerateRectangle, EvaluationError, RankDeficient
from index_basis import (
    IndexSet,
    basis_integrals,
    build_index_set,
    leading_indices,
    tensor_basis_matrix,
)

logger = logging.getLogger(__name__)

# Singular values below RANK_TOLERANCE * sigma_max count as zero
RANK_TOLERANCE = 1e-10


# =====================================================
# QUADRATURE TYPES
# =====================================================
@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Least-squares Tchebychef quadrature Q_{d,alpha,q} on the reference cube

    points holds alpha*L Tchebychef-distributed Halton points followed by
    the 2^d corners of [-1, 1]^d.
    """
    d: int
    q: int
    alpha: int
    index_set: IndexSet
    points: np.ndarray
    integral_weights: np.ndarray
    coeff_weights: np.ndarray
    condition_number: float

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    @property
    def M(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class QuadratureResult:
    """
    Rule output on one rectangle

    leading_coeffs are in rectangle-local coordinates; half_volume is
    vol(R) / 2^d, the Jacobian of the map from the reference cube.
    """
    integral_estimate: float
    leading_coeffs: np.ndarray
    eval_count: int
    half_volume: float = 1.0


# =====================================================
# POINT SETS
# =====================================================
def halton_points(count: int, d: int) -> np.ndarray:
    """
    First `count` Halton points in bases 2, 3, 5, ... starting at index 1

    Args:
        count: Number of points (>= 1)
        d: Dimension (>= 1)

    Returns:
        (count, d) array in [0, 1]^d
    """
    if count < 1 or d < 1:
        raise CubatureConfigError(f"halton_points needs count >= 1 and d >= 1, got ({count}, {d})")
    sampler = qmc.Halton(d=d, scramble=False)
    # index 0 is the origin
    sampler.fast_forward(1)
    return sampler.random(count)


def tcheb_distributed_points(count: int, d: int) -> np.ndarray:
    """Halton points pushed to the Tchebychef (arcsine) density by x = cos(pi u)"""
    return np.cos(np.pi * halton_points(count, d))


def corner_points(d: int) -> np.ndarray:
    return np.array(list(itertools.product((-1.0, 1.0), repeat=d)))


# =====================================================
# RULE CONSTRUCTION
# =====================================================
@lru_cache(maxsize=None)
def build_rule(d: int, q: int, alpha: int) -> QuadratureRule:
    """
    Build the quadrature rule Q_{d,alpha,q} once and for all

    Args:
        d: Dimension
        q: Level of the index set W_{d,q}
        alpha: Oversampling factor, M = alpha * L + 2^d

    Returns:
        Immutable QuadratureRule (memoized per (d, q, alpha))
    """
    if alpha < 1:
        raise CubatureConfigError(f"alpha must be >= 1, got {alpha}")
    index_set = build_index_set(d, q)
    L = index_set.cardinality

    points = np.vstack([tcheb_distributed_points(alpha * L, d), corner_points(d)])
    design = tensor_basis_matrix(index_set, points)

    u, singular, vt = scipy.linalg.svd(design, full_matrices=False)
    rank = int(np.sum(singular > RANK_TOLERANCE * singular[0]))
    if rank < L:
        raise RankDeficient(rank, L, f"Rule (d={d}, q={q}, alpha={alpha}) has rank {rank} < L={L}; increase alpha")

    # A^+ = V diag(1/s) U^T, shape (L, M)
    pseudo_inverse = (vt.T / singular) @ u.T
    integral_weights = basis_integrals(index_set) @ pseudo_inverse
    rows = [index_set.position(m) for m in leading_indices(d)]
    coeff_weights = pseudo_inverse[rows, :]
    condition_number = float(singular[0] / singular[-1])

    for array in (points, integral_weights, coeff_weights):
        array.setflags(write=False)

    logger.info(f"Quadrature rule built: d={d}, q={q}, alpha={alpha}, L={L}, M={points.shape[0]}, kappa={condition_number:.4g}")
    return QuadratureRule(
        d=d,
        q=q,
        alpha=alpha,
        index_set=index_set,
        points=points,
        integral_weights=integral_weights,
        coeff_weights=coeff_weights,
        condition_number=condition_number,
    )


def rule_summary(rule: QuadratureRule) -> Dict[str, Any]:
    return {
        'd': rule.d,
        'q': rule.q,
        'alpha': rule.alpha,
        'L': rule.index_set.cardinality,
        'M': rule.num_points,
        'condition_number': rule.condition_number,
    }


# =====================================================
# RULE APPLICATION
# =====================================================
def map_to_rectangle(points: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    center = 0.5 * (lower + upper)
    half = 0.5 * (upper - lower)
    return center + points * half


def check_values(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.shape[0] != points.shape[0]:
        raise EvaluationError(None, f"Integrand returned {values.shape[0]} values for {points.shape[0]} points")
    finite = np.isfinite(values)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise EvaluationError(points[bad])
    return values


def apply_rule(rule: QuadratureRule, f: Callable[[np.ndarray], np.ndarray],
               lower: Sequence[float], upper: Sequence[float]) -> QuadratureResult:
    """
    Apply a reference rule on the hyperrectangle [lower, upper]

    Args:
        rule: Quadrature rule on [-1, 1]^d
        f: Vectorized integrand mapping (M, d) points to M values
        lower: Lower corner of the rectangle
        upper: Upper corner of the rectangle

    Returns:
        QuadratureResult with the integral and the A_d coefficients in
        rectangle-local coordinates
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != (rule.d,) or upper.shape != (rule.d,):
        raise CubatureConfigError(f"Rectangle bounds must have length {rule.d}")
    if not np.all(upper > lower):
        raise DegenerateRectangle(f"Degenerate rectangle: lower={lower}, upper={upper}")

    points = map_to_rectangle(rule.points, lower, upper)
    values = check_values(f(points), points)

    half_volume = float(np.prod(0.5 * (upper - lower)))
    integral = half_volume * float(rule.integral_weights @ values)
    coeffs = rule.coeff_weights @ values
    return QuadratureResult(integral_estimate=integral, leading_coeffs=coeffs, eval_count=rule.num_points,
                            half_volume=half_volume)


# =====================================================
# REFERENCE QUADRATURE
# =====================================================
def gauss_legendre_tensor(f: Callable[[np.ndarray], np.ndarray], lower: Sequence[float],
                          upper: Sequence[float], nodes: int = 64) -> float:
    """Tensor Gauss-Legendre quadrature with `nodes` points per axis"""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x, w = np.polynomial.legendre.leggauss(nodes)
    d = lower.shape[0]
    grid = np.array(list(itertools.product(x, repeat=d)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1)
    points = map_to_rectangle(grid, lower, upper)
    values = check_values(f(points), points)
    return float(np.prod(0.5 * (upper - lower)) * (weights @ values))
