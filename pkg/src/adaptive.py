import heapq
import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cubature_errors import CubatureConfigError, DegenerateRectangle, MeshExportError
from quadrature import QuadratureResult, QuadratureRule, apply_rule, build_rule

logger = logging.getLogger(__name__)

Integrand = Callable[[np.ndarray], np.ndarray]

# Relative tolerance under which two side lengths count as equally long
ADMISSIBLE_RTOL = 1e-12


# =====================================================
# CONFIGURATION
# =====================================================
class SplitStrategy(str, Enum):
    FAS = 'fas'
    GRS = 'grs'


def default_max_regions() -> int:
    return int(os.getenv('CUBATURE_MAX_REGIONS', '2000000'))


@dataclass(frozen=True)
class AdaptiveConfig:
    """
    Parameters of one adaptive integration run

    iterations is the number of splits N; tolerance optionally stops the run
    earlier once the total indicator drops below it.
    """
    strategy: SplitStrategy = SplitStrategy.GRS
    iterations: int = 2000
    q1: int = 18
    q2: int = 24
    alpha: int = 3
    seed: int = 0
    tolerance: Optional[float] = None
    max_regions: int = field(default_factory=default_max_regions)
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'strategy', SplitStrategy(self.strategy))
        if not 1 <= self.q1 < self.q2:
            raise CubatureConfigError(f"Levels must satisfy 1 <= q1 < q2, got q1={self.q1}, q2={self.q2}")
        if self.iterations < 1:
            raise CubatureConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.alpha < 1:
            raise CubatureConfigError(f"alpha must be >= 1, got {self.alpha}")
        if self.iterations + 1 > self.max_regions:
            raise CubatureConfigError(
                f"{self.iterations} iterations exceed the region budget of {self.max_regions} "
                f"(set CUBATURE_MAX_REGIONS to raise it)"
            )
        if self.tolerance is not None and self.tolerance < 0:
            raise CubatureConfigError(f"tolerance must be >= 0, got {self.tolerance}")
        if self.workers < 1:
            raise CubatureConfigError(f"workers must be >= 1, got {self.workers}")


# =====================================================
# REGIONS
# =====================================================
@dataclass
class HyperRectangle:
    lower: np.ndarray
    upper: np.ndarray
    result_q1: Optional[QuadratureResult] = None
    result_q2: Optional[QuadratureResult] = None
    indicator: float = 0.0

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise CubatureConfigError("Rectangle bounds must be 1-D arrays of equal length")
        if not np.all(self.lower < self.upper):
            raise CubatureConfigError(f"Rectangle needs lower < upper, got {self.lower} / {self.upper}")

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def estimate(self) -> float:
        return 0.0 if self.result_q2 is None else self.result_q2.integral_estimate

    @property
    def aspect_ratio(self) -> float:
        sides = self.sides
        return float(sides.max() / sides.min())

    def can_bisect(self, axis: int) -> bool:
        # false once the midpoint rounds onto a bound
        middle = 0.5 * (self.lower[axis] + self.upper[axis])
        return bool(self.lower[axis] < middle < self.upper[axis])

    def splittable_axes(self) -> List[int]:
        return [axis for axis in range(self.d) if self.can_bisect(axis)]

    def bisect(self, axis: int) -> Tuple[Tuple[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]:
        middle = 0.5 * (self.lower[axis] + self.upper[axis])
        left_upper = self.upper.copy()
        left_upper[axis] = middle
        right_lower = self.lower.copy()
        right_lower[axis] = middle
        return (self.lower.copy(), left_upper), (right_lower, self.upper.copy())


def error_indicator(r1: QuadratureResult, r2: QuadratureResult) -> float:
    """
    Hierarchical error indicator between the q1 and q2 results

    Args:
        r1: Result of the lower-level rule on a rectangle
        r2: Result of the higher-level rule on the same rectangle

    Returns:
        |Q_q1 - Q_q2| + vol(R)/2^d * sum over A_d of |b_q1 - b_q2|

    Coefficient discrepancies are weighted by vol(R)/2^d so that both terms
    are masses over R.
    """
    if r1.leading_coeffs.shape != r2.leading_coeffs.shape:
        raise CubatureConfigError("Results come from rules of different dimensions")
    coeff_gap = float(np.sum(np.abs(r1.leading_coeffs - r2.leading_coeffs)))
    return abs(r1.integral_estimate - r2.integral_estimate) + r2.half_volume * coeff_gap


class RegionEvaluator:
    """Evaluates rectangles with both rule levels and counts integrand calls"""

    def __init__(self, f: Integrand, rule_q1: QuadratureRule, rule_q2: QuadratureRule):
        if rule_q1.d != rule_q2.d or rule_q1.alpha != rule_q2.alpha:
            raise CubatureConfigError("The two rules must share d and alpha")
        self.f = f
        self.rule_q1 = rule_q1
        self.rule_q2 = rule_q2
        self.eval_count = 0

    @classmethod
    def from_config(cls, f: Integrand, d: int, config: AdaptiveConfig) -> 'RegionEvaluator':
        return cls(f, build_rule(d, config.q1, config.alpha), build_rule(d, config.q2, config.alpha))

    @property
    def evals_per_region(self) -> int:
        return self.rule_q1.num_points + self.rule_q2.num_points

    def _evaluate(self, lower: np.ndarray, upper: np.ndarray) -> HyperRectangle:
        r1 = apply_rule(self.rule_q1, self.f, lower, upper)
        r2 = apply_rule(self.rule_q2, self.f, lower, upper)
        return HyperRectangle(lower, upper, r1, r2, error_indicator(r1, r2))

    def evaluate(self, lower: np.ndarray, upper: np.ndarray) -> HyperRectangle:
        rect = self._evaluate(lower, upper)
        self.eval_count += self.evals_per_region
        return rect

    def evaluate_pair(self, bounds) -> Tuple[HyperRectangle, HyperRectangle]:
        # eval_count is updated by the caller so threads never race on it
        (lo1, hi1), (lo2, hi2) = bounds
        return self._evaluate(lo1, hi1), self._evaluate(lo2, hi2)


# =====================================================
# SPLITTING STRATEGIES
# =====================================================
def split_fas(rect: HyperRectangle, evaluator: RegionEvaluator,
              executor: Optional[ThreadPoolExecutor] = None) -> Tuple[HyperRectangle, HyperRectangle, int]:
    """
    Fully adaptive splitting: try every axis and keep the best bisection

    Args:
        rect: Rectangle to split
        evaluator: Integrand and rules used on the children
        executor: Optional pool evaluating the d trial directions concurrently

    Returns:
        (child1, child2, axis) minimizing the children's indicator sum;
        ties go to the lowest axis. Axes too short to bisect are skipped.
    """
    axes = rect.splittable_axes()
    if not axes:
        raise DegenerateRectangle(f"Rectangle can no longer be bisected: lower={rect.lower}, upper={rect.upper}")
    trials = [rect.bisect(axis) for axis in axes]
    if executor is not None:
        pairs = list(executor.map(evaluator.evaluate_pair, trials))
    else:
        pairs = [evaluator.evaluate_pair(bounds) for bounds in trials]
    evaluator.eval_count += 2 * len(axes) * evaluator.evals_per_region

    best = 0
    best_total = pairs[0][0].indicator + pairs[0][1].indicator
    for k in range(1, len(axes)):
        total = pairs[k][0].indicator + pairs[k][1].indicator
        if total < best_total:
            best, best_total = k, total
    child1, child2 = pairs[best]
    return child1, child2, axes[best]


def admissible_directions(rect: HyperRectangle) -> np.ndarray:
    """Longest axes that can still be bisected"""
    sides = rect.sides
    longest = np.flatnonzero(sides >= sides.max() * (1.0 - ADMISSIBLE_RTOL))
    return np.array([axis for axis in longest if rect.can_bisect(int(axis))], dtype=int)


def split_grs(rect: HyperRectangle, rng: np.random.Generator,
              evaluator: RegionEvaluator) -> Tuple[HyperRectangle, HyperRectangle, int]:
    """
    Geometrical random splitting: bisect along a longest axis drawn uniformly

    Args:
        rect: Rectangle to split
        rng: Random generator owned by the run (the only source of randomness)
        evaluator: Integrand and rules used on the children

    Returns:
        (child1, child2, axis)
    """
    candidates = admissible_directions(rect)
    if candidates.size == 0:
        raise DegenerateRectangle(f"Rectangle can no longer be bisected: lower={rect.lower}, upper={rect.upper}")
    axis = int(candidates[rng.integers(len(candidates))])
    child1, child2 = evaluator.evaluate_pair(rect.bisect(axis))
    evaluator.eval_count += 2 * evaluator.evals_per_region
    return child1, child2, axis


# =====================================================
# PRIORITY LIST
# =====================================================
class RegionQueue:
    """
    Max-indicator priority list; equal indicators pop in insertion order

    Retired regions leave the list but stay in the mesh and in the
    running total.
    """

    def __init__(self):
        self._heap: List[Tuple[float, int, HyperRectangle]] = []
        self._retired: List[Tuple[float, int, HyperRectangle]] = []
        self._counter = itertools.count()
        self._running_total = 0.0

    def push(self, rect: HyperRectangle):
        heapq.heappush(self._heap, (-rect.indicator, next(self._counter), rect))
        self._running_total += rect.indicator

    def pop(self) -> HyperRectangle:
        rect = heapq.heappop(self._heap)[2]
        self._running_total -= rect.indicator
        return rect

    def peek(self) -> HyperRectangle:
        return self._heap[0][2]

    def peek_indicator(self) -> float:
        return -self._heap[0][0]

    def retire(self) -> HyperRectangle:
        """Move the top region out of the list, keeping it as a leaf"""
        entry = heapq.heappop(self._heap)
        self._retired.append(entry)
        return entry[2]

    @property
    def retired_count(self) -> int:
        return len(self._retired)

    def total_indicator(self) -> float:
        # running sum, only used for the optional stopping rule
        return max(self._running_total, 0.0)

    def leaves(self) -> List[HyperRectangle]:
        """Active and retired regions in creation order"""
        return [entry[2] for entry in sorted(self._heap + self._retired, key=lambda entry: entry[1])]

    def __len__(self) -> int:
        return len(self._heap)


# =====================================================
# ADAPTIVE DRIVER
# =====================================================
@dataclass
class AdaptiveResult:
    estimate: float
    total_indicator: float
    eval_count: int
    mesh: List[HyperRectangle]
    iterations: int = 0
    strategy: str = ''
    # leaves withdrawn from splitting at floating-point resolution
    retired: int = 0

    @property
    def region_count(self) -> int:
        return len(self.mesh)


def can_split(rect: HyperRectangle, strategy: SplitStrategy) -> bool:
    if strategy == SplitStrategy.GRS:
        return admissible_directions(rect).size > 0
    return bool(rect.splittable_axes())


def make_domain(lower: Sequence[float], upper: Sequence[float]) -> HyperRectangle:
    return HyperRectangle(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))


def integrate_adaptive(f: Integrand, domain: HyperRectangle, config: AdaptiveConfig) -> AdaptiveResult:
    """
    Adaptive integration of f over domain with the FAS or GRS strategy

    Args:
        f: Vectorized integrand
        domain: Initial hyperrectangle (its cached results are ignored)
        config: Strategy, iterations, rule levels and seed

    Returns:
        AdaptiveResult with the summed q2 estimate, total indicator,
        measured evaluation count and final mesh
    """
    evaluator = RegionEvaluator.from_config(f, domain.d, config)
    rng = np.random.default_rng(config.seed)
    queue = RegionQueue()
    queue.push(evaluator.evaluate(domain.lower, domain.upper))

    executor = None
    if config.strategy == SplitStrategy.FAS and config.workers > 1 and domain.d > 1:
        executor = ThreadPoolExecutor(max_workers=min(config.workers, domain.d))

    performed = 0
    try:
        while performed < config.iterations:
            if config.tolerance is not None and queue.total_indicator() <= config.tolerance:
                logger.info(f"Tolerance {config.tolerance} reached after {performed} splits")
                break
            if not len(queue):
                logger.warning(f"Every region reached floating-point resolution after {performed} splits")
                break
            if not can_split(queue.peek(), config.strategy):
                rect = queue.retire()
                logger.debug(f"Region retired at resolution limit: lower={rect.lower}, upper={rect.upper}, "
                             f"indicator {rect.indicator:.3e}")
                continue
            rect = queue.pop()
            if config.strategy == SplitStrategy.FAS:
                child1, child2, axis = split_fas(rect, evaluator, executor)
            else:
                child1, child2, axis = split_grs(rect, rng, evaluator)
            queue.push(child1)
            queue.push(child2)
            performed += 1
            if logger.isEnabledFor(logging.DEBUG):
                logger.debug(f"Split {performed}: axis {axis}, indicator {rect.indicator:.3e}")
    finally:
        if executor is not None:
            executor.shutdown()

    mesh = queue.leaves()
    result = AdaptiveResult(
        estimate=math.fsum(rect.estimate for rect in mesh),
        total_indicator=math.fsum(rect.indicator for rect in mesh),
        eval_count=evaluator.eval_count,
        mesh=mesh,
        iterations=performed,
        strategy=config.strategy.value,
        retired=queue.retired_count,
    )
    logger.debug(f"Adaptive run ({result.strategy}, N={performed}) estimate={result.estimate:.12g} "
                 f"indicator={result.total_indicator:.3e} evals={result.eval_count} retired={result.retired}")
    return result


# =====================================================
# REPLICATIONS
# =====================================================
@dataclass
class ReplicationSummary:
    mean: float
    median: float
    std: float
    per_run: List[float]
    eval_count: int
    results: List[AdaptiveResult] = field(default_factory=list, repr=False)

    @property
    def err(self) -> float:
        return self.std

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mean': self.mean,
            'median': self.median,
            'std': self.std,
            'per_run': list(self.per_run),
            'eval_count': self.eval_count,
        }


def run_replications(f: Integrand, domain: HyperRectangle, config: AdaptiveConfig, runs: int,
                     keep_results: bool = False) -> ReplicationSummary:
    """
    Independent GRS runs with seeds seed+0 .. seed+runs-1

    Args:
        f: Vectorized integrand
        domain: Initial hyperrectangle
        config: GRS configuration (its seed is the base seed)
        runs: Number of runs (>= 2)
        keep_results: Keep every AdaptiveResult (meshes) in the summary

    Returns:
        ReplicationSummary with mean, median and unbiased std (Err)
    """
    if config.strategy != SplitStrategy.GRS:
        raise CubatureConfigError("Replications require the stochastic GRS strategy")
    if runs < 2:
        raise CubatureConfigError(f"runs must be >= 2, got {runs}")

    values, results, evals = [], [], 0
    for k in range(runs):
        result = integrate_adaptive(f, domain, replace(config, seed=config.seed + k))
        values.append(result.estimate)
        evals += result.eval_count
        if keep_results:
            results.append(result)

    array = np.array(values)
    summary = ReplicationSummary(
        mean=float(np.mean(array)),
        median=float(np.median(array)),
        std=float(np.std(array, ddof=1)),
        per_run=values,
        eval_count=evals,
        results=results,
    )
    logger.info(f"{runs} GRS runs: mean={summary.mean:.12g} median={summary.median:.12g} Err={summary.std:.3e}")
    return summary


# =====================================================
# MESH EXPORT
# =====================================================
def mesh_statistics(result: AdaptiveResult) -> Dict[str, float]:
    return {
        'regions': len(result.mesh),
        'volume': math.fsum(rect.volume for rect in result.mesh),
        'max_aspect_ratio': max(rect.aspect_ratio for rect in result.mesh),
        'retired': result.retired,
    }


def export_mesh(result: AdaptiveResult, path: Optional[str] = None) -> pd.DataFrame:
    """
    One record per leaf: lower bounds, upper bounds, indicator, local estimate

    Args:
        result: Adaptive result holding a mesh
        path: Optional CSV destination (floats written with 17 significant digits)

    Returns:
        Mesh table as a DataFrame
    """
    if not result.mesh:
        raise CubatureConfigError("Result holds no mesh")
    d = result.mesh[0].d
    columns = [f'lo_{i + 1}' for i in range(d)] + [f'hi_{i + 1}' for i in range(d)] + ['indicator', 'estimate']
    rows = [list(rect.lower) + list(rect.upper) + [rect.indicator, rect.estimate] for rect in result.mesh]
    mesh_df = pd.DataFrame(rows, columns=columns)

    if path is not None:
        try:
            directory = os.path.dirname(os.path.abspath(path))
            os.makedirs(directory, exist_ok=True)
            mesh_df.to_csv(path, index=False, float_format='%.17g')
        except OSError as e:
            raise MeshExportError(path, str(e)) from e
        logger.info(f"Mesh with {len(mesh_df)} regions exported: {path}")
    return mesh_df
