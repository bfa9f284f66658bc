"""
Reproducible Gaussian draws for the Monte Carlo estimators.

Samples are cut into fixed-size blocks. Block k of a run keyed by `seed` is
drawn from a Philox counter-based generator jumped k times, so every block is
reproducible on its own and the result never depends on how many workers
process the blocks.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np
from scipy.special import ndtri

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1 << 16
T = TypeVar('T')


def resolve_workers(workers: int = None) -> int:
    """Explicit worker count, else CUBATURE_THREADS, else 1"""
    if workers is None:
        workers = int(os.getenv('CUBATURE_THREADS', '1'))
    return max(1, int(workers))


def gaussian_block(seed: int, block_index: int, size: int, d: int) -> np.ndarray:
    """
    Standard normal block from the inverse CDF of counter-based uniforms

    Args:
        seed: Run key
        block_index: Position of the block in the run
        size: Number of samples in the block
        d: Dimension of each sample

    Returns:
        (size, d) array of N(0, 1) draws
    """
    bit_generator = np.random.Philox(key=int(seed)).jumped(int(block_index))
    uniforms = np.random.Generator(bit_generator).random((size, d))
    # random() may return exactly 0.0
    tiny = np.finfo(float).tiny
    np.clip(uniforms, tiny, 1.0 - np.finfo(float).epsneg, out=uniforms)
    return ndtri(uniforms)


def block_layout(n: int, block_size: int = BLOCK_SIZE) -> List[Tuple[int, int]]:
    full, rest = divmod(int(n), block_size)
    layout = [(k, block_size) for k in range(full)]
    if rest:
        layout.append((full, rest))
    return layout


def map_blocks(fn: Callable[[np.ndarray], T], n: int, seed: int, d: int,
               workers: int = 1, block_size: int = BLOCK_SIZE) -> List[T]:
    """Apply fn to every Gaussian block of the run; results come back in block order"""
    layout = block_layout(n, block_size)

    def run(entry):
        index, size = entry
        return fn(gaussian_block(seed, index, size, d))

    workers = resolve_workers(workers)
    if workers > 1 and len(layout) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(run, layout))
    return [run(entry) for entry in layout]


# =====================================================
# MOMENT AGGREGATION
# =====================================================
def block_moments(values: np.ndarray) -> Tuple[int, float, float]:
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    return values.shape[0], mean, float(np.sum((values - mean) ** 2))


def combine_moments(partials: Sequence[Tuple[int, float, float]]) -> Tuple[int, float, float]:
    """Pairwise (Chan) combination of (count, mean, M2) triples, in the given order"""
    count, mean, m2 = 0, 0.0, 0.0
    for n_b, mean_b, m2_b in partials:
        if n_b == 0:
            continue
        total = count + n_b
        delta = mean_b - mean
        mean += delta * n_b / total
        m2 += m2_b + delta * delta * count * n_b / total
        count = total
    return count, mean, m2


def sample_variance(count: int, m2: float) -> float:
    return m2 / (count - 1) if count > 1 else 0.0
