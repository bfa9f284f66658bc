"""
Unit tests for the sampling module.

Tests cover:
- Counter-based Gaussian blocks (reproducibility, independence from workers)
- Block layout
- Moment aggregation
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from sampling import (
    BLOCK_SIZE,
    block_layout,
    block_moments,
    combine_moments,
    gaussian_block,
    map_blocks,
    resolve_workers,
    sample_variance,
)


# =============================================================================
# Gaussian Blocks
# =============================================================================

class TestGaussianBlock:

    def test_reproducible(self):
        assert np.array_equal(gaussian_block(7, 3, 100, 2), gaussian_block(7, 3, 100, 2))

    def test_blocks_and_seeds_differ(self):
        base = gaussian_block(7, 0, 100, 2)
        assert not np.array_equal(base, gaussian_block(7, 1, 100, 2))
        assert not np.array_equal(base, gaussian_block(8, 0, 100, 2))

    def test_standard_normal_moments(self):
        draws = gaussian_block(1, 0, 200_000, 1)[:, 0]
        assert np.all(np.isfinite(draws))
        assert abs(draws.mean()) < 0.01
        assert draws.std() == pytest.approx(1.0, abs=0.01)


class TestBlockLayout:

    def test_exact_multiple(self):
        assert block_layout(2 * BLOCK_SIZE) == [(0, BLOCK_SIZE), (1, BLOCK_SIZE)]

    def test_remainder(self):
        assert block_layout(10, block_size=4) == [(0, 4), (1, 4), (2, 2)]

    def test_small_run(self):
        assert block_layout(3) == [(0, 3)]


class TestMapBlocks:

    def test_worker_count_does_not_change_results(self):
        serial = map_blocks(lambda g: g.sum(axis=0), 1000, seed=5, d=3, workers=1, block_size=128)
        threaded = map_blocks(lambda g: g.sum(axis=0), 1000, seed=5, d=3, workers=4, block_size=128)
        assert len(serial) == 8
        for a, b in zip(serial, threaded):
            assert np.array_equal(a, b)

    def test_environment_default(self, monkeypatch):
        monkeypatch.setenv('CUBATURE_THREADS', '3')
        assert resolve_workers(None) == 3
        assert resolve_workers(2) == 2
        assert resolve_workers(0) == 1


# =============================================================================
# Moment Aggregation
# =============================================================================

class TestMoments:

    def test_combination_matches_direct(self, rng):
        values = rng.normal(3.0, 2.0, size=1003)
        partials = [block_moments(chunk) for chunk in np.array_split(values, 7)]
        count, mean, m2 = combine_moments(partials)
        assert count == 1003
        assert mean == pytest.approx(values.mean(), rel=1e-13)
        assert sample_variance(count, m2) == pytest.approx(values.var(ddof=1), rel=1e-12)

    def test_empty_partials_are_skipped(self):
        assert combine_moments([(0, 0.0, 0.0), (2, 1.0, 2.0)]) == (2, 1.0, 2.0)

    def test_single_sample_variance(self):
        assert sample_variance(1, 0.0) == 0.0

    def test_block_moments(self):
        count, mean, m2 = block_moments(np.array([1.0, 2.0, 3.0]))
        assert (count, mean) == (3, 2.0)
        assert_allclose(m2, 2.0)
