"""
Unit tests for the presets and the reference table harness.

Tests cover:
- Named presets and parity baskets
- Table settings (scaling of iterations and samples)
- Small-scale table runs and report files
- Full-scale reproduction (marked slow)
"""
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from benchmark_tables import (
    REPLICATED_REFERENCES,
    TABLE_RUNNERS,
    TableSettings,
    run_table,
    write_table_report,
)
from cubature_errors import CubatureConfigError
from model import PayoffKind
from presets.option_examples import block_correlation, get_preset, list_presets

TINY = TableSettings(scale=0.001, runs=2, q1=4, q2=8)


# =============================================================================
# Presets
# =============================================================================

class TestPresets:

    def test_every_preset_loads(self):
        names = list_presets()
        assert {'Ex1', 'Ex20', 't1_K1', 't4_K2'} <= set(names)
        for name in names:
            model, _ = get_preset(name)
            assert model.d >= 2

    def test_digital_examples_have_barriers(self):
        model, payoff_spec = get_preset('Ex9')
        assert payoff_spec.kind == PayoffKind.DIGITAL_BASKET
        assert_allclose(model.barriers, [60.0, 60.0, 60.0])

    def test_parity_basket_weights(self):
        model, payoff_spec = get_preset('t3_K2')
        assert payoff_spec.kind == PayoffKind.BASKET_CALL
        assert_allclose(model.weights, [1.0, 1.0, 1.0])
        assert model.strike == 120.0

    def test_block_correlation(self):
        gamma = block_correlation((2, 3), (0.8, 0.4), -0.1)
        assert gamma.shape == (5, 5)
        assert gamma[0, 1] == 0.8 and gamma[2, 4] == 0.4 and gamma[0, 4] == -0.1
        assert_allclose(np.diag(gamma), 1.0)

    def test_ten_asset_example(self):
        model, _ = get_preset('Ex20')
        assert model.d == 10
        assert model.correlation[0, 9] == -0.5

    def test_unknown(self):
        with pytest.raises(CubatureConfigError):
            get_preset('Ex0')


# =============================================================================
# Settings
# =============================================================================

class TestTableSettings:

    def test_full_scale(self):
        settings = TableSettings()
        assert settings.iterations(3) == 6000
        assert settings.samples(46_000_000) == 46_000_000

    def test_scaled(self):
        settings = TableSettings(scale=0.01)
        assert settings.iterations(2) == 40
        assert settings.samples(50_000) == 1000
        assert settings.adaptive(2, alpha=15).alpha == 15

    @pytest.mark.parametrize("overrides", [{'scale': 0.0}, {'scale': 1.5}, {'runs': 1}])
    def test_invalid(self, overrides):
        with pytest.raises(CubatureConfigError):
            TableSettings(**overrides)


# =============================================================================
# Table Runs
# =============================================================================

class TestRunTable:

    def test_unknown_table(self):
        with pytest.raises(CubatureConfigError):
            run_table('t42', TINY)

    def test_every_table_is_registered(self):
        assert sorted(TABLE_RUNNERS, key=lambda t: int(t[1:])) == [f't{i}' for i in range(1, 14)]

    def test_parity_rows(self):
        report = run_table('t2', TINY)
        assert report['title'].startswith('Basket call/put')
        assert len(report['rows']) == 6
        for row in report['rows']:
            assert row['C'] >= 0.0
            assert isinstance(row['passed'], bool)

    def test_replicated_rows(self):
        report = run_table('t5', TINY)
        assert len(report['rows']) == len(REPLICATED_REFERENCES['t5'])
        assert all(row['mc_samples'] >= 1000 for row in report['rows'])

    def test_control_variate_rows(self):
        report = run_table('t12', TINY)
        assert [row['row'] for row in report['rows'][:4]] == ['Ex17, l=0', 'Ex17, l=1', 'Ex17, l=2', 'Ex17, l=3']
        assert len(report['rows']) == 12

    def test_rerun_is_identical(self):
        assert run_table('t1', TINY) == run_table('t1', TINY)

    def test_report_files(self, tmp_path):
        report = run_table('t1', TINY)
        json_path, csv_path = write_table_report(report, str(tmp_path))
        assert os.path.isfile(json_path) and json_path.endswith('.json')
        assert os.path.isfile(csv_path) and csv_path.endswith('.csv')


@pytest.mark.slow
class TestFullScale:

    @pytest.mark.parametrize("table_id", ['t1', 't2', 't5'])
    def test_reproduces_reference_values(self, table_id):
        report = run_table(table_id, TableSettings())
        assert report['passed'], [row for row in report['rows'] if not row['passed']]
