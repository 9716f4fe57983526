"""
Tests for trace_storage.py - trace/table/report files
"""

import json
import math

import numpy as np
import pandas as pd
import pytest

from cavern_models import ModelKind
from cavern_validation import builtin_scenario, run
from trace_storage import TRACE_COLUMNS, TraceStorage, _ensure_json_serializable, atomic_write_text


@pytest.fixture
def storage(tmp_path):
    return TraceStorage(tmp_path)


@pytest.fixture
def idle_trace(huntorf):
    return run(builtin_scenario('idle'), ModelKind.BI_LINEAR, 3600.0, huntorf)


class TestTraceFiles:
    """Test CSV and JSON trace files"""

    def test_csv_layout(self, storage, idle_trace, tmp_path):
        storage.write_trace(idle_trace, 'idle.csv')
        raw = (tmp_path / 'idle.csv').read_bytes()
        assert raw.startswith(b't_s,m_kg,p_pa,T_k\n')
        assert b'\r\n' not in raw
        assert raw.count(b'\n') == 18

    def test_csv_round_trip_exact(self, storage, idle_trace):
        storage.write_trace(idle_trace, 'idle.csv')
        frame = storage.load_trace('idle.csv')
        assert list(frame.columns) == TRACE_COLUMNS
        np.testing.assert_array_equal(frame['T_k'].to_numpy(), idle_trace.column('T_s'))
        np.testing.assert_array_equal(frame['p_pa'].to_numpy(), idle_trace.column('p_s'))

    def test_json_metadata(self, storage, huntorf):
        trace = run(builtin_scenario('charging'), ModelKind.BI_LINEAR, 57600.0, huntorf)
        storage.write_trace(trace, 'charging.json', 'json')
        frame = storage.load_trace('charging.json')
        assert frame.attrs['model'] == 'bilinear'
        assert frame.attrs['scenario'] == 'charging'
        assert frame.attrs['dt'] == 57600.0
        assert len(frame.attrs['warnings']) == 1
        assert len(frame) == 2

    def test_load_rejects_other_csv(self, storage, tmp_path):
        (tmp_path / 'other.csv').write_text('a,b\n1,2\n')
        with pytest.raises(ValueError):
            storage.load_trace('other.csv')

    def test_unsupported_format(self, storage, idle_trace):
        with pytest.raises(ValueError):
            storage.render_trace(idle_trace, 'xlsx')


class TestTablesAndReports:

    def test_table_csv(self, storage, tmp_path):
        table = pd.DataFrame({'interval_s': [60.0, 600.0], 'final_err_T': [0.001, -0.1]})
        storage.write_table(table, 'sweep.csv')
        assert (tmp_path / 'sweep.csv').read_text() == 'interval_s,final_err_T\n60,0.001\n600,-0.10000000000000001\n'

    def test_report_json(self, storage, tmp_path):
        report = {'success': True, 'table': pd.DataFrame({'charging': [1e-5]}, index=['pressure']),
                  'passed': np.bool_(True), 'dt': np.float64(1.0)}
        storage.write_report(report, 'report.json')
        loaded = json.loads((tmp_path / 'report.json').read_text())
        assert loaded['passed'] is True
        assert loaded['table']['index'] == ['pressure']
        assert loaded['table']['data'] == [[1e-5]]


class TestHelpers:

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        atomic_write_text(tmp_path / 'out.txt', 'first\n')
        atomic_write_text(tmp_path / 'out.txt', 'second\n')
        assert [p.name for p in tmp_path.iterdir()] == ['out.txt']
        assert (tmp_path / 'out.txt').read_text() == 'second\n'

    def test_json_serializable(self):
        data = {
            'int': np.int64(3),
            'nan': math.nan,
            'inf': np.float64(math.inf),
            'array': np.array([1.0, 2.0]),
            'model': ModelKind.BI_LINEAR,
            'nested': ({'flag': np.bool_(False)},),
        }
        assert _ensure_json_serializable(data) == {
            'int': 3,
            'nan': None,
            'inf': None,
            'array': [1.0, 2.0],
            'model': 'bilinear',
            'nested': [{'flag': False}],
        }
