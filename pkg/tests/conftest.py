"""
conftest.py - Shared pytest fixtures for all tests

Provides cavern parameters, reference states, the builtin scenarios and
session-cached simulation traces, so the long 1 s runs (the oracle in
particular) happen once per test session.
"""

import os
import sys
from unittest.mock import patch

import pytest

# Modules live in src/ as a flat layout
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

from cavern_models import ModelKind  # noqa: E402
from cavern_thermo import (  # noqa: E402
    CavernState,
    bar_to_pa,
    celsius_to_kelvin,
    huntorf_params,
    mass_from_state,
)
from cavern_validation import builtin_scenario, run  # noqa: E402


# =============================================================================
# Cavern Fixtures
# =============================================================================

@pytest.fixture(scope='session')
def huntorf():
    """Huntorf cavern, heat capacity of the current air mass"""
    return huntorf_params()


@pytest.fixture(scope='session')
def huntorf_anchor():
    """Huntorf cavern, heat capacity of the constant anchor mass"""
    return huntorf_params(heat_capacity_basis='anchor')


@pytest.fixture(scope='session')
def adiabatic(huntorf):
    """Huntorf cavern without wall heat transfer"""
    return huntorf.with_overrides(h_c=0.0)


def make_state(params, p_bar, T_c, t=0.0):
    p, T = bar_to_pa(p_bar), celsius_to_kelvin(T_c)
    return CavernState(t=t, m_s=mass_from_state(p, T, params), p_s=p, T_s=T)


@pytest.fixture
def charging_state(huntorf):
    """Start of the charging scenario: 46 bar, 20 C"""
    return make_state(huntorf, 46.0, 20.0)


@pytest.fixture
def discharging_state(huntorf):
    """Start of the discharging scenario: 66 bar, 40 C"""
    return make_state(huntorf, 66.0, 40.0)


@pytest.fixture
def idle_state(huntorf):
    """Start of the idle scenario: 60 bar, 45 C"""
    return make_state(huntorf, 60.0, 45.0)


@pytest.fixture
def anchor_state(huntorf):
    """56 bar at wall temperature: the cavern holds exactly m_av0"""
    return CavernState(t=0.0, m_s=huntorf.m_av0, p_s=bar_to_pa(56.0), T_s=huntorf.T_RW)


@pytest.fixture(params=['charging', 'discharging', 'idle'])
def scenario(request):
    return builtin_scenario(request.param)


# =============================================================================
# Cached Traces
# =============================================================================

@pytest.fixture(scope='session')
def trace_cache():
    """Memoised run(): trace_cache(scenario_name, model, dt, basis='cavern')"""
    traces = {}
    params_by_basis = {}

    def get(name, model, dt=1.0, basis='cavern'):
        key = (name, ModelKind(model), dt, basis)
        if key not in traces:
            params = params_by_basis.setdefault(basis, huntorf_params(heat_capacity_basis=basis))
            traces[key] = run(builtin_scenario(name), model, dt, params)
        return traces[key]

    return get


# =============================================================================
# Environment
# =============================================================================

@pytest.fixture(autouse=True)
def clean_environment():
    """Keep CAES_* settings from the developer's shell out of the tests"""
    with patch.dict(os.environ):
        for key in [key for key in os.environ if key.startswith('CAES_')]:
            del os.environ[key]
        yield


# =============================================================================
# Pytest Configuration
# =============================================================================

def pytest_configure(config):
    """Configure pytest with custom markers"""
    config.addinivalue_line(
        "markers", "slow: mark test as slow running (full 16 h scenarios at 1 s)"
    )
