"""
Tests for cavern_config.py - params/scenario files and environment settings
"""

import json
import os

import pytest

from cavern_config import (
    ConfigError,
    RunConfig,
    load_params_file,
    load_scenario_file,
    log_level_name,
    oracle_max_substep,
    params_from_dict,
    params_to_dict,
    parse_model_tag,
    resolve_params,
    resolve_scenario,
)
from cavern_models import ORACLE_MAX_SUBSTEP, ModelKind
from cavern_thermo import FlowMode
from cavern_validation import builtin_scenario


@pytest.fixture
def params_file(tmp_path):
    path = tmp_path / 'cavern.json'
    path.write_text(json.dumps({'V_s': 169000.0, 'T_RW_C': 35.0, 'p_in_bar': 70.0, 'h_c': 20.0}))
    return path


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / 'cycle.json'
    path.write_text(json.dumps({
        'name': 'cycle',
        'initial_p_bar': 50.0,
        'initial_T_C': 30.0,
        'segments': [
            {'mode': 'charge', 'mdot_kg_s': 40.0, 'duration_s': 7200, 'dt_s': 60},
            {'mode': 'idle', 'duration_s': 3600, 'dt_s': 600},
        ],
    }))
    return path


class TestParams:
    """Test params files and their conversion to SI"""

    def test_empty_mapping_gives_huntorf(self, huntorf):
        assert params_from_dict({}) == huntorf

    def test_file_units_converted(self, params_file):
        params = load_params_file(params_file)
        assert params.V_s == 169000.0
        assert params.T_RW == pytest.approx(308.15)
        assert params.p_in == pytest.approx(70e5)
        assert params.h_c == 20.0
        # Anchor density follows the new wall temperature
        assert params.rho_av == pytest.approx(56e5 / (286.7 * 308.15))

    def test_p_mid_sets_anchor_density(self):
        params = params_from_dict({'p_mid_bar': 50.0})
        assert params.rho_av == pytest.approx(50e5 / (286.7 * 313.15))

    def test_explicit_rho_av_wins(self):
        assert params_from_dict({'rho_av': 60.0, 'p_mid_bar': 50.0}).rho_av == 60.0

    def test_round_trip(self, huntorf_anchor):
        assert params_from_dict(params_to_dict(huntorf_anchor)) == huntorf_anchor

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match='unknown parameter keys: volume'):
            params_from_dict({'volume': 1.0})

    def test_invalid_value(self):
        with pytest.raises(ConfigError):
            params_from_dict({'k': 0.9})
        with pytest.raises(ConfigError):
            params_from_dict({'V_s': 'large'})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match='file not found'):
            load_params_file(tmp_path / 'missing.json')

    def test_malformed_json(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"V_s": ')
        with pytest.raises(ConfigError):
            load_params_file(path)

    def test_resolve_from_environment(self, params_file):
        os.environ['CAES_PARAMS'] = str(params_file)
        assert resolve_params().V_s == 169000.0

    def test_explicit_path_beats_environment(self, params_file, tmp_path):
        other = tmp_path / 'other.json'
        other.write_text(json.dumps({'V_s': 100000.0}))
        os.environ['CAES_PARAMS'] = str(params_file)
        assert resolve_params(other).V_s == 100000.0

    def test_resolve_defaults(self, huntorf):
        assert resolve_params() == huntorf


class TestScenarioFiles:

    def test_load(self, scenario_file):
        scenario = load_scenario_file(scenario_file)
        assert scenario.name == 'cycle'
        assert scenario.initial_p == pytest.approx(50e5)
        assert scenario.initial_T == pytest.approx(303.15)
        assert [segment.mode for segment in scenario.segments] == [FlowMode.CHARGE, FlowMode.IDLE]
        assert scenario.segments[1].mdot == 0.0
        assert scenario.duration == 10800.0

    def test_resolve_builtin_by_name(self):
        assert resolve_scenario('Charging') == builtin_scenario('charging')

    def test_resolve_file(self, scenario_file):
        assert resolve_scenario(str(scenario_file)).name == 'cycle'

    def test_resolve_unknown(self):
        with pytest.raises(ConfigError, match='neither a builtin scenario'):
            resolve_scenario('no-such-scenario')

    @pytest.mark.parametrize('segment', [
        {'mode': 'charge', 'duration_s': 3600},
        {'mode': 'idle', 'mdot_kg_s': 5.0, 'duration_s': 3600},
        {'mode': 'charge', 'mdot_kg_s': 40.0, 'duration_s': 100, 'dt_s': 7},
        {'mode': 'pump', 'mdot_kg_s': 40.0, 'duration_s': 3600},
        {'mode': 'charge', 'mdot_kg_s': 40.0},
    ])
    def test_invalid_segments(self, tmp_path, segment):
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps({'name': 'bad', 'initial_p_bar': 50.0, 'initial_T_C': 30.0,
                                    'segments': [segment]}))
        with pytest.raises(ConfigError):
            load_scenario_file(path)


class TestModelTags:

    @pytest.mark.parametrize('tag,kind', [
        ('bilinear', ModelKind.BI_LINEAR),
        ('Oracle', ModelKind.REFERENCE_ORACLE),
        ('exact', ModelKind.EXACT_WITH_HEAT_TRANSFER),
        ('exact-adiabatic', ModelKind.EXACT_ADIABATIC),
        ('constant-temperature', ModelKind.CONSTANT_TEMPERATURE),
        (' const-temp ', ModelKind.CONSTANT_TEMPERATURE),
    ])
    def test_known(self, tag, kind):
        assert parse_model_tag(tag) is kind

    def test_unknown(self):
        with pytest.raises(ConfigError, match='unknown model'):
            parse_model_tag('quadratic')


class TestEnvironment:
    """Test settings read from CAES_* environment variables"""

    def test_substep_default(self):
        assert oracle_max_substep() == ORACLE_MAX_SUBSTEP

    def test_substep_override(self):
        os.environ['CAES_ORACLE_MAX_SUBSTEP'] = '0.05'
        assert oracle_max_substep() == 0.05

    @pytest.mark.parametrize('raw', ['fast', '0', '-1'])
    def test_substep_invalid(self, raw):
        os.environ['CAES_ORACLE_MAX_SUBSTEP'] = raw
        with pytest.raises(ConfigError):
            oracle_max_substep()

    def test_log_level(self):
        assert log_level_name() == 'INFO'
        assert log_level_name(verbose=True) == 'DEBUG'
        assert log_level_name(quiet=True) == 'WARNING'
        os.environ['CAES_LOG_LEVEL'] = 'error'
        assert log_level_name() == 'ERROR'

    def test_log_level_invalid(self):
        os.environ['CAES_LOG_LEVEL'] = 'chatty'
        with pytest.raises(ConfigError):
            log_level_name()


class TestRunConfig:

    def test_valid(self, huntorf, tmp_path):
        config = RunConfig(huntorf, builtin_scenario('idle'), 'bilinear', 3600.0, str(tmp_path / 'trace.csv'))
        assert config.model is ModelKind.BI_LINEAR
        assert config.out == tmp_path / 'trace.csv'

    def test_interval_must_divide(self, huntorf):
        with pytest.raises(ConfigError, match='not a multiple'):
            RunConfig(huntorf, builtin_scenario('idle'), ModelKind.BI_LINEAR, 7.0)

    def test_non_positive_dt(self, huntorf):
        with pytest.raises(ConfigError):
            RunConfig(huntorf, builtin_scenario('idle'), ModelKind.BI_LINEAR, 0.0)

    def test_format(self, huntorf):
        with pytest.raises(ConfigError):
            RunConfig(huntorf, builtin_scenario('idle'), ModelKind.BI_LINEAR, 1.0, fmt='xlsx')

    def test_missing_output_directory(self, huntorf, tmp_path):
        with pytest.raises(ConfigError, match='output directory'):
            RunConfig(huntorf, builtin_scenario('idle'), ModelKind.BI_LINEAR, 1.0, tmp_path / 'nope' / 'out.csv')
