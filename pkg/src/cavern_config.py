# =============================================================================
# cavern_config.py - Parameter/scenario files, environment and run settings
# =============================================================================
# Files use the units the plant data is published in (bar, C, kg/s, s) and
# are converted to SI here, so nothing downstream sees bar or Celsius.
# =============================================================================

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

from cavern_models import ORACLE_MAX_SUBSTEP, ModelKind
from cavern_thermo import (
    HUNTORF,
    CavernDomainError,
    CavernParams,
    FlowSegment,
    bar_to_pa,
    celsius_to_kelvin,
    default_rho_av,
    kelvin_to_celsius,
    pa_to_bar,
)
from cavern_validation import SCENARIO_ORDER, Scenario, ScenarioError, builtin_scenario

PARAMS_ENV_VAR = 'CAES_PARAMS'
LOG_LEVEL_ENV_VAR = 'CAES_LOG_LEVEL'
MAX_SUBSTEP_ENV_VAR = 'CAES_ORACLE_MAX_SUBSTEP'

OUTPUT_FORMATS = ('csv', 'json')

# File key -> (CavernParams field, conversion to SI)
_PARAM_KEYS = {
    'V_s': ('V_s', float),
    'A_c': ('A_c', float),
    'h_c': ('h_c', float),
    'c_v': ('c_v', float),
    'R': ('R', float),
    'k': ('k', float),
    'T_RW_C': ('T_RW', celsius_to_kelvin),
    'p_in_bar': ('p_in', bar_to_pa),
    'T_in_C': ('T_in', celsius_to_kelvin),
    'rho_av': ('rho_av', float),
}
_EXTRA_PARAM_KEYS = ('p_mid_bar', 'heat_capacity_basis')

MODEL_ALIASES = {
    'constant-temperature': ModelKind.CONSTANT_TEMPERATURE,
    'const_temp': ModelKind.CONSTANT_TEMPERATURE,
    'exact-heat': ModelKind.EXACT_WITH_HEAT_TRANSFER,
    'reference': ModelKind.REFERENCE_ORACLE,
}


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration"""


def _read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from e


def params_from_dict(data: Dict[str, Any]) -> CavernParams:
    """
    Build CavernParams from a params-file mapping.

    Missing keys fall back to the Huntorf values. rho_av, when absent, is
    the ideal-gas density at p_mid_bar (default 56 bar) and the wall
    temperature.
    """
    if not isinstance(data, dict):
        raise ConfigError(f"params must be a JSON object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(_PARAM_KEYS) - set(_EXTRA_PARAM_KEYS))
    if unknown:
        raise ConfigError(f"unknown parameter keys: {', '.join(unknown)}")

    values: Dict[str, Any] = dict(HUNTORF)
    try:
        for key, (name, convert) in _PARAM_KEYS.items():
            if key in data:
                values[name] = convert(float(data[key]))
        if 'rho_av' not in values:
            p_mid = bar_to_pa(float(data.get('p_mid_bar', 56.0)))
            values['rho_av'] = default_rho_av(values['R'], values['T_RW'], p_mid)
        values['heat_capacity_basis'] = data.get('heat_capacity_basis', 'cavern')
        return CavernParams(**values)
    except (TypeError, ValueError) as e:
        # CavernDomainError is a ValueError as well
        raise ConfigError(f"invalid cavern parameters: {e}") from e


def params_to_dict(params: CavernParams) -> Dict[str, Any]:
    """Inverse of params_from_dict, in file units"""
    return {
        'V_s': params.V_s,
        'A_c': params.A_c,
        'h_c': params.h_c,
        'c_v': params.c_v,
        'R': params.R,
        'k': params.k,
        'T_RW_C': kelvin_to_celsius(params.T_RW),
        'p_in_bar': pa_to_bar(params.p_in),
        'T_in_C': kelvin_to_celsius(params.T_in),
        'rho_av': params.rho_av,
        'heat_capacity_basis': params.heat_capacity_basis,
    }


def load_params_file(path: Union[str, Path]) -> CavernParams:
    params = params_from_dict(_read_json(path))
    logging.info(f"Loaded cavern parameters from {path}")
    return params


def resolve_params(path: Optional[Union[str, Path]] = None) -> CavernParams:
    """Params from an explicit file, else from $CAES_PARAMS, else Huntorf defaults"""
    path = path or os.getenv(PARAMS_ENV_VAR)
    if path:
        return load_params_file(path)
    return params_from_dict({})


def scenario_from_dict(data: Dict[str, Any]) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError(f"scenario must be a JSON object, got {type(data).__name__}")
    try:
        segments = []
        for entry in data['segments']:
            duration = float(entry['duration_s'])
            segments.append(FlowSegment(
                mode=entry['mode'],
                mdot=float(entry.get('mdot_kg_s', 0.0)),
                duration=duration,
                dt=float(entry.get('dt_s', 1.0)),
            ))
        return Scenario(
            name=str(data['name']),
            initial_p=bar_to_pa(float(data['initial_p_bar'])),
            initial_T=celsius_to_kelvin(float(data['initial_T_C'])),
            segments=tuple(segments),
        )
    except KeyError as e:
        raise ConfigError(f"scenario is missing key {e}") from e
    except (CavernDomainError, ScenarioError) as e:
        raise ConfigError(f"invalid scenario: {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid scenario value: {e}") from e


def load_scenario_file(path: Union[str, Path]) -> Scenario:
    scenario = scenario_from_dict(_read_json(path))
    logging.info(f"Loaded scenario {scenario.name!r} from {path} ({len(scenario.segments)} segments)")
    return scenario


def resolve_scenario(name_or_path: str) -> Scenario:
    """A builtin scenario by name (charging, discharging, idle) or a scenario file"""
    if name_or_path.lower() in SCENARIO_ORDER:
        return builtin_scenario(name_or_path.lower())
    if Path(name_or_path).is_file():
        return load_scenario_file(name_or_path)
    raise ConfigError(f"{name_or_path!r} is neither a builtin scenario "
                      f"({', '.join(SCENARIO_ORDER)}) nor an existing file")


def parse_model_tag(tag: str) -> ModelKind:
    normalized = tag.strip().lower()
    if normalized in MODEL_ALIASES:
        return MODEL_ALIASES[normalized]
    try:
        return ModelKind(normalized)
    except ValueError:
        valid = ', '.join(kind.value for kind in ModelKind)
        raise ConfigError(f"unknown model {tag!r}; choose one of {valid}") from None


def oracle_max_substep() -> float:
    """Oracle sub-interval cap from $CAES_ORACLE_MAX_SUBSTEP (seconds)"""
    raw = os.getenv(MAX_SUBSTEP_ENV_VAR)
    if not raw:
        return ORACLE_MAX_SUBSTEP
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{MAX_SUBSTEP_ENV_VAR} must be a number of seconds, got {raw!r}") from None
    if not value > 0:
        raise ConfigError(f"{MAX_SUBSTEP_ENV_VAR} must be positive, got {value}")
    return value


def log_level_name(verbose: bool = False, quiet: bool = False) -> str:
    if verbose:
        return 'DEBUG'
    if quiet:
        return 'WARNING'
    level = os.getenv(LOG_LEVEL_ENV_VAR, 'INFO').upper()
    if level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
        raise ConfigError(f"{LOG_LEVEL_ENV_VAR} must be a logging level name, got {level!r}")
    return level


@dataclass(frozen=True)
class RunConfig:
    """Settings of one simulate invocation, validated on construction"""
    params: CavernParams
    scenario: Scenario
    model: ModelKind
    dt: Optional[float] = None
    out: Optional[Path] = None
    fmt: str = 'csv'

    def __post_init__(self):
        object.__setattr__(self, 'model', ModelKind(self.model))
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.fmt not in OUTPUT_FORMATS:
            raise ConfigError(f"format must be one of {', '.join(OUTPUT_FORMATS)}, got {self.fmt!r}")
        if self.out is not None:
            out = Path(self.out)
            object.__setattr__(self, 'out', out)
            if not out.parent.is_dir():
                raise ConfigError(f"output directory does not exist: {out.parent}")
        if self.dt is not None:
            try:
                self.scenario.check_interval(self.dt)
            except ScenarioError as e:
                raise ConfigError(str(e)) from e
