# =============================================================================
# cavern_validation.py - Scenarios, simulation runs and accuracy reports
# =============================================================================
# Runs the cavern models over operating schedules and compares them against
# the fine-step oracle: per-record error metrics, the time-interval sweep and
# the report tables behind the validation and sweep commands.
# =============================================================================

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cavern_models import ORACLE_MAX_SUBSTEP, ModelKind, default_substeps, step
from cavern_thermo import (
    HUNTORF_CAVERN_VOLUMES,
    HUNTORF_PLANT_CHARGE_RATE,
    HUNTORF_PLANT_DISCHARGE_RATE,
    CavernDomainError,
    CavernParams,
    CavernState,
    FlowMode,
    FlowSegment,
    bar_to_pa,
    cavern_flow_share,
    celsius_to_kelvin,
    huntorf_params,
    kelvin_to_celsius,
    mass_from_state,
    pa_to_bar,
)

DEFAULT_INTERVALS = (1.0, 60.0, 300.0, 600.0, 1200.0, 3600.0)
DEFAULT_FIGURE_MODELS = (
    ModelKind.REFERENCE_ORACLE,
    ModelKind.BI_LINEAR,
    ModelKind.BI_LINEAR_ADIABATIC,
    ModelKind.CONSTANT_TEMPERATURE,
)
SCENARIO_ORDER = ('charging', 'discharging', 'idle')

# (lower, upper) MARE bands per process for the validation table
ACCEPTANCE_BANDS = {
    'charging': (1e-5, 5e-3),
    'discharging': (0.0, 5e-3),
    'idle': (0.0, 1e-4),
}
ANCHOR_CHARGING_FLOOR = 1e-4
SEPARATION_FACTOR = 10.0


class ScenarioError(ValueError):
    """Raised for malformed schedules, step sizes or mismatched traces"""


class SimulationError(RuntimeError):
    """A step failed mid-run; t is the time at which the failing step started"""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (at t={t:g} s)")
        self.t = t


@dataclass(frozen=True)
class Scenario:
    name: str
    initial_p: float
    initial_T: float
    segments: Tuple[FlowSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, 'segments', tuple(self.segments))
        if not self.name:
            raise ScenarioError("scenario needs a name")
        if not self.segments:
            raise ScenarioError(f"scenario {self.name!r} has no segments")
        if not (self.initial_p > 0 and self.initial_T > 0):
            raise ScenarioError(
                f"scenario {self.name!r} needs positive initial pressure and temperature, "
                f"got {self.initial_p} Pa and {self.initial_T} K")

    @property
    def duration(self) -> float:
        return sum(segment.duration for segment in self.segments)

    def initial_state(self, params: CavernParams) -> CavernState:
        m_s = mass_from_state(self.initial_p, self.initial_T, params)
        return CavernState(t=0.0, m_s=m_s, p_s=self.initial_p, T_s=self.initial_T)

    def check_interval(self, dt: float) -> None:
        """Raise ScenarioError unless dt divides every segment duration"""
        for segment in self.segments:
            try:
                segment.steps(dt)
            except CavernDomainError as e:
                raise ScenarioError(f"scenario {self.name!r}: {e}") from e


@dataclass(frozen=True)
class SimulationTrace:
    model: ModelKind
    scenario: str
    dt: Optional[float]
    records: Tuple[CavernState, ...]
    warnings: Tuple[Tuple[float, str], ...] = field(default_factory=tuple)

    @property
    def final_state(self) -> CavernState:
        return self.records[-1]

    def column(self, name: str) -> np.ndarray:
        return np.fromiter((getattr(record, name) for record in self.records),
                           dtype=float, count=len(self.records))

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({
            't_s': self.column('t'),
            'm_kg': self.column('m_s'),
            'p_pa': self.column('p_s'),
            'T_k': self.column('T_s'),
        })


@dataclass(frozen=True)
class ErrorReport:
    """Deviation of a trace from a reference trace (signed errors are a - b)"""
    mare_p: float
    mare_T: float
    max_abs_p: float
    max_abs_T: float
    final_err_p: float
    final_err_T: float
    final_rel_p: float
    final_rel_T: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def builtin_scenarios() -> List[Scenario]:
    """Charging, discharging and idle operation of the first Huntorf cavern"""
    volume = HUNTORF_CAVERN_VOLUMES[0]
    mdot_in = round(cavern_flow_share(HUNTORF_PLANT_CHARGE_RATE, volume, HUNTORF_CAVERN_VOLUMES), 4)
    mdot_out = round(cavern_flow_share(HUNTORF_PLANT_DISCHARGE_RATE, volume, HUNTORF_CAVERN_VOLUMES), 4)
    hour = 3600.0
    return [
        Scenario('charging', bar_to_pa(46.0), celsius_to_kelvin(20.0),
                 (FlowSegment(FlowMode.CHARGE, mdot_in, 16 * hour, 1.0),)),
        Scenario('discharging', bar_to_pa(66.0), celsius_to_kelvin(40.0),
                 (FlowSegment(FlowMode.DISCHARGE, mdot_out, 4 * hour, 1.0),)),
        Scenario('idle', bar_to_pa(60.0), celsius_to_kelvin(45.0),
                 (FlowSegment(FlowMode.IDLE, 0.0, 16 * hour, 1.0),)),
    ]


def builtin_scenario(name: str) -> Scenario:
    for scenario in builtin_scenarios():
        if scenario.name == name:
            return scenario
    raise ScenarioError(f"unknown scenario {name!r}; builtin scenarios are {', '.join(SCENARIO_ORDER)}")


def run(scenario: Scenario, model: ModelKind, dt: Optional[float] = None,
        params: Optional[CavernParams] = None, substeps: Optional[int] = None,
        max_substep: float = ORACLE_MAX_SUBSTEP) -> SimulationTrace:
    """
    Simulate a scenario with one model.

    dt overrides every segment's own step size. For the oracle, substeps
    defaults to the fewest sub-intervals no longer than max_substep.
    """
    model = ModelKind(model)
    params = params or huntorf_params()
    if dt is not None:
        scenario.check_interval(dt)

    state = scenario.initial_state(params)
    records = [state]
    warnings: List[Tuple[float, str]] = []
    started = time.perf_counter()

    for segment in scenario.segments:
        seg_dt = segment.dt if dt is None else dt
        n_steps = segment.steps(seg_dt)
        seg_substeps = substeps
        if model is ModelKind.REFERENCE_ORACLE and seg_substeps is None:
            seg_substeps = default_substeps(seg_dt, max_substep)
        logging.debug(f"{scenario.name}: {n_steps} {segment.mode.value} steps of {seg_dt:g} s "
                      f"at {segment.mdot:g} kg/s")
        for _ in range(n_steps):
            try:
                outcome = step(model, state, segment.mode, segment.mdot, seg_dt, params, seg_substeps)
            except CavernDomainError as e:
                logging.error(f"{model.value} run of {scenario.name} failed at t={state.t:g} s: {e}")
                raise SimulationError(str(e), state.t) from e
            warnings.extend((state.t, message) for message in outcome.warnings)
            state = outcome.state
            records.append(state)

    if warnings:
        logging.warning(f"{model.value} run of {scenario.name}: {len(warnings)} steps outside the "
                        f"validity envelope, first at t={warnings[0][0]:g} s: {warnings[0][1]}")
    logging.info(f"{model.value} run of {scenario.name}: {len(records) - 1} steps in "
                 f"{time.perf_counter() - started:.2f} s")
    return SimulationTrace(model=model, scenario=scenario.name, dt=dt,
                           records=tuple(records), warnings=tuple(warnings))


def compare(a: SimulationTrace, b: SimulationTrace) -> ErrorReport:
    """Errors of trace a against reference trace b over identical timestamps"""
    if a.scenario != b.scenario:
        raise ScenarioError(f"cannot compare traces of different scenarios: {a.scenario!r} vs {b.scenario!r}")
    t_a, t_b = a.column('t'), b.column('t')
    if t_a.shape != t_b.shape or not np.array_equal(t_a, t_b):
        raise ScenarioError(f"traces of {a.scenario!r} have different timestamps "
                            f"({len(t_a)} vs {len(t_b)} records)")

    p_a, p_b = a.column('p_s'), b.column('p_s')
    T_a, T_b = a.column('T_s'), b.column('T_s')
    err_p, err_T = p_a - p_b, T_a - T_b
    return ErrorReport(
        mare_p=float(np.mean(np.abs(err_p) / p_b)),
        mare_T=float(np.mean(np.abs(err_T) / T_b)),
        max_abs_p=float(np.max(np.abs(err_p))),
        max_abs_T=float(np.max(np.abs(err_T))),
        final_err_p=float(err_p[-1]),
        final_err_T=float(err_T[-1]),
        final_rel_p=float(err_p[-1] / p_b[-1]),
        final_rel_T=float(err_T[-1] / T_b[-1]),
    )


# =============================================================================
# Interval sweep
# =============================================================================

def _sweep_row(task: Tuple[Scenario, float, CavernParams, ModelKind, ModelKind, float]) -> Dict[str, float]:
    scenario, interval, params, model, reference, max_substep = task
    candidate = run(scenario, model, interval, params)
    benchmark = run(scenario, reference, interval, params, max_substep=max_substep)
    report = compare(candidate, benchmark)
    ref_T = benchmark.final_state.T_s
    return {
        'interval_s': interval,
        'final_err_T': report.final_err_T,
        'final_rel_T': report.final_rel_T,
        'final_rel_T_celsius': report.final_err_T / kelvin_to_celsius(ref_T),
        'final_err_p': report.final_err_p,
        'final_rel_p': report.final_rel_p,
        'final_err_p_bar': pa_to_bar(report.final_err_p),
    }


def interval_sweep(scenario: Scenario, intervals: Sequence[float] = DEFAULT_INTERVALS,
                   params: Optional[CavernParams] = None, model: ModelKind = ModelKind.BI_LINEAR,
                   reference: ModelKind = ModelKind.REFERENCE_ORACLE, max_workers: Optional[int] = None,
                   max_substep: float = ORACLE_MAX_SUBSTEP) -> pd.DataFrame:
    """
    Final-state errors of `model` against `reference` for each step interval.

    Rows follow the order of `intervals`. With max_workers > 1 the
    intervals run in worker processes.
    """
    params = params or huntorf_params()
    intervals = [float(interval) for interval in intervals]
    if not intervals:
        raise ScenarioError("interval sweep needs at least one interval")
    for interval in intervals:
        scenario.check_interval(interval)

    tasks = [(scenario, interval, params, ModelKind(model), ModelKind(reference), max_substep)
             for interval in intervals]
    logging.info(f"Sweeping {scenario.name} over {len(tasks)} intervals")
    if max_workers is not None and max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as executor:
            rows = list(executor.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(task) for task in tasks]
    return pd.DataFrame(rows)


# =============================================================================
# Reports
# =============================================================================

def acceptance_band(process: str, params: CavernParams) -> Tuple[float, float]:
    lower, upper = ACCEPTANCE_BANDS[process]
    if process == 'charging' and params.heat_capacity_basis == 'anchor':
        lower = ANCHOR_CHARGING_FLOOR
    return lower, upper


def _reference_traces(scenarios: Iterable[Scenario], dt: float, params: CavernParams,
                      reference: ModelKind) -> Dict[str, SimulationTrace]:
    return {scenario.name: run(scenario, reference, dt, params) for scenario in scenarios}


def accuracy_table(params: Optional[CavernParams] = None, dt: float = 1.0, model: ModelKind = ModelKind.BI_LINEAR,
             reference: ModelKind = ModelKind.REFERENCE_ORACLE,
             reference_traces: Optional[Dict[str, SimulationTrace]] = None) -> pd.DataFrame:
    """
    MARE of `model` against `reference` for the three builtin processes.

    Rows are pressure and temperature, columns the processes, plus a
    status column with PASS when every process lies inside its band.
    """
    params = params or huntorf_params()
    scenarios = builtin_scenarios()
    if reference_traces is None:
        reference_traces = _reference_traces(scenarios, dt, params, reference)

    mares = {}
    for scenario in scenarios:
        report = compare(run(scenario, model, dt, params), reference_traces[scenario.name])
        mares[scenario.name] = {'pressure': report.mare_p, 'temperature': report.mare_T}

    table = pd.DataFrame(mares, index=['pressure', 'temperature'])[list(SCENARIO_ORDER)]
    status = []
    for quantity in table.index:
        inside = all(acceptance_band(process, params)[0] <= table.loc[quantity, process]
                     <= acceptance_band(process, params)[1] for process in SCENARIO_ORDER)
        status.append('PASS' if inside else 'FAIL')
    table['status'] = status
    return table


def separation_ratios(params: Optional[CavernParams] = None, dt: float = 1.0,
                      reference_trace: Optional[SimulationTrace] = None) -> Dict[str, float]:
    """How much worse the constant-temperature model tracks charging than the bi-linear one"""
    params = params or huntorf_params()
    charging = builtin_scenario('charging')
    reference_trace = reference_trace or run(charging, ModelKind.REFERENCE_ORACLE, dt, params)
    isothermal = compare(run(charging, ModelKind.CONSTANT_TEMPERATURE, dt, params), reference_trace)
    bilinear = compare(run(charging, ModelKind.BI_LINEAR, dt, params), reference_trace)
    ratio_p = isothermal.mare_p / bilinear.mare_p if bilinear.mare_p > 0 else math.inf
    ratio_T = isothermal.mare_T / bilinear.mare_T if bilinear.mare_T > 0 else math.inf
    return {
        'ratio_p': ratio_p,
        'ratio_T': ratio_T,
        'separated': bool(ratio_p >= SEPARATION_FACTOR and ratio_T >= SEPARATION_FACTOR),
    }


def build_validation_report(params: Optional[CavernParams] = None, dt: float = 1.0,
                            model: ModelKind = ModelKind.BI_LINEAR) -> Dict:
    """Validation table plus the constant-temperature separation check"""
    try:
        params = params or huntorf_params()
        model = ModelKind(model)
        references = _reference_traces(builtin_scenarios(), dt, params, ModelKind.REFERENCE_ORACLE)
        table = accuracy_table(params, dt, model, reference_traces=references)
        separation = separation_ratios(params, dt, references['charging'])
        passed = bool((table['status'] == 'PASS').all())
        logging.info(f"Validation of {model.value} at dt={dt:g} s: {'PASS' if passed else 'FAIL'}")
        return {
            'success': True,
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'model': model.value,
            'dt': dt,
            'heat_capacity_basis': params.heat_capacity_basis,
            'table': table,
            'passed': passed,
            'separation': separation,
        }
    except Exception as e:
        logging.error(f"Error building validation report: {str(e)}")
        return {
            'success': False,
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'error': str(e),
        }


def sweep_table(scenarios: Optional[Sequence[Scenario]] = None, intervals: Sequence[float] = DEFAULT_INTERVALS,
              params: Optional[CavernParams] = None, max_workers: Optional[int] = None) -> pd.DataFrame:
    """Interval sweeps of several scenarios stacked in long form with a scenario column"""
    scenarios = scenarios if scenarios is not None else builtin_scenarios()
    frames = []
    for scenario in scenarios:
        frame = interval_sweep(scenario, intervals, params, max_workers=max_workers)
        frame.insert(0, 'scenario', scenario.name)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def format_sweep_table(table: pd.DataFrame) -> pd.DataFrame:
    """Human-readable layout: 'error (relative %)' per scenario/quantity and interval"""
    rows = {}
    for (scenario, interval), row in table.set_index(['scenario', 'interval_s']).iterrows():
        rows.setdefault((scenario, 'temperature [C]'), {})[interval] = \
            f"{row['final_err_T']:.4f} ({100 * row['final_rel_T_celsius']:.1f}%)"
        rows.setdefault((scenario, 'pressure [bar]'), {})[interval] = \
            f"{row['final_err_p_bar']:.4f} ({100 * row['final_rel_p']:.2f}%)"
    formatted = pd.DataFrame.from_dict(rows, orient='index')
    formatted.index = pd.MultiIndex.from_tuples(formatted.index, names=['scenario', 'quantity'])
    formatted.columns = [f"{interval:g} s" for interval in formatted.columns]
    return formatted


def _non_decreasing(values: Sequence[float]) -> bool:
    return all(later >= earlier for earlier, later in zip(values, values[1:]))


def sweep_checks(table: pd.DataFrame) -> Dict[str, bool]:
    """Trend checks on a stacked sweep table; only checks whose rows exist are reported"""
    checks = {}
    by_scenario = {name: frame.set_index('interval_s') for name, frame in table.groupby('scenario')}

    charging = by_scenario.get('charging')
    if charging is not None:
        if 3600.0 in charging.index:
            rel = abs(charging.loc[3600.0, 'final_rel_T_celsius'])
            checks['charging_T_3600_in_band'] = bool(0.01 <= rel <= 0.03)
        if 600.0 in charging.index:
            checks['charging_p_600_within_0.1_bar'] = bool(abs(charging.loc[600.0, 'final_err_p_bar']) <= 0.1)
        if 1200.0 in charging.index:
            checks['charging_p_1200_within_0.25_bar'] = bool(abs(charging.loc[1200.0, 'final_err_p_bar']) <= 0.25)

    for name in ('charging', 'discharging'):
        frame = by_scenario.get(name)
        if frame is None:
            continue
        coarse = frame[frame.index >= 300.0].sort_index()
        if len(coarse) > 1:
            checks[f'{name}_errors_grow_from_300'] = (
                _non_decreasing(list(coarse['final_err_T'].abs()))
                and _non_decreasing(list(coarse['final_err_p'].abs())))

    idle = by_scenario.get('idle')
    if idle is not None and len(idle) > 1:
        spread_T = idle['final_err_T'].max() - idle['final_err_T'].min()
        spread_p = idle['final_rel_p'].max() - idle['final_rel_p'].min()
        checks['idle_errors_constant'] = bool(spread_T <= 1e-4 and spread_p <= 1e-6)
    return checks


def build_sweep_report(scenarios: Optional[Sequence[Scenario]] = None,
                       intervals: Sequence[float] = DEFAULT_INTERVALS,
                       params: Optional[CavernParams] = None, max_workers: Optional[int] = None) -> Dict:
    """Stacked interval sweep with its trend checks"""
    try:
        table = sweep_table(scenarios, intervals, params, max_workers)
        checks = sweep_checks(table)
        failed = [name for name, ok in checks.items() if not ok]
        if failed:
            logging.warning(f"Sweep checks failed: {', '.join(failed)}")
        return {
            'success': True,
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'table': table,
            'checks': checks,
        }
    except Exception as e:
        logging.error(f"Error building sweep report: {str(e)}")
        return {
            'success': False,
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'error': str(e),
        }


def figure_data(scenario: Scenario, dt: float = 1.0, params: Optional[CavernParams] = None,
                models: Sequence[ModelKind] = DEFAULT_FIGURE_MODELS) -> pd.DataFrame:
    """Pressure and temperature trajectories of several models side by side"""
    params = params or huntorf_params()
    data = {}
    for model in models:
        model = ModelKind(model)
        trace = run(scenario, model, dt, params)
        if 't_s' not in data:
            data['t_s'] = trace.column('t')
        tag = model.value.replace('-', '_')
        data[f'p_{tag}'] = trace.column('p_s')
        data[f'T_{tag}'] = trace.column('T_s')
    return pd.DataFrame(data)
