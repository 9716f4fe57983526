# =============================================================================
# cavern_models.py - Cavern step models: exact, bi-linear, isothermal, oracle
# =============================================================================
# Every stepper takes a CavernState and returns the state one step later.
# Steppers are pure; run() in cavern_validation folds them over a schedule.
#
# Mass bookkeeping is the same in every model: m' = m_s + mdot*dt when
# charging and m' = m_s - mdot*dt when discharging, evaluated as exactly that
# expression so all models agree bitwise on the mass trajectory.
# =============================================================================

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

from cavern_thermo import (
    CavernDomainError,
    CavernParams,
    CavernState,
    FlowMode,
    ModelConstants,
    VirtualChargeStates,
    adiabatic_invariant,
    model_constants,
)

ORACLE_MAX_SUBSTEP = 0.1          # s, longest oracle sub-interval by default
EXACT_CHARGE_RATIO_WARN = 0.05    # virtual container assumption
BILINEAR_FLOW_RATIO_LIMIT = 0.1   # first-order truncation envelope
IDLE_MASS_DEVIATION_LIMIT = 0.5   # Taylor expansion around m_av0


class ModelKind(str, Enum):
    """Cavern model selector; values double as CLI tags"""
    EXACT_ADIABATIC = 'exact-adiabatic'
    EXACT_WITH_HEAT_TRANSFER = 'exact'
    BI_LINEAR = 'bilinear'
    BI_LINEAR_ADIABATIC = 'bilinear-adiabatic'
    CONSTANT_TEMPERATURE = 'const-temp'
    REFERENCE_ORACLE = 'oracle'


@dataclass(frozen=True)
class StepOutcome:
    state: CavernState
    warnings: Tuple[str, ...] = ()


@dataclass(frozen=True)
class BilinearTerm:
    """One product term of a bi-linear step equation and its multiplier"""
    quantity: str      # 'p' or 'T'
    term: str          # e.g. 'T_s*mdot', 'm_s', 'const'
    coefficient: float

    def value(self, m_s: float, p_s: float, T_s: float, mdot: float) -> float:
        if self.term == 'const':
            return self.coefficient
        variables = {'m_s': m_s, 'p_s': p_s, 'T_s': T_s, 'mdot': mdot}
        product = self.coefficient
        for factor in self.term.split('*'):
            product *= variables[factor]
        return product


@dataclass(frozen=True)
class StepCoefficients:
    """
    Affine dependence of one bi-linear step on the mass flow rate.

    p' = alpha_p + beta_p * mdot and T' = alpha_T + beta_T * mdot for the
    state and step length the coefficients were exported at.

    bilinear_terms expands the same equations into products of the state
    variables and mdot, for assembling multi-step optimization constraints.
    For charge and discharge the terms sum to m_s*p' and m_s*T'; for idle
    they sum to p' and T' directly (mass_scaled is False).
    """
    mode: FlowMode
    alpha_p: float
    beta_p: float
    alpha_T: float
    beta_T: float
    bilinear_terms: Tuple[BilinearTerm, ...] = field(default_factory=tuple)
    mass_scaled: bool = True

    def predict(self, mdot: float) -> Tuple[float, float]:
        """(p', T') at flow rate mdot"""
        return self.alpha_p + self.beta_p * mdot, self.alpha_T + self.beta_T * mdot

    def evaluate_terms(self, quantity: str, m_s: float, p_s: float, T_s: float, mdot: float) -> float:
        """Left-hand side of the bi-linear equation for quantity ('p' or 'T')"""
        return math.fsum(term.value(m_s, p_s, T_s, mdot)
                         for term in self.bilinear_terms if term.quantity == quantity)


def _next_state(state: CavernState, dt: float, m: float, p: float, T: float) -> CavernState:
    return CavernState(t=state.t + dt, m_s=m, p_s=p, T_s=T)


def _check_step(mdot: float, dt: float) -> None:
    if not mdot >= 0:
        raise CavernDomainError(f"mass flow rate must be non-negative, got {mdot}")
    if not dt > 0:
        raise CavernDomainError(f"time step must be positive, got {dt}")


def _outflow_ratio(state: CavernState, mdot: float, dt: float) -> float:
    x = mdot * dt / state.m_s
    if x >= 1:
        raise CavernDomainError(
            f"discharging {mdot * dt:.6g} kg in one step empties the cavern ({state.m_s:.6g} kg)")
    return x


def _linearised_power(m: float, m_av0: float, r: float) -> float:
    """First-order Taylor expansion of m**r around m_av0"""
    return m_av0 ** r + r * m_av0 ** (r - 1) * (m - m_av0)


# =============================================================================
# Exact charging: virtual container stages
# =============================================================================

def charge_stage1(state: CavernState, mdot_in: float, dt: float, params: CavernParams) -> VirtualChargeStates:
    """
    Compress the injected air adiabatically to the cavern's density.

    The m_in = mdot_in*dt kg injected over one step start at (p_in, T_in)
    and end in a virtual container of volume V_in1 = V_s*m_in/m_s.
    """
    if not mdot_in > 0:
        raise CavernDomainError(f"charging needs a positive mass flow rate, got {mdot_in}")
    _check_step(mdot_in, dt)

    k, R, V_s, m_s = params.k, params.R, params.V_s, state.m_s
    m_in = mdot_in * dt
    ratio = m_in / m_s
    if ratio >= 1:
        raise CavernDomainError(
            f"injected mass {m_in:.6g} kg is not smaller than the cavern mass {m_s:.6g} kg")
    if ratio > EXACT_CHARGE_RATIO_WARN:
        logging.warning(f"Injected mass ratio {ratio:.4f} exceeds {EXACT_CHARGE_RATIO_WARN}; "
                        f"virtual container assumption is stretched")

    V_in1 = V_s * ratio
    c_0 = adiabatic_invariant(params.T_in, params.p_in, k)
    p_in1 = c_0 ** (k - 1) * R ** k * m_s ** k / V_s ** k
    T_in1 = (c_0 * R * m_s / V_s) ** (k - 1)

    pv = p_in1 * V_in1
    if abs(pv - m_in * R * T_in1) > 1e-10 * pv:
        raise CavernDomainError(f"virtual container state violates the ideal gas law (p={p_in1}, T={T_in1})")

    return VirtualChargeStates(m_in=m_in, V_in1=V_in1, p_in1=p_in1, T_in1=T_in1, c_0=c_0)


def charge_stage2(partial: VirtualChargeStates, state: CavernState, mdot_in: float, dt: float,
                  params: CavernParams) -> VirtualChargeStates:
    """Mix the virtual container with the cavern air at constant total energy"""
    m_in, m_s = partial.m_in, state.m_s
    internal = m_in * partial.T_in1 + m_s * state.T_s
    T_in2 = internal / (m_in + m_s)
    p_in2 = internal * params.R / (params.V_s + partial.V_in1)
    c_1 = adiabatic_invariant(T_in2, p_in2, params.k)
    return VirtualChargeStates(m_in=m_in, V_in1=partial.V_in1, p_in1=partial.p_in1, T_in1=partial.T_in1,
                               c_0=partial.c_0, T_in2=T_in2, p_in2=p_in2, c_1=c_1)


def charge_stage3(virtual: VirtualChargeStates, state: CavernState, mdot_in: float, dt: float,
                  params: CavernParams) -> CavernState:
    """Compress the mixture adiabatically back into the cavern volume"""
    if not virtual.mixed:
        raise CavernDomainError("charge_stage3 needs the mixed state from charge_stage2")
    k, R, V_s = params.k, params.R, params.V_s
    m_next = state.m_s + mdot_in * dt
    p_next = m_next ** k * R ** k * virtual.c_1 ** (k - 1) / V_s ** k
    T_next = (virtual.c_1 * p_next) ** ((k - 1) / k)
    return _next_state(state, dt, m_next, p_next, T_next)


def charge_step_exact(state: CavernState, mdot_in: float, dt: float, params: CavernParams) -> CavernState:
    """Adiabatic charging step composed from the three virtual stages"""
    _check_step(mdot_in, dt)
    if mdot_in == 0:
        return _next_state(state, dt, state.m_s, state.p_s, state.T_s)
    partial = charge_stage1(state, mdot_in, dt, params)
    virtual = charge_stage2(partial, state, mdot_in, dt, params)
    return charge_stage3(virtual, state, mdot_in, dt, params)


def _charged_temperature(m: float, T: float, m_in: float, k: float, a_3: float) -> float:
    x = m_in / m
    return (1 + x) ** (k - 2) * (T + a_3 * m ** (k - 2) * m_in)


def charge_closed_form(state: CavernState, mdot_in: float, dt: float, params: CavernParams,
                       constants: Optional[ModelConstants] = None) -> CavernState:
    """
    Adiabatic charging step in closed form.

    p' = (1+x)**(k-1) * (p_s + a_2*m_s**(k-1)*m_in)
    T' = (1+x)**(k-2) * (T_s + a_3*m_s**(k-2)*m_in),  x = m_in/m_s
    """
    _check_step(mdot_in, dt)
    constants = constants or model_constants(params)
    k, m_s = params.k, state.m_s
    m_in = mdot_in * dt
    if m_in >= m_s:
        raise CavernDomainError(
            f"injected mass {m_in:.6g} kg is not smaller than the cavern mass {m_s:.6g} kg")
    x = m_in / m_s
    p_next = (1 + x) ** (k - 1) * (state.p_s + constants.a_2 * m_s ** (k - 1) * m_in)
    T_next = _charged_temperature(m_s, state.T_s, m_in, k, constants.a_3)
    return _next_state(state, dt, m_s + m_in, p_next, T_next)


# =============================================================================
# Exact discharging, idle and wall heat exchange
# =============================================================================

def discharge_step_exact(state: CavernState, mdot_out: float, dt: float, params: CavernParams) -> CavernState:
    """Adiabatic discharge: p and T follow the invariant down with the mass"""
    _check_step(mdot_out, dt)
    x = _outflow_ratio(state, mdot_out, dt)
    k = params.k
    return _next_state(state, dt,
                       state.m_s - mdot_out * dt,
                       (1 - x) ** k * state.p_s,
                       (1 - x) ** (k - 1) * state.T_s)


def relax_temperature(state: CavernState, dt: float, params: CavernParams) -> CavernState:
    """
    Exponential wall heat exchange over dt at constant mass.

    The time stamp is left unchanged; callers that model a time step
    advance it themselves (see idle_step_exact).
    """
    _check_step(0.0, dt)
    decay = math.exp(-params.relaxation_rate(state.m_s) * dt)
    T_next = state.T_s * decay + params.T_RW * (1 - decay)
    p_next = state.p_s * decay + state.m_s * params.R * params.T_RW / params.V_s * (1 - decay)
    return CavernState(t=state.t, m_s=state.m_s, p_s=p_next, T_s=T_next)


def idle_step_exact(state: CavernState, dt: float, params: CavernParams) -> CavernState:
    relaxed = relax_temperature(state, dt, params)
    return _next_state(state, dt, relaxed.m_s, relaxed.p_s, relaxed.T_s)


# =============================================================================
# Bi-linear models
# =============================================================================

def _charge_adiabatic_terms(state: CavernState, m_in: float, params: CavernParams,
                            constants: ModelConstants) -> Tuple[float, float]:
    k, m, m_av0 = params.k, state.m_s, params.m_av0
    x = m_in / m
    T_ad = state.T_s * (1 + (k - 2) * x) + constants.a_3 * x * _linearised_power(m, m_av0, k - 1)
    p_ad = state.p_s * (1 + (k - 1) * x) + constants.a_2 * x * _linearised_power(m, m_av0, k)
    return p_ad, T_ad


def _discharge_adiabatic_terms(state: CavernState, m_out: float, params: CavernParams) -> Tuple[float, float]:
    k = params.k
    x = m_out / state.m_s
    return state.p_s * (1 - k * x), state.T_s * (1 - (k - 1) * x)


def charge_step_bilinear_adiabatic(state: CavernState, mdot_in: float, dt: float, params: CavernParams,
                                   constants: Optional[ModelConstants] = None) -> CavernState:
    """First-order charging step without wall heat transfer"""
    _check_step(mdot_in, dt)
    constants = constants or model_constants(params)
    m_in = mdot_in * dt
    p_next, T_next = _charge_adiabatic_terms(state, m_in, params, constants)
    return _next_state(state, dt, state.m_s + m_in, p_next, T_next)


def discharge_step_bilinear_adiabatic(state: CavernState, mdot_out: float, dt: float,
                                      params: CavernParams) -> CavernState:
    """First-order discharging step without wall heat transfer"""
    _check_step(mdot_out, dt)
    _outflow_ratio(state, mdot_out, dt)
    m_out = mdot_out * dt
    p_next, T_next = _discharge_adiabatic_terms(state, m_out, params)
    return _next_state(state, dt, state.m_s - m_out, p_next, T_next)


def charge_step_bilinear(state: CavernState, mdot_in: float, dt: float, params: CavernParams,
                         constants: Optional[ModelConstants] = None) -> CavernState:
    """
    Bi-linear charging step with wall heat transfer.

    Both equations give m_s * X'; X' is read by dividing by the pre-step
    mass. Mass powers are linearised around m_av0.
    """
    _check_step(mdot_in, dt)
    constants = constants or model_constants(params)
    k, R, V_s, T_RW, m_av0 = params.k, params.R, params.V_s, params.T_RW, params.m_av0
    m, p, T = state.m_s, state.p_s, state.T_s
    H = params.wall_conductance
    m_in = mdot_in * dt

    p_ad, T_ad = _charge_adiabatic_terms(state, m_in, params, constants)
    dT = H * (T_RW * dt
              - T * (dt + 0.5 * (k - 2) * m_in * dt / m_av0)
              - 0.5 * constants.a_3 * m_in * dt * _linearised_power(m, m_av0, k - 2)) / m
    dp = H * ((m + 0.5 * m_in) * T_RW * dt * R / V_s
              - p * dt
              - 0.5 * (k - 1) * m_in * T * dt * R / V_s) / m
    return _next_state(state, dt, m + m_in, p_ad + dp, T_ad + dT)


def discharge_step_bilinear(state: CavernState, mdot_out: float, dt: float, params: CavernParams) -> CavernState:
    """Bi-linear discharging step with wall heat transfer"""
    _check_step(mdot_out, dt)
    _outflow_ratio(state, mdot_out, dt)
    k, T_RW, m_av0 = params.k, params.T_RW, params.m_av0
    m, T = state.m_s, state.T_s
    H = params.wall_conductance
    m_out = mdot_out * dt

    p_ad, T_ad = _discharge_adiabatic_terms(state, m_out, params)
    dT = (H * (T_RW - T) * dt + H / (2 * m_av0) * (k - 1) * T * m_out * dt) / m
    dp = (H * params.R / params.V_s) * ((m - 0.5 * m_out) * (T_RW - T) * dt
                                       + 0.5 * (k - 1) * T * m_out * dt) / m
    return _next_state(state, dt, m - m_out, p_ad + dp, T_ad + dT)


def _idle_factors(state: CavernState, dt: float, params: CavernParams) -> Tuple[float, float]:
    """(e^-a_4, a_4*e^-a_4/m_av0): the exponential and its Taylor slope in m_s"""
    a_4 = params.wall_conductance * dt / params.m_av0
    decay = math.exp(-a_4)
    return decay, a_4 * decay / params.m_av0


def idle_step_bilinear(state: CavernState, dt: float, params: CavernParams) -> CavernState:
    """Idle step with the relaxation exponent linearised around m_av0"""
    _check_step(0.0, dt)
    decay, slope = _idle_factors(state, dt, params)
    f = decay + slope * (state.m_s - params.m_av0)
    T_next = state.T_s * f + params.T_RW * (1 - f)
    p_next = state.p_s * f + state.m_s * params.R * params.T_RW / params.V_s * (1 - f)
    return _next_state(state, dt, state.m_s, p_next, T_next)


# =============================================================================
# Constant-temperature baseline and reference oracle
# =============================================================================

def constant_temperature_step(state: CavernState, mode: FlowMode, mdot: float, dt: float,
                              params: CavernParams) -> CavernState:
    """Isothermal step: mass balance only, pressure from the ideal gas law"""
    _check_step(mdot, dt)
    mode = FlowMode(mode)
    if mode is FlowMode.CHARGE:
        m_next = state.m_s + mdot * dt
    elif mode is FlowMode.DISCHARGE:
        _outflow_ratio(state, mdot, dt)
        m_next = state.m_s - mdot * dt
    else:
        return _next_state(state, dt, state.m_s, state.p_s, state.T_s)
    return _next_state(state, dt, m_next, m_next * params.R * state.T_s / params.V_s, state.T_s)


def default_substeps(dt: float, max_substep: float = ORACLE_MAX_SUBSTEP) -> int:
    """Fewest sub-intervals that keep each one at or below max_substep"""
    if not dt > 0 or not max_substep > 0:
        raise CavernDomainError(f"dt and max_substep must be positive, got {dt} and {max_substep}")
    return max(1, math.ceil(dt / max_substep - 1e-9))


def oracle_step(state: CavernState, mode: FlowMode, mdot: float, dt: float, params: CavernParams,
                substeps: Optional[int] = None) -> CavernState:
    """
    Fine-step reference: exact adiabatic update and exact wall relaxation.

    dt is split into `substeps` equal sub-intervals (default: each at most
    ORACLE_MAX_SUBSTEP). Each sub-interval is symmetric: relaxation toward
    T_RW over half of it, the exact adiabatic charge or discharge update,
    then relaxation over the other half. The splitting error is second
    order in the sub-interval, so doubling the default substeps moves the
    result by less than 1e-8 relative even for hour-long steps.
    """
    _check_step(mdot, dt)
    mode = FlowMode(mode)
    n = default_substeps(dt) if substeps is None else int(substeps)
    if n < 1:
        raise CavernDomainError(f"substeps must be at least 1, got {substeps}")

    k, T_RW = params.k, params.T_RW
    h = dt / n
    m_sub = mdot * h
    anchored = params.heat_capacity_basis == 'anchor'
    conductance = params.wall_conductance
    a_3 = model_constants(params).a_3 if mode is FlowMode.CHARGE and mdot > 0 else 0.0

    m, T = state.m_s, state.T_s
    if mode is FlowMode.DISCHARGE:
        _outflow_ratio(state, mdot, dt)
    elif mode is FlowMode.CHARGE and mdot * dt >= m:
        raise CavernDomainError(
            f"injected mass {mdot * dt:.6g} kg is not smaller than the cavern mass {m:.6g} kg")

    half = h / 2

    def relax_half(m: float, T: float) -> float:
        if conductance <= 0:
            return T
        decay = math.exp(-conductance / (params.m_av0 if anchored else m) * half)
        return T * decay + T_RW * (1 - decay)

    for _ in range(n):
        T = relax_half(m, T)
        if mode is FlowMode.CHARGE and m_sub > 0:
            T = _charged_temperature(m, T, m_sub, k, a_3)
            m = m + m_sub
        elif mode is FlowMode.DISCHARGE and m_sub > 0:
            T = (1 - m_sub / m) ** (k - 1) * T
            m = m - m_sub
        T = relax_half(m, T)

    # Mass is re-evaluated in one expression so it matches the other models
    if mode is FlowMode.CHARGE:
        m_next = state.m_s + mdot * dt
    elif mode is FlowMode.DISCHARGE:
        m_next = state.m_s - mdot * dt
    else:
        m_next = state.m_s
    # Ideal gas scaling of p_s; exactly p_s when nothing changed
    p_next = state.p_s * (m_next / state.m_s) * (T / state.T_s)
    return _next_state(state, dt, m_next, p_next, T)


# =============================================================================
# Coefficient export
# =============================================================================

def _charge_terms(state: CavernState, dt: float, params: CavernParams,
                  constants: ModelConstants) -> List[BilinearTerm]:
    k, R, V_s, T_RW, m_av0 = params.k, params.R, params.V_s, params.T_RW, params.m_av0
    H, a_2, a_3, t = params.wall_conductance, constants.a_2, constants.a_3, dt
    return [
        BilinearTerm('T', 'm_s*T_s', 1.0),
        BilinearTerm('T', 'T_s*mdot', (k - 2) * t - 0.5 * H * (k - 2) * t * t / m_av0),
        BilinearTerm('T', 'mdot', a_3 * t * m_av0 ** (k - 1) * (2 - k)
                     - 0.5 * H * a_3 * t * t * m_av0 ** (k - 2) * (3 - k)),
        BilinearTerm('T', 'm_s*mdot', a_3 * t * (k - 1) * m_av0 ** (k - 2)
                     - 0.5 * H * a_3 * t * t * (k - 2) * m_av0 ** (k - 3)),
        BilinearTerm('T', 'T_s', -H * t),
        BilinearTerm('T', 'const', H * T_RW * t),
        BilinearTerm('p', 'm_s*p_s', 1.0),
        BilinearTerm('p', 'p_s*mdot', (k - 1) * t),
        BilinearTerm('p', 'mdot', a_2 * t * m_av0 ** k * (1 - k) + 0.5 * H * T_RW * R * t * t / V_s),
        BilinearTerm('p', 'm_s*mdot', a_2 * t * k * m_av0 ** (k - 1)),
        BilinearTerm('p', 'm_s', H * T_RW * R * t / V_s),
        BilinearTerm('p', 'p_s', -H * t),
        BilinearTerm('p', 'T_s*mdot', -0.5 * H * (k - 1) * R * t * t / V_s),
    ]


def _discharge_terms(state: CavernState, dt: float, params: CavernParams) -> List[BilinearTerm]:
    k, T_RW, m_av0, t = params.k, params.T_RW, params.m_av0, dt
    H = params.wall_conductance
    G = H * params.R / params.V_s
    return [
        BilinearTerm('T', 'm_s*T_s', 1.0),
        BilinearTerm('T', 'T_s*mdot', -(k - 1) * t + H * (k - 1) * t * t / (2 * m_av0)),
        BilinearTerm('T', 'T_s', -H * t),
        BilinearTerm('T', 'const', H * T_RW * t),
        BilinearTerm('p', 'm_s*p_s', 1.0),
        BilinearTerm('p', 'p_s*mdot', -k * t),
        BilinearTerm('p', 'm_s', G * T_RW * t),
        BilinearTerm('p', 'm_s*T_s', -G * t),
        BilinearTerm('p', 'mdot', -0.5 * G * T_RW * t * t),
        BilinearTerm('p', 'T_s*mdot', 0.5 * k * G * t * t),
    ]


def _idle_terms(state: CavernState, dt: float, params: CavernParams) -> List[BilinearTerm]:
    decay, slope = _idle_factors(state, dt, params)
    T_RW, m_av0 = params.T_RW, params.m_av0
    offset = decay - slope * m_av0
    gas = params.R * T_RW / params.V_s
    return [
        BilinearTerm('T', 'T_s', offset),
        BilinearTerm('T', 'm_s*T_s', slope),
        BilinearTerm('T', 'm_s', -T_RW * slope),
        BilinearTerm('T', 'const', T_RW * (1 - offset)),
        BilinearTerm('p', 'p_s', offset),
        BilinearTerm('p', 'm_s*p_s', slope),
        BilinearTerm('p', 'm_s', gas * (1 - offset)),
        BilinearTerm('p', 'm_s*m_s', -gas * slope),
    ]


def export_step_coefficients(state: CavernState, mode: FlowMode, dt: float, params: CavernParams) -> StepCoefficients:
    """
    Export one bi-linear step as coefficients for an optimization model.

    Returns the affine form in mdot at this state plus the full list of
    product terms of the underlying equations.
    """
    _check_step(0.0, dt)
    mode = FlowMode(mode)
    if mode is FlowMode.CHARGE:
        terms = _charge_terms(state, dt, params, model_constants(params))
    elif mode is FlowMode.DISCHARGE:
        terms = _discharge_terms(state, dt, params)
    else:
        terms = _idle_terms(state, dt, params)
    mass_scaled = mode is not FlowMode.IDLE
    scale = state.m_s if mass_scaled else 1.0
    m, p, T = state.m_s, state.p_s, state.T_s

    def split(quantity: str) -> Tuple[float, float]:
        alpha = math.fsum(term.value(m, p, T, 0.0) for term in terms
                          if term.quantity == quantity and 'mdot' not in term.term)
        beta = math.fsum(term.value(m, p, T, 1.0) for term in terms
                         if term.quantity == quantity and 'mdot' in term.term)
        return alpha / scale, beta / scale

    alpha_p, beta_p = split('p')
    alpha_T, beta_T = split('T')
    return StepCoefficients(mode=mode, alpha_p=alpha_p, beta_p=beta_p, alpha_T=alpha_T, beta_T=beta_T,
                            bilinear_terms=tuple(terms), mass_scaled=mass_scaled)


# =============================================================================
# Dispatcher
# =============================================================================

_BILINEAR_KINDS = (ModelKind.BI_LINEAR, ModelKind.BI_LINEAR_ADIABATIC)
_EXACT_KINDS = (ModelKind.EXACT_ADIABATIC, ModelKind.EXACT_WITH_HEAT_TRANSFER)


def envelope_warnings(state: CavernState, mode: FlowMode, mdot: float, dt: float, params: CavernParams,
                      model: ModelKind = ModelKind.BI_LINEAR) -> List[str]:
    """Validity-envelope breaches of one step; empty when the step is inside it"""
    mode, model = FlowMode(mode), ModelKind(model)
    messages = []
    ratio = mdot * dt / state.m_s

    if model in _BILINEAR_KINDS:
        if mode is not FlowMode.IDLE and ratio > BILINEAR_FLOW_RATIO_LIMIT:
            messages.append(f"mdot*dt/m_s = {ratio:.4f} exceeds {BILINEAR_FLOW_RATIO_LIMIT} "
                            f"(first-order truncation)")
        deviation = abs(state.m_s - params.m_av0) / params.m_av0
        if model is ModelKind.BI_LINEAR and mode is FlowMode.IDLE and deviation > IDLE_MASS_DEVIATION_LIMIT:
            messages.append(f"|m_s - m_av0|/m_av0 = {deviation:.4f} exceeds {IDLE_MASS_DEVIATION_LIMIT} "
                            f"(idle linearisation)")
    elif model in _EXACT_KINDS and mode is FlowMode.CHARGE and ratio > EXACT_CHARGE_RATIO_WARN:
        messages.append(f"injected mass ratio {ratio:.4f} exceeds {EXACT_CHARGE_RATIO_WARN} "
                        f"(virtual container)")
    return messages


def _idle_identity(state: CavernState, dt: float) -> CavernState:
    return _next_state(state, dt, state.m_s, state.p_s, state.T_s)


Stepper = Callable[[CavernState, FlowMode, float, float, CavernParams, Optional[int]], CavernState]


def _exact_adiabatic(state, mode, mdot, dt, params, substeps):
    if mode is FlowMode.CHARGE:
        return charge_step_exact(state, mdot, dt, params)
    if mode is FlowMode.DISCHARGE:
        return discharge_step_exact(state, mdot, dt, params)
    return _idle_identity(state, dt)


def _exact_with_heat(state, mode, mdot, dt, params, substeps):
    """Exact staged step over dt, then exact relaxation over the same dt"""
    return relax_temperature(_exact_adiabatic(state, mode, mdot, dt, params, substeps), dt, params)


def _bilinear(state, mode, mdot, dt, params, substeps):
    if mode is FlowMode.CHARGE:
        return charge_step_bilinear(state, mdot, dt, params)
    if mode is FlowMode.DISCHARGE:
        return discharge_step_bilinear(state, mdot, dt, params)
    return idle_step_bilinear(state, dt, params)


def _bilinear_adiabatic(state, mode, mdot, dt, params, substeps):
    if mode is FlowMode.CHARGE:
        return charge_step_bilinear_adiabatic(state, mdot, dt, params)
    if mode is FlowMode.DISCHARGE:
        return discharge_step_bilinear_adiabatic(state, mdot, dt, params)
    return _idle_identity(state, dt)


_STEPPERS: Dict[ModelKind, Stepper] = {
    ModelKind.EXACT_ADIABATIC: _exact_adiabatic,
    ModelKind.EXACT_WITH_HEAT_TRANSFER: _exact_with_heat,
    ModelKind.BI_LINEAR: _bilinear,
    ModelKind.BI_LINEAR_ADIABATIC: _bilinear_adiabatic,
    ModelKind.CONSTANT_TEMPERATURE: lambda s, mode, mdot, dt, p, n: constant_temperature_step(s, mode, mdot, dt, p),
    ModelKind.REFERENCE_ORACLE: lambda s, mode, mdot, dt, p, n: oracle_step(s, mode, mdot, dt, p, n),
}


def step(model: ModelKind, state: CavernState, mode: FlowMode, mdot: float, dt: float,
         params: CavernParams, substeps: Optional[int] = None) -> StepOutcome:
    """Advance state by one step of the selected model, collecting envelope warnings"""
    model, mode = ModelKind(model), FlowMode(mode)
    if mode is FlowMode.IDLE and mdot != 0:
        raise CavernDomainError(f"idle step with non-zero mass flow rate {mdot}")
    _check_step(mdot, dt)
    warnings = envelope_warnings(state, mode, mdot, dt, params, model)
    return StepOutcome(state=_STEPPERS[model](state, mode, mdot, dt, params, substeps),
                       warnings=tuple(warnings))
