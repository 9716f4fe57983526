# =============================================================================
# cavern_thermo.py - Cavern parameters, state types and ideal-gas primitives
# =============================================================================
# SI units everywhere inside (Pa, K, kg, s, m^3). File-facing units (bar, C)
# only appear in the conversion helpers below and in the config layer.
# =============================================================================

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

PA_PER_BAR = 1e5
KELVIN_OFFSET = 273.15

# Midpoint of the 46-66 bar operating band, used for the default rho_av
DEFAULT_P_MID = 56e5

HEAT_CAPACITY_BASES = ('cavern', 'anchor')


class CavernDomainError(ValueError):
    """Raised when a physical input lies outside the domain of a cavern model"""


def bar_to_pa(p_bar: float) -> float:
    return p_bar * PA_PER_BAR


def pa_to_bar(p_pa: float) -> float:
    return p_pa / PA_PER_BAR


def celsius_to_kelvin(t_c: float) -> float:
    return t_c + KELVIN_OFFSET


def kelvin_to_celsius(t_k: float) -> float:
    return t_k - KELVIN_OFFSET


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0 or math.isinf(value):
            raise CavernDomainError(f"{name} must be a positive finite number, got {value}")


class FlowMode(str, Enum):
    """Operating mode of one schedule segment"""
    CHARGE = 'charge'
    DISCHARGE = 'discharge'
    IDLE = 'idle'


@dataclass(frozen=True)
class CavernParams:
    """
    Physical and geometric constants of one constant-volume cavern.

    m_av0 is derived (rho_av * V_s) and cannot be passed in; use
    with_overrides() to change any field and get m_av0 re-derived.

    heat_capacity_basis selects whose heat capacity the wall exchanges with
    in the exact relaxation: 'cavern' uses the current air mass, 'anchor'
    uses the constant rho_av * V_s.
    """
    V_s: float
    A_c: float
    h_c: float
    c_v: float
    R: float
    k: float
    T_RW: float
    p_in: float
    T_in: float
    rho_av: float
    heat_capacity_basis: str = 'cavern'
    m_av0: float = field(init=False)

    def __post_init__(self):
        _require_positive(V_s=self.V_s, A_c=self.A_c, c_v=self.c_v, R=self.R, k=self.k,
                          T_RW=self.T_RW, p_in=self.p_in, T_in=self.T_in, rho_av=self.rho_av)
        # h_c = 0 is allowed: it switches wall heat transfer off
        if not self.h_c >= 0 or math.isinf(self.h_c):
            raise CavernDomainError(f"h_c must be a non-negative finite number, got {self.h_c}")
        if not self.k > 1:
            raise CavernDomainError(f"adiabatic index k must exceed 1, got {self.k}")
        if self.heat_capacity_basis not in HEAT_CAPACITY_BASES:
            raise CavernDomainError(
                f"heat_capacity_basis must be one of {HEAT_CAPACITY_BASES}, got {self.heat_capacity_basis!r}")
        object.__setattr__(self, 'm_av0', self.rho_av * self.V_s)

    @property
    def adiabatic_exponent(self) -> float:
        """k/(k-1), the temperature exponent of the adiabatic invariant"""
        return self.k / (self.k - 1)

    @property
    def wall_conductance(self) -> float:
        """h_c * A_c / c_v in kg/s: heat-transfer conductance over specific heat"""
        return self.h_c * self.A_c / self.c_v

    def heat_capacity_mass(self, m_s: float) -> float:
        """Air mass whose heat capacity exchanges heat with the wall"""
        return m_s if self.heat_capacity_basis == 'cavern' else self.m_av0

    def relaxation_rate(self, m_s: float) -> float:
        """Inverse time constant h_c*A_c/(m*c_v) of the wall heat exchange, 1/s"""
        return self.wall_conductance / self.heat_capacity_mass(m_s)

    def with_overrides(self, **overrides) -> 'CavernParams':
        return replace(self, **overrides)


@dataclass(frozen=True)
class CavernState:
    """Air in the cavern at elapsed time t: mass, pressure, temperature"""
    t: float
    m_s: float
    p_s: float
    T_s: float

    def __post_init__(self):
        _require_positive(m_s=self.m_s, p_s=self.p_s, T_s=self.T_s)
        if not self.t >= 0:
            raise CavernDomainError(f"t must be non-negative, got {self.t}")

    def ideal_gas_residual(self, params: CavernParams) -> float:
        """|p*V - m*R*T| / (p*V), zero for a thermodynamically consistent state"""
        pv = self.p_s * params.V_s
        return abs(pv - self.m_s * params.R * self.T_s) / pv


def _divides(dt: float, duration: float) -> bool:
    n = round(duration / dt)
    return n >= 1 and abs(n * dt - duration) <= 1e-9 * duration


@dataclass(frozen=True)
class FlowSegment:
    """One piece of an operating schedule with a constant mass flow rate"""
    mode: FlowMode
    mdot: float
    duration: float
    dt: float

    def __post_init__(self):
        object.__setattr__(self, 'mode', FlowMode(self.mode))
        if not self.mdot >= 0:
            raise CavernDomainError(f"mass flow rate must be non-negative, got {self.mdot}")
        if (self.mdot == 0) != (self.mode is FlowMode.IDLE):
            raise CavernDomainError(
                f"{self.mode.value} segment with mdot={self.mdot}: mdot must be 0 exactly when idle")
        _require_positive(dt=self.dt, duration=self.duration)
        if not _divides(self.dt, self.duration):
            raise CavernDomainError(f"duration {self.duration} s is not a multiple of dt {self.dt} s")

    @property
    def step_mass(self) -> float:
        """Mass moved per step (m_in for charging, m_o for discharging), kg"""
        return self.mdot * self.dt

    def steps(self, dt: Optional[float] = None) -> int:
        """Number of steps of size dt (default: the segment's own dt)"""
        dt = self.dt if dt is None else dt
        if not dt > 0 or not _divides(dt, self.duration):
            raise CavernDomainError(f"duration {self.duration} s is not a multiple of dt {dt} s")
        return round(self.duration / dt)


@dataclass(frozen=True)
class VirtualChargeStates:
    """
    Fictitious intermediate states of one charging step.

    Stage 1 fills V_in1, p_in1, T_in1 and c_0 (injected air brought
    adiabatically to the cavern density); stage 2 adds the mixed state
    T_in2, p_in2 and its invariant c_1.
    """
    m_in: float
    V_in1: float
    p_in1: float
    T_in1: float
    c_0: float
    T_in2: Optional[float] = None
    p_in2: Optional[float] = None
    c_1: Optional[float] = None

    @property
    def mixed(self) -> bool:
        return self.c_1 is not None


@dataclass(frozen=True)
class ModelConstants:
    """
    Coefficients of the bi-linear charging equations.

    a_2 * m_s**(k-1) * mdot*dt is the pressure (Pa) the injected air adds,
    a_3 * m_s**(k-2) * mdot*dt the temperature (K); equivalently
    p_in1 = a_2 * m_s**k and T_in1 = a_3 * m_s**(k-1).
    a_4 = h_c*A_c*t/(m_av0*c_v) is only set when a step length t is given.
    """
    a_2: float
    a_3: float
    a_4: Optional[float] = None


def ideal_gas_pressure(m: float, T: float, params: CavernParams) -> float:
    """Pressure of mass m at temperature T filling the cavern, Pa"""
    _require_positive(m=m, T=T)
    return m * params.R * T / params.V_s


def mass_from_state(p: float, T: float, params: CavernParams) -> float:
    """Air mass in the cavern at pressure p and temperature T, kg"""
    _require_positive(p=p, T=T)
    return p * params.V_s / (params.R * T)


def adiabatic_invariant(T: float, p: float, k: float) -> float:
    """T**(k/(k-1)) / p, constant along a reversible adiabatic path of an ideal gas"""
    _require_positive(T=T, p=p)
    if not k > 1:
        raise CavernDomainError(f"adiabatic index k must exceed 1, got {k}")
    return T ** (k / (k - 1)) / p


def first_order_binomial(x: float, r: float) -> float:
    """
    First-order truncation 1 + r*x of (1 + x)**r.

    The dropped remainder is bounded by binomial_truncation_bound(x, r)
    for -1 <= r <= 5, which covers every exponent the cavern models use.
    """
    if not abs(x) < 1:
        raise CavernDomainError(f"binomial expansion needs |x| < 1, got {x}")
    return 1.0 + r * x


def binomial_truncation_bound(x: float, r: float) -> float:
    """|r(r-1)/2| * x**2 / (1 - |x|), the bound on |(1+x)**r - (1 + r*x)|"""
    if not abs(x) < 1:
        raise CavernDomainError(f"binomial expansion needs |x| < 1, got {x}")
    return abs(r * (r - 1) / 2) * x * x / (1 - abs(x))


def model_constants(params: CavernParams, t: Optional[float] = None) -> ModelConstants:
    """Build a_2, a_3 (and a_4 for step length t) from the cavern parameters"""
    k, R, V_s = params.k, params.R, params.V_s
    c_0 = adiabatic_invariant(params.T_in, params.p_in, k)
    a_2 = c_0 ** (k - 1) * R ** k / V_s ** k
    a_3 = (c_0 * R / V_s) ** (k - 1)
    a_4 = None
    if t is not None:
        _require_positive(t=t)
        a_4 = params.wall_conductance * t / params.m_av0
    return ModelConstants(a_2=a_2, a_3=a_3, a_4=a_4)


def default_rho_av(R: float, T_RW: float, p_mid: float = DEFAULT_P_MID) -> float:
    """Constant average air density: ideal gas at p_mid and wall temperature"""
    _require_positive(R=R, T_RW=T_RW, p_mid=p_mid)
    return p_mid / (R * T_RW)


def cavern_flow_share(plant_rate: float, volume: float, plant_volumes: Sequence[float]) -> float:
    """Share of a plant-wide mass flow rate taken by one cavern, split by volume"""
    total = sum(plant_volumes)
    _require_positive(plant_rate=plant_rate, volume=volume, total_volume=total)
    return plant_rate * volume / total


# Huntorf plant, first cavern
HUNTORF = {
    'V_s': 141000.0,
    'A_c': 25000.0,
    'h_c': 30.0,
    'c_v': 718.3,
    'R': 286.7,
    'k': 1.4,
    'T_RW': celsius_to_kelvin(40.0),
    'p_in': bar_to_pa(66.0),
    'T_in': celsius_to_kelvin(50.0),
}
HUNTORF_CAVERN_VOLUMES = (141000.0, 169000.0)
HUNTORF_PLANT_CHARGE_RATE = 108.0
HUNTORF_PLANT_DISCHARGE_RATE = 417.0


def huntorf_params(rho_av: Optional[float] = None,
                   heat_capacity_basis: str = 'cavern',
                   p_mid: float = DEFAULT_P_MID) -> CavernParams:
    """Parameters of the first Huntorf cavern; rho_av defaults to the operating midpoint"""
    if rho_av is None:
        rho_av = default_rho_av(HUNTORF['R'], HUNTORF['T_RW'], p_mid)
    return CavernParams(rho_av=rho_av, heat_capacity_basis=heat_capacity_basis, **HUNTORF)
