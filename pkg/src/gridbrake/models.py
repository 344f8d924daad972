"""State-space component models coupled through the phasor network.

Three dynamic devices are modelled in the electromechanical (RMS) band:

* synchronous generator: swing dynamics behind armature impedance with a
  continuously-acting excitation loop and a droop governor,
* grid-forming inverter: droop-controlled voltage source behind its filter
  impedance with an output-current magnitude limit,
* aggregate induction motor: single rotor-flux state plus slip, driving a
  speed-dependent load torque.

All phasors live in the synchronously rotating network frame, all powers
and impedances are per unit on the device's own MVA base (taken equal to
its MW rating), and every ``*_derivatives`` function is a pure function of
its inputs.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

from .errors import ConfigurationError, NumericError

_TWO_PI = 2.0 * math.pi


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise NumericError(f"non-finite input in {name}: {v!r}")


# ---------------------------------------------------------------------------
# Synchronous generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExciterParams:
    """Continuously-acting voltage regulator with rate-feedback stabilizer."""

    k_a: float = 50.0        # regulator gain
    t_a_s: float = 0.05      # regulator time constant
    k_e: float = 1.0         # field self-excitation constant
    t_e_s: float = 0.5       # field circuit time constant
    t_r_s: float = 0.02      # terminal voltage transducer lag
    k_f: float = 0.03        # rate-feedback gain
    t_f_s: float = 1.0       # rate-feedback washout time constant
    v_r_max: float = 5.0
    v_r_min: float = -5.0


@dataclass(frozen=True)
class GovernorParams:
    """Droop governor: servo lag into a slow steam/reheat-equivalent lag."""

    droop: float = 0.05      # pu speed per pu power
    t_servo_s: float = 0.2
    t_reheat_s: float = 7.0
    p_max_pu: float = 1.1
    p_min_pu: float = 0.0

    def __post_init__(self) -> None:
        if self.droop <= 0:
            raise ConfigurationError(f"governor droop must be positive, got {self.droop}")


@dataclass(frozen=True)
class SyncGenParams:
    """Synchronous machine constants on its own MVA base (= rated_mw).

    One-axis model: ``x_a_pu`` is the transient-timescale driving reactance
    behind which the EMF lives; ``x_d_pu`` is the synchronous d-axis
    reactance whose armature-reaction term gives the field winding its
    natural damping.
    """

    rated_mw: float = 500.0
    r_a_pu: float = 0.003
    x_a_pu: float = 0.102
    x_d_pu: float = 1.8
    h_s: float = 11.0
    d_pu: float = 0.0
    t_emf_s: float = 5.0     # open-circuit field time constant
    exciter: ExciterParams = ExciterParams()
    governor: GovernorParams = GovernorParams()

    def __post_init__(self) -> None:
        if self.rated_mw <= 0:
            raise ConfigurationError(f"rated_mw must be positive, got {self.rated_mw}")
        if self.h_s <= 0:
            raise ConfigurationError(f"inertia h_s must be positive, got {self.h_s}")
        if self.r_a_pu < 0:
            raise ConfigurationError(f"r_a_pu must be >= 0, got {self.r_a_pu}")
        if self.x_a_pu <= 0:
            raise ConfigurationError(f"x_a_pu must be positive, got {self.x_a_pu}")
        if self.x_d_pu < self.x_a_pu:
            raise ConfigurationError("x_d_pu must be >= x_a_pu")

    @property
    def z_pu(self) -> complex:
        return complex(self.r_a_pu, self.x_a_pu)

    def scaled(self, rated_mw: float) -> "SyncGenParams":
        """Same per-unit machine on a different MW rating."""
        return replace(self, rated_mw=rated_mw)


@dataclass(frozen=True)
class SyncGenState:
    """Integrated states of the machine, exciter and governor."""

    delta_rad: float = 0.0     # EMF phase in the network frame
    omega_pu: float = 0.0      # speed deviation from nominal
    emf_pu: float = 1.0        # internal EMF magnitude
    v_meas_pu: float = 1.0     # transducer output
    v_reg_pu: float = 1.0      # regulator output
    efd_pu: float = 1.0        # field voltage
    v_fb_pu: float = 0.0       # rate-feedback stabilizer output
    valve_pu: float = 1.0      # governor servo output
    p_mech_pu: float = 1.0     # mechanical power after the reheat lag

    FIELDS = ("delta_rad", "omega_pu", "emf_pu", "v_meas_pu",
              "v_reg_pu", "efd_pu", "v_fb_pu", "valve_pu", "p_mech_pu")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in self.FIELDS)

    @classmethod
    def from_tuple(cls, values) -> "SyncGenState":
        return cls(**dict(zip(cls.FIELDS, values)))


def sg_emf(state: SyncGenState) -> complex:
    return cmath.rect(state.emf_pu, state.delta_rad)


def sg_current(params: SyncGenParams, state: SyncGenState, v_terminal: complex) -> complex:
    """Stator current out of the machine, machine base."""
    return (sg_emf(state) - v_terminal) / params.z_pu


def sg_electrical_power(params: SyncGenParams, state: SyncGenState, v_terminal: complex) -> float:
    """Air-gap electrical power (crosses the internal EMF), machine base."""
    i = sg_current(params, state, v_terminal)
    return (sg_emf(state) * i.conjugate()).real


def sg_d_axis_current(state: SyncGenState, i: complex) -> float:
    """Demagnetizing (d-axis) component of the stator current."""
    return -(i * cmath.exp(-1j * state.delta_rad)).imag


def sg_derivatives(
    params: SyncGenParams,
    state: SyncGenState,
    v_terminal: complex,
    v_ref_pu: float,
    p_ref_pu: float,
    omega_base_rad_s: float,
    p_electrical_pu: float | None = None,
) -> SyncGenState:
    """Time derivatives of every machine state.

    ``p_electrical_pu`` overrides the circuit-derived air-gap power for
    reduced single-swing studies where the electrical loading is imposed
    directly; otherwise it is computed from the EMF and terminal voltage.
    """
    _require_finite("sg_derivatives", state.omega_pu, state.emf_pu,
                    v_terminal.real, v_terminal.imag)
    ex = params.exciter
    gov = params.governor

    i = sg_current(params, state, v_terminal)
    p_e = ((sg_emf(state) * i.conjugate()).real
           if p_electrical_pu is None else p_electrical_pu)

    d_delta = omega_base_rad_s * state.omega_pu
    d_omega = (state.p_mech_pu - p_e - params.d_pu * state.omega_pu) / (2.0 * params.h_s)

    i_d = sg_d_axis_current(state, i)
    d_emf = (state.efd_pu - state.emf_pu
             - (params.x_d_pu - params.x_a_pu) * i_d) / params.t_emf_s

    vt = abs(v_terminal)
    d_v_meas = (vt - state.v_meas_pu) / ex.t_r_s
    err = v_ref_pu - state.v_meas_pu - state.v_fb_pu
    d_v_reg = (ex.k_a * err - state.v_reg_pu) / ex.t_a_s
    # anti-windup: hold the regulator at its ceiling/floor
    if state.v_reg_pu >= ex.v_r_max and d_v_reg > 0:
        d_v_reg = 0.0
    elif state.v_reg_pu <= ex.v_r_min and d_v_reg < 0:
        d_v_reg = 0.0
    d_efd = (state.v_reg_pu - ex.k_e * state.efd_pu) / ex.t_e_s
    d_v_fb = (ex.k_f * d_efd - state.v_fb_pu) / ex.t_f_s

    p_cmd = p_ref_pu - state.omega_pu / gov.droop
    d_valve = (p_cmd - state.valve_pu) / gov.t_servo_s
    if state.valve_pu >= gov.p_max_pu and d_valve > 0:
        d_valve = 0.0
    elif state.valve_pu <= gov.p_min_pu and d_valve < 0:
        d_valve = 0.0
    d_p_mech = (state.valve_pu - state.p_mech_pu) / gov.t_reheat_s

    return SyncGenState(d_delta, d_omega, d_emf, d_v_meas, d_v_reg, d_efd,
                        d_v_fb, d_valve, d_p_mech)


# ---------------------------------------------------------------------------
# Grid-forming inverter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GfmParams:
    """Droop-controlled grid-forming inverter behind its filter impedance.

    ``filter_mh``/``filter_uf`` record the hardware filter; the RMS model
    couples through the aggregate per-unit impedance ``r_f_pu + j x_f_pu``.
    """

    rated_mw: float = 500.0
    filter_mh: float = 3.0
    filter_uf: float = 30.0
    r_f_pu: float = 0.005
    x_f_pu: float = 0.15
    current_limit_pu: float = 1.3
    p_droop: float = 0.05    # pu frequency per pu power
    q_droop: float = 0.05    # pu voltage per pu reactive power
    t_freq_s: float = 0.8    # droop/measurement lag on the frequency channel
    t_volt_s: float = 0.02   # voltage-control time constant

    def __post_init__(self) -> None:
        if self.rated_mw <= 0:
            raise ConfigurationError(f"rated_mw must be positive, got {self.rated_mw}")
        if self.current_limit_pu < 1.0:
            raise ConfigurationError(
                f"current_limit_pu must be >= 1.0, got {self.current_limit_pu}")
        if self.p_droop <= 0 or self.q_droop <= 0:
            raise ConfigurationError("droop gains must be positive")
        if self.x_f_pu <= 0:
            raise ConfigurationError(f"x_f_pu must be positive, got {self.x_f_pu}")

    @property
    def z_pu(self) -> complex:
        return complex(self.r_f_pu, self.x_f_pu)

    @property
    def equivalent_inertia_s(self) -> float:
        """Swing-equivalent inertia of the lagged droop loop, used as the
        unit's weight in the reported system frequency:
        2H_eq = t_freq / p_droop."""
        return self.t_freq_s / (2.0 * self.p_droop)

    def scaled(self, rated_mw: float) -> "GfmParams":
        return replace(self, rated_mw=rated_mw)


@dataclass(frozen=True)
class GfmState:
    """Internal angle, frequency deviation and voltage magnitude."""

    theta_rad: float = 0.0
    freq_dev_pu: float = 0.0
    v_mag_pu: float = 1.0

    FIELDS = ("theta_rad", "freq_dev_pu", "v_mag_pu")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in self.FIELDS)

    @classmethod
    def from_tuple(cls, values) -> "GfmState":
        return cls(**dict(zip(cls.FIELDS, values)))


def gfm_emf(state: GfmState) -> complex:
    return cmath.rect(state.v_mag_pu, state.theta_rad)


def gfm_unlimited_current(params: GfmParams, state: GfmState, v_terminal: complex) -> complex:
    """Voltage-source output current before the magnitude limit, machine base."""
    return (gfm_emf(state) - v_terminal) / params.z_pu


def gfm_output_current(params: GfmParams, state: GfmState, v_terminal: complex) -> complex:
    """Output current with the magnitude clamp applied."""
    i = gfm_unlimited_current(params, state, v_terminal)
    mag = abs(i)
    if mag > params.current_limit_pu:
        i *= params.current_limit_pu / mag
    return i


def gfm_derivatives(
    params: GfmParams,
    state: GfmState,
    v_terminal: complex,
    i_out: complex,
    p_set_pu: float,
    q_set_pu: float,
    v_set_pu: float,
    omega_base_rad_s: float,
) -> GfmState:
    """Droop dynamics given the (possibly current-limited) output current.

    Output power passes through the measurement filter before the frequency
    droop; the commanded voltage tracks the reactive droop.  Frequency rises
    when measured power falls short of the setpoint.
    """
    _require_finite("gfm_derivatives", state.freq_dev_pu, state.v_mag_pu,
                    v_terminal.real, v_terminal.imag)
    s_out = v_terminal * i_out.conjugate()
    p = s_out.real
    q = s_out.imag
    d_theta = omega_base_rad_s * state.freq_dev_pu
    d_pmeas = (p - state.p_meas_pu) / params.t_meas_s
    d_freq = (params.p_droop * (p_set_pu - state.p_meas_pu)
              - state.freq_dev_pu) / params.t_droop_s
    v_cmd = v_set_pu + params.q_droop * (q_set_pu - q)
    d_vmag = (v_cmd - state.v_mag_pu) / params.t_volt_s
    return GfmState(d_theta, d_freq, d_vmag, d_pmeas)


# ---------------------------------------------------------------------------
# Aggregate induction motor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InductionMotorParams:
    """Single-cage machine with one rotor-flux state, motor convention.

    Defaults approximate a large HVAC/compressor aggregate: pull-out torque
    a bit above 2 pu, rated slip near 1.5 %, fan-law load torque.
    """

    rated_mw: float = 300.0
    r_s_pu: float = 0.01
    x_s_pu: float = 0.095
    x_m_pu: float = 3.2
    r_r_pu: float = 0.0134
    x_r_pu: float = 0.105
    h_s: float = 0.8
    torque_exponent: float = 2.0
    rated_slip: float = 0.015

    def __post_init__(self) -> None:
        if self.rated_mw <= 0:
            raise ConfigurationError(f"rated_mw must be positive, got {self.rated_mw}")
        if self.h_s <= 0:
            raise ConfigurationError(f"inertia h_s must be positive, got {self.h_s}")
        for name in ("x_s_pu", "x_m_pu", "x_r_pu"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("r_s_pu", "r_r_pu"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not 0 < self.rated_slip < 1:
            raise ConfigurationError(f"rated_slip must be in (0, 1), got {self.rated_slip}")

    @property
    def x_open_pu(self) -> float:
        """Stator-side reactance with the rotor open."""
        return self.x_s_pu + self.x_m_pu

    @property
    def x_transient_pu(self) -> float:
        """Stator-side reactance behind the rotor flux."""
        return self.x_s_pu + self.x_r_pu * self.x_m_pu / (self.x_r_pu + self.x_m_pu)

    @property
    def z_pu(self) -> complex:
        return complex(self.r_s_pu, self.x_transient_pu)

    def t_open_s(self, omega_base_rad_s: float) -> float:
        """Rotor open-circuit time constant, seconds."""
        return (self.x_r_pu + self.x_m_pu) / (omega_base_rad_s * self.r_r_pu)

    def steady_torque(self, slip: float, v_pu: float = 1.0) -> float:
        """Steady-state equivalent-circuit air-gap torque at a given slip."""
        if slip == 0.0:
            return 0.0
        zs = complex(self.r_s_pu, self.x_s_pu)
        zr = complex(self.r_r_pu / slip, self.x_r_pu)
        zm = complex(0.0, self.x_m_pu)
        z_total = zs + zm * zr / (zm + zr)
        i_s = v_pu / z_total
        # rotor branch current by divider
        i_r = i_s * zm / (zm + zr)
        return abs(i_r) ** 2 * self.r_r_pu / slip

    def load_torque_coeff(self, v_pu: float = 1.0) -> float:
        """Load-torque coefficient pinned so the machine runs at rated slip."""
        te = self.steady_torque(self.rated_slip, v_pu)
        return te / (1.0 - self.rated_slip) ** self.torque_exponent

    def scaled(self, rated_mw: float) -> "InductionMotorParams":
        return replace(self, rated_mw=rated_mw)


@dataclass(frozen=True)
class InductionMotorState:
    """Slip plus the complex rotor EMF behind the transient reactance."""

    slip: float = 0.015
    emf_re_pu: float = 1.0
    emf_im_pu: float = 0.0

    FIELDS = ("slip", "emf_re_pu", "emf_im_pu")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in self.FIELDS)

    @classmethod
    def from_tuple(cls, values) -> "InductionMotorState":
        return cls(**dict(zip(cls.FIELDS, values)))

    @property
    def emf(self) -> complex:
        return complex(self.emf_re_pu, self.emf_im_pu)


def motor_current(params: InductionMotorParams, state: InductionMotorState,
                  v_terminal: complex) -> complex:
    """Stator current into the machine, machine base."""
    return (v_terminal - state.emf) / params.z_pu


def motor_torque(params: InductionMotorParams, state: InductionMotorState,
                 v_terminal: complex) -> float:
    """Air-gap torque (equals air-gap power in pu at synchronous speed)."""
    i = motor_current(params, state, v_terminal)
    return (state.emf * i.conjugate()).real


def motor_derivatives(
    params: InductionMotorParams,
    state: InductionMotorState,
    v_terminal: complex,
    omega_base_rad_s: float,
    load_torque_coeff: float,
) -> InductionMotorState:
    """Rotor flux and slip dynamics under a speed-dependent load torque."""
    _require_finite("motor_derivatives", state.slip, state.emf_re_pu, state.emf_im_pu,
                    v_terminal.real, v_terminal.imag)
    i = motor_current(params, state, v_terminal)
    t0 = params.t_open_s(omega_base_rad_s)
    dx = params.x_open_pu - params.x_transient_pu
    d_emf = (-1j * omega_base_rad_s * state.slip * state.emf
             - (state.emf - 1j * dx * i) / t0)
    te = (state.emf * i.conjugate()).real
    tl = load_torque_coeff * (1.0 - state.slip) ** params.torque_exponent
    d_slip = (tl - te) / (2.0 * params.h_s)
    return InductionMotorState(d_slip, d_emf.real, d_emf.imag)
