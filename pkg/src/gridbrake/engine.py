"""Event-aware fixed-step time-domain engine.

A scenario couples the dynamic devices (synchronous generator, grid-forming
inverter, aggregate motor) through the algebraic network, applies scheduled
load steps / breaker operations / voltage dips at grid-aligned times, and
integrates with classic fourth-order Runge-Kutta at a fixed step.  The
output is a uniform trace plus an event log; identical scenarios produce
bit-identical traces.
"""

from __future__ import annotations

import cmath
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import models, protection
from .braking import BrakeController, BrakeSchedule, BrakeStage, step_thermal
from .errors import (ConfigurationError, DomainError, InitializationError,
                     NumericError, ValidationError)
from .models import (GfmParams, GfmState, InductionMotorParams, InductionMotorState,
                     SyncGenParams, SyncGenState)
from .network import (GridEquivalent, LineParams, Network, ShuntElement,
                      TheveninSource, VoltageClamp, set_shunt, solve_bus_voltages)
from .protection import (ClusterLoadModel, DataCenterBuilding, LoadStepEvent,
                         RelayMonitor, apply_load_step)
from .units import SystemBase, cycles_to_seconds, to_pu

#: channels every trace records; scenarios choose which ones reach the CSV
ALL_CHANNELS = (
    "time_s", "freq_hz", "sg_p_pu", "gfm_p_pu", "v_pcc_pu", "brake_p_pu",
    "motor_slip", "sg_omega_pu", "gfm_freq_pu", "sg_pm_pu", "sg_efd_pu",
    "sg_delta_rad", "grid_p_pu", "load_p_pu", "motor_p_pu", "brake_e_mj",
    "balance_residual_pu",
)

DEFAULT_CHANNELS = ("time_s", "freq_hz", "sg_p_pu", "gfm_p_pu", "v_pcc_pu",
                    "brake_p_pu", "motor_slip")

REDUCED_CHANNELS = ("time_s", "freq_hz", "sg_omega_pu", "brake_p_pu", "v_pcc_pu")

_EQUILIBRIUM_TOL = 1e-9
_GRID_SNAP_TOL = 1e-9


# ---------------------------------------------------------------------------
# Scenario description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduledLoadStep:
    """Demand block scheduled to leave the grid during the run."""

    time_s: float
    mode: str = "all_it"        # all_it | plant_fault | explicit_mw
    delta_p_mw: float | None = None
    building: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("all_it", "plant_fault", "explicit_mw"):
            raise ConfigurationError(f"unknown load-step mode {self.mode!r}")
        if self.mode == "explicit_mw" and self.delta_p_mw is None:
            raise ConfigurationError("explicit_mw load step needs delta_p_mw")
        if self.mode == "plant_fault" and self.building is None:
            raise ConfigurationError("plant_fault load step needs a building index")


@dataclass(frozen=True)
class VoltageDipEvent:
    """Externally imposed dip: the bus is pinned to a magnitude for a while."""

    time_s: float
    duration_s: float
    magnitude_pu: float
    bus: str = "pcc"

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ConfigurationError("dip duration_s must be positive")
        if self.magnitude_pu < 0:
            raise ConfigurationError("dip magnitude_pu must be >= 0")


@dataclass(frozen=True)
class CapacitorBank:
    name: str
    bus: str
    mvar: float
    closed_initially: bool = False


@dataclass(frozen=True)
class ShuntSwitchEvent:
    element: str
    command: str           # close | open
    time_s: float
    breaker_delay_cycles: float = 2.0


@dataclass(frozen=True)
class SimulationOptions:
    dt_s: float = 1e-3
    horizon_s: float = 5.0
    freq_band_hz: float = 0.02

    def __post_init__(self) -> None:
        if self.dt_s <= 0:
            raise ConfigurationError(f"dt_s must be positive, got {self.dt_s}")
        if self.horizon_s <= self.dt_s:
            raise ConfigurationError("horizon_s must exceed dt_s")


@dataclass(frozen=True)
class ReducedSwingConfig:
    """Single-state constant-voltage swing case for analytic cross-checks.

    The lost load and brake are applied from t = 0 with the bus held at
    1.0 pu, so the trace is directly comparable to the closed forms.
    """

    h_s: float = 11.0
    d_pu: float = 0.0
    delta_p_pu: float = 0.5
    p_br_pu: float = 0.0
    omega0_pu: float = 0.0


@dataclass(frozen=True)
class EigenSweepConfig:
    scr_values: tuple[float, ...] = (2.0, 5.0)
    brake_sizes_mw: tuple[float, ...] = (50.0, 125.0, 250.0, 370.0, 500.0)


@dataclass(frozen=True)
class LineSpec:
    from_bus: str
    to_bus: str
    params: LineParams


@dataclass(frozen=True)
class Scenario:
    """Declarative description of one study: network, devices, events."""

    name: str = "scenario"
    base: SystemBase = SystemBase()
    buses: tuple[str, ...] = ("grid", "pcc")
    grid: GridEquivalent = GridEquivalent()
    grid_bus: str = "grid"
    lines: tuple[LineSpec, ...] = (
        LineSpec("grid", "pcc", LineParams(parallel_count=2)),)
    pcc_bus: str = "pcc"
    total_generation_mw: float = 1000.0
    sg_share: float = 1.0
    gfm_share: float = 0.0
    sg_template: SyncGenParams | None = SyncGenParams()
    gfm_template: GfmParams | None = GfmParams()
    sg_bus: str = "pcc"
    gfm_bus: str = "pcc"
    cluster: tuple[DataCenterBuilding, ...] = tuple(
        DataCenterBuilding() for _ in range(5))
    motor_template: InductionMotorParams | None = InductionMotorParams()
    motor_bus: str = "pcc"
    include_motor: bool = True
    brake: BrakeSchedule | None = None
    capacitors: tuple[CapacitorBank, ...] = ()
    load_steps: tuple[ScheduledLoadStep, ...] = ()
    dips: tuple[VoltageDipEvent, ...] = ()
    shunt_events: tuple[ShuntSwitchEvent, ...] = ()
    sim: SimulationOptions = SimulationOptions()
    channels: tuple[str, ...] = DEFAULT_CHANNELS
    reduced: ReducedSwingConfig | None = None
    eigen: EigenSweepConfig | None = None

    def __post_init__(self) -> None:
        for ch in self.channels:
            if ch not in ALL_CHANNELS:
                raise ConfigurationError(f"unknown trace channel {ch!r}")
        if self.reduced is not None:
            return
        if abs(self.sg_share + self.gfm_share - 1.0) > 1e-9:
            raise ConfigurationError(
                f"sg_share + gfm_share must equal 1, got "
                f"{self.sg_share} + {self.gfm_share}")
        if self.sg_share < 0 or self.gfm_share < 0:
            raise ConfigurationError("generation shares must be >= 0")
        if self.total_generation_mw <= 0:
            raise ConfigurationError("total_generation_mw must be positive")
        if self.sg_share > 0 and self.sg_template is None:
            raise ConfigurationError("sg_share > 0 needs sg parameters")
        if self.gfm_share > 0 and self.gfm_template is None:
            raise ConfigurationError("gfm_share > 0 needs gfm parameters")
        bus_set = set(self.buses)
        for name, bus in (("grid_bus", self.grid_bus), ("pcc_bus", self.pcc_bus),
                          ("sg_bus", self.sg_bus), ("gfm_bus", self.gfm_bus),
                          ("motor_bus", self.motor_bus)):
            if bus not in bus_set:
                raise ConfigurationError(f"{name} {bus!r} is not a declared bus")


# ---------------------------------------------------------------------------
# Trace and metrics
# ---------------------------------------------------------------------------

@dataclass
class SimTrace:
    """Uniform-grid record of every channel plus the event log."""

    scenario_name: str
    f_nominal_hz: float
    dt_s: float
    channels: dict[str, np.ndarray]
    events: list[tuple[float, str, str]]
    requested: tuple[str, ...]
    completed: bool = True
    failure: str | None = None
    stage_energy_mj: tuple[float, ...] = ()
    stage_violation: tuple[bool, ...] = ()

    @property
    def time_s(self) -> np.ndarray:
        return self.channels["time_s"]

    def __len__(self) -> int:
        return len(self.channels["time_s"])

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise DomainError(f"trace has no channel {name!r}") from None

    def last_brake_removal_s(self) -> float | None:
        out = None
        for t, kind, detail in self.events:
            if kind == "breaker" and "brake" in detail and "now open" in detail:
                out = t
        return out

    def write_csv(self, path) -> None:
        names = [c for c in self.requested if c in self.channels]
        cols = [self.channels[c] for c in names]
        with open(path, "w", newline="\n") as f:
            f.write(",".join(names) + "\n")
            for row in zip(*cols):
                f.write(",".join(_fmt(v) for v in row) + "\n")

    def write_events_csv(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            f.write("time_s,kind,detail\n")
            for t, kind, detail in self.events:
                detail = detail.replace('"', "'")
                f.write(f'{_fmt(t)},{kind},"{detail}"\n')


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return format(float(v), ".12g")


@dataclass(frozen=True)
class TraceMetrics:
    """Scalar summary recomputable from the trace alone."""

    peak_sg_p_pu: float
    peak_freq_hz: float
    peak_abs_freq_dev_hz: float
    max_rocof_hz_s: float
    settling_time_s: float
    post_removal_osc_energy: float   # integral of (f - f_nom)^2 after last removal

    def as_dict(self) -> dict[str, float]:
        return {
            "peak_sg_p_pu": self.peak_sg_p_pu,
            "peak_freq_hz": self.peak_freq_hz,
            "peak_abs_freq_dev_hz": self.peak_abs_freq_dev_hz,
            "max_rocof_hz_s": self.max_rocof_hz_s,
            "settling_time_s": self.settling_time_s,
            "post_removal_osc_energy": self.post_removal_osc_energy,
        }


def metrics(trace: SimTrace, band_hz: float = 0.02) -> TraceMetrics:
    """Peaks, ROCOF and settling figures scanned from a trace.

    Settling and oscillation energy are measured from the final brake
    removal (falling back to the last discrete event, then to t = 0).
    """
    if len(trace) < 3:
        raise DomainError("metrics need at least 3 samples")
    t = trace.time_s
    f = trace.channel("freq_hz")
    f0 = trace.f_nominal_hz
    dev = f - f0
    sg_p = trace.channels.get("sg_p_pu")
    peak_sg = float(np.max(sg_p)) if sg_p is not None and not np.all(
        np.isnan(sg_p)) else math.nan
    rocof = (f[2:] - f[:-2]) / (2.0 * trace.dt_s)
    ref_t = trace.last_brake_removal_s()
    if ref_t is None:
        event_times = [ev[0] for ev in trace.events if ev[1] != "snap"]
        ref_t = max(event_times) if event_times else 0.0
    tail = t >= ref_t - _GRID_SNAP_TOL
    abs_dev_tail = np.abs(dev[tail])
    out_of_band = np.nonzero(abs_dev_tail > band_hz)[0]
    if len(out_of_band):
        settle = float(t[tail][out_of_band[-1]] - ref_t)
    else:
        settle = 0.0
    osc = float(np.sum(dev[tail] ** 2) * trace.dt_s)
    return TraceMetrics(
        peak_sg_p_pu=peak_sg,
        peak_freq_hz=float(np.max(f)),
        peak_abs_freq_dev_hz=float(np.max(np.abs(dev))),
        max_rocof_hz_s=float(np.max(np.abs(rocof))),
        settling_time_s=settle,
        post_removal_osc_energy=osc,
    )


# ---------------------------------------------------------------------------
# Resolved plant
# ---------------------------------------------------------------------------

@dataclass
class SgSetpoints:
    v_ref_pu: float
    p_ref_pu: float


@dataclass
class GfmSetpoints:
    p_set_pu: float
    q_set_pu: float
    v_set_pu: float


@dataclass
class Equilibrium:
    x0: np.ndarray
    state_names: tuple[str, ...]
    sg_setpoints: SgSetpoints | None
    gfm_setpoints: GfmSetpoints | None
    motor_torque_coeff: float
    grid_emf: complex
    dispatch_mw: dict[str, float]
    max_derivative: float


class Plant:
    """Scenario compiled to run form: scaled devices, network, load model."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.base = scenario.base
        self.omega_base = scenario.base.omega_nominal_rad_s

        if scenario.reduced is not None:
            self.reduced = scenario.reduced
            self.state_names = ("swing.omega_pu",)
            self.brake_elements: list[ShuntElement] = []
            self.cap_elements: list[ShuntElement] = []
            return
        self.reduced = None

        self.net = Network(list(scenario.buses))
        for spec in scenario.lines:
            self.net.add_line(spec.from_bus, spec.to_bus, spec.params)
        self.grid_bus = self.net.bus(scenario.grid_bus)
        self.pcc_bus = self.net.bus(scenario.pcc_bus)
        self.grid_z = scenario.grid.impedance_pu

        s_sys = scenario.base.s_base_mva
        self.sg: SyncGenParams | None = None
        self.gfm: GfmParams | None = None
        if scenario.sg_share > 0:
            self.sg = scenario.sg_template.scaled(
                scenario.sg_share * scenario.total_generation_mw)
            self.sg_bus = self.net.bus(scenario.sg_bus)
            self.sg_base_ratio = self.sg.rated_mw / s_sys
            self.sg_z_sys = self.sg.z_pu / self.sg_base_ratio
        if scenario.gfm_share > 0:
            self.gfm = scenario.gfm_template.scaled(
                scenario.gfm_share * scenario.total_generation_mw)
            self.gfm_bus = self.net.bus(scenario.gfm_bus)
            self.gfm_base_ratio = self.gfm.rated_mw / s_sys
            self.gfm_z_sys = self.gfm.z_pu / self.gfm_base_ratio
            self.gfm_ilim_sys = self.gfm.current_limit_pu * self.gfm_base_ratio

        self.cluster = ClusterLoadModel(list(scenario.cluster))
        motor_mw = self.cluster.total_motor_mw()
        self.motor: InductionMotorParams | None = None
        if scenario.include_motor and motor_mw > 0 and scenario.motor_template is not None:
            self.motor = scenario.motor_template.scaled(motor_mw)
            self.motor_bus = self.net.bus(scenario.motor_bus)
            self.motor_base_ratio = motor_mw / s_sys

        names: list[str] = []
        if self.sg is not None:
            names += [f"sg.{f}" for f in SyncGenState.FIELDS]
        if self.gfm is not None:
            names += [f"gfm.{f}" for f in GfmState.FIELDS]
        if self.motor is not None:
            names += [f"motor.{f}" for f in InductionMotorState.FIELDS]
        self.state_names = tuple(names)

        self.brake_elements = []
        if scenario.brake is not None:
            for i, st in enumerate(scenario.brake.stages):
                g = st.conductance_pu(self.base)
                self.brake_elements.append(ShuntElement(
                    f"brake_stage_{i + 1}", "brake", scenario.brake.bus,
                    complex(g, 0.0)))
        self.cap_elements = []
        for cap in scenario.capacitors:
            b = cap.mvar / s_sys
            self.cap_elements.append(ShuntElement(
                cap.name, "capacitor", cap.bus, complex(0.0, b),
                closed=cap.closed_initially))

        self.setpoints_sg: SgSetpoints | None = None
        self.setpoints_gfm: GfmSetpoints | None = None
        self.motor_torque_coeff = 0.0
        self.grid_emf = complex(scenario.grid.source_voltage_pu, 0.0)
        self._y_cache: np.ndarray | None = None
        self.clamps: list[VoltageClamp] = []

    # -- state packing -------------------------------------------------------

    def split_states(self, x: np.ndarray):
        i = 0
        sg = gfm = mot = None
        if self.sg is not None:
            sg = SyncGenState.from_tuple(x[i:i + 9])
            i += 9
        if self.gfm is not None:
            gfm = GfmState.from_tuple(x[i:i + 4])
            i += 4
        if self.motor is not None:
            mot = InductionMotorState.from_tuple(x[i:i + 3])
            i += 3
        return sg, gfm, mot

    # -- network assembly ------------------------------------------------------

    def invalidate_topology(self) -> None:
        self._y_cache = None

    def _static_y(self) -> np.ndarray:
        if self._y_cache is not None:
            return self._y_cache
        shunts: dict[int, complex] = {}

        def add(bus: int, y: complex) -> None:
            shunts[bus] = shunts.get(bus, 0.0 + 0.0j) + y

        for b, it_on, st_on in zip(self.cluster.buildings, self.cluster.it_connected,
                                   self.cluster.static_connected):
            bus = self.net.bus(b.bus)
            if it_on:
                add(bus, complex(to_pu(b.it_mw, self.base), 0.0))
            if st_on:
                add(bus, complex(to_pu(b.static_mw, self.base), 0.0))
        for el in self.brake_elements + self.cap_elements:
            if el.closed:
                add(self.net.bus(el.bus), el.admittance)
        self._y_cache = self.net.build_y(shunts)
        return self._y_cache

    def _sources(self, sg, gfm, mot) -> list[TheveninSource]:
        sources = [TheveninSource(self.grid_bus, self.grid_emf, self.grid_z,
                                  name="grid")]
        if sg is not None:
            sources.append(TheveninSource(self.sg_bus, models.sg_emf(sg),
                                          self.sg_z_sys, name="sg"))
        if gfm is not None:
            sources.append(TheveninSource(self.gfm_bus, models.gfm_emf(gfm),
                                          self.gfm_z_sys, i_limit=self.gfm_ilim_sys,
                                          name="gfm"))
        if mot is not None:
            scale = self.cluster.motor_scale()
            if scale > 0:
                z = self.motor.z_pu / (self.motor_base_ratio * scale)
                sources.append(TheveninSource(self.motor_bus, mot.emf, z,
                                              name="motor"))
        return sources

    def solve(self, x: np.ndarray):
        sg, gfm, mot = self.split_states(x)
        sources = self._sources(sg, gfm, mot)
        sol = solve_bus_voltages(self._static_y(), sources, clamps=self.clamps)
        return sol, sources, (sg, gfm, mot)

    # -- derivatives -------------------------------------------------------------

    def derivatives(self, x: np.ndarray) -> np.ndarray:
        if self.reduced is not None:
            r = self.reduced
            omega = x[0]
            d = (r.delta_p_pu - r.p_br_pu - r.d_pu * omega) / (2.0 * r.h_s)
            return np.array([d])
        sol, sources, (sg, gfm, mot) = self.solve(x)
        out: list[float] = []
        idx_by_name = {s.name: i for i, s in enumerate(sources)}
        if sg is not None:
            v_t = sol.voltage(self.sg_bus)
            d = models.sg_derivatives(self.sg, sg, v_t,
                                      self.setpoints_sg.v_ref_pu,
                                      self.setpoints_sg.p_ref_pu,
                                      self.omega_base)
            out.extend(d.as_tuple())
        if gfm is not None:
            v_t = sol.voltage(self.gfm_bus)
            i_mach = sol.source_currents[idx_by_name["gfm"]] / self.gfm_base_ratio
            d = models.gfm_derivatives(self.gfm, gfm, v_t, i_mach,
                                       self.setpoints_gfm.p_set_pu,
                                       self.setpoints_gfm.q_set_pu,
                                       self.setpoints_gfm.v_set_pu,
                                       self.omega_base)
            out.extend(d.as_tuple())
        if mot is not None:
            v_t = sol.voltage(self.motor_bus)
            d = models.motor_derivatives(self.motor, mot, v_t, self.omega_base,
                                         self.motor_torque_coeff)
            out.extend(d.as_tuple())
        return np.array(out)

    # -- outputs ---------------------------------------------------------------

    def frequency_weights(self) -> tuple[float, float]:
        w_sg = self.sg.h_s * self.sg.rated_mw if self.sg is not None else 0.0
        w_gfm = (self.gfm.equivalent_inertia_s * self.gfm.rated_mw
                 if self.gfm is not None else 0.0)
        return w_sg, w_gfm

    def outputs(self, t: float, x: np.ndarray, solved=None) -> dict[str, float]:
        f0 = self.base.f_nominal_hz
        if self.reduced is not None:
            omega = float(x[0])
            return {
                "time_s": t,
                "freq_hz": f0 * (1.0 + omega),
                "sg_omega_pu": omega,
                "brake_p_pu": self.reduced.p_br_pu,
                "v_pcc_pu": 1.0,
            }
        sol, sources, (sg, gfm, mot) = solved if solved is not None else self.solve(x)
        idx_by_name = {s.name: i for i, s in enumerate(sources)}
        out: dict[str, float] = {"time_s": t}

        w_sg, w_gfm = self.frequency_weights()
        dev = 0.0
        if w_sg + w_gfm > 0:
            dev = ((w_sg * (sg.omega_pu if sg else 0.0)
                    + w_gfm * (gfm.freq_dev_pu if gfm else 0.0)) / (w_sg + w_gfm))
        out["freq_hz"] = f0 * (1.0 + dev)
        out["v_pcc_pu"] = abs(sol.voltage(self.pcc_bus))

        total_source_p = 0.0
        if sg is not None:
            i_sys = sol.source_currents[idx_by_name["sg"]]
            p_sys = (sol.voltage(self.sg_bus) * i_sys.conjugate()).real
            out["sg_p_pu"] = p_sys / self.sg_base_ratio
            out["sg_omega_pu"] = sg.omega_pu
            out["sg_pm_pu"] = sg.p_mech_pu
            out["sg_efd_pu"] = sg.efd_pu
            out["sg_delta_rad"] = sg.delta_rad
            total_source_p += p_sys
        if gfm is not None:
            i_sys = sol.source_currents[idx_by_name["gfm"]]
            p_sys = (sol.voltage(self.gfm_bus) * i_sys.conjugate()).real
            out["gfm_p_pu"] = p_sys / self.gfm_base_ratio
            out["gfm_freq_pu"] = gfm.freq_dev_pu
            total_source_p += p_sys
        grid_p = (sol.voltage(self.grid_bus)
                  * sol.source_currents[idx_by_name["grid"]].conjugate()).real
        out["grid_p_pu"] = grid_p
        total_source_p += grid_p
        for i_cl, cl in enumerate(self.clamps):
            total_source_p += (sol.voltage(cl.bus)
                               * sol.clamp_currents[i_cl].conjugate()).real

        brake_p = 0.0
        for el in self.brake_elements:
            if el.closed:
                vb = abs(sol.voltage(self.net.bus(el.bus)))
                brake_p += vb * vb * el.admittance.real
        out["brake_p_pu"] = brake_p

        load_p = 0.0
        for b, it_on, st_on in zip(self.cluster.buildings, self.cluster.it_connected,
                                   self.cluster.static_connected):
            vb = abs(sol.voltage(self.net.bus(b.bus)))
            g = 0.0
            if it_on:
                g += to_pu(b.it_mw, self.base)
            if st_on:
                g += to_pu(b.static_mw, self.base)
            load_p += vb * vb * g
        out["load_p_pu"] = load_p

        motor_p = 0.0
        if mot is not None:
            out["motor_slip"] = mot.slip
            if "motor" in idx_by_name:
                # source current is out of the machine; its draw is the negative
                motor_p = -(sol.voltage(self.motor_bus)
                            * sol.source_currents[idx_by_name["motor"]].conjugate()).real
        out["motor_p_pu"] = motor_p

        line_loss = 0.0
        for i, j, z in self.net.lines:
            i_line = (sol.v[i] - sol.v[j]) / z
            line_loss += (abs(i_line) ** 2) * z.real
        out["balance_residual_pu"] = (total_source_p - load_p - brake_p
                                      - motor_p - line_loss)
        return out

    def stage_power_pu(self, stage_index: int, sol) -> float:
        el = self.brake_elements[stage_index]
        if not el.closed:
            return 0.0
        vb = abs(sol.voltage(self.net.bus(el.bus)))
        return vb * vb * el.admittance.real


# ---------------------------------------------------------------------------
# Equilibrium
# ---------------------------------------------------------------------------

def find_equilibrium(scenario: Scenario, plant: Plant | None = None) -> Equilibrium:
    """Construct the pre-event steady state.

    Generation is dispatched to cover the connected cluster demand exactly
    (grid exchange zero), which makes the flat voltage profile the exact
    network solution; device states and setpoints then follow in closed
    form.  The returned state satisfies max |derivative| < 1e-9.
    """
    plant = plant or Plant(scenario)
    if plant.reduced is not None:
        x0 = np.array([plant.reduced.omega0_pu])
        return Equilibrium(x0, plant.state_names, None, None, 0.0, 1.0 + 0.0j,
                           {}, 0.0)

    base = scenario.base
    v_flat = complex(scenario.grid.source_voltage_pu, 0.0)
    vmag = abs(v_flat)

    # demand at the flat profile (loads are constant admittance, nameplate 1 pu)
    p_it = to_pu(plant.cluster.connected_it_mw(), base) * vmag * vmag
    p_static = to_pu(plant.cluster.connected_static_mw(), base) * vmag * vmag

    s_motor_sys = 0.0 + 0.0j
    motor_state = None
    if plant.motor is not None:
        mp = plant.motor
        plant.motor_torque_coeff = mp.load_torque_coeff(vmag)
        slip = mp.rated_slip
        emf = _motor_equilibrium_emf(mp, slip, v_flat, plant.omega_base)
        motor_state = InductionMotorState(slip, emf.real, emf.imag)
        i_mach = models.motor_current(mp, motor_state, v_flat)
        s_mach = v_flat * i_mach.conjugate()
        s_motor_sys = s_mach * plant.motor_base_ratio * plant.cluster.motor_scale()

    s_demand = complex(p_it + p_static, 0.0) + s_motor_sys

    dispatch: dict[str, float] = {}
    sg_state = None
    if plant.sg is not None:
        s_mach = (s_demand * scenario.sg_share) / plant.sg_base_ratio
        if s_mach.real > plant.sg.governor.p_max_pu + 1e-9:
            raise InitializationError(
                f"sg dispatch {s_mach.real:.3f} pu exceeds governor ceiling "
                f"{plant.sg.governor.p_max_pu} pu: demand exceeds capability")
        i_mach = (s_mach / v_flat).conjugate()
        e = v_flat + plant.sg.z_pu * i_mach
        p_airgap = (e * i_mach.conjugate()).real
        ex = plant.sg.exciter
        i_d = -(i_mach * cmath.exp(-1j * cmath.phase(e))).imag
        efd = abs(e) + (plant.sg.x_d_pu - plant.sg.x_a_pu) * i_d
        v_reg = ex.k_e * efd
        v_ref = vmag + v_reg / ex.k_a
        sg_state = SyncGenState(
            delta_rad=cmath.phase(e), omega_pu=0.0, emf_pu=abs(e),
            v_meas_pu=vmag, v_reg_pu=v_reg, efd_pu=efd, v_fb_pu=0.0,
            valve_pu=p_airgap, p_mech_pu=p_airgap)
        plant.setpoints_sg = SgSetpoints(v_ref_pu=v_ref, p_ref_pu=p_airgap)
        dispatch["sg_mw"] = s_mach.real * plant.sg.rated_mw

    gfm_state = None
    if plant.gfm is not None:
        s_mach = (s_demand * scenario.gfm_share) / plant.gfm_base_ratio
        if s_mach.real > 1.0 + 1e-9:
            raise InitializationError(
                f"gfm dispatch {s_mach.real:.3f} pu exceeds its 1.0 pu rating: "
                "demand exceeds capability")
        i_mach = (s_mach / v_flat).conjugate()
        e = v_flat + plant.gfm.z_pu * i_mach
        gfm_state = GfmState(theta_rad=cmath.phase(e), freq_dev_pu=0.0,
                             v_mag_pu=abs(e), p_meas_pu=s_mach.real)
        plant.setpoints_gfm = GfmSetpoints(
            p_set_pu=s_mach.real, q_set_pu=s_mach.imag, v_set_pu=abs(e))
        dispatch["gfm_mw"] = s_mach.real * plant.gfm.rated_mw

    plant.grid_emf = v_flat
    dispatch["grid_mw"] = 0.0
    dispatch["load_mw"] = s_demand.real * base.s_base_mva

    parts: list[float] = []
    if sg_state is not None:
        parts.extend(sg_state.as_tuple())
    if gfm_state is not None:
        parts.extend(gfm_state.as_tuple())
    if motor_state is not None:
        parts.extend(motor_state.as_tuple())
    x0 = np.array(parts)

    resid = float(np.max(np.abs(plant.derivatives(x0)))) if len(x0) else 0.0
    if resid > _EQUILIBRIUM_TOL:
        d = plant.derivatives(x0)
        worst = plant.state_names[int(np.argmax(np.abs(d)))]
        raise InitializationError(
            f"equilibrium residual {resid:.3e} exceeds {_EQUILIBRIUM_TOL} "
            f"(largest on {worst})")
    return Equilibrium(x0, plant.state_names, plant.setpoints_sg,
                       plant.setpoints_gfm, plant.motor_torque_coeff,
                       plant.grid_emf, dispatch, resid)


def _motor_equilibrium_emf(mp: InductionMotorParams, slip: float, v: complex,
                           omega_base: float) -> complex:
    """Rotor EMF with the flux derivative zeroed at a given slip and voltage."""
    t0 = mp.t_open_s(omega_base)
    dx = mp.x_open_pu - mp.x_transient_pu
    z = mp.z_pu
    # dE/dt = 0 with I = (V - E)/z  =>  E (1 + j*w*s*t0 + j*dx/z) = j*dx*V/z
    denom = 1.0 + 1j * omega_base * slip * t0 + 1j * dx / z
    return (1j * dx * v / z) / denom


# ---------------------------------------------------------------------------
# Time-domain run
# ---------------------------------------------------------------------------

def run(scenario: Scenario) -> SimTrace:
    """Integrate a scenario and return its trace.

    Fourth-order fixed-step integration with the network re-solved at every
    stage; discrete events (load steps, breaker operations, dips, relay
    trips) apply exactly at grid-aligned times.  Numeric divergence aborts
    the run and returns the partial trace with a failure marker.
    """
    plant = Plant(scenario)
    eq = find_equilibrium(scenario, plant)
    if plant.reduced is not None:
        return _run_reduced(scenario, plant, eq)

    base = scenario.base
    dt = scenario.sim.dt_s
    n_steps = int(round(scenario.sim.horizon_s / dt))
    events: list[tuple[float, str, str]] = []

    def log(t: float, kind: str, detail: str) -> None:
        events.append((t, kind, detail))

    def snap(t: float, what: str) -> float:
        t_snap = round(t / dt) * dt
        if abs(t_snap - t) > _GRID_SNAP_TOL:
            log(t_snap, "snap", f"{what} at {t!r} s snapped to the {dt} s grid")
        return t_snap

    pending_steps: list[tuple[float, LoadStepEvent]] = []
    for ls in scenario.load_steps:
        t_ev = snap(ls.time_s, "load step")
        if ls.mode == "plant_fault":
            ev = protection.scenario_load_loss(
                plant.cluster.buildings,
                protection.PlantFault(ls.building, t_ev))
        elif ls.mode == "explicit_mw":
            ev = LoadStepEvent(t_ev, ls.delta_p_mw,
                               tuple(range(len(plant.cluster.buildings))))
        else:
            ev = LoadStepEvent(t_ev, plant.cluster.connected_it_mw(),
                               tuple(range(len(plant.cluster.buildings))))
        pending_steps.append((t_ev, ev))
    pending_steps.sort(key=lambda p: p[0])

    dip_edges: list[tuple[float, str, VoltageDipEvent]] = []
    for dip in scenario.dips:
        dip_edges.append((snap(dip.time_s, "voltage dip start"), "start", dip))
        dip_edges.append((snap(dip.time_s + dip.duration_s, "voltage dip end"),
                          "end", dip))
    dip_edges.sort(key=lambda p: p[0])

    for sw in scenario.shunt_events:
        el = next((e for e in plant.cap_elements if e.name == sw.element), None)
        if el is None:
            raise ConfigurationError(
                f"shunt event names unknown element {sw.element!r}")
        delay = cycles_to_seconds(sw.breaker_delay_cycles, base.f_nominal_hz)
        tr = set_shunt(el, sw.command, sw.time_s, delay)
        log(sw.time_s, "breaker",
            f"capacitor {sw.element} {sw.command} commanded"
            + (f" ({tr.note})" if tr.note else ""))

    controller = BrakeController(scenario.brake) if scenario.brake else None
    monitors = [RelayMonitor(b.relay, base.f_nominal_hz)
                for b in plant.cluster.buildings]
    relay_steps: list[tuple[float, LoadStepEvent]] = []
    violations_logged: set[int] = set()

    requested = tuple(scenario.channels)
    record: dict[str, list[float]] = {c: [] for c in ALL_CHANNELS}
    x = eq.x0.copy()
    loss_time: float | None = None
    failure: str | None = None
    last_angles: dict[int, float] = {}

    for k in range(n_steps + 1):
        t = k * dt

        # --- discrete events due at t ---
        while pending_steps and pending_steps[0][0] <= t + _GRID_SNAP_TOL:
            _, ev = pending_steps.pop(0)
            try:
                apply_load_step(plant.cluster, ev)
            except ValidationError as exc:
                raise ValidationError(f"at t={t:g} s: {exc}") from exc
            plant.invalidate_topology()
            if loss_time is None and ev.delta_p_mw > 0:
                loss_time = ev.time_s
            log(ev.time_s, "load_step",
                f"{ev.kind} drops {ev.delta_p_mw:g} MW "
                f"(buildings {list(ev.affected_buildings)})")
        while relay_steps and relay_steps[0][0] <= t + _GRID_SNAP_TOL:
            _, ev = relay_steps.pop(0)
            connected = [i for i in ev.affected_buildings
                         if plant.cluster.it_connected[i]]
            if connected:
                ev = LoadStepEvent(ev.time_s, ev.delta_p_mw, tuple(connected))
                apply_load_step(plant.cluster, ev)
                plant.invalidate_topology()
                if loss_time is None:
                    loss_time = ev.time_s
                log(ev.time_s, "load_step",
                    f"relay transfer drops {ev.delta_p_mw:g} MW "
                    f"(buildings {list(ev.affected_buildings)})")
        for t_edge, edge, dip in dip_edges:
            if abs(t_edge - t) <= _GRID_SNAP_TOL:
                bus = plant.net.bus(dip.bus)
                if edge == "start":
                    angle = last_angles.get(bus, 0.0)
                    plant.clamps.append(VoltageClamp(
                        bus, cmath.rect(dip.magnitude_pu, angle)))
                    log(t, "voltage_dip",
                        f"bus {dip.bus} pinned to {dip.magnitude_pu:g} pu")
                else:
                    plant.clamps = [c for c in plant.clamps if c.bus != bus]
                    log(t, "voltage_dip", f"bus {dip.bus} released")

        if controller is not None:
            for cmd in controller.step(t, loss_time):
                el = plant.brake_elements[cmd.stage_index]
                st = controller.schedule.stages[cmd.stage_index]
                tr = set_shunt(el, cmd.command, cmd.command_time_s,
                               st.breaker_delay_s)
                log(cmd.command_time_s, "breaker",
                    f"brake stage {cmd.stage_index + 1} ({st.rating_mw:g} MW) "
                    f"{cmd.command} commanded, effective {tr.effective_time_s:g} s")
                eff_steps = tr.effective_time_s / dt
                if abs(eff_steps - round(eff_steps)) > 1e-9:
                    log(tr.effective_time_s, "snap",
                        "breaker transition off-grid; applied at the next step")
        changed = False
        for el in plant.brake_elements + plant.cap_elements:
            for tr in el.advance_to(t + _GRID_SNAP_TOL):
                changed = True
                log(t, "breaker",
                    f"{el.kind} {el.name} now {'closed' if tr.closed else 'open'}")
        if changed:
            plant.invalidate_topology()

        # --- record the sample at t ---
        solved = plant.solve(x)
        sol = solved[0]
        out = plant.outputs(t, x, solved)
        out["brake_e_mj"] = (sum(st.energy_mj for st in controller.schedule.stages)
                             if controller is not None else 0.0)
        for c in ALL_CHANNELS:
            record[c].append(out.get(c, math.nan))

        for b_i in range(plant.net.n_bus):
            last_angles[b_i] = cmath.phase(complex(sol.v[b_i]))
        v_pcc = out["v_pcc_pu"]
        for bi, mon in enumerate(monitors):
            dec = mon.observe(t, v_pcc)
            if dec is not None:
                b = plant.cluster.buildings[bi]
                transfer_t = dec.time_s + cycles_to_seconds(2.0, base.f_nominal_hz)
                t_apply = math.ceil(transfer_t / dt - 1e-9) * dt
                relay_steps.append((t_apply, LoadStepEvent(t_apply, b.it_mw, (bi,))))
                relay_steps.sort(key=lambda p: p[0])
                log(dec.time_s, "relay_trip",
                    f"building {bi + 1} relay trips (segment {dec.segment}), "
                    f"transfer at {t_apply:g} s")

        if k == n_steps:
            break

        # --- thermal accumulation over [t, t+dt) ---
        if controller is not None:
            for i, stage in enumerate(controller.schedule.stages):
                p_stage = plant.stage_power_pu(i, sol)
                if p_stage > 0.0:
                    step_thermal(stage, p_stage, dt, base)
                    if stage.thermal_violation and i not in violations_logged:
                        violations_logged.add(i)
                        log(t, "thermal",
                            f"brake stage {i + 1} exceeds its "
                            f"{stage.limit_mj:g} MJ limit")

        # --- RK4 step with the discrete state frozen ---
        try:
            k1 = plant.derivatives(x)
            k2 = plant.derivatives(x + 0.5 * dt * k1)
            k3 = plant.derivatives(x + 0.5 * dt * k2)
            k4 = plant.derivatives(x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        except NumericError as exc:
            failure = f"numeric failure at t={t + dt:g} s: {exc}"
            log(t + dt, "failure", failure)
            break
        if not np.all(np.isfinite(x)):
            failure = f"state became non-finite at t={t + dt:g} s"
            log(t + dt, "failure", failure)
            break

    if controller is not None:
        warn = controller.unanchored_warning()
        if warn:
            log(n_steps * dt, "warning", warn)

    channels = {c: np.array(v) for c, v in record.items()}
    stage_e: tuple[float, ...] = ()
    stage_v: tuple[bool, ...] = ()
    if controller is not None:
        stage_e = tuple(st.energy_mj for st in controller.schedule.stages)
        stage_v = tuple(st.thermal_violation for st in controller.schedule.stages)
    return SimTrace(
        scenario_name=scenario.name,
        f_nominal_hz=base.f_nominal_hz,
        dt_s=dt,
        channels=channels,
        events=events,
        requested=("time_s",) + tuple(c for c in requested if c != "time_s"),
        completed=failure is None,
        failure=failure,
        stage_energy_mj=stage_e,
        stage_violation=stage_v,
    )


def _run_reduced(scenario: Scenario, plant: Plant, eq: Equilibrium) -> SimTrace:
    dt = scenario.sim.dt_s
    n_steps = int(round(scenario.sim.horizon_s / dt))
    record: dict[str, list[float]] = {c: [] for c in REDUCED_CHANNELS}
    x = eq.x0.copy()
    for k in range(n_steps + 1):
        t = k * dt
        out = plant.outputs(t, x)
        for c in REDUCED_CHANNELS:
            record[c].append(out.get(c, math.nan))
        if k == n_steps:
            break
        k1 = plant.derivatives(x)
        k2 = plant.derivatives(x + 0.5 * dt * k1)
        k3 = plant.derivatives(x + 0.5 * dt * k2)
        k4 = plant.derivatives(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    requested = tuple(c for c in scenario.channels if c in REDUCED_CHANNELS)
    if not requested:
        requested = REDUCED_CHANNELS
    return SimTrace(
        scenario_name=scenario.name,
        f_nominal_hz=scenario.base.f_nominal_hz,
        dt_s=dt,
        channels={c: np.array(v) for c, v in record.items()},
        events=[],
        requested=("time_s",) + tuple(c for c in requested if c != "time_s"),
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    label: str
    scenario: Scenario
    trace: SimTrace | None
    metrics: TraceMetrics | None
    error: str | None = None


def make_variant(template: Scenario, axis: str, value) -> Scenario:
    """Clone a scenario along a sweep axis.

    mix: value is the synchronous share in [0, 1]; brake: value is a
    single-stage MW rating (0 removes the brake) keeping the template's
    first-stage timing; schedule: value is a stage list like "250" or
    "130+130+110" using the standard chained removals.
    """
    if axis == "mix":
        share = float(value)
        if not 0.0 <= share <= 1.0:
            raise ConfigurationError(f"mix share must be in [0,1], got {share}")
        return replace(template, sg_share=share, gfm_share=1.0 - share,
                       name=f"{template.name}_mix_{share:g}")
    if axis == "brake":
        mw = float(value)
        if mw < 0:
            raise ConfigurationError(f"brake size must be >= 0, got {mw}")
        if mw == 0:
            return replace(template, brake=None, name=f"{template.name}_brake_0")
        if template.brake is not None:
            sched = template.brake.copy()
            first = sched.stages[0]
            first.rating_mw = mw
            sched.stages = [first]
        else:
            sched = BrakeSchedule([BrakeStage(rating_mw=mw)],
                                  trigger="on_load_loss",
                                  max_total_insertion_s=None)
        return replace(template, brake=sched, name=f"{template.name}_brake_{mw:g}")
    if axis == "schedule":
        parts = [float(p) for p in str(value).split("+")]
        if len(parts) == 1:
            stages = [BrakeStage(rating_mw=parts[0], remove_at_s=0.25)]
        elif len(parts) == 3:
            stages = [BrakeStage(rating_mw=r, dwell_s=d)
                      for r, d in zip(parts, (0.1, 0.35, 0.85))]
        else:
            raise ConfigurationError(
                "schedule axis takes 'MW' or 'MW+MW+MW' values")
        sched = BrakeSchedule(stages, trigger="on_load_loss",
                              max_total_insertion_s=1.0)
        return replace(template, brake=sched,
                       name=f"{template.name}_sched_{value}")
    raise ConfigurationError(f"unknown sweep axis {axis!r}")


def _run_variant(args) -> SweepResult:
    label, scenario, band = args
    try:
        trace = run(scenario)
        if not trace.completed:
            return SweepResult(label, scenario, trace, None, trace.failure)
        return SweepResult(label, scenario, trace, metrics(trace, band))
    except Exception as exc:  # noqa: BLE001 - failures ride in their slot
        return SweepResult(label, scenario, None, None, str(exc))


def sweep(template: Scenario, axis: str, values, workers: int | None = None
          ) -> list[SweepResult]:
    """Run one variant per value; failed variants carry their error.

    Runs are independent; parallelism is capped by GRIDBRAKE_WORKERS (or
    the machine's CPU count) and results keep the given order.
    """
    values = list(values)
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    variants = [(f"{axis}={v}", make_variant(template, axis, v),
                 template.sim.freq_band_hz) for v in values]
    if workers is None:
        env = os.environ.get("GRIDBRAKE_WORKERS")
        workers = int(env) if env else (os.cpu_count() or 1)
    workers = max(1, min(workers, len(variants)))
    if workers == 1 or len(variants) == 1:
        return [_run_variant(v) for v in variants]
    try:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_variant, variants))
    except (OSError, PermissionError):
        return [_run_variant(v) for v in variants]
