"""Algebraic phasor network: lines, grid equivalent, switched shunts.

The network is solved quasi-statically at every integrator stage: dynamic
devices appear as Thevenin sources (EMF behind an internal impedance) and
loads as shunt admittances or constant-power injections.  Everything is
per unit on the system base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, SolverError

#: current-mismatch ceiling for an accepted network solution, pu
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class LineParams:
    """Series line impedance built from per-km values.

    The per-km figures are interpreted as per-unit resistance and reactance
    per kilometre on the system base (not ohms); ``parallel_count`` models a
    multi-circuit corridor.
    """

    resistance_per_km_pu: float = 1e-4
    inductance_per_km_pu: float = 1e-3
    length_km: float = 50.0
    parallel_count: int = 1

    def __post_init__(self) -> None:
        if self.length_km <= 0:
            raise ConfigurationError(f"length_km must be positive, got {self.length_km}")
        if self.parallel_count < 1:
            raise ConfigurationError(
                f"parallel_count must be >= 1, got {self.parallel_count}")

    @property
    def impedance_pu(self) -> complex:
        z = complex(self.resistance_per_km_pu, self.inductance_per_km_pu) * self.length_km
        return z / self.parallel_count


@dataclass(frozen=True)
class GridEquivalent:
    """Bulk-grid Thevenin equivalent parameterised by short-circuit ratio."""

    scr: float = 5.0
    x_over_r: float = 10.0
    source_voltage_pu: float = 1.0

    def __post_init__(self) -> None:
        if self.scr <= 0:
            raise ConfigurationError(f"scr must be positive, got {self.scr}")
        if self.x_over_r <= 0:
            raise ConfigurationError(f"x_over_r must be positive, got {self.x_over_r}")

    @property
    def impedance_pu(self) -> complex:
        return scr_to_thevenin(self.scr, self.x_over_r)


def scr_to_thevenin(scr: float, x_over_r: float) -> complex:
    """Equivalent source impedance with |Z| = 1/scr and the given X/R angle."""
    if scr <= 0:
        raise DomainError(f"scr must be positive, got {scr}")
    if x_over_r <= 0:
        raise DomainError(f"x_over_r must be positive, got {x_over_r}")
    mag = 1.0 / scr
    r = mag / math.sqrt(1.0 + x_over_r * x_over_r)
    return complex(r, r * x_over_r)


# ---------------------------------------------------------------------------
# Switched shunt elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduledTransition:
    effective_time_s: float
    closed: bool
    note: str = ""


class ShuntElement:
    """Breaker-operated shunt: brake resistor (conductive) or capacitor bank.

    The breaker state is piecewise constant; transitions scheduled through
    :func:`set_shunt` become effective after the breaker delay.
    """

    def __init__(self, name: str, kind: str, bus: str, y_closed: complex,
                 closed: bool = False):
        if kind not in ("brake", "capacitor"):
            raise ConfigurationError(f"unknown shunt kind {kind!r}")
        if not (math.isfinite(y_closed.real) and math.isfinite(y_closed.imag)):
            raise ConfigurationError(f"shunt admittance must be finite, got {y_closed}")
        if kind == "brake" and (y_closed.imag != 0.0 or y_closed.real < 0):
            raise ConfigurationError("brake shunts must be purely conductive")
        if kind == "capacitor" and y_closed.real != 0.0:
            raise ConfigurationError("capacitor banks must be purely susceptive")
        self.name = name
        self.kind = kind
        self.bus = bus
        self.y_closed = y_closed
        self.closed = closed
        self._pending: list[ScheduledTransition] = []

    def pending(self) -> tuple[ScheduledTransition, ...]:
        return tuple(self._pending)

    def advance_to(self, t_s: float) -> list[ScheduledTransition]:
        """Apply every transition whose effective time has arrived."""
        due = [tr for tr in self._pending if tr.effective_time_s <= t_s]
        if due:
            self._pending = [tr for tr in self._pending if tr.effective_time_s > t_s]
            for tr in due:
                self.closed = tr.closed
        return due

    @property
    def admittance(self) -> complex:
        return self.y_closed if self.closed else 0.0 + 0.0j


def set_shunt(element: ShuntElement, command: str, command_time_s: float,
              breaker_delay_s: float) -> ScheduledTransition:
    """Schedule a breaker operation; it becomes effective after the delay.

    A later command for the same effective instant supersedes the earlier
    one (last command wins); commanding the present state is a logged no-op
    that still clears contradictory pending transitions.
    """
    if command not in ("close", "open"):
        raise ConfigurationError(f"unknown breaker command {command!r}")
    target = command == "close"
    eff = command_time_s + breaker_delay_s
    note = ""
    superseded = [tr for tr in element._pending if tr.effective_time_s == eff]
    if superseded:
        element._pending = [tr for tr in element._pending if tr.effective_time_s != eff]
        note = "supersedes earlier command"
    if target == element.closed and not element._pending:
        note = "no-op: already in commanded state"
        tr = ScheduledTransition(eff, target, note)
        return tr
    tr = ScheduledTransition(eff, target, note)
    element._pending.append(tr)
    element._pending.sort(key=lambda x: x.effective_time_s)
    return tr


# ---------------------------------------------------------------------------
# Network solution
# ---------------------------------------------------------------------------

@dataclass
class TheveninSource:
    """EMF behind an impedance, optionally current-limited (system base)."""

    bus: int
    emf: complex
    z: complex
    i_limit: float | None = None
    name: str = ""


@dataclass
class PowerLoad:
    """Constant-power draw solved by fixed-point current injection."""

    bus: int
    s: complex
    name: str = ""


@dataclass
class VoltageClamp:
    """Ideal source pinning a bus voltage (used for imposed dips)."""

    bus: int
    v: complex


@dataclass
class NetworkSolution:
    v: np.ndarray                      # bus voltages, complex pu
    source_currents: list[complex]     # per Thevenin source, system base
    limited: list[bool]                # current-limit engaged per source
    clamp_currents: list[complex]      # injection provided by each clamp
    residual: float
    iterations: int

    def voltage(self, bus: int) -> complex:
        return complex(self.v[bus])


class Network:
    """Bus/line topology with composable shunt admittances."""

    def __init__(self, bus_names: list[str]):
        if not bus_names:
            raise ConfigurationError("network needs at least one bus")
        if len(set(bus_names)) != len(bus_names):
            raise ConfigurationError("duplicate bus names")
        self.bus_names = list(bus_names)
        self.index = {name: i for i, name in enumerate(bus_names)}
        self._lines: list[tuple[int, int, complex]] = []
        self._y_lines: np.ndarray | None = None

    @property
    def n_bus(self) -> int:
        return len(self.bus_names)

    def bus(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise ConfigurationError(f"unknown bus {name!r}") from None

    def add_line(self, from_bus: str, to_bus: str, z: complex | LineParams) -> None:
        if isinstance(z, LineParams):
            z = z.impedance_pu
        if z == 0:
            raise ConfigurationError("line impedance must be non-zero")
        self._lines.append((self.bus(from_bus), self.bus(to_bus), complex(z)))
        self._y_lines = None

    @property
    def lines(self) -> list[tuple[int, int, complex]]:
        return list(self._lines)

    def line_admittance_matrix(self) -> np.ndarray:
        if self._y_lines is None:
            y = np.zeros((self.n_bus, self.n_bus), dtype=complex)
            for i, j, z in self._lines:
                yl = 1.0 / z
                y[i, i] += yl
                y[j, j] += yl
                y[i, j] -= yl
                y[j, i] -= yl
            self._y_lines = y
        return self._y_lines

    def build_y(self, shunt_admittances: dict[int, complex] | None = None) -> np.ndarray:
        """Admittance matrix from lines plus per-bus shunt contributions."""
        y = self.line_admittance_matrix().copy()
        if shunt_admittances:
            for b, ys in shunt_admittances.items():
                y[b, b] += ys
        return y


def solve_bus_voltages(
    y_bus: np.ndarray,
    sources: list[TheveninSource],
    loads: list[PowerLoad] | None = None,
    clamps: list[VoltageClamp] | None = None,
    max_iter: int = 50,
    tol: float = 1e-12,
) -> NetworkSolution:
    """Solve the nodal equations for every bus voltage.

    Thevenin sources enter as Norton equivalents; constant-power loads are
    resolved by fixed-point current injection; sources whose current limit
    engages are re-dispatched as clamped current injections.  The accepted
    solution has a current mismatch below ``RESIDUAL_TOL`` at every bus.
    """
    loads = loads or []
    clamps = clamps or []
    n = y_bus.shape[0]
    if not sources and not clamps:
        raise SolverError("islanding: no voltage source connected to the network")

    limited = [False] * len(sources)
    limited_current = [0.0 + 0.0j] * len(sources)
    v = np.ones(n, dtype=complex)
    iterations = 0

    for _outer in range(len(sources) + 2):
        # assemble with the current limited/unlimited split
        y = y_bus.copy()
        rhs = np.zeros(n, dtype=complex)
        for k, src in enumerate(sources):
            if limited[k]:
                rhs[src.bus] += limited_current[k]
            else:
                y[src.bus, src.bus] += 1.0 / src.z
                rhs[src.bus] += src.emf / src.z

        # fixed-point loop for constant-power loads
        converged = not loads
        for _inner in range(max_iter):
            iterations += 1
            rhs_it = rhs.copy()
            for load in loads:
                vb = v[load.bus]
                if abs(vb) < 1e-6:
                    raise SolverError(
                        f"constant-power load {load.name!r} sees a collapsed voltage")
                rhs_it[load.bus] -= (load.s / vb).conjugate()
            y_it, rhs_it = _apply_clamps(y, rhs_it, clamps)
            try:
                v_new = np.linalg.solve(y_it, rhs_it)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"singular network: {exc}") from exc
            if not loads:
                v = v_new
                converged = True
                break
            delta = float(np.max(np.abs(v_new - v)))
            v = v_new
            if delta < tol:
                converged = True
                break
        if not converged:
            raise SolverError(
                f"constant-power load iteration did not converge after {max_iter} "
                f"iterations (last step {delta:.3e} pu)")

        # enforce source current limits
        newly_limited = False
        for k, src in enumerate(sources):
            if limited[k] or src.i_limit is None:
                continue
            i_k = (src.emf - v[src.bus]) / src.z
            if abs(i_k) > src.i_limit:
                limited[k] = True
                limited_current[k] = i_k * (src.i_limit / abs(i_k))
                newly_limited = True
        if not newly_limited:
            break

    currents = []
    for k, src in enumerate(sources):
        if limited[k]:
            currents.append(limited_current[k])
        else:
            currents.append((src.emf - v[src.bus]) / src.z)

    # residual on the final assembled system (clamped rows are definitional)
    y = y_bus.copy()
    rhs = np.zeros(n, dtype=complex)
    for k, src in enumerate(sources):
        if limited[k]:
            rhs[src.bus] += limited_current[k]
        else:
            y[src.bus, src.bus] += 1.0 / src.z
            rhs[src.bus] += src.emf / src.z
    for load in loads:
        rhs[load.bus] -= (load.s / v[load.bus]).conjugate()
    mismatch = y @ v - rhs
    clamp_currents = [complex(mismatch[c.bus]) for c in clamps]
    for c in clamps:
        mismatch[c.bus] = 0.0
    residual = float(np.max(np.abs(mismatch))) if n else 0.0
    if residual > RESIDUAL_TOL:
        raise SolverError(f"network residual {residual:.3e} pu exceeds {RESIDUAL_TOL}")
    return NetworkSolution(v, currents, limited, clamp_currents, residual, iterations)


def _apply_clamps(y: np.ndarray, rhs: np.ndarray,
                  clamps: list[VoltageClamp]) -> tuple[np.ndarray, np.ndarray]:
    if not clamps:
        return y, rhs
    y = y.copy()
    rhs = rhs.copy()
    for c in clamps:
        y[c.bus, :] = 0.0
        y[c.bus, c.bus] = 1.0
        rhs[c.bus] = c.v
    return y, rhs
