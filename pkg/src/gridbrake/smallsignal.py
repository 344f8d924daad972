"""Linearization and eigenvalue sweeps of the coupled system.

The state matrix comes from central finite differences on the composite
derivative function; the algebraic network is re-solved at every perturbed
state, so any device set the scenario can express is linearizable.  Sweeps
trace the spectrum over grid strength and brake size around the
brake-conducting, post-load-loss operating point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.optimize

from .engine import Plant, Scenario, find_equilibrium
from .errors import DomainError, InitializationError, NumericError
from .network import ShuntElement

#: modes with |eigenvalue| below this are structural zeros (angle reference)
ZERO_MODE_TOL = 1e-9

_FD_STEP = 1e-6
_EQ_TOL = 1e-9


@dataclass(frozen=True)
class LinearModel:
    """Dense state matrix around an operating point."""

    state_names: tuple[str, ...]
    a: np.ndarray
    operating_point: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.state_names)
        if self.a.shape != (n, n):
            raise DomainError(
                f"state matrix shape {self.a.shape} does not match "
                f"{n} state names")
        if not np.all(np.isfinite(self.a)):
            raise NumericError("state matrix has non-finite entries")


@dataclass(frozen=True)
class EigenPoint:
    """Spectrum at one (grid strength, brake size) operating point."""

    scr: float
    brake_mw: float
    eigenvalues: tuple[complex, ...]
    dominant: complex | None
    stable: bool
    error: str | None = None


@dataclass
class OperatingPoint:
    """A plant frozen at an equilibrium with a given discrete configuration."""

    plant: Plant
    x: np.ndarray

    @property
    def state_names(self) -> tuple[str, ...]:
        return self.plant.state_names


def nominal_operating_point(scenario: Scenario) -> OperatingPoint:
    plant = Plant(scenario)
    eq = find_equilibrium(scenario, plant)
    return OperatingPoint(plant, eq.x0)


def braked_operating_point(scenario: Scenario, brake_mw: float,
                           drop_it_load: bool = True) -> OperatingPoint:
    """Equilibrium with the IT load gone and a brake stage conducting.

    Setpoints stay at their pre-event values (the machines keep their
    dispatch); the new steady state is found numerically from the nominal
    one.  Brake size only enters the small-signal model while conducting,
    so this is the natural point for the sweep.
    """
    plant = Plant(scenario)
    eq = find_equilibrium(scenario, plant)

    if drop_it_load:
        plant.cluster.it_connected = [False] * len(plant.cluster.buildings)
    if brake_mw > 0:
        g = brake_mw / scenario.base.s_base_mva
        plant.brake_elements = [ShuntElement("brake_sweep", "brake",
                                             scenario.pcc_bus, complex(g, 0.0),
                                             closed=True)]
    plant.invalidate_topology()

    sol = scipy.optimize.root(plant.derivatives, eq.x0, method="hybr", tol=1e-13)
    resid = float(np.max(np.abs(plant.derivatives(sol.x))))
    if resid > _EQ_TOL:
        raise InitializationError(
            f"no equilibrium at brake {brake_mw:g} MW "
            f"(residual {resid:.3e}): {sol.message}")
    return OperatingPoint(plant, sol.x)


def linearize(scenario: Scenario, point: OperatingPoint | None = None) -> LinearModel:
    """State matrix by central finite differences at an equilibrium.

    Each state is perturbed by 1e-6 scaled to its magnitude, the network
    re-solved per evaluation.  Points that are not equilibria (residual
    above 1e-9) are rejected.
    """
    if point is None:
        point = nominal_operating_point(scenario)
    plant, x = point.plant, point.x
    resid = float(np.max(np.abs(plant.derivatives(x)))) if len(x) else 0.0
    if resid > _EQ_TOL:
        raise InitializationError(
            f"linearization point is not an equilibrium (residual {resid:.3e})")
    n = len(x)
    a = np.zeros((n, n))
    for j in range(n):
        h = _FD_STEP * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += h
        xm = x.copy()
        xm[j] -= h
        a[:, j] = (plant.derivatives(xp) - plant.derivatives(xm)) / (2.0 * h)
    return LinearModel(plant.state_names, a, x.copy())


def eigenvalues(model: LinearModel) -> np.ndarray:
    """Full spectrum of the state matrix, sorted by descending real part.

    Conjugate pairs sort adjacently (positive imaginary part first).
    """
    try:
        vals = scipy.linalg.eigvals(model.a)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - library failure
        raise NumericError(f"eigenvalue solver failed: {exc}") from exc
    order = np.lexsort((-vals.imag, np.abs(vals.imag), -vals.real))
    return vals[order]


def dominant_eigenvalue(vals) -> complex | None:
    """Largest real part, ignoring structural zero modes."""
    candidates = [v for v in vals if abs(v) > ZERO_MODE_TOL]
    if not candidates:
        return None
    return max(candidates, key=lambda v: v.real)


def eigen_sweep(template: Scenario, scr_values, brake_sizes_mw) -> list[EigenPoint]:
    """One spectrum per (SCR, brake size), scr-major order.

    Every point re-solves its own equilibrium with the brake conducting;
    an equilibrium failure flags the point and the sweep continues.
    """
    scr_values = list(scr_values)
    brake_sizes = list(brake_sizes_mw)
    if not scr_values or not brake_sizes:
        raise DomainError("eigen sweep needs non-empty scr and brake axes")
    points: list[EigenPoint] = []
    for scr in scr_values:
        scenario = replace(template, grid=replace(template.grid, scr=scr))
        for mw in brake_sizes:
            try:
                point = braked_operating_point(scenario, mw)
                model = linearize(scenario, point)
                vals = eigenvalues(model)
                dom = dominant_eigenvalue(vals)
                stable = bool(np.all(vals.real < 0.0))
                points.append(EigenPoint(scr, mw, tuple(vals), dom, stable))
            except Exception as exc:  # noqa: BLE001 - flagged, sweep continues
                points.append(EigenPoint(scr, mw, (), None, False, str(exc)))
    return points


def write_eigen_csv(points: list[EigenPoint], path) -> None:
    """CSV schema: scr, brake_mw, eig_index, re_1_per_s, im_rad_per_s, flags."""
    with open(path, "w", newline="\n") as f:
        f.write("scr,brake_mw,eig_index,re_1_per_s,im_rad_per_s,"
                "dominant_flag,stable_flag\n")
        for p in points:
            for i, v in enumerate(p.eigenvalues):
                dom = 1 if (p.dominant is not None and v == p.dominant) else 0
                f.write(f"{p.scr:g},{p.brake_mw:g},{i},"
                        f"{v.real:.12g},{v.imag:.12g},{dom},"
                        f"{1 if p.stable else 0}\n")
