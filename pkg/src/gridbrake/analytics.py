"""Closed-form sizing analytics for a shunt braking resistor.

For a single machine that suddenly loses a block of load ``delta_p`` while a
braking resistor absorbing ``p_br`` is connected, the per-unit speed
deviation w(t) obeys

    2H dw/dt = delta_p - p_br - D*w

With damping D > 0 this integrates to an exponential approach toward the
asymptote s = (delta_p - p_br)/D; with the first-swing approximation D ~ 0
the trajectory is the straight line w(t) = w0 + (delta_p - p_br) t / (2H).
The functions below evaluate those trajectories, invert them for the time a
target deviation is reached, and split a total brake rating into
breaker-switched stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class SwingParams:
    """Single-machine swing inputs: inertia, damping, lost load, brake power.

    All powers are per unit on the machine base; ``h_s`` is the inertia
    constant in seconds.
    """

    h_s: float
    d_pu: float = 0.0
    delta_p_pu: float = 0.0
    p_br_pu: float = 0.0

    def __post_init__(self) -> None:
        if not (self.h_s > 0 and math.isfinite(self.h_s)):
            raise ConfigurationError(f"inertia h_s must be positive, got {self.h_s}")
        if self.d_pu < 0:
            raise ConfigurationError(f"damping d_pu must be >= 0, got {self.d_pu}")
        if self.delta_p_pu < 0:
            raise ConfigurationError(f"delta_p_pu must be >= 0, got {self.delta_p_pu}")
        if self.p_br_pu < 0:
            raise ConfigurationError(f"p_br_pu must be >= 0, got {self.p_br_pu}")


@dataclass(frozen=True)
class BrakeElectrical:
    """Bus voltage and brake resistance, both per unit."""

    v_pu: float
    r_br_pu: float

    def __post_init__(self) -> None:
        if self.v_pu < 0:
            raise ConfigurationError(f"v_pu must be >= 0, got {self.v_pu}")
        if not (self.r_br_pu > 0 and math.isfinite(self.r_br_pu)):
            raise DomainError(f"r_br_pu must be positive, got {self.r_br_pu}")


@dataclass(frozen=True)
class TrajectoryQuery:
    """Initial speed deviation and elapsed time since brake insertion."""

    omega0_pu: float
    t_s: float

    def __post_init__(self) -> None:
        if self.t_s < 0:
            raise DomainError(f"elapsed time must be >= 0, got {self.t_s}")


@dataclass(frozen=True)
class RemovalSolution:
    """Time for the speed deviation to reach a target, if it ever does."""

    t_removal_s: float | None
    omega_target_pu: float
    reachable: bool


def brake_power(e: BrakeElectrical) -> float:
    """Real power absorbed by a shunt resistor: v_pu**2 / r_br_pu."""
    return e.v_pu * e.v_pu / e.r_br_pu


def speed_deviation_at(p: SwingParams, q: TrajectoryQuery) -> float:
    """Damped speed-deviation trajectory while the brake is conducting.

    w(t) = (w0 - s) * exp(-D t / 2H) + s   with   s = (delta_p - p_br)/D.

    Requires D > 0; the undamped limit is a straight line and must be
    evaluated with :func:`speed_deviation_first_swing` instead.
    """
    if p.d_pu <= 0:
        raise DomainError(
            "speed_deviation_at requires d_pu > 0; "
            "use speed_deviation_first_swing for the undamped form"
        )
    s = (p.delta_p_pu - p.p_br_pu) / p.d_pu
    return (q.omega0_pu - s) * math.exp(-p.d_pu * q.t_s / (2.0 * p.h_s)) + s


def speed_deviation_first_swing(p: SwingParams, q: TrajectoryQuery) -> float:
    """Undamped (first-swing) trajectory: w0 + (delta_p - p_br) t / (2H)."""
    return q.omega0_pu + (p.delta_p_pu - p.p_br_pu) * q.t_s / (2.0 * p.h_s)


def removal_time_damped(p: SwingParams, omega0_pu: float, omega_target_pu: float) -> RemovalSolution:
    """Invert the damped trajectory for the time the target deviation is hit.

    T = (2H/D) * ln((w0 - s) / (w_target - s)).  The trajectory moves
    monotonically from w0 toward the asymptote s, so the target is reachable
    exactly when the log argument is >= 1; anything else (target beyond the
    asymptote, or behind the start) is reported as unreachable rather than
    raised, so sizing sweeps can iterate freely.
    """
    if p.d_pu <= 0:
        raise DomainError("removal_time_damped requires d_pu > 0")
    if omega0_pu == omega_target_pu:
        return RemovalSolution(0.0, omega_target_pu, True)
    s = (p.delta_p_pu - p.p_br_pu) / p.d_pu
    if omega_target_pu == s:
        # asymptote is approached but never reached in finite time
        return RemovalSolution(None, omega_target_pu, False)
    ratio = (omega0_pu - s) / (omega_target_pu - s)
    if ratio < 1.0:
        return RemovalSolution(None, omega_target_pu, False)
    t = (2.0 * p.h_s / p.d_pu) * math.log(ratio)
    return RemovalSolution(t, omega_target_pu, True)


def removal_time_first_swing(p: SwingParams, omega0_pu: float, omega_target_pu: float) -> RemovalSolution:
    """First-swing (D = 0) removal time: T = 2H (w0 - w_target) / (p_br - delta_p).

    With no damping the deviation ramps at constant rate
    (delta_p - p_br) / 2H; a brake no larger than the lost load only slows
    the rise and can never drive the deviation back down, so such targets
    are unreachable.
    """
    if omega0_pu == omega_target_pu:
        return RemovalSolution(0.0, omega_target_pu, True)
    net = p.p_br_pu - p.delta_p_pu
    if net == 0.0:
        return RemovalSolution(None, omega_target_pu, False)
    t = 2.0 * p.h_s * (omega0_pu - omega_target_pu) / net
    if t < 0.0:
        # constant-rate trajectory moves away from the target
        return RemovalSolution(None, omega_target_pu, False)
    return RemovalSolution(t, omega_target_pu, True)


def allocate_stages(total_brake_mw: float, max_step_mw: float) -> list[float]:
    """Split a total brake rating into the fewest stages of bounded size.

    Uses equal stages at the step limit plus one remainder stage, e.g.
    370 MW with a 130 MW step limit gives [130, 130, 110].  The sum of the
    returned ratings equals ``total_brake_mw`` exactly.
    """
    if total_brake_mw <= 0:
        raise DomainError(f"total_brake_mw must be positive, got {total_brake_mw}")
    if max_step_mw <= 0:
        raise DomainError(f"max_step_mw must be positive, got {max_step_mw}")
    n = math.ceil(total_brake_mw / max_step_mw - 1e-12)
    n = max(n, 1)
    full = [max_step_mw] * (n - 1)
    remainder = total_brake_mw - max_step_mw * (n - 1)
    return full + [remainder]
