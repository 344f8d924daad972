"""System base definition and per-unit conversion helpers.

Every other module quotes powers in per unit on a shared apparent-power
base and timing in seconds or nominal-frequency cycles.  The default base
is 1000 MVA / 345 kV / 60 Hz, sized so the reference 1 GW load cluster is
exactly 1.0 pu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class SystemBase:
    """Apparent-power, voltage and frequency base shared by a study."""

    s_base_mva: float = 1000.0
    v_base_kv: float = 345.0
    f_nominal_hz: float = 60.0

    def __post_init__(self) -> None:
        if not (self.s_base_mva > 0 and math.isfinite(self.s_base_mva)):
            raise ConfigurationError(f"s_base_mva must be positive, got {self.s_base_mva}")
        if not (self.v_base_kv > 0 and math.isfinite(self.v_base_kv)):
            raise ConfigurationError(f"v_base_kv must be positive, got {self.v_base_kv}")
        if not (self.f_nominal_hz > 0 and math.isfinite(self.f_nominal_hz)):
            raise ConfigurationError(f"f_nominal_hz must be positive, got {self.f_nominal_hz}")

    @property
    def omega_nominal_rad_s(self) -> float:
        """Nominal electrical angular speed, rad/s."""
        return 2.0 * math.pi * self.f_nominal_hz


def to_pu(value_mw: float, base: SystemBase) -> float:
    """Convert a real power in MW to per unit on the system base."""
    return value_mw / base.s_base_mva


def from_pu(value_pu: float, base: SystemBase) -> float:
    """Convert a per-unit real power back to MW on the system base."""
    return value_pu * base.s_base_mva


def cycles_to_seconds(n_cycles: float, f_nominal_hz: float = 60.0) -> float:
    """Convert a breaker/relay delay quoted in cycles to seconds.

    Raises DomainError for negative cycle counts; zero is a valid no-delay.
    """
    if n_cycles < 0:
        raise DomainError(f"cycle count must be non-negative, got {n_cycles}")
    if f_nominal_hz <= 0:
        raise ConfigurationError(f"f_nominal_hz must be positive, got {f_nominal_hz}")
    return n_cycles / f_nominal_hz
