"""Data-center load cluster, undervoltage/overvoltage relays, load-loss events.

A cluster is a set of buildings, each splitting its rating into a
voltage-sensitive IT share (tripped to UPS by its voltage relay) and a
non-IT remainder (motor-driven plus static) that stays on the grid.  Two
disturbance shapes produce load-step events: a plant-level fault transfers
one whole building, a grid voltage excursion transfers the IT share of
every building whose relay trips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError, ValidationError
from .units import cycles_to_seconds

#: magnitude/duration tolerance envelope: staying beyond a threshold longer
#: than its dwell trips the relay.  The published curve's "steady" leg is
#: encoded with a 10 s dwell.
DEFAULT_UNDERVOLTAGE = ((0.0, 0.02), (0.70, 0.5), (0.80, 10.0))
DEFAULT_OVERVOLTAGE = ((1.20, 0.5), (1.10, 10.0))


@dataclass(frozen=True)
class VoltageRelay:
    """ANSI 27/59 relay with a magnitude/duration tolerance envelope."""

    undervoltage: tuple[tuple[float, float], ...] = DEFAULT_UNDERVOLTAGE
    overvoltage: tuple[tuple[float, float], ...] = DEFAULT_OVERVOLTAGE
    pickup_cycles: float = 1.0

    def __post_init__(self) -> None:
        for segs, rising in ((self.undervoltage, True), (self.overvoltage, False)):
            thresholds = [s[0] for s in segs]
            if rising and thresholds != sorted(thresholds):
                raise ConfigurationError("undervoltage thresholds must be non-decreasing")
            if not rising and thresholds != sorted(thresholds, reverse=True):
                raise ConfigurationError("overvoltage thresholds must be non-increasing")
            for _, dwell in segs:
                if dwell <= 0:
                    raise ConfigurationError("envelope dwell values must be positive")
        if self.pickup_cycles < 0:
            raise ConfigurationError("pickup_cycles must be >= 0")


@dataclass(frozen=True)
class TripDecision:
    tripped: bool
    time_s: float | None = None
    segment: tuple[float, float] | None = None


def relay_evaluate(relay: VoltageRelay, times_s, voltages_pu,
                   f_nominal_hz: float = 60.0) -> TripDecision:
    """Evaluate a sampled voltage history against the relay envelope.

    The relay trips when the voltage stays outside any envelope segment
    longer than that segment's dwell; the trip timestamp is the violation
    start plus the dwell plus the pickup delay.  The earliest trip over all
    segments wins.  Decisions are a pure function of the samples.
    """
    times = list(times_s)
    volts = list(voltages_pu)
    if not times:
        return TripDecision(False)
    pickup = cycles_to_seconds(relay.pickup_cycles, f_nominal_hz)

    best: TripDecision = TripDecision(False)
    for segs, is_under in ((relay.undervoltage, True), (relay.overvoltage, False)):
        for threshold, dwell in segs:
            start = None
            for t, v in zip(times, volts):
                outside = v < threshold if is_under else v > threshold
                if outside:
                    if start is None:
                        start = t
                    elif t - start >= dwell:
                        trip_t = start + dwell + pickup
                        if not best.tripped or trip_t < best.time_s:
                            best = TripDecision(True, trip_t, (threshold, dwell))
                        break
                else:
                    start = None
    return best


class RelayMonitor:
    """Incremental relay evaluation over a streaming voltage signal."""

    def __init__(self, relay: VoltageRelay, f_nominal_hz: float = 60.0):
        self.relay = relay
        self.pickup_s = cycles_to_seconds(relay.pickup_cycles, f_nominal_hz)
        self._starts: dict[tuple[float, float, bool], float | None] = {}
        for th, dw in relay.undervoltage:
            self._starts[(th, dw, True)] = None
        for th, dw in relay.overvoltage:
            self._starts[(th, dw, False)] = None
        self.decision = TripDecision(False)

    def observe(self, t_s: float, v_pu: float) -> TripDecision | None:
        """Feed one sample; returns the decision the first time it trips."""
        if self.decision.tripped:
            return None
        for (th, dw, is_under), start in self._starts.items():
            outside = v_pu < th if is_under else v_pu > th
            if outside:
                if start is None:
                    self._starts[(th, dw, is_under)] = t_s
                elif t_s - start >= dw:
                    self.decision = TripDecision(True, start + dw + self.pickup_s, (th, dw))
                    return self.decision
            else:
                self._starts[(th, dw, is_under)] = None
        return None


# ---------------------------------------------------------------------------
# Load cluster
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DataCenterBuilding:
    """One building of the cluster with its load split and IT-feeder relay."""

    rated_mw: float = 200.0
    it_fraction: float = 0.5
    motor_fraction_of_non_it: float = 0.6
    relay: VoltageRelay = VoltageRelay()
    bus: str = "pcc"

    def __post_init__(self) -> None:
        if self.rated_mw <= 0:
            raise ConfigurationError(f"rated_mw must be positive, got {self.rated_mw}")
        for name in ("it_fraction", "motor_fraction_of_non_it"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must be within [0, 1], got {v}")

    @property
    def it_mw(self) -> float:
        return self.rated_mw * self.it_fraction

    @property
    def non_it_mw(self) -> float:
        return self.rated_mw - self.it_mw

    @property
    def motor_mw(self) -> float:
        return self.non_it_mw * self.motor_fraction_of_non_it

    @property
    def static_mw(self) -> float:
        return self.non_it_mw - self.motor_mw


@dataclass(frozen=True)
class LoadStepEvent:
    """Block of demand leaving the grid at an instant."""

    time_s: float
    delta_p_mw: float
    affected_buildings: tuple[int, ...]
    kind: str = "it_transfer"   # or "building_fault"

    def __post_init__(self) -> None:
        if self.delta_p_mw < 0:
            raise ConfigurationError("delta_p_mw must be >= 0")
        if self.kind not in ("it_transfer", "building_fault"):
            raise ConfigurationError(f"unknown load-step kind {self.kind!r}")


@dataclass(frozen=True)
class PlantFault:
    """Bus fault inside one building; overcurrent protection clears it."""

    building_index: int
    time_s: float = 0.0


@dataclass(frozen=True)
class GridVoltageExcursion:
    """Sampled PCC voltage waveform evaluated against every IT relay."""

    times_s: tuple[float, ...]
    voltages_pu: tuple[float, ...]


def scenario_load_loss(cluster: list[DataCenterBuilding],
                       disturbance: PlantFault | GridVoltageExcursion,
                       f_nominal_hz: float = 60.0) -> LoadStepEvent:
    """Load-step event produced by a disturbance against the cluster.

    A plant fault transfers the whole faulted building (IT and non-IT) to
    the UPS; a grid voltage excursion transfers only the IT share of every
    building whose relay trips, the non-IT loads staying connected.
    """
    if not cluster:
        raise ValidationError("cluster must contain at least one building")
    if isinstance(disturbance, PlantFault):
        idx = disturbance.building_index
        if not 0 <= idx < len(cluster):
            raise ValidationError(f"no building with index {idx}")
        return LoadStepEvent(disturbance.time_s, cluster[idx].rated_mw, (idx,),
                             kind="building_fault")

    tripped: list[int] = []
    trip_times: list[float] = []
    for i, b in enumerate(cluster):
        decision = relay_evaluate(b.relay, disturbance.times_s,
                                  disturbance.voltages_pu, f_nominal_hz)
        if decision.tripped:
            tripped.append(i)
            trip_times.append(decision.time_s)
    if not tripped:
        return LoadStepEvent(0.0, 0.0, ())
    delta = sum(cluster[i].it_mw for i in tripped)
    return LoadStepEvent(min(trip_times), delta, tuple(tripped))


@dataclass
class ClusterLoadModel:
    """Grid-side connection state of every building's load components.

    The motor share is aggregated into a single dynamic machine elsewhere;
    this model tracks the IT and static admittance shares plus the fraction
    of the aggregate motor still connected.
    """

    buildings: list[DataCenterBuilding]
    it_connected: list[bool] = field(default_factory=list)
    static_connected: list[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.it_connected:
            self.it_connected = [True] * len(self.buildings)
        if not self.static_connected:
            self.static_connected = [True] * len(self.buildings)

    def connected_it_mw(self) -> float:
        return sum(b.it_mw for b, on in zip(self.buildings, self.it_connected) if on)

    def connected_static_mw(self) -> float:
        return sum(b.static_mw for b, on in zip(self.buildings, self.static_connected) if on)

    def motor_scale(self) -> float:
        """Fraction of the aggregate motor rating still on the grid."""
        total = sum(b.motor_mw for b in self.buildings)
        if total == 0:
            return 0.0
        live = sum(b.motor_mw for b, on in zip(self.buildings, self.static_connected) if on)
        return live / total

    def total_motor_mw(self) -> float:
        return sum(b.motor_mw for b in self.buildings)


def apply_load_step(model: ClusterLoadModel, event: LoadStepEvent) -> None:
    """Disconnect the demand named by the event from the grid side.

    IT transfers drop only the IT share of the affected buildings; a
    building fault drops the whole building.  Shedding more IT than is
    connected is a validation error.
    """
    if event.kind == "building_fault":
        for i in event.affected_buildings:
            model.it_connected[i] = False
            model.static_connected[i] = False
        return
    connected = sum(model.buildings[i].it_mw for i in event.affected_buildings
                    if model.it_connected[i])
    if event.delta_p_mw > connected + 1e-9:
        raise ValidationError(
            f"over-shedding: event drops {event.delta_p_mw} MW but only "
            f"{connected} MW of IT load is connected")
    for i in event.affected_buildings:
        model.it_connected[i] = False
