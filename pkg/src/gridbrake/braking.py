"""Breaker-switched braking-resistor bank: stages, schedule, thermal proxy.

A bank is an ordered list of stages, each a shunt resistor rated in MW at
nominal voltage and operated by its own breaker.  Schedules either carry
explicit command times or anchor themselves to the moment a load-loss
event is observed; per-stage conduction energy is accumulated as an I^2*t
proxy against a thermal limit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .analytics import allocate_stages
from .errors import ConfigurationError, ValidationError
from .units import SystemBase

#: hard ceiling on any stage's conduction time when a cap is configured, s
DEFAULT_INSERTION_CAP_S = 1.0

#: thermal-limit margin over the worst staged dwell (backup-breaker room)
_THERMAL_MARGIN = 3.0
_WORST_STAGED_DWELL_S = 0.85


@dataclass
class BrakeStage:
    """One breaker-operated resistor stage.

    ``rating_mw`` is the absorbed power at nominal (1.0 pu) voltage; the
    actual dissipation follows the solved bus voltage.  Command times are
    breaker-command instants; the state change lands ``breaker_delay_s``
    later.  Removal timing is given either as a conduction ``dwell_s`` or
    an absolute effective time ``remove_at_s`` (at most one), or left open.
    """

    rating_mw: float
    breaker_delay_s: float = 0.05
    dwell_s: float | None = None
    remove_at_s: float | None = None
    insert_at_s: float | None = None       # absolute effective insertion (explicit mode)
    insert_command_s: float | None = None  # resolved when the schedule anchors
    remove_command_s: float | None = None
    thermal_limit_mj: float | None = None
    energy_mj: float = 0.0
    thermal_violation: bool = False

    def __post_init__(self) -> None:
        if self.rating_mw <= 0:
            raise ConfigurationError(f"rating_mw must be positive, got {self.rating_mw}")
        if self.breaker_delay_s < 0:
            raise ConfigurationError("breaker_delay_s must be >= 0")
        if self.dwell_s is not None and self.remove_at_s is not None:
            raise ConfigurationError("give dwell_s or remove_at_s, not both")
        if self.dwell_s is not None and self.dwell_s <= 0:
            raise ConfigurationError("dwell_s must be positive")

    def conductance_pu(self, base: SystemBase) -> float:
        return self.rating_mw / base.s_base_mva

    def resistance_pu(self, base: SystemBase) -> float:
        return base.s_base_mva / self.rating_mw

    @property
    def limit_mj(self) -> float:
        if self.thermal_limit_mj is not None:
            return self.thermal_limit_mj
        return _THERMAL_MARGIN * self.rating_mw * _WORST_STAGED_DWELL_S

    @property
    def on_time_s(self) -> float | None:
        if self.insert_command_s is None:
            return None
        return self.insert_command_s + self.breaker_delay_s

    @property
    def off_time_s(self) -> float | None:
        if self.remove_command_s is None:
            return None
        return self.remove_command_s + self.breaker_delay_s


@dataclass
class BrakeSchedule:
    """Ordered stages plus the trigger mode that anchors their commands."""

    stages: list[BrakeStage]
    trigger: str = "on_load_loss"   # or "explicit"
    max_total_insertion_s: float | None = DEFAULT_INSERTION_CAP_S
    bus: str = "pcc"

    def __post_init__(self) -> None:
        if self.trigger not in ("on_load_loss", "explicit"):
            raise ConfigurationError(f"unknown brake trigger {self.trigger!r}")
        if not self.stages:
            raise ConfigurationError("schedule needs at least one stage")
        if (self.max_total_insertion_s is not None
                and self.max_total_insertion_s > DEFAULT_INSERTION_CAP_S + 1e-12):
            raise ConfigurationError(
                f"max_total_insertion_s exceeds the {DEFAULT_INSERTION_CAP_S} s hard cap")
        for st in self.stages:
            if (self.max_total_insertion_s is not None and st.dwell_s is not None
                    and st.dwell_s > self.max_total_insertion_s + 1e-12):
                raise ConfigurationError(
                    f"stage dwell {st.dwell_s} s exceeds the "
                    f"{self.max_total_insertion_s} s insertion cap")

    @property
    def total_rating_mw(self) -> float:
        return sum(st.rating_mw for st in self.stages)

    def copy(self) -> "BrakeSchedule":
        return BrakeSchedule([replace(st) for st in self.stages], self.trigger,
                             self.max_total_insertion_s, self.bus)

    def anchor(self, load_loss_time_s: float) -> None:
        """Resolve every stage's command times against the observed loss.

        Insertion commands are issued at the loss instant (the breaker adds
        its own delay); removals come from the per-stage dwell or absolute
        removal time.  Dwells are validated against the insertion cap.
        """
        for st in self.stages:
            if self.trigger == "on_load_loss":
                st.insert_command_s = load_loss_time_s
            else:
                if st.insert_at_s is None:
                    raise ConfigurationError(
                        "explicit-trigger stages need insert_at_s")
                st.insert_command_s = st.insert_at_s - st.breaker_delay_s
            on = st.on_time_s
            if st.dwell_s is not None:
                st.remove_command_s = on + st.dwell_s - st.breaker_delay_s
            elif st.remove_at_s is not None:
                st.remove_command_s = st.remove_at_s - st.breaker_delay_s
            off = st.off_time_s
            if off is not None:
                if off < on:
                    raise ValidationError(
                        f"stage removal at {off} s precedes insertion at {on} s")
                dwell = off - on
                if (self.max_total_insertion_s is not None
                        and dwell > self.max_total_insertion_s + 1e-12):
                    raise ValidationError(
                        f"stage conduction {dwell:.3f} s exceeds the "
                        f"{self.max_total_insertion_s} s insertion cap")


def three_stage_schedule(load_loss_time_s: float, breaker_delay_s: float) -> BrakeSchedule:
    """370 MW bank split 130/130/110 with chained removals.

    All stages close together one breaker delay after the loss; stage 1
    opens after 0.1 s of conduction, stage 2 0.25 s later, stage 3 another
    0.5 s later, so the longest dwell is 0.85 s and stays inside the 1 s
    insertion cap.
    """
    ratings = allocate_stages(370.0, 130.0)
    dwells = (0.1, 0.35, 0.85)
    stages = [BrakeStage(rating_mw=r, breaker_delay_s=breaker_delay_s, dwell_s=d)
              for r, d in zip(ratings, dwells)]
    schedule = BrakeSchedule(stages, trigger="on_load_loss")
    schedule.anchor(load_loss_time_s)
    return schedule


def step_thermal(stage: BrakeStage, dissipated_power_pu: float, dt_s: float,
                 base: SystemBase) -> float:
    """Accumulate conduction energy over one step; flag (never abort) on limit.

    Pass the actual dissipated power, zero while the breaker is open.
    Returns the updated accumulated energy in MJ.
    """
    if dt_s <= 0:
        raise ConfigurationError(f"dt_s must be positive, got {dt_s}")
    stage.energy_mj += dissipated_power_pu * base.s_base_mva * dt_s
    if stage.energy_mj > stage.limit_mj:
        stage.thermal_violation = True
    return stage.energy_mj


@dataclass(frozen=True)
class BreakerCommand:
    stage_index: int
    command: str          # "close" | "open"
    command_time_s: float


class BrakeController:
    """Emits each scheduled breaker command exactly once as time advances.

    In on-load-loss mode the schedule anchors to the first observed loss;
    until then no commands exist.  Re-running over the same trace yields an
    identical command log.
    """

    def __init__(self, schedule: BrakeSchedule):
        self.schedule = schedule.copy()
        self._anchored = False
        self._emitted: set[tuple[int, str]] = set()
        if self.schedule.trigger == "explicit":
            self.schedule.anchor(0.0)
            self._anchored = True

    @property
    def anchored(self) -> bool:
        return self._anchored

    def step(self, t_s: float, load_loss_time_s: float | None) -> list[BreakerCommand]:
        """Commands due at or before ``t_s``, in stage order then kind."""
        if not self._anchored:
            if load_loss_time_s is None:
                return []
            self.schedule.anchor(load_loss_time_s)
            self._anchored = True
        out: list[BreakerCommand] = []
        for i, st in enumerate(self.schedule.stages):
            for kind, cmd_t in (("close", st.insert_command_s),
                                ("open", st.remove_command_s)):
                if cmd_t is None or (i, kind) in self._emitted:
                    continue
                if cmd_t <= t_s:
                    self._emitted.add((i, kind))
                    out.append(BreakerCommand(i, kind, cmd_t))
        return out

    def unanchored_warning(self) -> str | None:
        if not self._anchored:
            return "brake schedule waited for a load-loss event that never occurred"
        return None
