"""Fibre sensing control device: four-state agent, backscatter gate, scrambler.

A device is owned by an :class:`~fscdsim.sim_core.Engine` and only changes
through events it schedules there.  Every actuation is written to the device's
action log when its event fires, so log timestamps never go backwards.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

from fscdsim.errors import ConfigInvalid, SchedulingInPast
from fscdsim.fibre_plant import FibrePath
from fscdsim.otdr import EO_SWITCH, GateSchedule, GateTechnology, section_to_window
from fscdsim.sim_core import Engine, EventRecord, add_ticks, check_ticks, ns
from fscdsim.sop import ScramblerConfig

MAX_DECISION_TIME = ns(50)


class FscdState(enum.Enum):
    ALL_ENABLED = 0
    SOPS_ONLY = 1
    BLS_ONLY = 2
    NONE_ENABLED = 3

    @property
    def gate_open(self) -> bool:
        return self in (FscdState.ALL_ENABLED, FscdState.BLS_ONLY)

    @property
    def scrambler_active(self) -> bool:
        return self in (FscdState.BLS_ONLY, FscdState.NONE_ENABLED)

    @property
    def sops_allowed(self) -> bool:
        return not self.scrambler_active

    @property
    def bls_allowed(self) -> bool:
        return self.gate_open

    @classmethod
    def from_flags(cls, sops_allowed: bool, bls_allowed: bool) -> "FscdState":
        return {
            (True, True): cls.ALL_ENABLED,
            (True, False): cls.SOPS_ONLY,
            (False, True): cls.BLS_ONLY,
            (False, False): cls.NONE_ENABLED,
        }[(bool(sops_allowed), bool(bls_allowed))]

    def without_bls(self) -> "FscdState":
        return FscdState.from_flags(self.sops_allowed, False)


@dataclass(frozen=True)
class FscdConfig:
    gate: GateTechnology = EO_SWITCH
    scrambler: ScramblerConfig = field(default_factory=lambda: ScramblerConfig(activation_delay=ns(400_000)))
    detector_threshold: float = -30.0  # dBm
    agent_decision_time: int = ns(50)
    # (delay, duration) of the per-pulse obscuring command, relative to detection
    obscuring: Optional[tuple[int, int]] = None
    max_decision_time: int = MAX_DECISION_TIME

    def __post_init__(self):
        check_ticks(self.agent_decision_time)
        if self.agent_decision_time < 0:
            raise ConfigInvalid("agent_decision_time must be >= 0")
        if self.agent_decision_time > self.max_decision_time:
            raise ConfigInvalid(
                f"agent decision time {self.agent_decision_time} ps exceeds bound {self.max_decision_time} ps")
        if not -1e3 < self.detector_threshold < 1e3:
            raise ConfigInvalid("detector threshold must be finite")
        if self.obscuring is not None:
            delay, duration = self.obscuring
            if delay < 0 or duration < 0:
                raise ConfigInvalid("obscuring delay and duration must be >= 0")

    @property
    def blocking_time(self) -> int:
        """Detection to fully closed gate."""
        return self.agent_decision_time + self.gate.response_time


def obscuring_for_section(z1: float, z2: float, path: FibrePath, gate: GateTechnology) -> tuple[int, int]:
    """Obscuring (delay, duration) that makes the gate cover exactly [z1, z2].

    The command lead compensates for the gate response time.
    """
    t1, width = section_to_window(z1, z2, path)
    if t1 < gate.response_time:
        raise ConfigInvalid(
            f"section starting at {z1} m is closer than the gate can react ({gate.response_time} ps)")
    return t1 - gate.response_time, width


@dataclass(frozen=True)
class ActionRecord:
    time: int
    device_id: str
    kind: str
    detail: str = ""


ALERT_HOOK = Callable[["Fscd", dict], None]


class Fscd:
    def __init__(self, device_id: str, config: FscdConfig, engine: Engine,
                 initial_state: FscdState = FscdState.ALL_ENABLED,
                 on_alert: Optional[ALERT_HOOK] = None, sink: Optional[list] = None):
        self.device_id = device_id
        self.config = config
        self.engine = engine
        self.state = initial_state
        self.on_alert = on_alert
        self.log: list[ActionRecord] = []
        self._sink = sink
        # policy-controlled: per-pulse obscuring windows and interrogator allow-list
        self.obscuring: tuple[tuple[int, int], ...] = (config.obscuring,) if config.obscuring else ()
        self.allowed_interrogators: Optional[frozenset] = None
        closed = config.gate.max_attenuation
        start_att = 0.0 if initial_state.gate_open else closed
        self._gate_target = start_att
        self._scrambler_target = initial_state.scrambler_active
        self.gate_attenuation = start_att
        self.scrambler_on = initial_state.scrambler_active
        self.gate_timeline: list[tuple[int, float]] = [(0, start_att)]
        self.scrambler_timeline: list[tuple[int, bool]] = [(0, initial_state.scrambler_active)]
        self.state_timeline: list[tuple[int, FscdState]] = [(0, initial_state)]
        self._alerts = 0

    # -- event plumbing -------------------------------------------------
    def _record(self, kind: str, detail: str = "") -> Callable[[EventRecord], None]:
        def handler(event: EventRecord) -> None:
            rec = ActionRecord(event.time, self.device_id, kind, detail)
            self.log.append(rec)
            if self._sink is not None:
                self._sink.append(rec)
        return handler

    def _emit(self, t: int, kind: str, detail: str = "", then=None) -> EventRecord:
        record = self._record(kind, detail)

        def handler(event):
            record(event)
            if then is not None:
                then(event)
        return self.engine.schedule(t, kind, self.device_id, detail or None, handler)

    def _command_gate(self, t: int, attenuation: float, reason: str) -> list[EventRecord]:
        if attenuation == self._gate_target:
            return []
        self._gate_target = attenuation
        t_cmd = add_ticks(t, self.config.agent_decision_time)
        return self._actuate_gate(t_cmd, attenuation, reason)

    def _actuate_gate(self, t_cmd: int, attenuation: float, reason: str) -> list[EventRecord]:
        t_done = add_ticks(t_cmd, self.config.gate.response_time)
        detail = f"{attenuation:g}dB:{reason}"

        def settle(event):
            self.gate_attenuation = attenuation
            self.gate_timeline.append((event.time, attenuation))
        return [self._emit(t_cmd, "gate_command", detail),
                self._emit(t_done, "gate_settled", detail, settle)]

    def _command_scrambler(self, t: int, on: bool) -> list[EventRecord]:
        if on == self._scrambler_target:
            return []
        self._scrambler_target = on
        t_cmd = add_ticks(t, self.config.agent_decision_time)
        t_done = add_ticks(t_cmd, self.config.scrambler.activation_delay)
        detail = "on" if on else "off"

        def settle(event):
            self.scrambler_on = on
            self.scrambler_timeline.append((event.time, on))
        return [self._emit(t_cmd, "scrambler_command", detail),
                self._emit(t_done, "scrambler_active", detail, settle)]

    # -- public operations ----------------------------------------------
    def set_state(self, new_state: FscdState, t: Optional[int] = None, reason: str = "policy") -> list[EventRecord]:
        """Move to ``new_state``; returns the actuation events scheduled.

        ``t`` defaults to the engine's current time.  A transition to the
        current state schedules nothing.
        """
        t = self.engine.now() if t is None else check_ticks(t)
        if t < self.engine.now():
            raise SchedulingInPast(f"set_state at {t} ps is in the past")
        if t > self.engine.now():
            pending: list[EventRecord] = []
            self.engine.schedule(t, "deferred_set_state", self.device_id, new_state.name,
                                 lambda e: pending.extend(self.set_state(new_state, e.time, reason)))
            return pending
        if new_state == self.state:
            return []
        old = self.state
        self.state = new_state
        self.state_timeline.append((t, new_state))
        events = [self._emit(t, "state_change", f"{old.name}->{new_state.name}")]
        att = 0.0 if new_state.gate_open else self.config.gate.max_attenuation
        events += self._command_gate(t, att, reason)
        events += self._command_scrambler(t, new_state.scrambler_active)
        return events

    def set_gate_attenuation(self, attenuation: float, t: Optional[int] = None) -> list[EventRecord]:
        """Manual VOA setting, outside the four-state truth table."""
        t = self.engine.now() if t is None else check_ticks(t)
        if not self.config.gate.continuous and attenuation not in (0.0, self.config.gate.max_attenuation):
            raise ConfigInvalid(f"{self.config.gate.name} is binary: 0 or {self.config.gate.max_attenuation} dB")
        if not 0 <= attenuation <= self.config.gate.max_attenuation:
            raise ConfigInvalid("attenuation outside the gate's range")
        return self._command_gate(t, float(attenuation), "manual")

    def on_optical_pulse(self, pulse_power: float, t: Optional[int] = None, authorized: bool = True,
                         source: str = "otdr") -> list[EventRecord]:
        t = self.engine.now() if t is None else check_ticks(t)
        if pulse_power < self.config.detector_threshold:
            return []
        events = [self._emit(t, "pulse_detected", f"{source}:{pulse_power:g}dBm")]
        if not authorized:
            self._alerts += 1
            tag = alert_tag(self.device_id, self._alerts, t)
            events += self.set_state(self.state.without_bls(), t, reason=f"unauthorized:{tag}")
            alert = {"alert_id": self._alerts, "trigger": t, "source": source, "power": pulse_power, "tag": tag}
            hook = self.on_alert
            # the detector reports upstream in parallel with the local blocking decision
            events.append(self._emit(t, "alert_sent", tag, (lambda e: hook(self, alert)) if hook else None))
        elif self.obscuring and self._gate_target == 0.0:
            closed = self.config.gate.max_attenuation
            for delay, duration in self.obscuring:
                events += self._actuate_gate(add_ticks(t, delay), closed, "obscure")
                events += self._actuate_gate(add_ticks(t, delay + duration), 0.0, "obscure")
        return events

    def is_authorized(self, interrogator: str) -> bool:
        return self.allowed_interrogators is None or interrogator in self.allowed_interrogators

    def apply_command(self, command: str, state: Optional[FscdState], t: int, layer: str,
                      tag: str = "") -> list[EventRecord]:
        """STATE_CMD from a controller; logs ``command_complete`` once actuation settles."""
        if command == "disable_bls":
            target = self.state.without_bls()
        elif command == "set_state" and state is not None:
            target = state
        else:
            raise ConfigInvalid(f"unknown command {command!r}")
        events = self.set_state(target, t, reason=layer)
        done = max((e.time for e in events), default=t)
        events.append(self._emit(done, "command_complete", f"{layer}:{tag}"))
        return events

    # -- derived views ---------------------------------------------------
    def gate_at(self, t: int) -> float:
        att = self.gate_timeline[0][1]
        for ts, a in self.gate_timeline:
            if ts > t:
                break
            att = a
        return att

    def scrambler_at(self, t: int) -> bool:
        on = self.scrambler_timeline[0][1]
        for ts, v in self.scrambler_timeline:
            if ts > t:
                break
            on = v
        return on

    def gate_schedule_for_pulse(self, pulse_time: int, authorized: bool = True,
                                detected: bool = True) -> GateSchedule:
        """Predicted gate attenuation seen by backscatter of a pulse at ``pulse_time``.

        Uses the settled gate at the pulse instant and the configured reaction;
        times in the result are relative to the pulse.
        """
        tech = self.config.gate
        base = self.gate_at(pulse_time)
        if base > 0:
            return GateSchedule.constant(base, tech)
        if detected and not authorized:
            return GateSchedule.closed_from(self.config.blocking_time, tech.max_attenuation, tech)
        if detected and self.obscuring:
            steps = {0: 0.0}
            for delay, duration in sorted(self.obscuring):
                start = delay + tech.response_time
                steps[start] = tech.max_attenuation
                steps.setdefault(start + duration, 0.0)
            return GateSchedule(tuple(sorted(steps.items())), tech).simplified()
        return GateSchedule.open(tech)

    def observed_gate_schedule(self, pulse_time: int, horizon: int) -> GateSchedule:
        """Gate schedule reconstructed from settled actuations in the log."""
        steps = [(0, self.gate_at(pulse_time))]
        for ts, a in self.gate_timeline:
            if pulse_time < ts < pulse_time + horizon:
                steps.append((ts - pulse_time, a))
        return GateSchedule(tuple(steps), self.config.gate).simplified()

    def quiescent(self) -> bool:
        return (self.gate_attenuation == self._gate_target and self.scrambler_on == self._scrambler_target)

    def truth_table_holds(self) -> bool:
        gate_closed = self.gate_attenuation > 0
        return (gate_closed != self.state.gate_open) and (self.scrambler_on == self.state.scrambler_active)


def alert_tag(device_id: str, alert_id: int, trigger: int) -> str:
    return f"{device_id}#{alert_id}@{trigger}"


def parse_alert_tag(tag: str) -> tuple[str, int, int]:
    head, trigger = tag.rsplit("@", 1)
    device, alert_id = head.rsplit("#", 1)
    return device, int(alert_id), int(trigger)


def action_log_csv(records) -> str:
    buf = io.StringIO()
    buf.write("t_ps,device_id,record_kind,detail\n")
    for r in records:
        buf.write(f"{r.time},{r.device_id},{r.kind},{r.detail}\n")
    return buf.getvalue()
