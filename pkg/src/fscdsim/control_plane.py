"""Three-layer sensing control plane: FSCD agents, region controllers, manager.

Policies flow down (manager -> region controller -> agents) and are
acknowledged back up.  Unauthorized-pulse alerts flow up; each controller that
sees one commands the agents below it to drop backscatter sensing.

Every hop is an encoded frame carried over a :class:`ControlLink`.  A frame
sent at ``t`` is handled at ``t + n*L/c + link.processing_delay +
receiver.processing_delay``.  Agents have no extra receive delay: their
decision time is applied by the device itself.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from fscdsim.errors import ConfigInvalid, NoAlertInLog, UnknownPath, UnreachableAgent
from fscdsim.fibre_plant import C_VACUUM, DEFAULT_GROUP_INDEX
from fscdsim.fscd import ActionRecord, Fscd, FscdState, parse_alert_tag
from fscdsim.sim_core import TICKS_PER_SECOND, Engine, EventRecord, add_ticks, check_ticks
from fscdsim.wire import (
    AckBody,
    AlertBody,
    Command,
    ControlMessage,
    Layer,
    MsgType,
    PolicyBody,
    StateCmdBody,
    StateReportBody,
    decode_message,
    encode_message,
)


@dataclass(frozen=True)
class Policy:
    path_id: str
    sops_allowed: bool
    bls_allowed: bool
    obscured_sections: tuple[tuple[int, int], ...] = ()
    interrogators: Optional[tuple[str, ...]] = None  # None: any interrogator

    def __post_init__(self):
        windows = tuple((int(d), int(w)) for d, w in self.obscured_sections)
        object.__setattr__(self, "obscured_sections", windows)
        end = -1
        for delay, duration in windows:
            if delay < 0 or duration <= 0:
                raise ConfigInvalid("obscured section needs delay >= 0 and duration > 0")
            if delay < end:
                raise ConfigInvalid("obscured sections must be sorted and non-overlapping")
            end = delay + duration
        if self.interrogators is not None:
            object.__setattr__(self, "interrogators", tuple(self.interrogators))

    @property
    def state(self) -> FscdState:
        return FscdState.from_flags(self.sops_allowed, self.bls_allowed)


@dataclass(frozen=True)
class ControlLink:
    a: str
    b: str
    fibre_length: float = 2.0  # m
    processing_delay: int = 0  # extra receive-side delay, ticks
    group_index: float = DEFAULT_GROUP_INDEX

    def __post_init__(self):
        if self.fibre_length < 0:
            raise ConfigInvalid("control link length must be >= 0")
        if self.processing_delay < 0:
            raise ConfigInvalid("link processing delay must be >= 0")

    @property
    def propagation(self) -> int:
        return check_ticks(round(self.group_index * self.fibre_length / C_VACUUM * TICKS_PER_SECOND))

    def connects(self, x: str, y: str) -> bool:
        return {self.a, self.b} == {x, y}


@dataclass
class LayerNode:
    layer: Layer
    node_id: str
    children: tuple[str, ...] = ()
    processing_delay: int = 0


@dataclass(frozen=True)
class LatencyRow:
    layer: str
    trigger: int
    completed: int

    @property
    def response(self) -> int:
        return self.completed - self.trigger


class ControlPlane:
    def __init__(self, engine: Engine, msm: LayerNode, controllers: Sequence[LayerNode],
                 agents: dict[str, Fscd], links: Iterable[ControlLink],
                 path_members: dict[str, Sequence[str]], sensing_paths: Iterable[str] = (),
                 sink: Optional[list] = None):
        self.engine = engine
        self.msm = msm
        self.controllers = {c.node_id: c for c in controllers}
        self.agents = dict(agents)
        self.links = list(links)
        self.path_members = {p: tuple(m) for p, m in path_members.items()}
        self.records: list[ActionRecord] = sink if sink is not None else []
        self.rejected: list[tuple[int, str, str]] = []
        self._check_structure(set(sensing_paths))

        names = sorted([msm.node_id, *self.controllers, *self.agents])
        self.wire_id = {n: i + 1 for i, n in enumerate(names)}
        self.node_name = {i: n for n, i in self.wire_id.items()}
        self.path_wire_id = {p: i + 1 for i, p in enumerate(sorted(self.path_members))}
        self.path_name = {i: p for p, i in self.path_wire_id.items()}
        self._interrogator_ids: dict[str, int] = {}
        self.region_of = {a: c.node_id for c in controllers for a in c.children}

        self._tx_seq: dict[tuple[str, str], int] = {}
        self._rx_seq: dict[tuple[str, str], int] = {}
        self._pending_acks: dict[tuple[str, int], set[str]] = {}
        self.acked: dict[str, set[str]] = {}
        self.reports: dict[str, StateReportBody] = {}

        for fscd in self.agents.values():
            fscd.on_alert = self._agent_alert
            if fscd._sink is None:
                fscd._sink = self.records

    # -- topology --------------------------------------------------------
    def _check_structure(self, sensing_paths: set[str]) -> None:
        if self.msm.layer is not Layer.MSM:
            raise ConfigInvalid("top node must be an MSM")
        if set(self.msm.children) != set(self.controllers):
            raise ConfigInvalid("the manager must parent exactly the region controllers")
        owner: dict[str, str] = {}
        for c in self.controllers.values():
            if c.layer is not Layer.SRC:
                raise ConfigInvalid(f"{c.node_id} is not a region controller")
            for a in c.children:
                if a not in self.agents:
                    raise ConfigInvalid(f"controller {c.node_id} lists unknown agent {a}")
                if a in owner:
                    raise ConfigInvalid(f"agent {a} is managed by both {owner[a]} and {c.node_id}")
                owner[a] = c.node_id
        missing = set(self.agents) - set(owner)
        if missing:
            raise ConfigInvalid(f"agents without a region controller: {sorted(missing)}")
        nodes = {self.msm.node_id, *self.controllers, *self.agents}
        for link in self.links:
            # hard slicing: control links join control nodes only, never sensed fibre
            if not isinstance(link, ControlLink):
                raise ConfigInvalid("control traffic may only use ControlLink objects")
            if link.a not in nodes or link.b not in nodes:
                raise ConfigInvalid(f"link {link.a}<->{link.b} does not join two control nodes")
            if link.a in sensing_paths or link.b in sensing_paths:
                raise ConfigInvalid("a sensed fibre path cannot carry control traffic")
        for p, members in self.path_members.items():
            for m in members:
                if m not in self.agents:
                    raise ConfigInvalid(f"path {p} names unknown FSCD {m}")

    def link(self, x: str, y: str) -> ControlLink:
        for lk in self.links:
            if lk.connects(x, y):
                return lk
        raise UnreachableAgent(f"no control link between {x} and {y}")

    def node(self, name: str) -> LayerNode:
        if name == self.msm.node_id:
            return self.msm
        if name in self.controllers:
            return self.controllers[name]
        return LayerNode(Layer.AGENT, name)

    def interrogator_id(self, name: str) -> int:
        if name not in self._interrogator_ids:
            self._interrogator_ids[name] = len(self._interrogator_ids) + 1
        return self._interrogator_ids[name]

    # -- messaging ---------------------------------------------------------
    def hop_delay(self, src: str, dst: str) -> int:
        lk = self.link(src, dst)
        return lk.propagation + lk.processing_delay + self.node(dst).processing_delay

    def send(self, src: str, dst: str, msg_type: MsgType, body, t: Optional[int] = None,
             authority: Optional[Layer] = None) -> EventRecord:
        """Encode and transmit one frame.

        ``authority`` overrides the header's source layer when a controller
        relays a command issued further up.
        """
        t = self.engine.now() if t is None else t
        key = (src, dst)
        seq = self._tx_seq.get(key, 0) + 1
        self._tx_seq[key] = seq
        layer = self.node(src).layer if authority is None else authority
        msg = ControlMessage(msg_type, layer, self.wire_id[dst], seq,
                             ControlMessage.stamp(t), body)
        return self.deliver(src, dst, encode_message(msg), add_ticks(t, self.hop_delay(src, dst)))

    def deliver(self, src: str, dst: str, frame: bytes, t: int) -> EventRecord:
        """Hand a raw frame to ``dst`` at time ``t``."""
        return self.engine.schedule(t, "rx", dst, f"{src}:{frame.hex()}",
                                    lambda e: self._receive(src, dst, frame, e.time))

    def _receive(self, src: str, dst: str, frame: bytes, t: int) -> None:
        msg = decode_message(frame)
        key = (src, dst)
        last = self._rx_seq.get(key, 0)
        if msg.seq == last:
            self.rejected.append((t, f"{src}->{dst}", f"duplicate seq {msg.seq}"))
            return
        if msg.seq < last:
            self.rejected.append((t, f"{src}->{dst}", f"out-of-order seq {msg.seq} after {last}"))
            return
        self._rx_seq[key] = msg.seq
        layer = self.node(dst).layer
        handler = {
            (Layer.SRC, MsgType.POLICY_SET): self._src_policy,
            (Layer.AGENT, MsgType.POLICY_SET): self._agent_policy,
            (Layer.SRC, MsgType.POLICY_ACK): self._src_ack,
            (Layer.MSM, MsgType.POLICY_ACK): self._msm_ack,
            (Layer.SRC, MsgType.ALERT_PULSE): self._src_alert,
            (Layer.MSM, MsgType.ALERT_PULSE): self._msm_alert,
            (Layer.SRC, MsgType.STATE_CMD): self._src_command,
            (Layer.AGENT, MsgType.STATE_CMD): self._agent_command,
            (Layer.SRC, MsgType.STATE_REPORT): self._src_report,
        }.get((layer, msg.msg_type))
        if handler is None:
            self.rejected.append((t, f"{src}->{dst}", f"{msg.msg_type.name} not handled by {layer.name}"))
            return
        handler(src, dst, msg, t)

    # -- policy cascade ------------------------------------------------------
    def submit_policy(self, policy: Policy, t: Optional[int] = None) -> list[EventRecord]:
        """Issue a POLICY_SET from the manager; returns the first-hop frames."""
        if policy.path_id not in self.path_members:
            raise UnknownPath(policy.path_id)
        t = self.engine.now() if t is None else t
        members = self.path_members[policy.path_id]
        regions = sorted({self.region_of[m] for m in members})
        for r in regions:
            self.link(self.msm.node_id, r)
            for m in members:
                if self.region_of[m] == r:
                    self.link(r, m)
        allow = None
        if policy.interrogators is not None:
            allow = tuple(self.interrogator_id(i) for i in policy.interrogators)
        body = PolicyBody(self.path_wire_id[policy.path_id], policy.sops_allowed, policy.bls_allowed,
                          policy.obscured_sections, allow)
        self.acked[policy.path_id] = set()
        self._pending_acks[(self.msm.node_id, body.path_id)] = set(regions)
        return [self.send(self.msm.node_id, r, MsgType.POLICY_SET, body, t) for r in regions]

    def _src_policy(self, src, dst, msg, t):
        path = self.path_name[msg.body.path_id]
        targets = [m for m in self.path_members[path] if self.region_of[m] == dst]
        self._pending_acks[(dst, msg.body.path_id)] = set(targets)
        for a in targets:
            self.send(dst, a, MsgType.POLICY_SET, msg.body, t)

    def _agent_policy(self, src, dst, msg, t):
        body: PolicyBody = msg.body
        fscd = self.agents[dst]
        names = {i: n for n, i in self._interrogator_ids.items()}
        fscd.allowed_interrogators = (None if body.allow_list is None
                                      else frozenset(names.get(i, str(i)) for i in body.allow_list))
        fscd.obscuring = tuple(body.windows)
        fscd.set_state(FscdState.from_flags(body.sops_allowed, body.bls_allowed), t, reason="policy")
        ack = AckBody(body.path_id, msg.seq, 0)
        self.send(dst, src, MsgType.POLICY_ACK, ack, add_ticks(t, fscd.config.agent_decision_time))

    def _src_ack(self, src, dst, msg, t):
        pending = self._pending_acks.get((dst, msg.body.path_id), set())
        pending.discard(src)
        if not pending:
            self.send(dst, self.msm.node_id, MsgType.POLICY_ACK, AckBody(msg.body.path_id, msg.seq, 0), t)

    def _msm_ack(self, src, dst, msg, t):
        path = self.path_name[msg.body.path_id]
        self.acked.setdefault(path, set()).add(src)
        self._pending_acks.get((dst, msg.body.path_id), set()).discard(src)

    def policy_acknowledged(self, path_id: str) -> bool:
        key = (self.msm.node_id, self.path_wire_id[path_id])
        return key in self._pending_acks and not self._pending_acks[key]

    # -- alert cascade -------------------------------------------------------
    def _agent_alert(self, fscd: Fscd, alert: dict) -> None:
        src = self.region_of[fscd.device_id]
        body = AlertBody(self.wire_id[fscd.device_id], alert["alert_id"], alert["trigger"],
                         round(alert["power"] * 1000))
        self.send(fscd.device_id, src, MsgType.ALERT_PULSE, body)

    def _command_region(self, controller: str, body: StateCmdBody, t: int, authority: Layer) -> None:
        for a in self.controllers[controller].children:
            self.send(controller, a, MsgType.STATE_CMD, body, t, authority)

    def _src_alert(self, src, dst, msg, t):
        b: AlertBody = msg.body
        cmd = StateCmdBody(Command.DISABLE_BLS, 0, b.agent_id, b.alert_id, b.trigger_ps)
        self._command_region(dst, cmd, t, Layer.SRC)
        self.send(dst, self.msm.node_id, MsgType.ALERT_PULSE, b, t)

    def _msm_alert(self, src, dst, msg, t):
        b: AlertBody = msg.body
        cmd = StateCmdBody(Command.DISABLE_BLS, 0, b.agent_id, b.alert_id, b.trigger_ps)
        for c in sorted(self.controllers):
            if c != src:
                self.send(dst, c, MsgType.STATE_CMD, cmd, t)

    def _src_command(self, src, dst, msg, t):
        self._command_region(dst, msg.body, t, Layer.MSM)

    def _agent_command(self, src, dst, msg, t):
        b: StateCmdBody = msg.body
        fscd = self.agents[dst]
        layer = msg.src_layer.name
        origin = self.node_name[b.origin_id]
        tag = f"{origin}#{b.alert_id}@{b.trigger_ps}"
        command = "disable_bls" if b.command is Command.DISABLE_BLS else "set_state"
        events = fscd.apply_command(command, FscdState(b.state), t, layer, tag)
        done = events[-1].time

        def report(e):
            body = StateReportBody(self.wire_id[dst], fscd.state.value, fscd.gate_attenuation > 0,
                                   fscd.scrambler_on)
            self.send(dst, src, MsgType.STATE_REPORT, body, e.time)
        self.engine.schedule(done, "report", dst, None, report)

    def _src_report(self, src, dst, msg, t):
        self.reports[src] = msg.body

    # -- pulses ----------------------------------------------------------------
    def pulse(self, fscd_id: str, power: float, t: int, interrogator: str) -> list[EventRecord]:
        fscd = self.agents[fscd_id]
        return fscd.on_optical_pulse(power, t, fscd.is_authorized(interrogator), interrogator)


def response_rows(records: Sequence[ActionRecord], tag: Optional[str] = None) -> list[LatencyRow]:
    """Per-layer response rows for one alert cascade (the first one if ``tag`` is None)."""
    alerts = [r for r in records if r.kind == "alert_sent"]
    if not alerts:
        raise NoAlertInLog("no alert in the action log")
    if tag is None:
        tag = alerts[0].detail
    device, _, trigger = parse_alert_tag(tag)
    rows = []
    done = None
    for layer in ("AGENT", "SRC", "MSM"):
        if layer == "AGENT":
            mine = [r.time for r in records if r.device_id == device and r.kind == "gate_settled"
                    and r.detail.endswith(f"unauthorized:{tag}")]
        else:
            mine = [r.time for r in records if r.kind == "command_complete" and r.detail == f"{layer}:{tag}"]
        if not mine:
            break
        done = max([*mine, done] if done is not None else mine)
        rows.append(LatencyRow(layer, trigger, done))
    return rows


def measure_response_time(records: Sequence[ActionRecord], layer: str, tag: Optional[str] = None) -> int:
    """Trigger-to-completion time at ``layer``, including everything commanded below it."""
    for row in response_rows(records, tag):
        if row.layer == layer.upper():
            return row.response
    raise NoAlertInLog(f"no {layer} commands for this alert in the log")


def latency_csv(rows: Sequence[LatencyRow]) -> str:
    buf = io.StringIO()
    buf.write("layer,trigger_ps,completed_ps,response_ps\n")
    for r in rows:
        buf.write(f"{r.layer},{r.trigger},{r.completed},{r.response}\n")
    return buf.getvalue()
