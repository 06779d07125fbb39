"""Binary framing for sensing control-plane messages.

Header, 16 bytes, big-endian::

    version:u8 | msg_type:u8 | src_layer:u8 | reserved:u8 (=0)
    dst_id:u32 | seq:u32 | timestamp_ps_low32:u32

Bodies (big-endian, fixed layout, no trailing bytes):

    POLICY_SET    path_id:u32 flags:u8 (bit0 sops, bit1 bls)
                  n_windows:u16 {delay_ps:u64 duration_ps:u64}*
                  has_allow_list:u8 n_allow:u16 {interrogator_id:u32}*
    POLICY_ACK    path_id:u32 acked_seq:u32 status:u8 (0 ok, 1 rejected)
    ALERT_PULSE   agent_id:u32 alert_id:u32 trigger_ps:u64 power_mdbm:i32
    STATE_REPORT  agent_id:u32 state:u8 gate_closed:u8 scrambler_on:u8
    STATE_CMD     command:u8 (0 set_state, 1 disable_bls) state:u8
                  origin_id:u32 alert_id:u32 trigger_ps:u64

``decode`` accepts exactly the byte strings ``encode`` can produce.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Union

from fscdsim.errors import MalformedFrame

VERSION = 1
HEADER = struct.Struct(">BBBBIII")
assert HEADER.size == 16

U32 = 2**32
U64 = 2**64


class MsgType(enum.IntEnum):
    POLICY_SET = 1
    POLICY_ACK = 2
    ALERT_PULSE = 3
    STATE_REPORT = 4
    STATE_CMD = 5


class Layer(enum.IntEnum):
    AGENT = 0
    SRC = 1
    MSM = 2


class Command(enum.IntEnum):
    SET_STATE = 0
    DISABLE_BLS = 1


@dataclass(frozen=True)
class PolicyBody:
    path_id: int
    sops_allowed: bool
    bls_allowed: bool
    windows: tuple[tuple[int, int], ...] = ()
    allow_list: Union[tuple[int, ...], None] = None


@dataclass(frozen=True)
class AckBody:
    path_id: int
    acked_seq: int
    status: int = 0


@dataclass(frozen=True)
class AlertBody:
    agent_id: int
    alert_id: int
    trigger_ps: int
    power_mdbm: int


@dataclass(frozen=True)
class StateReportBody:
    agent_id: int
    state: int
    gate_closed: bool
    scrambler_on: bool


@dataclass(frozen=True)
class StateCmdBody:
    command: Command
    state: int
    origin_id: int
    alert_id: int
    trigger_ps: int


Body = Union[PolicyBody, AckBody, AlertBody, StateReportBody, StateCmdBody]

BODY_TYPES = {
    MsgType.POLICY_SET: PolicyBody,
    MsgType.POLICY_ACK: AckBody,
    MsgType.ALERT_PULSE: AlertBody,
    MsgType.STATE_REPORT: StateReportBody,
    MsgType.STATE_CMD: StateCmdBody,
}


@dataclass(frozen=True)
class ControlMessage:
    msg_type: MsgType
    src_layer: Layer
    dst_id: int
    seq: int
    timestamp: int  # low 32 bits of the send time in ps
    body: Body
    version: int = VERSION

    @staticmethod
    def stamp(t_ps: int) -> int:
        return t_ps & 0xFFFFFFFF


def _u(value: int, bits: int, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2**bits:
        raise ValueError(f"{name}={value!r} does not fit in u{bits}")
    return value


def _encode_body(msg_type: MsgType, body: Body) -> bytes:
    if not isinstance(body, BODY_TYPES[msg_type]):
        raise ValueError(f"{msg_type.name} needs a {BODY_TYPES[msg_type].__name__} body")
    if msg_type is MsgType.POLICY_SET:
        flags = int(bool(body.sops_allowed)) | (int(bool(body.bls_allowed)) << 1)
        out = [struct.pack(">IBH", _u(body.path_id, 32, "path_id"), flags, _u(len(body.windows), 16, "n_windows"))]
        for delay, duration in body.windows:
            out.append(struct.pack(">QQ", _u(delay, 64, "delay"), _u(duration, 64, "duration")))
        allow = body.allow_list
        if allow is None:
            out.append(struct.pack(">BH", 0, 0))
        else:
            out.append(struct.pack(">BH", 1, _u(len(allow), 16, "n_allow")))
            out.extend(struct.pack(">I", _u(a, 32, "interrogator")) for a in allow)
        return b"".join(out)
    if msg_type is MsgType.POLICY_ACK:
        return struct.pack(">IIB", _u(body.path_id, 32, "path_id"), _u(body.acked_seq, 32, "acked_seq"),
                           _u(body.status, 1, "status"))
    if msg_type is MsgType.ALERT_PULSE:
        if not -(2**31) <= body.power_mdbm < 2**31:
            raise ValueError("power_mdbm out of i32 range")
        return struct.pack(">IIQi", _u(body.agent_id, 32, "agent_id"), _u(body.alert_id, 32, "alert_id"),
                           _u(body.trigger_ps, 64, "trigger_ps"), body.power_mdbm)
    if msg_type is MsgType.STATE_REPORT:
        return struct.pack(">IBBB", _u(body.agent_id, 32, "agent_id"), _u(body.state, 2, "state"),
                           int(bool(body.gate_closed)), int(bool(body.scrambler_on)))
    return struct.pack(">BBIIQ", Command(body.command), _u(body.state, 2, "state"),
                       _u(body.origin_id, 32, "origin_id"), _u(body.alert_id, 32, "alert_id"),
                       _u(body.trigger_ps, 64, "trigger_ps"))


def encode_message(msg: ControlMessage) -> bytes:
    if msg.version != VERSION:
        raise ValueError(f"cannot encode version {msg.version}")
    header = HEADER.pack(VERSION, MsgType(msg.msg_type), Layer(msg.src_layer), 0,
                         _u(msg.dst_id, 32, "dst_id"), _u(msg.seq, 32, "seq"),
                         _u(msg.timestamp, 32, "timestamp"))
    return header + _encode_body(MsgType(msg.msg_type), msg.body)


class _Reader:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.offset = offset

    def take(self, fmt: str):
        st = struct.Struct(">" + fmt)
        if self.offset + st.size > len(self.data):
            raise MalformedFrame("truncated body")
        values = st.unpack_from(self.data, self.offset)
        self.offset += st.size
        return values

    def done(self) -> None:
        if self.offset != len(self.data):
            raise MalformedFrame(f"{len(self.data) - self.offset} trailing bytes")


def _flag(v: int, name: str) -> bool:
    if v not in (0, 1):
        raise MalformedFrame(f"{name} must be 0 or 1, got {v}")
    return bool(v)


def _state(v: int) -> int:
    if v > 3:
        raise MalformedFrame(f"unknown device state {v}")
    return v


def _decode_body(msg_type: MsgType, r: _Reader) -> Body:
    if msg_type is MsgType.POLICY_SET:
        path_id, flags, n = r.take("IBH")
        if flags & ~0b11:
            raise MalformedFrame(f"unknown policy flags {flags:#x}")
        windows = tuple(r.take("QQ") for _ in range(n))
        has_allow, n_allow = r.take("BH")
        if not _flag(has_allow, "has_allow_list") and n_allow:
            raise MalformedFrame("allow-list count without allow-list")
        allow = tuple(r.take("I")[0] for _ in range(n_allow)) if has_allow else None
        body = PolicyBody(path_id, bool(flags & 1), bool(flags & 2), windows, allow)
    elif msg_type is MsgType.POLICY_ACK:
        path_id, seq, status = r.take("IIB")
        body = AckBody(path_id, seq, int(_flag(status, "status")))
    elif msg_type is MsgType.ALERT_PULSE:
        body = AlertBody(*r.take("IIQi"))
    elif msg_type is MsgType.STATE_REPORT:
        agent, state, gate, scr = r.take("IBBB")
        body = StateReportBody(agent, _state(state), _flag(gate, "gate_closed"), _flag(scr, "scrambler_on"))
    else:
        cmd, state, origin, alert, trigger = r.take("BBIIQ")
        try:
            command = Command(cmd)
        except ValueError:
            raise MalformedFrame(f"unknown command {cmd}") from None
        body = StateCmdBody(command, _state(state), origin, alert, trigger)
    r.done()
    return body


def decode_message(data: bytes) -> ControlMessage:
    data = bytes(data)
    if len(data) < HEADER.size:
        raise MalformedFrame(f"frame of {len(data)} bytes is shorter than the 16-byte header")
    version, msg_type, src_layer, reserved, dst_id, seq, ts = HEADER.unpack_from(data)
    if version != VERSION:
        raise MalformedFrame(f"unsupported version {version:#x}")
    try:
        msg_type = MsgType(msg_type)
    except ValueError:
        raise MalformedFrame(f"unknown msg_type {msg_type}") from None
    try:
        src_layer = Layer(src_layer)
    except ValueError:
        raise MalformedFrame(f"unknown source layer {src_layer}") from None
    if reserved != 0:
        raise MalformedFrame("reserved header byte must be zero")
    body = _decode_body(msg_type, _Reader(data, HEADER.size))
    return ControlMessage(msg_type, src_layer, dst_id, seq, ts, body)
