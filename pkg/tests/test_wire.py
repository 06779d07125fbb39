import struct

import pytest
from hypothesis import given, settings, strategies as st

from fscdsim.errors import MalformedFrame
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

u32 = st.integers(0, 2**32 - 1)
u64 = st.integers(0, 2**64 - 1)

bodies = st.one_of(
    st.builds(lambda *a: (MsgType.POLICY_SET, PolicyBody(*a)), u32, st.booleans(), st.booleans(),
              st.lists(st.tuples(u64, u64), max_size=4).map(tuple),
              st.one_of(st.none(), st.lists(u32, max_size=4).map(tuple))),
    st.builds(lambda *a: (MsgType.POLICY_ACK, AckBody(*a)), u32, u32, st.integers(0, 1)),
    st.builds(lambda *a: (MsgType.ALERT_PULSE, AlertBody(*a)), u32, u32, u64, st.integers(-2**31, 2**31 - 1)),
    st.builds(lambda *a: (MsgType.STATE_REPORT, StateReportBody(*a)), u32, st.integers(0, 3),
              st.booleans(), st.booleans()),
    st.builds(lambda *a: (MsgType.STATE_CMD, StateCmdBody(*a)), st.sampled_from(Command), st.integers(0, 3),
              u32, u32, u64),
)

messages = st.builds(lambda tb, layer, dst, seq, ts: ControlMessage(tb[0], layer, dst, seq, ts, tb[1]),
                     bodies, st.sampled_from(Layer), u32, u32, u32)


@settings(max_examples=300)
@given(messages)
def test_round_trip(msg):
    frame = encode_message(msg)
    assert decode_message(frame) == msg
    assert len(frame) >= 16 and frame[0] == 1 and frame[3] == 0


@settings(max_examples=300)
@given(messages, st.data())
def test_truncation_and_trailing_bytes_rejected(msg, data):
    frame = encode_message(msg)
    cut = data.draw(st.integers(0, len(frame) - 1))
    with pytest.raises(MalformedFrame):
        decode_message(frame[:cut])
    with pytest.raises(MalformedFrame):
        decode_message(frame + b"\x00")


@settings(max_examples=2000)
@given(st.binary(max_size=64))
def test_fuzz_never_crashes(blob):
    try:
        msg = decode_message(blob)
    except MalformedFrame:
        return
    # anything accepted must re-encode to the same bytes
    assert encode_message(msg) == blob


def _sample():
    return ControlMessage(MsgType.POLICY_ACK, Layer.SRC, 3, 9, 1234, AckBody(1, 9, 0))


def test_specific_rejections():
    frame = encode_message(_sample())
    with pytest.raises(MalformedFrame):
        decode_message(frame[:15])
    with pytest.raises(MalformedFrame):
        decode_message(b"\xff" + frame[1:])
    with pytest.raises(MalformedFrame):
        decode_message(frame[:1] + b"\x09" + frame[2:])  # msg_type
    with pytest.raises(MalformedFrame):
        decode_message(frame[:2] + b"\x07" + frame[3:])  # source layer
    with pytest.raises(MalformedFrame):
        decode_message(frame[:3] + b"\x01" + frame[4:])  # reserved byte
    with pytest.raises(MalformedFrame):
        decode_message(frame[:-1] + b"\x02")  # status flag


def test_header_layout_frozen():
    frame = encode_message(_sample())
    assert frame[:16] == struct.pack(">BBBBIII", 1, 2, 1, 0, 3, 9, 1234)
    assert frame.hex() == "010201000000000300000009000004d2" + "000000010000000900"


def test_timestamp_holds_low_32_bits():
    assert ControlMessage.stamp(2**32 + 5) == 5
    with pytest.raises(ValueError):
        encode_message(ControlMessage(MsgType.POLICY_ACK, Layer.SRC, 1, 1, 2**32, AckBody(1, 1)))
