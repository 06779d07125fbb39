import random

import pytest

from fscdsim.control_plane import (
    ControlLink,
    ControlPlane,
    LayerNode,
    Policy,
    latency_csv,
    measure_response_time,
    response_rows,
)
from fscdsim.errors import ConfigInvalid, MalformedFrame, NoAlertInLog, UnknownPath, UnreachableAgent
from fscdsim.fscd import FscdState
from fscdsim.sim_core import ms, ns, us
from fscdsim.wire import AckBody, ControlMessage, Layer, MsgType, decode_message, encode_message

from helpers import build_plane, random_alert_rows

FIG1 = {"SRC1": ["F1", "F2"], "SRC2": ["F3", "F4", "F5", "F6"]}
SRC_PROC = ns(1540.414)
MSM_PROC = ns(1_996_540)
# 10 km of n=1.468 fibre, one way: round(1.468 * 10002 / c) - round(1.468 * 2 / c) ticks
EXTRA_10KM_ONE_WAY = 48_977_003 - 9_793


def alert_rows(eng, plane, records, at=us(1), agent="F3"):
    eng.run_until(at)
    plane.pulse(agent, 10.0, at, "rogue")
    eng.run_until(at + ms(10))
    return response_rows(records)


def test_policy_all_disabled_reaches_none_enabled():
    eng, plane, _ = build_plane(FIG1, paths={"path2": ["F5", "F6"], "path1": ["F1", "F2", "F3", "F4"]})
    plane.submit_policy(Policy("path2", False, False), 0)
    eng.run_until(ms(5))
    assert plane.agents["F5"].state is FscdState.NONE_ENABLED
    assert plane.agents["F6"].state is FscdState.NONE_ENABLED
    assert plane.agents["F3"].state is FscdState.ALL_ENABLED
    assert plane.policy_acknowledged("path2")
    assert plane.acked["path2"] == {"SRC2"}


def test_policy_all_enabled_deactivates_devices():
    states = {a: FscdState.NONE_ENABLED for a in ["F1", "F2", "F3", "F4", "F5", "F6"]}
    eng, plane, _ = build_plane(FIG1, states=states, paths={"path1": ["F1", "F2", "F3", "F4"], "path2": ["F5", "F6"]})
    plane.submit_policy(Policy("path1", True, True), 0)
    eng.run_until(ms(5))
    for a in ["F1", "F2", "F3", "F4"]:
        assert plane.agents[a].state is FscdState.ALL_ENABLED
        assert plane.agents[a].quiescent()
    assert plane.policy_acknowledged("path1")
    assert plane.acked["path1"] == {"SRC1", "SRC2"}


def test_policy_for_unknown_path():
    eng, plane, _ = build_plane(FIG1)
    with pytest.raises(UnknownPath):
        plane.submit_policy(Policy("nope", True, True), 0)


def test_missing_link_is_unreachable():
    eng, plane, _ = build_plane({"SRC1": ["F1"]})
    plane.links = [lk for lk in plane.links if not lk.connects("SRC1", "F1")]
    with pytest.raises(UnreachableAgent):
        plane.submit_policy(Policy("p_all", True, False), 0)


def test_policy_allow_list_and_windows_reach_agent():
    eng, plane, _ = build_plane({"SRC1": ["F1"]})
    plane.submit_policy(Policy("p_all", True, True, ((us(10), us(1)),), ("OTDR_A",)), 0)
    eng.run_until(ms(1))
    f = plane.agents["F1"]
    assert f.obscuring == ((us(10), us(1)),)
    assert f.is_authorized("OTDR_A") and not f.is_authorized("rogue")


def test_calibrated_latency_ladder():
    rows = alert_rows(*build_plane(FIG1, src_proc=SRC_PROC, msm_proc=MSM_PROC))
    assert [(r.layer, r.response) for r in rows] == [("AGENT", ns(340)), ("SRC", ns(1900)), ("MSM", ms(2))]


def test_zero_delays_collapse_to_agent_actuation():
    rows = alert_rows(*build_plane(FIG1, link_len=0.0))
    assert [r.response for r in rows] == [ns(340)] * 3


def test_10km_on_agent_src_links_adds_round_trip():
    base = alert_rows(*build_plane(FIG1, src_proc=SRC_PROC, msm_proc=MSM_PROC))
    longer = alert_rows(*build_plane(FIG1, src_proc=SRC_PROC, msm_proc=MSM_PROC,
                                     agent_len={a: 10_002.0 for a in FIG1["SRC2"]}))
    delta = longer[1].response - base[1].response
    assert delta == 2 * EXTRA_10KM_ONE_WAY
    assert delta == pytest.approx(2 * 1.468 * 1e4 / 299_792_458.0 * 1e12, abs=2)


def test_no_alert_raises():
    eng, plane, records = build_plane(FIG1)
    eng.run_until(ms(1))
    with pytest.raises(NoAlertInLog):
        response_rows(records)
    rows = alert_rows(eng, plane, records, at=ms(2))
    assert len(rows) == 3
    with pytest.raises(NoAlertInLog):
        measure_response_time(records, "MSM", tag="F9#1@0")


def test_latency_csv_three_rows():
    rows = alert_rows(*build_plane(FIG1, src_proc=SRC_PROC, msm_proc=MSM_PROC))
    lines = latency_csv(rows).splitlines()
    assert lines[0] == "layer,trigger_ps,completed_ps,response_ps"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["AGENT", "SRC", "MSM"]


def test_command_headers_carry_authority():
    eng, plane, _ = build_plane(FIG1)
    eng.run_until(us(1))
    plane.pulse("F3", 10.0, us(1), "rogue")
    eng.run_until(ms(5))
    layers = {}
    for e in eng.log:
        if e.kind == "rx":
            src, frame = e.payload.split(":")
            msg = decode_message(bytes.fromhex(frame))
            if msg.msg_type is MsgType.STATE_CMD:
                layers.setdefault(e.source, set()).add(msg.src_layer)
    assert layers["F4"] == {Layer.SRC}
    assert layers["F1"] == {Layer.MSM}


def test_duplicate_and_out_of_order_frames_rejected():
    eng, plane, _ = build_plane({"SRC1": ["F1"]})

    def frame(seq):
        return encode_message(ControlMessage(MsgType.POLICY_ACK, Layer.AGENT, plane.wire_id["SRC1"], seq, 0,
                                             AckBody(1, seq)))

    plane.deliver("F1", "SRC1", frame(2), 10)
    plane.deliver("F1", "SRC1", frame(2), 20)
    plane.deliver("F1", "SRC1", frame(1), 30)
    eng.run()
    assert [r[2] for r in plane.rejected] == ["duplicate seq 2", "out-of-order seq 1 after 2"]
    plane.deliver("F1", "SRC1", b"\x01\x02", eng.now())
    with pytest.raises(MalformedFrame):
        eng.run()


def test_hard_slicing_and_structure_checks():
    eng, plane, _ = build_plane({"SRC1": ["F1"]})
    msm = plane.msm
    ctrl = list(plane.controllers.values())
    with pytest.raises(ConfigInvalid):
        ControlPlane(eng, msm, ctrl, plane.agents, [ControlLink("SRC1", "path1")], {}, sensing_paths=["path1"])
    with pytest.raises(ConfigInvalid):
        ControlPlane(eng, msm, ctrl, plane.agents, [ControlLink("MSM", "F1")], {}, sensing_paths=["MSM"])
    with pytest.raises(ConfigInvalid):
        ControlPlane(eng, msm, ctrl + [LayerNode(Layer.SRC, "SRC2", ("F1",))], plane.agents, [], {})


def test_layer_monotone_over_100_random_topologies():
    rng = random.Random(2024)
    for _ in range(100):
        rows, n_regions, blocking = random_alert_rows(rng)
        expected = ["AGENT", "SRC"] + (["MSM"] if n_regions > 1 else [])
        assert [r.layer for r in rows] == expected
        responses = [r.response for r in rows]
        assert responses == sorted(responses)
        assert responses[0] == blocking
