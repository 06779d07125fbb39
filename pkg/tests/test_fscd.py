import itertools

import numpy as np
import pytest

from fscdsim.errors import ConfigInvalid
from fscdsim.fscd import (
    Fscd,
    FscdConfig,
    FscdState,
    action_log_csv,
    alert_tag,
    obscuring_for_section,
    parse_alert_tag,
)
from fscdsim.otdr import EO_SWITCH, MEMS_VOA, GateSchedule, apply_gate, leaked_length, raw_trace
from fscdsim.sim_core import Engine, ns, us

RT_5000_PS = 48_967_209
RT_6000_PS = 58_760_651


def device(state=FscdState.ALL_ENABLED, **cfg):
    eng = Engine()
    return eng, Fscd("F1", FscdConfig(**cfg), eng, state)


def test_truth_table():
    expected = {
        FscdState.ALL_ENABLED: (True, False),
        FscdState.SOPS_ONLY: (False, False),
        FscdState.BLS_ONLY: (True, True),
        FscdState.NONE_ENABLED: (False, True),
    }
    for s, (gate_open, scr) in expected.items():
        assert (s.gate_open, s.scrambler_active) == (gate_open, scr)
        assert FscdState.from_flags(s.sops_allowed, s.bls_allowed) is s


@pytest.mark.parametrize("a,b", list(itertools.product(FscdState, repeat=2)))
def test_every_transition_settles_to_truth_table(a, b):
    eng, f = device(a)
    assert f.truth_table_holds()
    f.set_state(b, 0)
    eng.run()
    assert f.state is b and f.quiescent() and f.truth_table_holds()


def test_close_by_340ns_with_eo_switch():
    eng, f = device()
    f.set_state(FscdState.NONE_ENABLED, 0)
    eng.run_until(ns(340) - 1)
    assert f.gate_attenuation == 0.0
    eng.run_until(ns(340))
    assert f.gate_attenuation == 40.0
    assert f.config.blocking_time == ns(340)


def test_transition_to_current_state_is_noop():
    eng, f = device()
    assert f.set_state(FscdState.ALL_ENABLED, 0) == []
    eng.run()
    assert f.log == []


def test_scrambler_stops_after_activation_delay():
    eng, f = device(FscdState.NONE_ENABLED)
    f.set_state(FscdState.ALL_ENABLED, 0)
    off_at = ns(50) + us(400)
    eng.run_until(off_at - 1)
    assert f.scrambler_on
    eng.run_until(off_at)
    assert not f.scrambler_on
    assert f.scrambler_at(off_at - 1) and not f.scrambler_at(off_at)


def test_decision_time_bound():
    with pytest.raises(ConfigInvalid):
        FscdConfig(agent_decision_time=ns(51))


def test_unauthorized_pulse_blocks_and_alerts(plant, noiseless):
    alerts = []
    eng, f = device()
    f.on_alert = lambda dev, a: alerts.append(a)
    f.on_optical_pulse(10.0, 0, authorized=False, source="rogue")
    eng.run()
    assert f.state is FscdState.SOPS_ONLY
    assert alerts and alerts[0]["tag"] == "F1#1@0"
    sched = f.observed_gate_schedule(0, us(200))
    assert sched.steps == ((0, 0.0), (ns(340), 40.0))
    assert sched == f.gate_schedule_for_pulse(0, authorized=False)
    tr = apply_gate(raw_trace(noiseless, plant), sched)
    leaked = tr.distance[tr.power > -70.0]
    assert leaked.max() <= leaked_length(ns(340), plant) + 10.0
    assert leaked_length(ns(340), plant) == pytest.approx(34.717, abs=1e-3)


def test_pulse_below_threshold_ignored():
    eng, f = device()
    assert f.on_optical_pulse(-40.0, 0, authorized=False) == []
    eng.run()
    assert f.log == [] and f.state is FscdState.ALL_ENABLED


def test_obscuring_window_maps_to_km_5_6(plant, noiseless):
    eng, f = device(obscuring=(us(48.97), us(9.79)))
    f.on_optical_pulse(10.0, 0, authorized=True)
    eng.run()
    sched = f.observed_gate_schedule(0, us(200))
    # edges shifted by the gate response time
    assert sched.steps == ((0, 0.0), (us(48.97) + ns(290), 40.0), (us(48.97 + 9.79) + ns(290), 0.0))
    assert sched == f.gate_schedule_for_pulse(0)
    delay, width = obscuring_for_section(5000.0, 6000.0, plant, EO_SWITCH)
    assert (delay, width) == (RT_5000_PS - ns(290), RT_6000_PS - RT_5000_PS)
    eng, g = device(obscuring=(delay, width))
    g.on_optical_pulse(10.0, 0)
    eng.run()
    raw = raw_trace(noiseless, plant)
    tr = apply_gate(raw, g.observed_gate_schedule(0, us(200)))
    dark = tr.distance[tr.power != raw.power]
    assert dark.min() == 5005.0 and dark.max() == 5995.0


def test_predicted_schedules():
    _, f = device()
    assert f.gate_schedule_for_pulse(0).is_open()
    _, g = device(FscdState.SOPS_ONLY)
    assert g.gate_schedule_for_pulse(0) == GateSchedule.constant(40.0, EO_SWITCH)


def test_mems_gate_lets_whole_plant_leak(plant, noiseless):
    eng, f = device(gate=MEMS_VOA)
    f.on_optical_pulse(10.0, 0, authorized=False)
    eng.run_until(us(200))
    sched = f.observed_gate_schedule(0, us(200))
    assert sched.is_open()
    raw = raw_trace(noiseless, plant)
    assert np.array_equal(apply_gate(raw, sched).power, raw.power)
    eng.run()
    assert f.gate_attenuation == 40.0


def test_manual_attenuation_rules():
    eng, f = device(gate=MEMS_VOA)
    f.set_gate_attenuation(20.0, 0)
    eng.run()
    assert f.gate_attenuation == 20.0
    _, g = device()
    with pytest.raises(ConfigInvalid):
        g.set_gate_attenuation(20.0, 0)


def test_action_log_and_tags():
    eng, f = device()
    f.set_state(FscdState.SOPS_ONLY, 0)
    eng.run()
    times = [r.time for r in f.log]
    assert times == sorted(times)
    assert action_log_csv(f.log).splitlines()[0] == "t_ps,device_id,record_kind,detail"
    assert parse_alert_tag(alert_tag("F3", 2, 123)) == ("F3", 2, 123)
