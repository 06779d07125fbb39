import pytest
from hypothesis import given, strategies as st

from fscdsim.errors import SchedulingInPast, SimTimeOverflow
from fscdsim.sim_core import (
    INT64_MAX,
    Engine,
    RngStream,
    add_ticks,
    check_ticks,
    from_seconds,
    ms,
    ns,
    to_seconds,
    us,
)


def test_unit_helpers():
    assert ns(1) == 1000
    assert us(1) == 10**6
    assert ms(1) == 10**9
    assert ns(1490.414) == 1490414
    assert from_seconds(2e-3) == ms(2)
    assert to_seconds(ms(3)) == pytest.approx(3e-3)


def test_tick_range_checked():
    with pytest.raises(SimTimeOverflow):
        add_ticks(INT64_MAX, 1)
    with pytest.raises(TypeError):
        check_ticks(1.5)


def test_now_before_and_after_run():
    eng = Engine()
    assert eng.now() == 0
    eng.run_until(ns(10))
    assert eng.now() == ns(10)
    assert eng.log == []


def test_event_at_now_runs_before_later_events():
    eng = Engine()
    order = []
    eng.run_until(ns(5))
    eng.schedule(ns(6), "later", "t", handler=lambda e: order.append("later"))
    eng.schedule(eng.now(), "now", "t", handler=lambda e: order.append("now"))
    eng.run()
    assert order == ["now", "later"]


def test_same_time_pops_in_insertion_order():
    eng = Engine()
    for k in range(5):
        eng.schedule(ns(1), f"e{k}", "t")
    eng.run()
    assert [e.kind for e in eng.log] == [f"e{k}" for k in range(5)]


def test_scheduling_in_past_rejected():
    eng = Engine()
    eng.run_until(ns(10))
    with pytest.raises(SchedulingInPast):
        eng.schedule(ns(10) - 1, "late", "t")


def test_run_until_processes_only_due_events():
    eng = Engine()
    eng.schedule(ns(5), "a", "t")
    eng.schedule(ns(15), "b", "t")
    done = eng.run_until(ns(10))
    assert [e.kind for e in done] == ["a"]
    assert eng.pending() == 1


def test_handlers_can_schedule_follow_ups():
    eng = Engine()

    def bounce(e):
        if e.payload < 3:
            eng.schedule_in(ns(1), "bounce", "t", e.payload + 1, bounce)

    eng.schedule(0, "bounce", "t", 0, bounce)
    eng.run()
    assert [e.payload for e in eng.log] == [0, 1, 2, 3]
    assert eng.now() == ns(3)


@given(st.lists(st.integers(0, 10**9), max_size=60))
def test_log_is_sorted_by_time_then_sequence(times):
    eng = Engine()
    for t in times:
        eng.schedule(t, "x", "t")
    eng.run()
    keys = [(e.time, e.sequence) for e in eng.log]
    assert keys == sorted(keys)
    assert len(keys) == len(times)


@given(st.lists(st.integers(0, 10**6), min_size=1, max_size=20))
def test_now_is_monotone(stops):
    eng = Engine()
    seen = []
    for t in sorted(stops):
        eng.run_until(t)
        seen.append(eng.now())
    assert seen == sorted(seen)


def _scenario_log(seed):
    eng = Engine(seed)
    rng = eng.rng("jitter")

    def tick(e):
        if e.payload < 50:
            eng.schedule_in(int(rng.integers(1, 1000)), "tick", "src", e.payload + 1, tick)

    eng.schedule(0, "tick", "src", 0, tick)
    eng.run()
    return eng.log_text()


def test_same_seed_gives_byte_identical_log():
    assert _scenario_log(11) == _scenario_log(11)
    assert _scenario_log(11) != _scenario_log(12)


def test_rng_streams_are_independent_of_each_other():
    a1 = RngStream(5, "a").generator().random(4)
    b = RngStream(5, "b").generator().random(4)
    a2 = RngStream(5, "a").generator().random(4)
    assert (a1 == a2).all()
    assert not (a1 == b).all()
    assert RngStream(5, "a").child("x") == RngStream(5, "a/x")
