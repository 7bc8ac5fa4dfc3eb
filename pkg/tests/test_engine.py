import pytest
from hypothesis import given, strategies as st

from coexsim.engine import Engine, RngStreams, SchedulingInPastError


def test_events_execute_in_time_order():
    engine = Engine()
    order = []
    engine.schedule(lambda: order.append("b"), 20)
    engine.schedule(lambda: order.append("a"), 10)
    engine.schedule(lambda: order.append("c"), 30)
    engine.run_until(100)
    assert order == ["a", "b", "c"]
    assert engine.now == 100


def test_equal_due_times_run_in_insertion_order():
    engine = Engine()
    order = []
    for tag in "abcde":
        engine.schedule(lambda tag=tag: order.append(tag), 50)
    engine.run_until(50)
    assert order == list("abcde")


def test_scheduling_in_past_raises():
    engine = Engine()
    engine.schedule(lambda: None, 10)
    engine.run_until(10)
    with pytest.raises(SchedulingInPastError):
        engine.schedule(lambda: None, 5)


def test_schedule_from_callback_at_same_time():
    engine = Engine()
    order = []
    def first():
        order.append(1)
        engine.schedule(lambda: order.append(2), engine.now)
    engine.schedule(first, 10)
    assert engine.run_until(10) == 2
    assert order == [1, 2]


def test_cancel_prevents_execution_and_reports_status():
    engine = Engine()
    fired = []
    h = engine.schedule(lambda: fired.append(1), 10)
    assert engine.cancel(h) is True
    assert engine.cancel(h) is False  # already cancelled
    engine.run_until(20)
    assert fired == []


def test_run_until_stops_clock_at_boundary():
    engine = Engine()
    seen = []
    engine.schedule(lambda: seen.append(engine.now), 7)
    engine.schedule(lambda: seen.append(engine.now), 15)
    engine.run_until(10)
    assert seen == [7] and engine.now == 10
    engine.run_until(20)
    assert seen == [7, 15] and engine.now == 20


def test_schedule_in_is_relative():
    engine = Engine()
    seen = []
    engine.schedule(lambda: engine.schedule_in(lambda: seen.append(engine.now), 5), 10)
    engine.run_until(30)
    assert seen == [15]


@given(st.lists(st.integers(min_value=0, max_value=1000), min_size=1, max_size=50))
def test_executed_counter_matches_events(dues):
    engine = Engine()
    for d in dues:
        engine.schedule(lambda: None, d)
    assert engine.run_until(1000) == len(dues)
    assert engine.executed == len(dues)


def test_rng_streams_are_reproducible_and_independent():
    a1 = RngStreams(42).stream("cam", "dev0")
    a2 = RngStreams(42).stream("cam", "dev0")
    assert [a1.random() for _ in range(5)] == [a2.random() for _ in range(5)]

    # Draws from one stream must not perturb another.
    s = RngStreams(42)
    ref = RngStreams(42).stream("cam", "dev1").random()
    s.stream("cam", "dev0").random()
    assert s.stream("cam", "dev1").random() == ref


def test_rng_streams_distinct_components_differ():
    s = RngStreams(7)
    assert s.stream("cam", "x").random() != s.stream("drop", "x").random()
    assert s.stream("cam", "x") is s.stream("cam", "x")
