import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshchain.kernel import CPU_COMPLETE, TIMER, CpuProfile, Kernel, KernelError, MemoryModel, rng_for


def recording_kernel():
    k = Kernel()
    log = []
    k.on(TIMER, lambda e: log.append((k.now, e.payload)))
    k.on(CPU_COMPLETE, lambda e: log.append((k.now, ("cpu", e.target, e.payload))))
    return k, log


def test_events_in_time_then_insertion_order():
    k, log = recording_kernel()
    k.schedule(2.0, "n", TIMER, "c")
    k.schedule(1.0, "n", TIMER, "a")
    k.schedule(1.0, "n", TIMER, "b")
    k.run()
    assert log == [(1.0, "a"), (1.0, "b"), (2.0, "c")]


def test_handlers_can_schedule_same_instant():
    k, log = recording_kernel()

    def chain(e):
        log.append(e.payload)
        if e.payload < 3:
            k.schedule(k.now, "n", TIMER, e.payload + 1)

    k.on(TIMER, chain)
    k.schedule(0.5, "n", TIMER, 0)
    assert k.run() == 0.5
    assert log == [0, 1, 2, 3]


def test_scheduling_in_the_past_fails():
    k, _ = recording_kernel()
    k.schedule(1.0, "n", TIMER)
    k.run()
    with pytest.raises(KernelError):
        k.schedule(0.5, "n", TIMER)


def test_unknown_event_kind_fails():
    k = Kernel()
    k.schedule(0.0, "n", "mystery")
    with pytest.raises(KernelError):
        k.run()


def test_cancel_skips_event_and_clock():
    k, log = recording_kernel()
    k.schedule(1.0, "n", TIMER, "keep")
    e = k.schedule(5.0, "n", TIMER, "drop")
    k.cancel(e)
    assert k.pending() == 1
    assert k.run() == 1.0
    assert log == [(1.0, "keep")]


def test_run_until_stops_before_later_events():
    k, log = recording_kernel()
    k.schedule(1.0, "n", TIMER, "a")
    k.schedule(3.0, "n", TIMER, "b")
    k.run(until=2.0)
    assert log == [(1.0, "a")] and k.pending() == 1
    k.run()
    assert log[-1] == (3.0, "b")


def test_empty_queue_terminates():
    assert Kernel().run() == 0.0


def test_cpu_fifo_closed_form():
    k, log = recording_kernel()
    ends = [k.occupy_cpu("e", 0.3, i) for i in range(100)]
    k.run()
    assert ends[0] == pytest.approx(0.3)
    assert ends[-1] - ends[0] == pytest.approx(99 * 0.3)
    assert [p for _, (_, _, p) in log] == list(range(100))
    assert k.busy_seconds("e") == pytest.approx(30.0)


def test_cpu_idle_gap_restarts_at_now():
    k, _ = recording_kernel()
    k.occupy_cpu("n", 1.0)
    k.run()
    k.schedule(5.0, "n", TIMER)
    k.run()
    assert k.occupy_cpu("n", 1.0) == 6.0


def test_cpus_are_independent():
    k, _ = recording_kernel()
    assert k.occupy_cpu("a", 2.0) == 2.0
    assert k.occupy_cpu("b", 1.0) == 1.0


def test_negative_duration_fails():
    with pytest.raises(KernelError):
        Kernel().occupy_cpu("n", -1.0)


def test_utilization_windows():
    k, _ = recording_kernel()
    k.schedule(0.5, "n", TIMER)
    k.on(TIMER, lambda e: k.occupy_cpu("n", 1.0))
    k.run()
    tl = k.utilization(["n", "idle"], width=1.0, horizon=3.0)
    assert tl.busy["n"] == [(0.0, 0.5), (1.0, 0.5), (2.0, 0.0)]
    assert tl.busy["idle"] == [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]
    assert tl.peak("n") == 0.5 and tl.peak("missing") == 0.0


def test_utilization_horizon_truncates():
    k, _ = recording_kernel()
    k.occupy_cpu("n", 10.0)
    tl = k.utilization(["n"], 1.0, horizon=2.0)
    assert tl.busy["n"] == [(0.0, 1.0), (1.0, 1.0)]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0, 3)), max_size=20))
def test_utilization_conserves_busy_time(tasks):
    k = Kernel()
    k.on(TIMER, lambda e: k.occupy_cpu("n", e.payload))
    for t, d in tasks:
        k.schedule(t, "n", TIMER, d)
    k.on(CPU_COMPLETE, lambda e: None)
    k.run()
    tl = k.utilization(["n"], width=1.0)
    assert sum(f for _, f in tl.busy["n"]) * 1.0 == pytest.approx(k.busy_seconds("n"), abs=1e-6)
    assert all(0.0 <= f <= 1.0 for _, f in tl.busy["n"])


def test_memory_model_levels():
    m = MemoryModel()
    assert m.level("endorser", 0) == 0.60
    assert m.level("committer", 100) == pytest.approx(0.62)
    assert m.level("client", 10**6) == 1.0


def test_memory_tracks_queue_depth():
    k, _ = recording_kernel()
    for _ in range(4):
        k.occupy_cpu("n", 1.0)
    k.run()
    mem = k.memory("n", "endorser", MemoryModel(), 1.0, 5)
    assert mem[0] == (0.0, pytest.approx(0.60 + 4 * 0.0005))
    assert mem[3] == (3.0, pytest.approx(0.60 + 1 * 0.0005))
    assert mem[4] == (4.0, pytest.approx(0.60))


def test_cpu_profile_rejects_negative():
    with pytest.raises(ValueError):
        CpuProfile(cost_endorse=-0.1)


def test_rng_streams_deterministic_and_independent():
    a = rng_for(1, "x").random(4)
    assert (a == rng_for(1, "x").random(4)).all()
    assert not (a == rng_for(1, "y").random(4)).all()
    assert not (a == rng_for(2, "x").random(4)).all()
