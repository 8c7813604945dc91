import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbdc.errors import ConfigError, UnknownNode
from cbdc.netsim import Partition, SimConfig, Simulator, TraceEvent


def network(config=None, nodes=("a", "b", "c")):
    sim = Simulator(config)
    inbox = {n: [] for n in nodes}
    for n in nodes:
        sim.register(n, lambda src, data, now, n=n: inbox[n].append((now, src, data)))
    return sim, inbox


def test_delivery_within_latency_bounds():
    sim, inbox = network(SimConfig(seed=1, latency_min_ms=10, latency_max_ms=20))
    sim.send("a", "b", b"hi")
    sim.run_until(100)
    ((t, src, data),) = inbox["b"]
    assert 10 <= t <= 20 and src == "a" and data == b"hi"
    assert sim.now == 100 and sim.idle


@given(st.integers(min_value=0, max_value=2**32), st.integers(min_value=1, max_value=40))
def test_links_are_fifo(seed, count):
    sim, inbox = network(SimConfig(seed=seed, latency_min_ms=0, latency_max_ms=100))
    for i in range(count):
        sim.send("a", "b", i.to_bytes(2, "big"))
        sim.send("c", "b", i.to_bytes(2, "big"))
    sim.run_until(10_000)
    for src in ("a", "c"):
        got = [int.from_bytes(d, "big") for _, s, d in inbox["b"] if s == src]
        assert got == list(range(count))
    times = [t for t, _, _ in inbox["b"]]
    assert times == sorted(times)


def test_same_seed_same_trace():
    def run(seed):
        sim, _ = network(SimConfig(seed=seed, drop_probability=0.3))
        for i in range(50):
            sim.send("abc"[i % 3], "abc"[(i + 1) % 3], bytes([i]), kind="X")
        sim.run_until(1000)
        return sim.trace_hash(), sim.export_trace()

    assert run(7) == run(7)
    assert run(7)[0] != run(8)[0]


def test_trace_roundtrip(tmp_path):
    sim, _ = network(SimConfig(seed=2))
    sim.send("a", "b", b"x", kind="PING")
    sim.schedule(3, lambda now: None, "tick")
    sim.run_until(100)
    path = tmp_path / "trace.jsonl"
    sim.export_trace(path)
    events = [TraceEvent.from_json(line) for line in path.read_text().splitlines()]
    assert events == sim.trace
    assert [e.event for e in events] == ["action", "deliver"]


def test_partition_drops_then_heals():
    part = Partition(0, 50, frozenset({"a"}), frozenset({"b"}))
    sim, inbox = network(SimConfig(seed=3, partitions=(part,)))
    sim.send("a", "b", b"lost")
    sim.send("a", "c", b"kept")
    sim.run_until(60)
    sim.send("b", "a", b"after")
    sim.run_until(200)
    assert [d for _, _, d in inbox["b"]] == []
    assert [d for _, _, d in inbox["c"]] == [b"kept"]
    assert [d for _, _, d in inbox["a"]] == [b"after"]
    assert sim.dropped == 1


def test_full_loss():
    sim, inbox = network(SimConfig(seed=3, drop_probability=1.0))
    for _ in range(10):
        sim.send("a", "b", b"x")
    sim.run_until(1000)
    assert inbox["b"] == [] and sim.dropped == 10


def test_byzantine_behaviours():
    sim, inbox = network(SimConfig(seed=4, byzantine={"a": "mute", "b": "delay", "c": "corrupt"},
                                   latency_min_ms=5, latency_max_ms=5, byzantine_delay_ms=100,
                                   duplicate_probability=1.0))
    sim.send("a", "b", b"muted")
    sim.send("b", "c", b"slow")
    sim.send("c", "a", b"\x00" * 8)
    sim.run_until(1000)
    assert inbox["b"] == []
    assert inbox["c"] == [(105, "b", b"slow")]
    assert len(inbox["a"]) == 2  # duplicated
    assert all(d != b"\x00" * 8 and sum(bin(x).count("1") for x in d) == 1 for _, _, d in inbox["a"])


def test_timers_and_actions_ordered():
    order = []
    sim = Simulator()
    sim.register("n", lambda *a: None, lambda tag, now: order.append(("timer", tag, now)))
    sim.set_timer("n", 20, "t1")
    sim.schedule(10, lambda now: order.append(("action", now)))
    sim.set_timer("n", 10, "t0")
    sim.run_until(30)
    assert order == [("action", 10), ("timer", "t0", 10), ("timer", "t1", 20)]
    with pytest.raises(ValueError):
        sim.run_until(5)


def test_unknown_nodes():
    sim, _ = network()
    with pytest.raises(UnknownNode):
        sim.send("a", "zz", b"")
    with pytest.raises(UnknownNode):
        sim.send("zz", "a", b"")
    with pytest.raises(UnknownNode):
        sim.set_timer("zz", 1)


@pytest.mark.parametrize("kwargs", [
    {"latency_min_ms": 10, "latency_max_ms": 5},
    {"latency_min_ms": -1},
    {"drop_probability": 1.5},
    {"byzantine": {"a": "sleepy"}},
])
def test_bad_config(kwargs):
    with pytest.raises(ConfigError):
        SimConfig(**kwargs)
