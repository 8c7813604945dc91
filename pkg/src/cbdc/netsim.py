"""Deterministic discrete-event network simulator.

All randomness comes from one seeded generator and every event is ordered by
``(time, insertion sequence)``, so a configuration plus a workload always
produces the same trace. Links are FIFO: a message never overtakes an
earlier one on the same directed pair.

Byzantine roster behaviors handled here are transport-level:

* ``mute``: everything the node sends is dropped;
* ``delay``: the node's messages get ``byzantine_delay_ms`` extra latency;
* ``corrupt``: one byte of each outgoing message is flipped and the message
  may be duplicated.

``equivocate`` is a protocol behavior and is implemented by the replica
itself; the simulator only records it in the roster.
"""
import hashlib
import heapq
import json
import logging
import random
from dataclasses import dataclass, field

from cbdc.errors import ConfigError, UnknownNode

log = logging.getLogger(__name__)

BEHAVIORS = ("equivocate", "mute", "delay", "corrupt")


@dataclass(frozen=True)
class Partition:
    start_ms: int
    end_ms: int
    group_a: frozenset
    group_b: frozenset

    def separates(self, src, dst, now):
        if not self.start_ms <= now < self.end_ms:
            return False
        return (src in self.group_a and dst in self.group_b) or (src in self.group_b and dst in self.group_a)


@dataclass
class SimConfig:
    seed: int = 0
    latency_min_ms: int = 5
    latency_max_ms: int = 50
    drop_probability: float = 0.0
    partitions: tuple = ()
    byzantine: dict = field(default_factory=dict)
    byzantine_delay_ms: int = 400
    duplicate_probability: float = 0.5

    def __post_init__(self):
        if not 0 <= self.latency_min_ms <= self.latency_max_ms:
            raise ConfigError("need 0 <= latency_min_ms <= latency_max_ms", "network.latency")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ConfigError("must be in [0, 1]", "network.drop_probability")
        for node, behavior in self.byzantine.items():
            if behavior not in BEHAVIORS:
                raise ConfigError(f"unknown behavior {behavior!r}", f"network.byzantine.{node}")


@dataclass(frozen=True)
class TraceEvent:
    time: int
    event: str  # deliver | drop | timer | action
    src: str
    dst: str
    kind: str
    digest: str

    def to_json(self):
        return json.dumps(
            {"t": self.time, "ev": self.event, "from": self.src, "to": self.dst, "kind": self.kind, "digest": self.digest},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(d["t"], d["ev"], d["from"], d["to"], d["kind"], d["digest"])


class Simulator:
    def __init__(self, config=None):
        self.config = config or SimConfig()
        self.rng = random.Random(self.config.seed)
        self.now = 0
        self.trace = []
        self.delivered = 0
        self.dropped = 0
        self._queue = []
        self._seq = 0
        self._nodes = {}
        self._link_clock = {}

    def register(self, node_id, on_message, on_timer=None):
        """``on_message(src, data, now)``; ``on_timer(tag, now)``."""
        self._nodes[node_id] = (on_message, on_timer)

    @property
    def nodes(self):
        return tuple(self._nodes)

    def _push(self, time, item):
        heapq.heappush(self._queue, (time, self._seq, item))
        self._seq += 1

    def _record(self, event, src, dst, kind, digest):
        self.trace.append(TraceEvent(self.now, event, src, dst, kind, digest.hex()[:16] if digest else ""))

    def send(self, src, dst, data, kind="", digest=None):
        if src not in self._nodes:
            raise UnknownNode(src)
        if dst not in self._nodes:
            raise UnknownNode(dst)
        cfg = self.config
        behavior = cfg.byzantine.get(src)
        digest = digest if digest is not None else hashlib.sha256(data).digest()
        if behavior == "mute":
            self.dropped += 1
            self._record("drop", src, dst, kind, digest)
            return
        if any(p.separates(src, dst, self.now) for p in cfg.partitions):
            self.dropped += 1
            self._record("drop", src, dst, kind, digest)
            return
        if cfg.drop_probability and self.rng.random() < cfg.drop_probability:
            self.dropped += 1
            self._record("drop", src, dst, kind, digest)
            return
        latency = self.rng.randint(cfg.latency_min_ms, cfg.latency_max_ms)
        if behavior == "delay":
            latency += cfg.byzantine_delay_ms
        copies = 1
        if behavior == "corrupt":
            buf = bytearray(data)
            if buf:
                i = self.rng.randrange(len(buf))
                buf[i] ^= 1 << self.rng.randrange(8)
            data = bytes(buf)
            if self.rng.random() < cfg.duplicate_probability:
                copies = 2
        link = (src, dst)
        at = max(self.now + latency, self._link_clock.get(link, 0))
        self._link_clock[link] = at
        for _ in range(copies):
            self._push(at, ("deliver", src, dst, data, kind, digest))

    def set_timer(self, node_id, at, tag=None):
        if node_id not in self._nodes:
            raise UnknownNode(node_id)
        self._push(max(at, self.now), ("timer", node_id, tag))

    def schedule(self, at, callback, label=""):
        """Run ``callback(now)`` at simulated time ``at`` (harness actions)."""
        self._push(max(at, self.now), ("action", callback, label))

    @property
    def idle(self):
        return not self._queue

    def next_time(self):
        return self._queue[0][0] if self._queue else None

    def run_until(self, t_end):
        """Process every event with time <= ``t_end``; returns the new trace events."""
        if t_end < self.now:
            raise ValueError("t_end is in the past")
        start = len(self.trace)
        while self._queue and self._queue[0][0] <= t_end:
            time, _, item = heapq.heappop(self._queue)
            self.now = time
            if item[0] == "deliver":
                _, src, dst, data, kind, digest = item
                self.delivered += 1
                self._record("deliver", src, dst, kind, digest)
                self._nodes[dst][0](src, data, time)
            elif item[0] == "timer":
                _, node_id, tag = item
                handler = self._nodes[node_id][1]
                if handler is not None:
                    handler(tag, time)
            else:
                _, callback, label = item
                self._record("action", "", "", label, None)
                callback(time)
        self.now = t_end
        return self.trace[start:]

    def export_trace(self, path=None):
        text = "".join(e.to_json() + "\n" for e in self.trace)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def trace_hash(self):
        return hashlib.sha256(self.export_trace().encode()).hexdigest()
