"""Virtual-clock message fabric with crash, delay, corruption and partition faults.

One tick is one simulated millisecond. Events (message deliveries and node
timers) run in (tick, insertion-seq) order off a single heap, so a run is a
pure function of topology, fault policy and seed. Partition and crash rules
are enforced both when a message is sent and when it would be delivered,
which keeps the delivery log free of cross-partition traffic inside any
fault window.
"""

from __future__ import annotations

import hashlib
import heapq
import random
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

DEFAULT_BASE_LATENCY = 1
DEFAULT_JITTER = (0, 5)


@dataclass(frozen=True)
class Partition:
    group_a: frozenset
    group_b: frozenset
    start: int
    duration: int

    def active(self, tick: int) -> bool:
        return self.start <= tick < self.start + self.duration

    def severs(self, x: int, y: int) -> bool:
        return ((x in self.group_a and y in self.group_b)
                or (x in self.group_b and y in self.group_a))


@dataclass
class FaultPolicy:
    crashes: list = field(default_factory=list)          # (node, at_tick)
    delay_range: tuple = DEFAULT_JITTER                  # uniform added ticks
    link_delays: dict = field(default_factory=dict)      # (from, to) -> (min, max)
    corrupt_prob: float = 0.0
    partitions: list = field(default_factory=list)       # Partition

    def __post_init__(self):
        if not 0.0 <= self.corrupt_prob <= 1.0:
            raise ValueError("corrupt_prob must be in [0, 1]")
        for p in self.partitions:
            if p.group_a & p.group_b:
                raise ValueError("partition groups must be disjoint")


@dataclass(frozen=True)
class MessageEnvelope:
    from_node: int
    to_node: int
    payload: bytes
    send_tick: int


class Fabric:
    """Connects node step functions through a deterministic event loop."""

    def __init__(self, seed: int = 0, policy: Optional[FaultPolicy] = None,
                 base_latency: int = DEFAULT_BASE_LATENCY, inbox_limit: int = 4096,
                 keep_trace: bool = True):
        self.policy = policy or FaultPolicy()
        self.base_latency = base_latency
        self.inbox_limit = inbox_limit
        self.rng = random.Random((seed << 8) ^ 0xFAB)
        self.now = 0
        self.realtime_scale = 0.0
        self.trace: list[dict] = []
        self.keep_trace = keep_trace
        self._handlers: dict[int, Callable] = {}
        self._queue: list = []
        self._seq = 0
        self._inflight: dict[int, int] = {}
        self._crashed: dict[int, int] = {}
        for node, at_tick in self.policy.crashes:
            self._crashed[node] = min(at_tick, self._crashed.get(node, at_tick))
        self.delivered = 0
        self.dropped = 0

    # -- topology ------------------------------------------------------------

    def register(self, node_id: int, handler: Callable) -> None:
        self._handlers[node_id] = handler
        self._inflight.setdefault(node_id, 0)

    @property
    def node_ids(self) -> list[int]:
        return sorted(self._handlers)

    # -- fault state -----------------------------------------------------------

    def crash_node(self, node: int, at_tick: int) -> None:
        self._crashed[node] = min(at_tick, self._crashed.get(node, at_tick))

    def is_crashed(self, node: int, tick: Optional[int] = None) -> bool:
        t = self.now if tick is None else tick
        return node in self._crashed and t >= self._crashed[node]

    def inject_partition(self, group_a, group_b, start: int, duration: int) -> None:
        part = Partition(frozenset(group_a), frozenset(group_b), start, duration)
        if part.group_a & part.group_b:
            raise ValueError("partition groups must be disjoint")
        self.policy.partitions.append(part)

    def _severed(self, x: int, y: int, tick: int) -> bool:
        return any(p.active(tick) and p.severs(x, y) for p in self.policy.partitions)

    # -- sending ----------------------------------------------------------------

    def send(self, from_node: int, to_node: int, payload: bytes) -> bool:
        """Schedule delivery; False (with a trace entry) when a fault drops it."""
        if self.is_crashed(from_node) or self.is_crashed(to_node):
            self._log("drop_crash", from_node, to_node, payload)
            return False
        if self._severed(from_node, to_node, self.now):
            self._log("drop_partition", from_node, to_node, payload)
            return False
        if self._inflight.get(to_node, 0) >= self.inbox_limit:
            self._log("drop_inbox", from_node, to_node, payload)
            return False
        lo, hi = self.policy.link_delays.get((from_node, to_node), self.policy.delay_range)
        delay = self.base_latency + self.rng.randint(lo, hi)
        if self.policy.corrupt_prob > 0 and self.rng.random() < self.policy.corrupt_prob:
            payload = self._flip_byte(payload)
            self._log("corrupt", from_node, to_node, payload)
        env = MessageEnvelope(from_node, to_node, payload, self.now)
        self._inflight[to_node] = self._inflight.get(to_node, 0) + 1
        self._push(self.now + delay, ("deliver", env))
        return True

    def broadcast(self, from_node: int, payload: bytes, exclude=()) -> int:
        sent = 0
        for nid in self.node_ids:
            if nid != from_node and nid not in exclude:
                sent += bool(self.send(from_node, nid, payload))
        return sent

    def _flip_byte(self, payload: bytes) -> bytes:
        if not payload:
            return payload
        buf = bytearray(payload)
        i = self.rng.randrange(len(buf))
        buf[i] ^= self.rng.randint(1, 255)
        return bytes(buf)

    # -- timers -------------------------------------------------------------------

    def schedule(self, tick: int, callback: Callable, owner: Optional[int] = None) -> None:
        """Run callback(tick) at the given tick; skipped if owner crashed by then."""
        self._push(max(tick, self.now), ("timer", callback, owner))

    def _push(self, tick: int, item) -> None:
        heapq.heappush(self._queue, (tick, self._seq, item))
        self._seq += 1

    # -- event loop ------------------------------------------------------------------

    def run_until(self, end_tick: int, realtime_scale: float = 0.0) -> list[dict]:
        """Process events up to and including end_tick; returns the trace.

        A positive realtime_scale paces the loop against the wall clock
        (1 tick = scale seconds); determinism is only guaranteed at 0.
        """
        import time as _time
        wall_start = _time.monotonic()
        if realtime_scale <= 0:
            realtime_scale = self.realtime_scale
        while self._queue and self._queue[0][0] <= end_tick:
            tick, _, item = heapq.heappop(self._queue)
            if realtime_scale > 0:
                lag = tick * realtime_scale - (_time.monotonic() - wall_start)
                if lag > 0:
                    _time.sleep(lag)
            self.now = max(self.now, tick)
            if item[0] == "deliver":
                env = item[1]
                self._inflight[env.to_node] -= 1
                if self.is_crashed(env.to_node, tick) or self.is_crashed(env.from_node, tick):
                    self._log("drop_crash", env.from_node, env.to_node, env.payload)
                    continue
                if self._severed(env.from_node, env.to_node, tick):
                    self._log("drop_partition", env.from_node, env.to_node, env.payload)
                    continue
                self.delivered += 1
                self._log("deliver", env.from_node, env.to_node, env.payload)
                self._handlers[env.to_node](env.from_node, env.payload, tick)
            else:
                _, callback, owner = item
                if owner is not None and self.is_crashed(owner, tick):
                    continue
                callback(tick)
        self.now = max(self.now, end_tick)
        return self.trace

    def _log(self, event: str, from_node: int, to_node: int, payload: bytes) -> None:
        if event != "deliver":
            self.dropped += 1
        if self.keep_trace:
            self.trace.append({
                "tick": self.now,
                "event_type": event,
                "from": from_node,
                "to": to_node,
                "payload_digest": hashlib.sha256(payload).hexdigest()[:16],
            })


def save_trace(trace: list[dict], path) -> None:
    with open(path, "w") as fh:
        for entry in trace:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
