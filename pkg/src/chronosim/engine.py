"""Discrete-event core: event queue, seeded random substreams, run loop."""
from __future__ import annotations

import enum
import hashlib
import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import BadInterval, PastEvent
from .traces import TraceSet


class EventKind(enum.IntEnum):
    # value is the tie-break rank for equal fire times
    TaskRelease = 0
    TimerExpiry = 1
    ExecDone = 2
    TxEnd = 3
    TxStart = 4
    AckTimeout = 5
    SlotBoundary = 6
    PlantSample = 7
    BatteryDepleted = 8
    Custom = 9


@dataclass
class SimEvent:
    fire_time: float
    kind: EventKind
    target: str
    seq: int = -1
    payload: Any = field(default=None, compare=False)

    @property
    def key(self):
        return (self.fire_time, int(self.kind), self.seq)


class EndOfSimulation:
    """Sentinel returned by :meth:`EventQueue.advance` on an empty queue."""

    def __repr__(self):
        return "EndOfSimulation"


END = EndOfSimulation()


class EventQueue:
    """Min-heap of events ordered by (fire_time, kind rank, insertion seq).

    Cancellation is lazy: cancelled entries stay in the heap and are skipped
    when they surface.
    """

    def __init__(self, now: float = 0.0):
        self.now = now
        self._heap: list = []
        self._live: dict[int, SimEvent] = {}
        self._seq = itertools.count()
        self.dispatched = 0
        self.cancelled = 0

    def __len__(self):
        return len(self._live)

    def schedule(self, e: SimEvent) -> int:
        if e.fire_time < self.now:
            raise PastEvent(f"{e.kind.name} for {e.target} at {e.fire_time!r} < now={self.now!r}")
        if not math.isfinite(e.fire_time):
            raise PastEvent(f"non-finite fire time {e.fire_time!r}")
        e.seq = next(self._seq)
        heapq.heappush(self._heap, (e.fire_time, int(e.kind), e.seq, e))
        self._live[e.seq] = e
        return e.seq

    def cancel(self, event_id: int) -> bool:
        if self._live.pop(event_id, None) is None:
            return False
        self.cancelled += 1
        return True

    def _prune(self):
        heap = self._heap
        while heap and heap[0][2] not in self._live:
            heapq.heappop(heap)

    def peek(self) -> SimEvent | None:
        self._prune()
        return self._heap[0][3] if self._heap else None

    def advance(self):
        """Pop the minimal event, returning ``(time, event)`` or ``END``."""
        self._prune()
        if not self._heap:
            return END
        t, _, seq, e = heapq.heappop(self._heap)
        del self._live[seq]
        self.now = t
        self.dispatched += 1
        return t, e

    def pending(self) -> list[SimEvent]:
        return sorted(self._live.values(), key=lambda e: e.key)


def schedule_event(q: EventQueue, e: SimEvent) -> int:
    return q.schedule(e)


def cancel_event(q: EventQueue, event_id: int) -> bool:
    return q.cancel(event_id)


def advance(q: EventQueue):
    return q.advance()


def _stream_key(root_seed: int, stream_id: str) -> int:
    digest = hashlib.blake2b(stream_id.encode("utf-8"), digest_size=8).digest()
    return (int.from_bytes(digest, "little") << 64) | (int(root_seed) & 0xFFFFFFFFFFFFFFFF)


class RngStream:
    """Named random substream.

    Backed by numpy's Philox4x32 counter-based generator keyed with the
    128-bit value ``blake2b_64(stream_id) << 64 | root_seed``. Uniform
    variates come from ``Generator.random`` (53-bit doubles), integers from
    ``Generator.integers``.
    """

    def __init__(self, root_seed: int, stream_id: str):
        self.root_seed = int(root_seed)
        self.stream_id = stream_id
        self._gen = np.random.Generator(np.random.Philox(key=_stream_key(root_seed, stream_id)))

    def random(self) -> float:
        return float(self._gen.random())

    def uniform(self, lo: float, hi: float) -> float:
        return rng_sample_uniform(self, lo, hi)

    def integer(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        return int(self._gen.integers(lo, hi, endpoint=True))

    def choice(self, probs) -> int:
        u = self.random()
        acc = 0.0
        for i, p in enumerate(probs):
            acc += p
            if u < acc:
                return i
        return len(probs) - 1


def rng_sample_uniform(s: RngStream, lo: float, hi: float) -> float:
    if lo > hi:
        raise BadInterval(f"lo={lo} > hi={hi}")
    if lo == hi:
        return float(lo)
    v = lo + (hi - lo) * s.random()
    # rounding can land exactly on hi
    return v if v < hi else math.nextafter(hi, lo)


class Simulation:
    """Event loop plus the shared services every simulated entity uses.

    Entities register under a target name and receive the events addressed
    to them through ``handle(event)``. Entities that need to act once all
    events of an instant have been delivered (kernels re-dispatching) call
    :meth:`defer` and get ``end_instant(t)`` called before time advances.
    """

    def __init__(self, root_seed: int = 0):
        self.root_seed = int(root_seed)
        self.queue = EventQueue()
        self.trace = TraceSet()
        self.handlers: dict[str, Any] = {}
        self._streams: dict[str, RngStream] = {}
        self._deferred: dict[int, Any] = {}
        self.dispatch_log: list[float] | None = None
        self._started = False

    @property
    def now(self) -> float:
        return self.queue.now

    def rng(self, stream_id: str) -> RngStream:
        s = self._streams.get(stream_id)
        if s is None:
            s = self._streams[stream_id] = RngStream(self.root_seed, stream_id)
        return s

    def register(self, target: str, handler) -> None:
        if target in self.handlers:
            raise ValueError(f"duplicate entity {target!r}")
        self.handlers[target] = handler

    def schedule(self, t: float, kind: EventKind, target: str, payload=None) -> int:
        return self.queue.schedule(SimEvent(t, kind, target, payload=payload))

    def cancel(self, event_id: int | None) -> bool:
        if event_id is None:
            return False
        return self.queue.cancel(event_id)

    def defer(self, entity) -> None:
        self._deferred.setdefault(id(entity), entity)

    def _flush_instant(self, t: float) -> None:
        while self._deferred:
            batch = list(self._deferred.values())
            self._deferred.clear()
            for entity in batch:
                entity.end_instant(t)

    def start(self) -> None:
        """Hook for entities to seed initial events; called once by run()."""
        if self._started:
            return
        self._started = True
        for h in list(self.handlers.values()):
            init = getattr(h, "start", None)
            if init is not None:
                init()
        self._flush_instant(0.0)

    def run(self, t_end: float) -> TraceSet:
        """Dispatch every event with fire_time <= t_end, in order.

        May be called again with a later ``t_end`` to continue the run.
        """
        q = self.queue
        try:
            self.start()
            while True:
                nxt = q.peek()
                if nxt is None or nxt.fire_time > t_end:
                    break
                t, ev = q.advance()
                if self.dispatch_log is not None:
                    self.dispatch_log.append(t)
                self.handlers[ev.target].handle(ev)
                nxt = q.peek()
                if nxt is None or nxt.fire_time > t:
                    self._flush_instant(t)
            self.finish(t_end)
        except Exception as exc:
            self.trace.failed = f"{type(exc).__name__}: {exc}"
            raise
        return self.trace

    def finish(self, t_end: float) -> None:
        for h in list(self.handlers.values()):
            fin = getattr(h, "finish", None)
            if fin is not None:
                fin(t_end)


def run(world: Simulation, t_end: float) -> TraceSet:
    return world.run(t_end)

