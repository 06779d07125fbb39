"""Deterministic discrete-event engine.

Time is an integer count of picoseconds. Events pop in ``(time, sequence)``
order, so two events scheduled for the same instant run in the order they
were scheduled.
"""
from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from fscdsim.errors import SchedulingInPast, SimTimeOverflow

TICKS_PER_SECOND = 10**12
INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

# SimTime is a plain int holding picoseconds; the helpers below guard the
# int64 range so nothing silently exceeds what a fixed-width timeline can hold.
SimTime = int


def check_ticks(t: int) -> int:
    if isinstance(t, bool) or not isinstance(t, (int, np.integer)):
        raise TypeError(f"SimTime must be an integer tick count, got {type(t).__name__}")
    t = int(t)
    if t < INT64_MIN or t > INT64_MAX:
        raise SimTimeOverflow(f"{t} ps does not fit in a signed 64-bit timeline")
    return t


def add_ticks(a: int, b: int) -> int:
    return check_ticks(check_ticks(a) + check_ticks(b))


def from_seconds(x: float) -> int:
    return check_ticks(round(x * TICKS_PER_SECOND))


def ps(x: float) -> int:
    return check_ticks(round(x))


def ns(x: float) -> int:
    return check_ticks(round(x * 10**3))


def us(x: float) -> int:
    return check_ticks(round(x * 10**6))


def ms(x: float) -> int:
    return check_ticks(round(x * 10**9))


def to_seconds(t: int) -> float:
    return t / TICKS_PER_SECOND


@dataclass(frozen=True, order=True)
class EventRecord:
    time: int
    sequence: int
    kind: str = field(compare=False)
    source: str = field(compare=False)
    payload: Any = field(default=None, compare=False)

    def log_line(self) -> str:
        return f"{self.time}\t{self.sequence}\t{self.source}\t{self.kind}\t{_fmt_payload(self.payload)}"


def _fmt_payload(payload: Any) -> str:
    if payload is None:
        return "-"
    if isinstance(payload, dict):
        return ",".join(f"{k}={payload[k]}" for k in sorted(payload))
    return str(payload)


Handler = Callable[[EventRecord], None]


class Engine:
    """Single-threaded event queue with a virtual clock.

    Handlers may schedule further events (at or after the current time) while
    they run.  ``assert_order`` re-checks the pop order on every step; it is
    cheap and stays on by default.
    """

    def __init__(self, seed: int = 0, assert_order: bool = True):
        self.seed = int(seed)
        self._now = 0
        self._seq = 0
        self._queue: list[tuple[int, int, EventRecord, Optional[Handler]]] = []
        self._last_popped: Optional[tuple[int, int]] = None
        self.assert_order = assert_order
        self.log: list[EventRecord] = []

    def now(self) -> int:
        return self._now

    def schedule(
        self,
        time: int,
        kind: str,
        source: str,
        payload: Any = None,
        handler: Optional[Handler] = None,
    ) -> EventRecord:
        time = check_ticks(time)
        if time < self._now:
            raise SchedulingInPast(f"event {kind!r} at {time} ps is before now={self._now} ps")
        event = EventRecord(time, self._seq, kind, source, payload)
        self._seq += 1
        heapq.heappush(self._queue, (event.time, event.sequence, event, handler))
        return event

    def schedule_in(self, delay: int, kind: str, source: str, payload: Any = None,
                    handler: Optional[Handler] = None) -> EventRecord:
        return self.schedule(add_ticks(self._now, delay), kind, source, payload, handler)

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, t_end: int) -> list[EventRecord]:
        t_end = check_ticks(t_end)
        if t_end < self._now:
            raise SchedulingInPast(f"run_until({t_end}) is before now={self._now}")
        processed: list[EventRecord] = []
        while self._queue and self._queue[0][0] <= t_end:
            time, seq, event, handler = heapq.heappop(self._queue)
            if self.assert_order and self._last_popped is not None:
                assert (time, seq) > self._last_popped, "event queue popped out of order"
            self._last_popped = (time, seq)
            self._now = time
            processed.append(event)
            self.log.append(event)
            if handler is not None:
                handler(event)
        self._now = t_end
        return processed

    def run(self) -> list[EventRecord]:
        """Drain the queue completely."""
        processed: list[EventRecord] = []
        while self._queue:
            processed.extend(self.run_until(self._queue[0][0]))
        return processed

    def log_text(self) -> str:
        return "".join(e.log_line() + "\n" for e in self.log)

    def rng(self, stream_id: str) -> np.random.Generator:
        return RngStream(self.seed, stream_id).generator()


@dataclass(frozen=True)
class RngStream:
    """Named random sub-stream.

    The stream label is hashed into the seed sequence, so adding a new
    consumer never shifts the draws of an existing one.
    """

    seed: int
    stream_id: str

    def generator(self) -> np.random.Generator:
        digest = hashlib.sha256(self.stream_id.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
        seed = int(self.seed) & (2**64 - 1)
        entropy = [seed & 0xFFFFFFFF, seed >> 32, *words]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.stream_id}/{label}")
