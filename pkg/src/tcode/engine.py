"""Deterministic discrete-event core: event calendar, clock, named random streams.

Everything that happens in a run is an Event on one binary heap, ordered by
(time, seq).  The seq counter breaks ties in insertion order, so two runs with
the same configuration and seed replay the exact same event sequence.
"""

from __future__ import annotations

import hashlib
import math
import random
from enum import IntEnum
from heapq import heappop, heappush
from typing import Callable, NamedTuple

from .errors import ParameterError, SchedulingError


class EventKind(IntEnum):
    MESSAGE_GENERATION = 0
    SERVICE_COMPLETION = 1
    LINK_DELIVERY = 2
    END_OF_RUN = 3


class Event(NamedTuple):
    time: float
    seq: int
    kind: int
    payload: object


Handler = Callable[[float, object], None]


def derive_seed(master_seed: int, label: str) -> int:
    """Stable 64-bit seed for a named substream of a master seed.

    Hash-derived so that streams with different labels are effectively
    independent and adding a new stream never shifts existing ones.
    """
    digest = hashlib.sha256(f"{master_seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream(random.Random):
    """A named random substream.

    Same (master_seed, label) always yields the same sample sequence,
    regardless of what other streams exist or in what order they are drawn.
    """

    def __new__(cls, label: str, master_seed: int):
        # the C-level base validates constructor arguments, so translate here
        return super().__new__(cls, derive_seed(master_seed, label))

    def __init__(self, label: str, master_seed: int):
        super().__init__(derive_seed(master_seed, label))
        self.label = label
        self.master_seed = master_seed

    def __repr__(self):
        return f"RngStream({self.label!r}, master_seed={self.master_seed})"


def sample_exponential(mean: float, stream: random.Random) -> float:
    """Draw a strictly positive exponential variate with the given mean."""
    if not (isinstance(mean, (int, float)) and math.isfinite(mean)) or mean <= 0.0:
        raise ParameterError(f"exponential mean must be finite and positive, got {mean!r}")
    x = stream.expovariate(1.0 / mean)
    while x <= 0.0:  # expovariate can return exactly 0.0 on a degenerate draw
        x = stream.expovariate(1.0 / mean)
    return x


def _unbound_handler(kind: EventKind) -> Handler:
    def handler(time, payload):
        raise SchedulingError(f"no handler bound for {kind.name}")

    return handler


class EventScheduler:
    """Event calendar plus simulation clock.

    Handlers are bound per EventKind before the run starts; dispatch is a
    plain list index so the main loop stays cheap.
    """

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0
        self._now = 0.0
        self._handlers: list[Handler] = [_unbound_handler(k) for k in EventKind]

    @property
    def now(self) -> float:
        return self._now

    def bind(self, kind: EventKind, handler: Handler) -> None:
        self._handlers[int(kind)] = handler

    def schedule(self, time: float, kind: EventKind, payload: object = None) -> Event:
        """Insert an event; time must not precede the current clock."""
        if not math.isfinite(time):
            raise SchedulingError(f"event time must be finite, got {time!r}")
        if time < self._now:
            raise SchedulingError(
                f"cannot schedule {EventKind(kind).name} at {time} before clock {self._now}"
            )
        ev = Event(time, self._seq, int(kind), payload)
        self._seq += 1
        heappush(self._heap, ev)
        return ev

    def run(self, until: float) -> int:
        """Dispatch events in (time, seq) order through `until` inclusive.

        Returns the number of events dispatched.  The clock ends at `until`
        even if the calendar empties earlier; remaining future events stay
        queued for a later run() call.
        """
        if not math.isfinite(until):
            raise SchedulingError(f"run horizon must be finite, got {until!r}")
        if until < self._now:
            raise SchedulingError(f"cannot run to {until}, clock already at {self._now}")
        heap = self._heap
        handlers = self._handlers
        dispatched = 0
        while heap and heap[0][0] <= until:
            time, _seq, kind, payload = heappop(heap)
            self._now = time
            handlers[kind](time, payload)
            dispatched += 1
        self._now = until
        return dispatched

    def pending(self) -> list[Event]:
        """Snapshot of undelivered events, in calendar order."""
        return sorted(self._heap)

    def pending_count(self) -> int:
        return len(self._heap)
