"""Message-level coding: k-of-n packetization and receiver-side completion.

A message becomes n packets, any k of which reconstruct it.  Coding itself is
abstracted away: packets carry only (message_id, index) and the receiver
counts distinct indices, so completion timing is exact while the algebra of
an actual erasure code is out of scope.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class CodeConfig:
    """k information packets, n >= k coded packets, rate k/n."""

    k: int
    n: int

    def __post_init__(self):
        if not isinstance(self.k, int) or not isinstance(self.n, int):
            raise ParameterError(f"k and n must be integers, got {self.k!r}, {self.n!r}")
        if self.k < 1 or self.n < self.k:
            raise ParameterError(f"need 1 <= k <= n, got k={self.k} n={self.n}")

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def redundancy(self) -> int:
        return self.n - self.k


@dataclass(frozen=True)
class Message:
    """One application message; all n packets share its creation time."""

    message_id: int
    code: CodeConfig
    created_at: float
    deadline_s: float

    def __post_init__(self):
        if not math.isfinite(self.created_at) or self.created_at < 0:
            raise ParameterError(f"created_at must be non-negative, got {self.created_at!r}")
        if not math.isfinite(self.deadline_s) or self.deadline_s <= 0:
            raise ParameterError(f"deadline must be positive, got {self.deadline_s!r}")


class Packet:
    """One coded packet in flight.

    previous_hop is the node the packet last left (None before the first
    hop); hops counts link traversals and is what the routing TTL tests.
    """

    __slots__ = ("message_id", "index", "size_bits", "created_at", "hops", "previous_hop")

    def __init__(self, message_id: int, index: int, size_bits: float, created_at: float):
        self.message_id = message_id
        self.index = index
        self.size_bits = size_bits
        self.created_at = created_at
        self.hops = 0
        self.previous_hop = None

    def __repr__(self):
        return (
            f"Packet(message_id={self.message_id}, index={self.index}, "
            f"hops={self.hops}, created_at={self.created_at:.6f})"
        )


def poisson_message_times(rate: float, horizon_s: float, stream: random.Random) -> list[float]:
    """Creation times of a Poisson message process on (0, horizon_s]."""
    if not math.isfinite(rate) or rate <= 0:
        raise ParameterError(f"message rate must be positive, got {rate!r}")
    if not math.isfinite(horizon_s) or horizon_s < 0:
        raise ParameterError(f"horizon must be non-negative, got {horizon_s!r}")
    times = []
    t = stream.expovariate(rate)
    while t <= horizon_s:
        times.append(t)
        t += stream.expovariate(rate)
    return times


class CompletedMessage(NamedTuple):
    message_id: int
    delay: float
    violated: bool
    completed_at: float
    hops_of_kth: int


_COMPLETED = -1  # sentinel mask value once a message has been restored


class ReceiverState:
    """Sink-side bookkeeping: which packet indices of which messages arrived.

    A message completes the moment its k-th distinct index arrives; that
    arrival's timestamp minus the message creation time is the message delay.
    Later packets of a completed message are counted as surplus.  Duplicate
    indices of an incomplete message never count toward k.
    """

    def __init__(self, code: CodeConfig, deadline_s: float):
        if not math.isfinite(deadline_s) or deadline_s <= 0:
            raise ParameterError(f"deadline must be positive, got {deadline_s!r}")
        self.code = code
        self.deadline_s = deadline_s
        self._masks: dict[int, int] = {}
        self._drops: dict[int, int] = {}
        self.completed = 0
        self.surplus = 0
        self.duplicates = 0
        self.failed: set[int] = set()

    def on_packet_arrival(self, packet: Packet, now: float) -> CompletedMessage | None:
        """Record one arrival; return completion info if this was the k-th."""
        mid = packet.message_id
        mask = self._masks.get(mid, 0)
        if mask == _COMPLETED:
            self.surplus += 1
            return None
        bit = 1 << packet.index
        if mask & bit:
            self.duplicates += 1
            return None
        mask |= bit
        if mask.bit_count() == self.code.k:
            self._masks[mid] = _COMPLETED
            self.completed += 1
            delay = now - packet.created_at
            return CompletedMessage(
                mid, delay, delay > self.deadline_s, now, packet.hops
            )
        self._masks[mid] = mask
        return None

    def on_packet_dropped(self, packet: Packet) -> bool:
        """Record a TTL drop; return True if the message just became
        unrecoverable (fewer than k of its packets can still arrive)."""
        mid = packet.message_id
        if self._masks.get(mid, 0) == _COMPLETED or mid in self.failed:
            return False
        drops = self._drops.get(mid, 0) + 1
        self._drops[mid] = drops
        if self.code.n - drops < self.code.k:
            self.failed.add(mid)
            return True
        return False

    def arrived_count(self, message_id: int) -> int:
        mask = self._masks.get(message_id, 0)
        return self.code.k if mask == _COMPLETED else mask.bit_count()

    def is_completed(self, message_id: int) -> bool:
        return self._masks.get(message_id, 0) == _COMPLETED

    def dropped_count(self, message_id: int) -> int:
        return self._drops.get(message_id, 0)


def kth_order_statistic_mc(
    k: int,
    n: int,
    mean: float,
    trials: int,
    seed: int = 0,
) -> float:
    """Monte Carlo mean of the k-th smallest of n iid Exp(mean) variates.

    Oracle companion to the closed form mean * (H(n) - H(n-k)); chunked so
    large trial counts stay within a modest memory footprint.
    """
    if not isinstance(k, int) or not isinstance(n, int) or k < 1 or n < k:
        raise ParameterError(f"need 1 <= k <= n, got k={k} n={n}")
    if not math.isfinite(mean) or mean <= 0:
        raise ParameterError(f"mean must be positive, got {mean!r}")
    if trials < 1:
        raise ParameterError(f"trials must be positive, got {trials!r}")
    rng = np.random.default_rng(seed)
    chunk = max(1, min(trials, 200_000))
    total = 0.0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        x = rng.exponential(mean, size=(m, n))
        if k == n:
            kth = x.max(axis=1)
        else:
            kth = np.partition(x, k - 1, axis=1)[:, k - 1]
        total += float(kth.sum())
        done += m
    return total / trials
