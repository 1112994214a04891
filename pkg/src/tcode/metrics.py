"""Run statistics: streaming delay moments, violation accounting, aggregation.

Delay statistics are accumulated in one pass (Welford) over messages created
after the warmup cutoff.  Deadline-violation accounting is deliberately
conservative about censoring: a message still unfinished at the horizon
counts as a violation only if it is old enough that it provably missed the
deadline (or can never complete because too many of its packets were
dropped); younger unfinished messages are excluded rather than guessed at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError


class StreamingMoments:
    """Single-pass mean and sample variance (Welford's update)."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def variance(self) -> float:
        """Sample variance (n-1 denominator); 0.0 for a single value, NaN for none."""
        if self.count == 0:
            return math.nan
        if self.count == 1:
            return 0.0
        return self.m2 / (self.count - 1)


def combine_moments(parts: list[tuple[int, float, float]]) -> tuple[int, float, float]:
    """Combine (count, mean, m2) triples into one, in the order given."""
    count, mean, m2 = 0, 0.0, 0.0
    for c, m, s in parts:
        if c == 0:
            continue
        if count == 0:
            count, mean, m2 = c, m, s
            continue
        delta = m - mean
        total = count + c
        m2 = m2 + s + delta * delta * count * c / total
        mean = mean + delta * c / total
        count = total
    return count, mean, m2


@dataclass(frozen=True)
class MessageRecord:
    """Fate of one message within a run.

    completed_at/delay are None for messages unfinished at the horizon.
    failed marks messages that lost so many packets to TTL drops that
    completion became impossible.
    """

    message_id: int
    created_at: float
    completed_at: float | None
    delay: float | None
    violated: bool
    hops_of_kth: int
    failed: bool = False


@dataclass(frozen=True)
class RunMetrics:
    """Aggregated outcome of a single replication."""

    replication: int
    messages_generated: int
    messages_completed: int
    messages_unfinished: int
    messages_failed: int
    warmup_excluded: int
    counted_messages: int
    delay_mean: float
    delay_variance: float
    violations: int
    violation_counted: int
    violation_probability: float
    delivered_throughput: float        # information bits/s over the counted window
    delivered_throughput_total: float  # all bits reaching the sink, bits/s
    packets_generated: int
    packets_delivered: int
    packets_dropped: int
    surplus_packets: int
    max_mean_queue: float
    rho_est: float
    arrival_digest: str


def delivered_throughput(
    completed_messages: int, k: int, packet_size_bits: float, interval_s: float
) -> float:
    """Information throughput: restored messages carry k * packet_size bits."""
    if interval_s <= 0:
        raise ParameterError(f"interval must be positive, got {interval_s!r}")
    if completed_messages < 0 or k < 1 or packet_size_bits <= 0:
        raise ParameterError("counts and sizes must be non-negative / positive")
    return completed_messages * k * packet_size_bits / interval_s


def classify_unfinished(
    created_at: float, failed: bool, horizon_s: float, deadline_s: float
) -> tuple[bool, bool]:
    """(counted, violated) for a message still unfinished at the horizon.

    Unrecoverable messages and messages whose deadline already passed are
    violations; messages created within deadline_s of the horizon are
    censored (not counted either way).
    """
    if failed or created_at <= horizon_s - deadline_s:
        return True, True
    return False, False


class RunAccumulator:
    """Streams message records into the statistics of one replication.

    Completed messages are fed during the run (record_completed); whatever
    never finished is fed at the horizon (record_unfinished).  Messages
    created before warmup_end are excluded from delay and violation
    statistics but still appear in the raw counters.
    """

    def __init__(self, warmup_end: float, deadline_s: float):
        if warmup_end < 0:
            raise ParameterError(f"warmup_end must be non-negative, got {warmup_end!r}")
        if deadline_s <= 0:
            raise ParameterError(f"deadline must be positive, got {deadline_s!r}")
        self.warmup_end = warmup_end
        self.deadline_s = deadline_s
        self.delays = StreamingMoments()
        self.generated = 0
        self.completed = 0
        self.unfinished = 0
        self.failed = 0
        self.warmup_excluded = 0
        self.violations = 0
        self.violation_counted = 0

    def record_completed(self, rec: MessageRecord) -> None:
        self.generated += 1
        self.completed += 1
        if rec.created_at < self.warmup_end:
            self.warmup_excluded += 1
            return
        self.delays.add(rec.delay)
        self.violation_counted += 1
        if rec.violated:
            self.violations += 1

    def record_unfinished(self, rec: MessageRecord, horizon_s: float) -> None:
        self.generated += 1
        self.unfinished += 1
        if rec.failed:
            self.failed += 1
        if rec.created_at < self.warmup_end:
            self.warmup_excluded += 1
            return
        counted, violated = classify_unfinished(
            rec.created_at, rec.failed, horizon_s, self.deadline_s
        )
        if counted:
            self.violation_counted += 1
            self.violations += int(violated)

    def finalize(
        self,
        replication: int,
        horizon_s: float,
        k: int,
        packet_size_bits: float,
        packets_generated: int,
        packets_delivered: int,
        packets_dropped: int,
        surplus_packets: int,
        sink_bits: float,
        max_mean_queue: float,
        rho_est: float,
        arrival_digest: str,
    ) -> RunMetrics:
        interval = horizon_s - self.warmup_end
        if interval > 0:
            info_bps = self.delays.count * k * packet_size_bits / interval
            total_bps = sink_bits / interval
        else:
            info_bps = 0.0
            total_bps = 0.0
        violation_prob = (
            self.violations / self.violation_counted
            if self.violation_counted > 0
            else math.nan
        )
        return RunMetrics(
            replication=replication,
            messages_generated=self.generated,
            messages_completed=self.completed,
            messages_unfinished=self.unfinished,
            messages_failed=self.failed,
            warmup_excluded=self.warmup_excluded,
            counted_messages=self.delays.count,
            delay_mean=self.delays.mean if self.delays.count else math.nan,
            delay_variance=self.delays.variance,
            violations=self.violations,
            violation_counted=self.violation_counted,
            violation_probability=violation_prob,
            delivered_throughput=info_bps,
            delivered_throughput_total=total_bps,
            packets_generated=packets_generated,
            packets_delivered=packets_delivered,
            packets_dropped=packets_dropped,
            surplus_packets=surplus_packets,
            max_mean_queue=max_mean_queue,
            rho_est=rho_est,
            arrival_digest=arrival_digest,
        )


@dataclass(frozen=True)
class AggregateMetrics:
    """Pooled statistics over replications of one configuration."""

    replications: int
    counted_messages: int
    delay_mean: float
    delay_variance: float
    delay_ci95: float          # half-width on the mean
    violations: int
    violation_counted: int
    violation_probability: float
    delivered_throughput: float
    delivered_throughput_total: float
    messages_generated: int
    messages_completed: int
    messages_unfinished: int
    messages_failed: int
    warmup_excluded: int
    packets_generated: int
    packets_delivered: int
    packets_dropped: int
    surplus_packets: int
    max_mean_queue: float
    rho_est: float


def merge(runs: list[RunMetrics]) -> AggregateMetrics:
    """Pool replications into one aggregate.

    Pooling order is fixed (ascending replication index) so the result is
    invariant to the order runs finished in.  Delay moments are combined at
    the message level; the 95% CI uses the between-replication spread of
    per-run means when there are at least two runs, else the within-run
    spread.
    """
    if not runs:
        raise ParameterError("merge needs at least one run")
    by_rep = sorted(runs, key=lambda r: r.replication)
    if len({r.replication for r in by_rep}) != len(by_rep):
        raise ParameterError("duplicate replication indices in merge")

    parts = []
    for r in by_rep:
        var = r.delay_variance
        m2 = var * (r.counted_messages - 1) if r.counted_messages > 1 else 0.0
        mean = r.delay_mean if r.counted_messages > 0 else 0.0
        parts.append((r.counted_messages, mean, m2))
    count, mean, m2 = combine_moments(parts)
    if count == 0:
        pooled_mean = math.nan
        pooled_var = math.nan
    else:
        pooled_mean = mean
        pooled_var = m2 / (count - 1) if count > 1 else 0.0

    rep_means = [r.delay_mean for r in by_rep if r.counted_messages > 0]
    if len(rep_means) >= 2:
        moments = StreamingMoments()
        for m in rep_means:
            moments.add(m)
        ci = 1.96 * math.sqrt(moments.variance / moments.count)
    elif count > 1:
        ci = 1.96 * math.sqrt(pooled_var / count)
    else:
        ci = math.nan

    violations = sum(r.violations for r in by_rep)
    violation_counted = sum(r.violation_counted for r in by_rep)
    return AggregateMetrics(
        replications=len(by_rep),
        counted_messages=count,
        delay_mean=pooled_mean,
        delay_variance=pooled_var,
        delay_ci95=ci,
        violations=violations,
        violation_counted=violation_counted,
        violation_probability=(
            violations / violation_counted if violation_counted > 0 else math.nan
        ),
        delivered_throughput=_mean(r.delivered_throughput for r in by_rep),
        delivered_throughput_total=_mean(r.delivered_throughput_total for r in by_rep),
        messages_generated=sum(r.messages_generated for r in by_rep),
        messages_completed=sum(r.messages_completed for r in by_rep),
        messages_unfinished=sum(r.messages_unfinished for r in by_rep),
        messages_failed=sum(r.messages_failed for r in by_rep),
        warmup_excluded=sum(r.warmup_excluded for r in by_rep),
        packets_generated=sum(r.packets_generated for r in by_rep),
        packets_delivered=sum(r.packets_delivered for r in by_rep),
        packets_dropped=sum(r.packets_dropped for r in by_rep),
        surplus_packets=sum(r.surplus_packets for r in by_rep),
        max_mean_queue=max(r.max_mean_queue for r in by_rep),
        rho_est=_mean(r.rho_est for r in by_rep),
    )


def _mean(values) -> float:
    vals = list(values)
    return math.fsum(vals) / len(vals) if vals else math.nan
