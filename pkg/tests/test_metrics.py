"""Streaming moments, violation accounting, replication merge."""

import math
import random

import numpy as np
import pytest

from tcode.errors import ParameterError
from tcode.metrics import (
    MessageRecord,
    RunAccumulator,
    StreamingMoments,
    classify_unfinished,
    combine_moments,
    delivered_throughput,
    merge,
)


def _completed(mid, created, delay, violated=False, hops=5):
    return MessageRecord(mid, created, created + delay, delay, violated, hops)


def _unfinished(mid, created, failed=False):
    return MessageRecord(mid, created, None, None, False, -1, failed=failed)


def test_streaming_moments_match_numpy():
    rng = random.Random(42)
    xs = [rng.gauss(3.0, 2.0) for _ in range(5000)]
    acc = StreamingMoments()
    for x in xs:
        acc.add(x)
    assert acc.count == 5000
    assert acc.mean == pytest.approx(float(np.mean(xs)), rel=1e-12)
    assert acc.variance == pytest.approx(float(np.var(xs, ddof=1)), rel=1e-12)


def test_streaming_moments_degenerate_cases():
    acc = StreamingMoments()
    assert math.isnan(acc.variance)
    acc.add(1.0)
    assert acc.variance == 0.0
    acc.add(1.0)
    acc.add(1.0)
    assert acc.mean == 1.0
    assert acc.variance == 0.0


def test_streaming_moments_exponential_sample():
    rng = np.random.default_rng(7)
    xs = rng.exponential(0.25, size=1_000_000)
    acc = StreamingMoments()
    for x in xs.tolist():
        acc.add(x)
    assert abs(acc.mean - 0.25) / 0.25 < 0.01
    assert abs(acc.variance - 0.0625) / 0.0625 < 0.03


def test_combine_moments_matches_numpy():
    rng = np.random.default_rng(3)
    chunks = [rng.normal(size=s) for s in (0, 1, 5, 100, 1000)]
    parts = []
    for c in chunks:
        acc = StreamingMoments()
        for x in c.tolist():
            acc.add(x)
        parts.append((acc.count, acc.mean, acc.m2))
    count, mean, m2 = combine_moments(parts)
    allx = np.concatenate(chunks)
    assert count == len(allx)
    assert mean == pytest.approx(float(np.mean(allx)), rel=1e-12)
    assert m2 / (count - 1) == pytest.approx(float(np.var(allx, ddof=1)), rel=1e-12)


def test_delivered_throughput_example():
    # 100 messages of 8 packets x 1000 bits over 10 seconds
    assert delivered_throughput(100, 8, 1000.0, 10.0) == pytest.approx(80_000.0)
    with pytest.raises(ParameterError):
        delivered_throughput(100, 8, 1000.0, 0.0)
    with pytest.raises(ParameterError):
        delivered_throughput(-1, 8, 1000.0, 1.0)


def test_classify_unfinished_rules():
    horizon, deadline = 100.0, 0.3
    assert classify_unfinished(10.0, False, horizon, deadline) == (True, True)
    assert classify_unfinished(99.7, False, horizon, deadline) == (True, True)  # boundary
    assert classify_unfinished(99.8, False, horizon, deadline) == (False, False)
    assert classify_unfinished(99.9, True, horizon, deadline) == (True, True)  # failed


def test_accumulator_warmup_and_violations():
    acc = RunAccumulator(warmup_end=10.0, deadline_s=0.5)
    acc.record_completed(_completed(0, created=5.0, delay=0.1))          # warmup
    acc.record_completed(_completed(1, created=11.0, delay=0.2))
    acc.record_completed(_completed(2, created=12.0, delay=0.8, violated=True))
    acc.record_unfinished(_unfinished(3, created=4.0), horizon_s=100.0)  # warmup
    acc.record_unfinished(_unfinished(4, created=50.0), horizon_s=100.0)  # old: violated
    acc.record_unfinished(_unfinished(5, created=99.8), horizon_s=100.0)  # censored
    acc.record_unfinished(_unfinished(6, created=99.9, failed=True), horizon_s=100.0)

    m = acc.finalize(
        replication=0, horizon_s=100.0, k=2, packet_size_bits=1000.0,
        packets_generated=28, packets_delivered=20, packets_dropped=3,
        surplus_packets=4, sink_bits=90_000.0, max_mean_queue=1.5,
        rho_est=0.4, arrival_digest="d",
    )
    assert m.messages_generated == 7
    assert m.messages_completed == 3
    assert m.messages_unfinished == 4
    assert m.messages_failed == 1
    assert m.warmup_excluded == 2
    assert m.counted_messages == 2          # delay stats: messages 1 and 2
    assert m.delay_mean == pytest.approx(0.5)
    assert m.delay_variance == pytest.approx(0.18)
    # violations: message 2 (late), 4 (old unfinished), 6 (failed); 5 censored
    assert m.violations == 3
    assert m.violation_counted == 4
    assert m.violation_probability == pytest.approx(0.75)
    # throughput over the 90 s after warmup
    assert m.delivered_throughput == pytest.approx(2 * 2 * 1000.0 / 90.0)
    assert m.delivered_throughput_total == pytest.approx(1000.0)
    assert m.rho_est == 0.4


def test_accumulator_empty_run():
    acc = RunAccumulator(warmup_end=0.0, deadline_s=1.0)
    m = acc.finalize(
        replication=0, horizon_s=10.0, k=1, packet_size_bits=1000.0,
        packets_generated=0, packets_delivered=0, packets_dropped=0,
        surplus_packets=0, sink_bits=0.0, max_mean_queue=0.0,
        rho_est=0.0, arrival_digest="d",
    )
    assert m.messages_generated == 0
    assert math.isnan(m.delay_mean)
    assert math.isnan(m.delay_variance)
    assert math.isnan(m.violation_probability)
    assert m.delivered_throughput == 0.0


def _run_from_delays(rep, delays, violations=0):
    acc = RunAccumulator(warmup_end=0.0, deadline_s=1e9)
    for i, d in enumerate(delays):
        acc.record_completed(_completed(i, created=1.0, delay=d))
    m = acc.finalize(
        replication=rep, horizon_s=10.0, k=1, packet_size_bits=1000.0,
        packets_generated=len(delays), packets_delivered=len(delays),
        packets_dropped=0, surplus_packets=0, sink_bits=0.0,
        max_mean_queue=float(rep), rho_est=0.1 * (rep + 1), arrival_digest=f"d{rep}",
    )
    return m


def test_merge_pools_message_level_moments():
    rng = random.Random(1)
    groups = [[rng.expovariate(2.0) for _ in range(s)] for s in (50, 80, 10)]
    runs = [_run_from_delays(i, g) for i, g in enumerate(groups)]
    agg = merge(runs)
    allx = [x for g in groups for x in g]
    assert agg.counted_messages == len(allx)
    assert agg.delay_mean == pytest.approx(float(np.mean(allx)), rel=1e-12)
    assert agg.delay_variance == pytest.approx(float(np.var(allx, ddof=1)), rel=1e-12)
    assert agg.replications == 3
    assert agg.max_mean_queue == 2.0
    assert agg.rho_est == pytest.approx(0.2)


def test_merge_is_order_invariant():
    rng = random.Random(2)
    runs = [
        _run_from_delays(i, [rng.expovariate(1.0) for _ in range(30)])
        for i in range(4)
    ]
    shuffled = runs[::-1]
    assert merge(runs) == merge(shuffled)


def test_merge_ci_from_between_replication_spread():
    runs = [_run_from_delays(0, [1.0, 1.0]), _run_from_delays(1, [3.0, 3.0])]
    agg = merge(runs)
    # rep means 1 and 3: sample var 2, se = sqrt(2/2) = 1
    assert agg.delay_ci95 == pytest.approx(1.96)


def test_merge_rejects_bad_input():
    with pytest.raises(ParameterError):
        merge([])
    runs = [_run_from_delays(0, [1.0]), _run_from_delays(0, [2.0])]
    with pytest.raises(ParameterError):
        merge(runs)


def test_merge_single_run_passthrough():
    run = _run_from_delays(0, [1.0, 2.0, 3.0])
    agg = merge([run])
    assert agg.delay_mean == pytest.approx(2.0)
    assert agg.delay_variance == pytest.approx(1.0)
    assert agg.counted_messages == 3


def test_merge_violation_pooling():
    a = RunAccumulator(warmup_end=0.0, deadline_s=0.5)
    a.record_completed(_completed(0, 1.0, 0.6, violated=True))
    a.record_completed(_completed(1, 1.0, 0.1))
    b = RunAccumulator(warmup_end=0.0, deadline_s=0.5)
    b.record_completed(_completed(0, 1.0, 0.2))
    b.record_completed(_completed(1, 1.0, 0.3))
    common = dict(
        horizon_s=10.0, k=1, packet_size_bits=1000.0, packets_generated=2,
        packets_delivered=2, packets_dropped=0, surplus_packets=0,
        sink_bits=0.0, max_mean_queue=0.0, rho_est=0.0,
    )
    runs = [
        a.finalize(replication=0, arrival_digest="x", **common),
        b.finalize(replication=1, arrival_digest="y", **common),
    ]
    agg = merge(runs)
    assert agg.violations == 1
    assert agg.violation_counted == 4
    assert agg.violation_probability == pytest.approx(0.25)
