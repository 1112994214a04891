"""Closed-form delay and gain model for k-of-n transport coding.

A message is split into k packets and encoded into n >= k packets; the
receiver restores it from any k of them, so message delay is the k-th order
statistic of per-packet delays.  For exponential packet delay with mean t
this gives E[delay] = t * (H(n) - H(n-k)), and coding inflates the channel
load by the factor n/k.  The gain function compares the coded and uncoded
message delays on the same channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ParameterError, SaturationError

# Loads this close to (or past) the pole are treated as saturated.
FEASIBILITY_EPS = 1e-9

# Packet delay is expressed in units of 1/normalization seconds; the default
# puts one load unit at a millisecond, matching 10 Mbps links carrying
# 1000-bit packets at service rate 10^4 pps.
DEFAULT_NORMALIZATION = 1000.0


def _check_positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value)) or value <= 0:
        raise ParameterError(f"{name} must be finite and positive, got {value!r}")


def _check_code(k, n):
    if not isinstance(k, int) or not isinstance(n, int):
        raise ParameterError(f"k and n must be integers, got k={k!r} n={n!r}")
    if k < 1 or n < k:
        raise ParameterError(f"need 1 <= k <= n, got k={k} n={n}")


@dataclass(frozen=True)
class AnalyticalParams:
    """Operating point of the shared channel.

    arrival_rate   packet arrival rate at a node (packets/s)
    service_rate   packets served per second per unit of capacity
    capacity       number of capacity units
    normalization  converts dimensionless delay to seconds (delay unit = 1/normalization)
    """

    arrival_rate: float
    service_rate: float
    capacity: float
    normalization: float = DEFAULT_NORMALIZATION

    def __post_init__(self):
        _check_positive("arrival_rate", self.arrival_rate)
        _check_positive("service_rate", self.service_rate)
        _check_positive("capacity", self.capacity)
        _check_positive("normalization", self.normalization)


def channel_load(params: AnalyticalParams) -> float:
    """Offered load rho = arrival_rate / (service_rate * capacity)."""
    return params.arrival_rate / (params.service_rate * params.capacity)


def mean_packet_delay(params: AnalyticalParams, load: float) -> float:
    """Mean packet delay in seconds when the channel runs at `load`.

    The prefactor rho/normalization is fixed by the operating point; `load`
    only moves the pole, so coded traffic passes the inflated load here while
    keeping the uncoded prefactor.
    """
    if not math.isfinite(load) or load < 0.0:
        raise ParameterError(f"load must be finite and non-negative, got {load!r}")
    if load >= 1.0 - FEASIBILITY_EPS:
        raise SaturationError(f"channel saturated: load {load} >= 1")
    rho = channel_load(params)
    return rho / params.normalization / (1.0 - load)


def harmonic_partial(lo: int, hi: int) -> float:
    """Sum of 1/i for i in [lo, hi], both ends inclusive."""
    if not isinstance(lo, int) or not isinstance(hi, int):
        raise ParameterError(f"harmonic bounds must be integers, got {lo!r}, {hi!r}")
    if lo < 1 or hi < lo:
        raise ParameterError(f"need 1 <= lo <= hi, got lo={lo} hi={hi}")
    return math.fsum(1.0 / i for i in range(lo, hi + 1))


def expected_uncoded_delay(params: AnalyticalParams, k: int) -> float:
    """Mean delay of a k-packet message sent without redundancy (seconds)."""
    _check_code(k, k)
    return mean_packet_delay(params, channel_load(params)) * harmonic_partial(1, k)


def expected_coded_delay(params: AnalyticalParams, k: int, n: int) -> float:
    """Mean delay of a message coded k-of-n (seconds).

    Redundancy multiplies the channel load by n/k; completion needs only the
    k fastest of n packets, which replaces H(1,k) by H(n-k+1,n).
    """
    _check_code(k, n)
    rho = channel_load(params)
    rate = k / n
    if rho >= rate - FEASIBILITY_EPS:
        raise SaturationError(
            f"coded load infeasible: rho={rho} >= k/n={rate} for n={n}"
        )
    base = (rho / params.normalization) * rate / (rate - rho)
    return base * harmonic_partial(n - k + 1, n)


def gain(rho: float, k: int, n: int) -> float:
    """Ratio of uncoded to coded mean message delay; > 1 means coding wins."""
    _check_code(k, n)
    if not math.isfinite(rho) or rho < 0.0:
        raise ParameterError(f"rho must be finite and non-negative, got {rho!r}")
    rate = k / n
    if rho >= min(1.0, rate) - FEASIBILITY_EPS:
        raise SaturationError(f"gain undefined at rho={rho} for k={k} n={n}")
    return (
        (1.0 - rho / rate)
        / (1.0 - rho)
        * harmonic_partial(1, k)
        / harmonic_partial(n - k + 1, n)
    )


class GainCurveRow(NamedTuple):
    n: int
    rate: float  # code rate k/n
    uncoded_delay_s: float
    coded_delay_s: float
    gain: float
    feasible: bool


def gain_curve(
    rho: float,
    k: int,
    n_max: int,
    normalization: float = DEFAULT_NORMALIZATION,
) -> list[GainCurveRow]:
    """Gain and delays for every n in [k, n_max] at fixed channel load rho.

    Rows past the coded saturation point are emitted with NaN delay/gain and
    feasible=False so sweeps show where the feasible region ends.
    """
    _check_code(k, n_max)
    if not math.isfinite(rho) or rho < 0.0:
        raise ParameterError(f"rho must be finite and non-negative, got {rho!r}")
    if rho >= 1.0 - FEASIBILITY_EPS:
        raise SaturationError(f"uncoded channel already saturated at rho={rho}")
    _check_positive("normalization", normalization)
    t_unc = rho / normalization / (1.0 - rho) * harmonic_partial(1, k)
    rows = []
    for n in range(k, n_max + 1):
        rate = k / n
        if rho >= rate - FEASIBILITY_EPS:
            rows.append(GainCurveRow(n, rate, t_unc, math.nan, math.nan, False))
            continue
        t_cod = (
            rho / normalization * rate / (rate - rho) * harmonic_partial(n - k + 1, n)
        )
        rows.append(GainCurveRow(n, rate, t_unc, t_cod, t_unc / t_cod, True))
    return rows


def optimal_redundancy(rho: float, k: int, n_max: int) -> tuple[int, float]:
    """The n in [k, n_max] with the largest gain; ties go to smaller n."""
    best = None
    for row in gain_curve(rho, k, n_max):
        if not row.feasible:
            continue
        if best is None or row.gain > best[1]:
            best = (row.n, row.gain)
    if best is None:
        raise SaturationError(f"no feasible n in [{k}, {n_max}] at rho={rho}")
    return best
