"""Closed-form delay and gain: what redundancy buys before any simulation.

A message of k packets is done when its slowest packet lands, so its delay is
the k-th order statistic of the per-packet delays.  Coding k-of-n swaps the
maximum of k for the k-th smallest of n, at the price of inflating the channel
load by n/k.  The two effects fight; the gain curve shows who wins where.
"""

from tcode.analytics import (
    AnalyticalParams,
    channel_load,
    expected_coded_delay,
    expected_uncoded_delay,
    gain,
    gain_curve,
    optimal_redundancy,
)
from tcode.errors import SaturationError

params = AnalyticalParams(arrival_rate=600.0, service_rate=1000.0, capacity=1.0)
rho = channel_load(params)
k = 8

print(f"channel load rho = {rho:.2f}, k = {k}")
print(f"uncoded mean message delay: {expected_uncoded_delay(params, k) * 1e3:.3f} ms")
for n in (9, 10, 12, 16):
    try:
        coded = expected_coded_delay(params, k, n)
    except SaturationError:
        print(f"  n = {n:2d} (R = {k / n:.2f}): saturated, the inflated load"
              f" rho/R reaches 1 before the code pays off")
        continue
    print(f"  n = {n:2d} (R = {k / n:.2f}): {coded * 1e3:7.3f} ms"
          f"   gain {gain(rho, k, n):.4f}")

best_n, best_gain = optimal_redundancy(rho, k, n_max=24)
print(f"\nbest redundancy at rho {rho}: n* = {best_n}, gain {best_gain:.4f}")

print("\nthe same curve, row by row (infeasible n are flagged, not skipped):")
for row in gain_curve(0.85, k=4, n_max=7):
    tag = "feasible" if row.feasible else "saturated (R <= rho)"
    print(f"  n = {row.n}: R = {row.rate:.2f}  gain = {row.gain:.4f}  [{tag}]")
