"""One queue, no network: the simulator's FIFO node against M/M/1 theory.

Sojourn time in an M/M/1 queue has mean 1/(mu - lambda).  The helper runs the
exact same FifoNode/event-engine code the full simulator uses, so a match here
validates the queueing core in isolation.
"""

from tcode.network import simulate_mm1_sojourn

service_mean = 1e-4  # seconds, so mu = 10_000 packets/s
print(f"{'rho':>5} {'theory ms':>10} {'simulated ms':>13} {'rel err':>8}")
for rho in (0.2, 0.5, 0.8, 0.9):
    lam = rho / service_mean
    theory = service_mean / (1.0 - rho)
    mean, var = simulate_mm1_sojourn(lam, service_mean, num_packets=300_000, seed=3)
    err = abs(mean - theory) / theory
    print(f"{rho:>5.1f} {theory * 1e3:>10.4f} {mean * 1e3:>13.4f} {err:>8.2%}")

print("\nvariance is heavy near saturation; the mean alone understates the pain:")
lam = 0.9 / service_mean
mean, var = simulate_mm1_sojourn(lam, service_mean, num_packets=300_000, seed=3)
print(f"rho 0.9: mean {mean * 1e3:.3f} ms, std {var ** 0.5 * 1e3:.3f} ms")
