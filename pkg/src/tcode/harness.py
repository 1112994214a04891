"""Experiment orchestration: paired uncoded/coded runs, sweeps, replication.

The coded and uncoded arms of an experiment share the message arrival stream
(common random numbers), so per-replication differences come from coding, not
from sampling different traffic.  Arrival-stream identity is asserted via a
digest of the exact arrival instants.

TCODE_THREADS caps the worker processes used for replications (0 or unset
means one worker per CPU); results are merged in replication order, so the
degree of parallelism never changes the output.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .analytics import gain as analytical_gain
from .engine import RngStream
from .errors import ConfigurationError, SaturationError, TcodeError
from .metrics import AggregateMetrics, RunMetrics, merge
from .network import (
    LinkParams,
    RoutingKind,
    RoutingPolicy,
    Topology,
    build_grid,
    load_topology,
    perturb,
)
from .simulation import Simulation, SimOutput
from .transport import CodeConfig

THREADS_ENV = "TCODE_THREADS"

# A node whose time-averaged queue exceeds this is flagged as saturated.
QUEUE_GROWTH_THRESHOLD = 100.0

_ROUTING_NAMES = {kind.value: kind for kind in RoutingKind}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on, with the reference scenario as default.

    rates holds one entry for single runs and pairs, several for load sweeps;
    n_values optionally pins the redundancy grid of a rate sweep (defaults to
    k..n).  If topology_file is set it replaces the generated grid and the
    rows/cols/removal_fraction fields are ignored.
    """

    rows: int = 4
    cols: int = 4
    removal_fraction: float = 0.2
    topology_file: str | None = None
    capacity_bps: float = 10e6
    link_delay_s: float = 2e-3
    service_mean_s: float = 1e-4
    packet_size_bits: float = 1000.0
    routing: str = "random_walk_no_backtrack"
    ttl: int | None = None
    k: int = 8
    n: int = 12
    rates: tuple[float, ...] = (100.0,)
    deadline_s: float = 0.3
    horizon_s: float = 200.0
    warmup_fraction: float = 0.1
    replications: int = 5
    master_seed: int = 1
    n_values: tuple[int, ...] | None = None

    def validate(self) -> None:
        def fail(field, why):
            raise ConfigurationError(f"{field}: {why}")

        def positive(field, value):
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                fail(field, f"must be positive, got {value!r}")

        for field in ("rows", "cols"):
            v = getattr(self, field)
            if not isinstance(v, int) or v < 1:
                fail(field, f"must be a positive integer, got {v!r}")
        if self.rows * self.cols < 2:
            fail("rows", "grid must contain at least two nodes")
        if not 0.0 <= self.removal_fraction < 1.0:
            fail("removal_fraction", f"must be in [0, 1), got {self.removal_fraction!r}")
        positive("capacity_bps", self.capacity_bps)
        positive("link_delay_s", self.link_delay_s)
        positive("service_mean_s", self.service_mean_s)
        positive("packet_size_bits", self.packet_size_bits)
        if self.routing not in _ROUTING_NAMES:
            fail("routing", f"unknown policy {self.routing!r}, "
                 f"expected one of {sorted(_ROUTING_NAMES)}")
        if self.ttl is not None and (not isinstance(self.ttl, int) or self.ttl < 1):
            fail("ttl", f"must be a positive integer or unset, got {self.ttl!r}")
        if not isinstance(self.k, int) or self.k < 1:
            fail("k", f"must be a positive integer, got {self.k!r}")
        if not isinstance(self.n, int) or self.n < self.k:
            fail("n", f"must be an integer >= k ({self.k}), got {self.n!r}")
        if not self.rates:
            fail("rates", "at least one message rate is required")
        for r in self.rates:
            positive("rates", r)
        if any(b <= a for a, b in zip(self.rates, self.rates[1:])):
            fail("rates", f"must be strictly increasing, got {self.rates!r}")
        positive("deadline_s", self.deadline_s)
        positive("horizon_s", self.horizon_s)
        if not 0.0 <= self.warmup_fraction < 1.0:
            fail("warmup_fraction", f"must be in [0, 1), got {self.warmup_fraction!r}")
        if not isinstance(self.replications, int) or self.replications < 1:
            fail("replications", f"must be a positive integer, got {self.replications!r}")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            fail("master_seed", f"must be a non-negative integer, got {self.master_seed!r}")
        if self.n_values is not None:
            if not self.n_values:
                fail("n_values", "must be non-empty when set")
            for n in self.n_values:
                if not isinstance(n, int) or n < self.k:
                    fail("n_values", f"entries must be integers >= k, got {n!r}")
            if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
                fail("n_values", f"must be strictly increasing, got {self.n_values!r}")

    @property
    def single_rate(self) -> float:
        if len(self.rates) != 1:
            raise ConfigurationError(
                f"this operation needs exactly one message rate, got {len(self.rates)}"
            )
        return self.rates[0]

    def policy(self) -> RoutingPolicy:
        return RoutingPolicy(_ROUTING_NAMES[self.routing], self.ttl)

    def code(self) -> CodeConfig:
        return CodeConfig(self.k, self.n)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def resolved(self) -> list[tuple[str, str]]:
        """Flat (key, value) view in config-file order, for manifests."""
        items = [
            ("topology.rows", self.rows),
            ("topology.cols", self.cols),
            ("topology.removal_fraction", self.removal_fraction),
            ("topology.file", self.topology_file or ""),
            ("link.capacity_bps", self.capacity_bps),
            ("link.mean_delay_s", self.link_delay_s),
            ("link.service_mean_s", self.service_mean_s),
            ("traffic.rates_msgs_s", ",".join(f"{r:.9g}" for r in self.rates)),
            ("traffic.packet_size_bits", self.packet_size_bits),
            ("traffic.deadline_s", self.deadline_s),
            ("code.k", self.k),
            ("code.n", self.n),
            ("code.n_values", ",".join(str(n) for n in self.n_values or ())),
            ("run.routing", self.routing),
            ("run.ttl", "" if self.ttl is None else self.ttl),
            ("run.horizon_s", self.horizon_s),
            ("run.warmup_fraction", self.warmup_fraction),
            ("run.replications", self.replications),
            ("run.master_seed", self.master_seed),
        ]

        def fmt(value):
            if isinstance(value, str):
                return value
            if isinstance(value, float):
                return f"{value:.9g}"
            return str(value)

        return [(key, fmt(value)) for key, value in items]


def build_topology(config: ExperimentConfig) -> Topology:
    """The run topology: loaded from file, or a perturbed grid.

    Grid perturbation draws from the 'topology' stream of the master seed, so
    all arms and replications of an experiment see the same graph.
    """
    if config.topology_file:
        return load_topology(config.topology_file)
    link = LinkParams(config.capacity_bps, config.link_delay_s)
    topo = build_grid(config.rows, config.cols, link)
    if config.removal_fraction > 0.0:
        topo = perturb(topo, config.removal_fraction, RngStream("topology", config.master_seed))
    return topo


def simulate_run(
    config: ExperimentConfig,
    replication: int,
    n_override: int | None = None,
    keep_records: bool = False,
) -> SimOutput:
    """One replication; n_override selects the arm (k for uncoded)."""
    config.validate()
    n = config.n if n_override is None else n_override
    sim = Simulation(
        build_topology(config),
        config.policy(),
        CodeConfig(config.k, n),
        rate_msgs_s=config.single_rate,
        horizon_s=config.horizon_s,
        deadline_s=config.deadline_s,
        service_mean_s=config.service_mean_s,
        packet_size_bits=config.packet_size_bits,
        warmup_fraction=config.warmup_fraction,
        master_seed=config.master_seed,
        replication=replication,
        keep_records=keep_records,
    )
    return sim.execute()


def run_single(config: ExperimentConfig, replication: int) -> RunMetrics:
    return simulate_run(config, replication).metrics


def _run_task(task) -> RunMetrics:
    config, replication, n_override = task
    return simulate_run(config, replication, n_override).metrics


def _worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigurationError(f"{THREADS_ENV} must be >= 0, got {value}")
    return value if value > 0 else (os.cpu_count() or 1)


def _map_runs(tasks: list[tuple]) -> list[RunMetrics]:
    workers = min(_worker_count(), len(tasks))
    if workers <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks))


def _safe_ratio(num: float, den: float) -> float:
    if not (math.isfinite(num) and math.isfinite(den)) or den == 0.0:
        return math.nan
    return num / den


@dataclass(frozen=True)
class PairedResult:
    """Uncoded and coded aggregates at one operating point, plus ratios.

    delay_gain and violation_ratio are uncoded/coded (above 1 means coding
    helps); variance_ratio and throughput_ratio are coded/uncoded.
    """

    rate_msgs_s: float
    k: int
    n: int
    uncoded: AggregateMetrics
    coded: AggregateMetrics
    delay_gain: float
    variance_ratio: float
    violation_ratio: float
    throughput_ratio: float
    queue_growth: bool


def _pair(rate: float, k: int, n: int,
          uncoded: AggregateMetrics, coded: AggregateMetrics) -> PairedResult:
    return PairedResult(
        rate_msgs_s=rate,
        k=k,
        n=n,
        uncoded=uncoded,
        coded=coded,
        delay_gain=_safe_ratio(uncoded.delay_mean, coded.delay_mean),
        variance_ratio=_safe_ratio(coded.delay_variance, uncoded.delay_variance),
        violation_ratio=_safe_ratio(uncoded.violation_probability, coded.violation_probability),
        throughput_ratio=_safe_ratio(
            coded.delivered_throughput_total, uncoded.delivered_throughput_total
        ),
        queue_growth=(
            uncoded.max_mean_queue > QUEUE_GROWTH_THRESHOLD
            or coded.max_mean_queue > QUEUE_GROWTH_THRESHOLD
        ),
    )


def _check_pairing(uncoded: list[RunMetrics], coded: list[RunMetrics]) -> None:
    for u, c in zip(sorted(uncoded, key=lambda r: r.replication),
                    sorted(coded, key=lambda r: r.replication)):
        if u.arrival_digest != c.arrival_digest:
            raise TcodeError(
                f"arrival streams diverged between arms at replication {u.replication}"
            )


def run_paired(config: ExperimentConfig) -> PairedResult:
    """Uncoded (n=k) vs coded (n) arms on common arrivals, merged over reps."""
    config.validate()
    if config.n <= config.k:
        raise ConfigurationError("n: pairing requires n > k")
    return load_sweep(config, rates=[config.single_rate])[0]


def load_sweep(config: ExperimentConfig, rates=None) -> list[PairedResult]:
    """Paired runs across message rates, one PairedResult per rate.

    All (rate, arm, replication) runs go through one worker pool; results are
    regrouped afterwards, so scheduling order cannot affect the output.
    """
    config.validate()
    if config.n <= config.k:
        raise ConfigurationError("n: pairing requires n > k")
    rate_list = tuple(rates) if rates is not None else config.rates
    if not rate_list:
        raise ConfigurationError("rates: at least one message rate is required")
    if any(b <= a for a, b in zip(rate_list, rate_list[1:])):
        raise ConfigurationError(f"rates: must be strictly increasing, got {rate_list!r}")

    tasks = []
    for rate in rate_list:
        cfg = replace(config, rates=(rate,))
        cfg.validate()
        for rep in range(config.replications):
            tasks.append((cfg, rep, cfg.k))
            tasks.append((cfg, rep, cfg.n))
    results = _map_runs(tasks)

    out = []
    per_rate = 2 * config.replications
    for i, rate in enumerate(rate_list):
        block = results[i * per_rate:(i + 1) * per_rate]
        uncoded = block[0::2]
        coded = block[1::2]
        _check_pairing(uncoded, coded)
        out.append(_pair(rate, config.k, config.n, merge(uncoded), merge(coded)))
    return out


@dataclass(frozen=True)
class RateSweepPoint:
    """Measured vs predicted gain at one redundancy level n.

    predicted_gain evaluates the closed form at the uncoded arm's measured
    peak utilization; NaN where that load is beyond the coded feasibility
    limit k/n.
    """

    n: int
    code_rate: float
    measured_gain: float
    predicted_gain: float
    paired: PairedResult


def rate_sweep(config: ExperimentConfig, n_values=None) -> list[RateSweepPoint]:
    """Gain as a function of code rate at a fixed message rate.

    The uncoded arm is run once and shared across all redundancy levels; the
    n == k point is the uncoded arm compared with itself (gain exactly 1).
    """
    config.validate()
    if n_values is not None:
        grid = tuple(n_values)
    elif config.n_values is not None:
        grid = config.n_values
    else:
        grid = tuple(range(config.k, config.n + 1))
    if not grid:
        raise ConfigurationError("n_values: must be non-empty")
    for n in grid:
        if not isinstance(n, int) or n < config.k:
            raise ConfigurationError(f"n_values: entries must be integers >= k, got {n!r}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigurationError(f"n_values: must be strictly increasing, got {grid!r}")

    rate = config.single_rate
    cfg = replace(config, rates=(rate,))
    tasks = [(cfg, rep, cfg.k) for rep in range(config.replications)]
    coded_grid = [n for n in grid if n > config.k]
    for n in coded_grid:
        tasks.extend((cfg, rep, n) for rep in range(config.replications))
    results = _map_runs(tasks)

    reps = config.replications
    uncoded_runs = results[:reps]
    uncoded_agg = merge(uncoded_runs)
    blocks = {
        n: results[reps * (1 + i):reps * (2 + i)]
        for i, n in enumerate(coded_grid)
    }

    points = []
    for n in grid:
        if n == config.k:
            paired = _pair(rate, config.k, n, uncoded_agg, uncoded_agg)
            measured = 1.0
        else:
            coded_runs = blocks[n]
            _check_pairing(uncoded_runs, coded_runs)
            paired = _pair(rate, config.k, n, uncoded_agg, merge(coded_runs))
            measured = paired.delay_gain
        try:
            predicted = analytical_gain(uncoded_agg.rho_est, config.k, n)
        except SaturationError:
            predicted = math.nan
        points.append(RateSweepPoint(n, config.k / n, measured, predicted, paired))
    return points
