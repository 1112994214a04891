"""Transport coding in multi-hop packet networks: simulation and closed form.

A message of k packets is encoded into n >= k packets and restored from any
k of them, so coding trades extra channel load for completion at the k-th
fastest packet instead of the slowest.  This package provides a discrete
event simulator of that mechanism over store-and-forward networks and the
matching analytical delay/gain model, plus a harness that runs both arms of
the comparison on common random numbers.
"""

__version__ = "0.1.0"

from .analytics import (
    AnalyticalParams,
    channel_load,
    expected_coded_delay,
    expected_uncoded_delay,
    gain,
    gain_curve,
    harmonic_partial,
    mean_packet_delay,
    optimal_redundancy,
)
from .engine import Event, EventKind, EventScheduler, RngStream, sample_exponential
from .errors import (
    ConfigurationError,
    ParameterError,
    SaturationError,
    SchedulingError,
    TcodeError,
    TopologyError,
)
from .harness import (
    ExperimentConfig,
    PairedResult,
    RateSweepPoint,
    build_topology,
    load_sweep,
    rate_sweep,
    run_paired,
    run_single,
    simulate_run,
)
from .metrics import (
    AggregateMetrics,
    MessageRecord,
    RunMetrics,
    delivered_throughput,
    merge,
)
from .network import (
    FifoNode,
    LinkParams,
    Router,
    RoutingKind,
    RoutingPolicy,
    Topology,
    build_grid,
    load_topology,
    next_hop,
    perturb,
    save_topology,
    simulate_mm1_sojourn,
)
from .simulation import Simulation, SimOutput
from .transport import (
    CodeConfig,
    Message,
    Packet,
    ReceiverState,
    kth_order_statistic_mc,
    poisson_message_times,
)
