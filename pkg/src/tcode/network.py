"""Network structure and per-node behaviour.

A Topology is a connected graph of store-and-forward nodes.  Every physical
link is kept as two directed entries so the two directions can differ in
parameters and so routing never has to special-case direction.  Nodes queue
packets in a single-server FIFO with exponential service; links add an
exponential propagation delay and never lose packets (loss only happens via
the routing TTL).
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass
from enum import Enum

from .engine import EventKind, EventScheduler, sample_exponential
from .errors import ParameterError, TopologyError


@dataclass(frozen=True)
class LinkParams:
    """Directed link parameters: capacity (bits/s) and mean propagation delay (s)."""

    capacity_bps: float = 10e6
    mean_delay_s: float = 2e-3

    def __post_init__(self):
        if not math.isfinite(self.capacity_bps) or self.capacity_bps <= 0:
            raise ParameterError(f"link capacity must be positive, got {self.capacity_bps!r}")
        if not math.isfinite(self.mean_delay_s) or self.mean_delay_s <= 0:
            raise ParameterError(f"link mean delay must be positive, got {self.mean_delay_s!r}")


class Topology:
    """Immutable directed graph with a designated source and sink.

    Construction validates the structural invariants: integer node ids, both
    directions present for every physical link, no self-loops or duplicate
    links, connectedness, and distinct source and sink that are part of the
    graph.
    """

    def __init__(self, nodes, links, source, sink):
        node_list = list(nodes)
        for u in node_list:
            if not isinstance(u, int):
                raise TopologyError(f"node ids must be integers, got {u!r}")
        self.nodes = tuple(sorted(set(node_list)))
        if len(self.nodes) != len(node_list):
            raise TopologyError("duplicate node ids")
        if len(self.nodes) < 2:
            raise TopologyError("need at least two nodes")
        node_set = set(self.nodes)
        self._params: dict[tuple[int, int], LinkParams] = {}
        adj: dict[int, list[int]] = {u: [] for u in self.nodes}
        for u, v, params in links:
            if u not in node_set or v not in node_set:
                raise TopologyError(f"link ({u}, {v}) references unknown node")
            if u == v:
                raise TopologyError(f"self-loop at node {u}")
            if (u, v) in self._params:
                raise TopologyError(f"duplicate link ({u}, {v})")
            if not isinstance(params, LinkParams):
                raise TopologyError(f"link ({u}, {v}) needs LinkParams, got {params!r}")
            self._params[(u, v)] = params
            adj[u].append(v)
        for u, v in self._params:
            if (v, u) not in self._params:
                raise TopologyError(f"link ({u}, {v}) has no reverse entry ({v}, {u})")
        if source not in node_set:
            raise TopologyError(f"source {source} not in topology")
        if sink not in node_set:
            raise TopologyError(f"sink {sink} not in topology")
        if source == sink:
            raise TopologyError("source and sink must differ")
        self.source = source
        self.sink = sink
        self._adj = {u: tuple(sorted(vs)) for u, vs in adj.items()}
        if self._reachable_from(source) != node_set:
            raise TopologyError("topology is not connected")
        self._routers: dict[object, Router] = {}
        self._diameter: int | None = None

    def neighbors(self, u: int) -> tuple[int, ...]:
        try:
            return self._adj[u]
        except KeyError:
            raise TopologyError(f"unknown node {u}") from None

    def link_params(self, u: int, v: int) -> LinkParams:
        try:
            return self._params[(u, v)]
        except KeyError:
            raise TopologyError(f"no link ({u}, {v})") from None

    def directed_links(self) -> list[tuple[int, int, LinkParams]]:
        return [(u, v, p) for (u, v), p in sorted(self._params.items())]

    def undirected_edges(self) -> list[tuple[int, int]]:
        """Each physical link once, as (min, max) pairs in sorted order."""
        return sorted({(min(u, v), max(u, v)) for (u, v) in self._params})

    def _reachable_from(self, start: int) -> set[int]:
        seen = {start}
        frontier = deque([start])
        while frontier:
            u = frontier.popleft()
            for v in self._adj[u]:
                if v not in seen:
                    seen.add(v)
                    frontier.append(v)
        return seen

    def hop_distances(self, target: int) -> dict[int, int]:
        """BFS hop count from every node to `target`."""
        if target not in self._adj:
            raise TopologyError(f"unknown node {target}")
        dist = {target: 0}
        frontier = deque([target])
        while frontier:
            u = frontier.popleft()
            for v in self._adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    frontier.append(v)
        return dist

    def diameter(self) -> int:
        if self._diameter is None:
            self._diameter = max(
                max(self.hop_distances(u).values()) for u in self.nodes
            )
        return self._diameter

    def router(self, policy: RoutingPolicy) -> Router:
        """Router for this topology and policy, cached per policy."""
        r = self._routers.get(policy)
        if r is None:
            r = Router(self, policy)
            self._routers[policy] = r
        return r


def build_grid(rows: int, cols: int, link: LinkParams = LinkParams()) -> Topology:
    """Rectangular grid; node id = row * cols + col, source at one corner
    (id 0), sink at the opposite corner (id rows*cols - 1)."""
    if not isinstance(rows, int) or not isinstance(cols, int) or rows < 1 or cols < 1:
        raise ParameterError(f"grid dimensions must be positive integers, got {rows}x{cols}")
    if rows * cols < 2:
        raise ParameterError("grid must have at least two nodes")
    nodes = list(range(rows * cols))
    links = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                links.append((u, u + 1, link))
                links.append((u + 1, u, link))
            if r + 1 < rows:
                links.append((u, u + cols, link))
                links.append((u + cols, u, link))
    return Topology(nodes, links, source=0, sink=rows * cols - 1)


def perturb(topology: Topology, removal_fraction: float, stream: random.Random) -> Topology:
    """New topology with up to removal_fraction of physical links removed.

    Candidate edges are visited in a stream-shuffled order; an edge is removed
    only if the graph stays connected without it, so the result can fall short
    of the requested fraction on sparse graphs.
    """
    if not (isinstance(removal_fraction, (int, float)) and math.isfinite(removal_fraction)):
        raise ParameterError(f"removal fraction must be a number, got {removal_fraction!r}")
    if not 0.0 <= removal_fraction < 1.0:
        raise ParameterError(f"removal fraction must be in [0, 1), got {removal_fraction}")
    edges = topology.undirected_edges()
    target = int(round(removal_fraction * len(edges)))
    order = list(edges)
    stream.shuffle(order)
    removed: set[tuple[int, int]] = set()
    adj = {u: set(topology.neighbors(u)) for u in topology.nodes}
    for u, v in order:
        if len(removed) == target:
            break
        adj[u].discard(v)
        adj[v].discard(u)
        if _connected(adj, topology.source):
            removed.add((u, v))
        else:
            adj[u].add(v)
            adj[v].add(u)
    links = [
        (u, v, p)
        for (u, v, p) in topology.directed_links()
        if (min(u, v), max(u, v)) not in removed
    ]
    return Topology(list(topology.nodes), links, topology.source, topology.sink)


def _connected(adj: dict[int, set[int]], start: int) -> bool:
    seen = {start}
    frontier = deque([start])
    while frontier:
        u = frontier.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return len(seen) == len(adj)


# --- topology file format ---------------------------------------------------
#
# Line-oriented, '#' starts a comment:
#   node <id>
#   link <from> <to> <capacity_bps> <mean_delay_s>
#   source <id>
#   sink <id>
# Links are directed entries; both directions must be listed.


def load_topology(path) -> Topology:
    nodes: list[int] = []
    links: list[tuple[int, int, LinkParams]] = []
    source = None
    sink = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            kind, args = fields[0], fields[1:]
            try:
                if kind == "node" and len(args) == 1:
                    nodes.append(int(args[0]))
                elif kind == "link" and len(args) == 4:
                    links.append(
                        (int(args[0]), int(args[1]),
                         LinkParams(float(args[2]), float(args[3])))
                    )
                elif kind == "source" and len(args) == 1:
                    source = int(args[0])
                elif kind == "sink" and len(args) == 1:
                    sink = int(args[0])
                else:
                    raise TopologyError(f"unrecognized directive {line!r}")
            except (ValueError, ParameterError) as exc:
                raise TopologyError(f"{path}:{lineno}: {exc}") from None
    if source is None or sink is None:
        raise TopologyError(f"{path}: missing source or sink directive")
    return Topology(nodes, links, source, sink)


def save_topology(topology: Topology, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in topology.nodes:
            fh.write(f"node {u}\n")
        for u, v, p in topology.directed_links():
            fh.write(f"link {u} {v} {p.capacity_bps:.9g} {p.mean_delay_s:.9g}\n")
        fh.write(f"source {topology.source}\n")
        fh.write(f"sink {topology.sink}\n")


# --- routing ----------------------------------------------------------------


class RoutingKind(Enum):
    UNIFORM_RANDOM = "uniform_random"
    RANDOM_WALK_NO_BACKTRACK = "random_walk_no_backtrack"
    RANDOM_SHORTEST_PATH = "random_shortest_path"


# Default TTL for walk policies, in units of the topology diameter.
DEFAULT_TTL_DIAMETERS = 8


@dataclass(frozen=True)
class RoutingPolicy:
    """Forwarding rule plus hop budget.

    ttl=None means "resolve from the topology": walk policies get
    DEFAULT_TTL_DIAMETERS * diameter, shortest-path routing gets no TTL
    because its hop count is already bounded.
    """

    kind: RoutingKind = RoutingKind.RANDOM_WALK_NO_BACKTRACK
    ttl: int | None = None

    def __post_init__(self):
        if self.ttl is not None and (not isinstance(self.ttl, int) or self.ttl < 1):
            raise ParameterError(f"ttl must be a positive integer, got {self.ttl!r}")

    def resolve_ttl(self, topology: Topology) -> int | None:
        if self.kind is RoutingKind.RANDOM_SHORTEST_PATH:
            return None
        ttl = self.ttl
        if ttl is None:
            ttl = DEFAULT_TTL_DIAMETERS * topology.diameter()
        if ttl < topology.diameter():
            raise ParameterError(
                f"ttl {ttl} is below the topology diameter {topology.diameter()}"
            )
        return ttl


class Router:
    """Next-hop chooser for one (topology, policy) pair.

    Internally works on dense node indices (0..N-1 in sorted id order) so the
    simulation can use array lookups; next() accepts and returns node ids.
    """

    def __init__(self, topology: Topology, policy: RoutingPolicy):
        self.topology = topology
        self.policy = policy
        self.ids = list(topology.nodes)
        self.index_of = {u: i for i, u in enumerate(self.ids)}
        self.neighbor_ids = [
            [self.index_of[v] for v in topology.neighbors(u)] for u in self.ids
        ]
        if policy.kind is RoutingKind.RANDOM_SHORTEST_PATH:
            dist = topology.hop_distances(topology.sink)
            self.candidates = []
            for u in self.ids:
                down = [
                    self.index_of[v]
                    for v in topology.neighbors(u)
                    if dist[v] == dist[u] - 1
                ]
                # dist[u] == 0 only at the sink, which never forwards
                if not down and dist[u] > 0:
                    raise TopologyError(f"node {u} has no downhill neighbor to the sink")
                self.candidates.append(down)
        else:
            self.candidates = None

    def next_index(self, at: int, previous: int, stream: random.Random) -> int:
        """Next-hop node index from node index `at`; `previous` is the node
        index the packet came from, or -1 at the origin."""
        kind = self.policy.kind
        if kind is RoutingKind.RANDOM_SHORTEST_PATH:
            cand = self.candidates[at]
            return cand[0] if len(cand) == 1 else stream.choice(cand)
        nbrs = self.neighbor_ids[at]
        if kind is RoutingKind.RANDOM_WALK_NO_BACKTRACK and len(nbrs) > 1 and previous >= 0:
            v = stream.choice(nbrs)
            while v == previous:
                v = stream.choice(nbrs)
            return v
        return nbrs[0] if len(nbrs) == 1 else stream.choice(nbrs)

    def next(self, at: int, previous: int | None, stream: random.Random) -> int:
        """Next-hop node id from node id `at` (previous=None at the origin)."""
        prev_index = -1 if previous is None else self.index_of[previous]
        return self.ids[self.next_index(self.index_of[at], prev_index, stream)]


def next_hop(topology, at, packet, policy, stream) -> int:
    """Choose where `packet` at node id `at` goes next under `policy`."""
    return topology.router(policy).next(at, packet.previous_hop, stream)


# --- queueing ---------------------------------------------------------------


class FifoNode:
    """Single-server FIFO queue with exponential service times.

    The head of `queue` is the packet in service.  Service completions are
    scheduled on the shared calendar with the node as payload; the simulation
    owner calls pop_completed() when that event fires.
    """

    __slots__ = (
        "node_id", "index", "service_rate", "rng",
        "queue", "busy", "served",
        "measure_from", "busy_time", "queue_area", "_last_change",
    )

    def __init__(self, node_id: int, index: int, service_mean_s: float, rng: random.Random):
        if not math.isfinite(service_mean_s) or service_mean_s <= 0:
            raise ParameterError(f"service mean must be positive, got {service_mean_s!r}")
        self.node_id = node_id
        self.index = index
        self.service_rate = 1.0 / service_mean_s
        self.rng = rng
        self.queue: deque = deque()
        self.busy = False
        self.served = 0
        # measurement window for utilization / queue-length statistics
        self.measure_from = 0.0
        self.busy_time = 0.0
        self.queue_area = 0.0
        self._last_change = 0.0

    def _advance_area(self, now: float) -> None:
        if now > self._last_change:
            start = self._last_change if self._last_change > self.measure_from else self.measure_from
            if now > start:
                self.queue_area += len(self.queue) * (now - start)
            self._last_change = now

    def _start_service(self, engine: EventScheduler, now: float) -> None:
        self.busy = True
        dt = self.rng.expovariate(self.service_rate)
        while dt <= 0.0:
            dt = self.rng.expovariate(self.service_rate)
        if now >= self.measure_from:
            self.busy_time += dt
        engine.schedule(now + dt, EventKind.SERVICE_COMPLETION, self)

    def admit(self, packet, engine: EventScheduler, now: float) -> None:
        """Append a packet; start service immediately if the server is idle."""
        self._advance_area(now)
        self.queue.append(packet)
        if not self.busy:
            self._start_service(engine, now)

    def pop_completed(self, engine: EventScheduler, now: float):
        """Remove the packet whose service just finished and start the next one."""
        self._advance_area(now)
        packet = self.queue.popleft()
        self.served += 1
        if self.queue:
            self._start_service(engine, now)
        else:
            self.busy = False
        return packet

    def close_measurement(self, now: float) -> None:
        self._advance_area(now)

    def utilization(self, now: float) -> float:
        """Fraction of the measurement window spent serving."""
        window = now - self.measure_from
        if window <= 0:
            return 0.0
        return min(self.busy_time / window, 1.0)

    def mean_queue_length(self, now: float) -> float:
        window = now - self.measure_from
        if window <= 0:
            return 0.0
        return self.queue_area / window


def simulate_mm1_sojourn(
    arrival_rate: float,
    service_mean_s: float,
    num_packets: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Mean and variance of M/M/1 sojourn time from a single-node simulation.

    Validation helper: theory gives mean 1/(mu - lambda).  Runs the node on
    its own event calendar, so it exercises the same queue and engine code
    paths as a full network run.
    """
    from .engine import RngStream  # local import keeps module load order simple

    if arrival_rate <= 0 or arrival_rate * service_mean_s >= 1.0:
        raise ParameterError("need 0 < arrival_rate < 1/service_mean for a stable queue")
    if num_packets < 1:
        raise ParameterError("need at least one packet")
    engine = EventScheduler()
    arrivals = RngStream("mm1/arrivals", seed)
    node = FifoNode(0, 0, service_mean_s, RngStream("mm1/service", seed))

    count = 0
    mean = 0.0
    m2 = 0.0

    class _Job:
        __slots__ = ("created_at",)

        def __init__(self, t):
            self.created_at = t

    def on_arrival(time, remaining):
        node.admit(_Job(time), engine, time)
        if remaining > 1:
            dt = sample_exponential(1.0 / arrival_rate, arrivals)
            engine.schedule(time + dt, EventKind.MESSAGE_GENERATION, remaining - 1)

    def on_service(time, payload):
        nonlocal count, mean, m2
        job = payload.pop_completed(engine, time)
        x = time - job.created_at
        count += 1
        delta = x - mean
        mean += delta / count
        m2 += delta * (x - mean)

    engine.bind(EventKind.MESSAGE_GENERATION, on_arrival)
    engine.bind(EventKind.SERVICE_COMPLETION, on_service)
    engine.schedule(sample_exponential(1.0 / arrival_rate, arrivals),
                    EventKind.MESSAGE_GENERATION, num_packets)
    # run until the queue drains; horizon is a generous upper bound
    while count < num_packets:
        engine.run(engine.now + 1000.0)
    variance = m2 / (count - 1) if count > 1 else 0.0
    return mean, variance
