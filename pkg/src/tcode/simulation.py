"""One end-to-end replication: generators, queues, links, receiver, metrics.

The wiring is intentionally flat: three event handlers (message generation,
service completion, link delivery) built as closures over dense per-node
arrays.  The sink absorbs packets without queueing them; the source serves
its own traffic like any relay.  Packet loss exists only as TTL expiry,
checked on arrival at a relay before the packet is enqueued.
"""

from __future__ import annotations

import hashlib
import math
from typing import NamedTuple

from .engine import EventKind, EventScheduler, RngStream
from .errors import ParameterError, TcodeError
from .metrics import MessageRecord, RunAccumulator, RunMetrics, classify_unfinished
from .network import FifoNode, RoutingKind, RoutingPolicy, Topology
from .transport import CodeConfig, Packet, ReceiverState, poisson_message_times


class SimOutput(NamedTuple):
    metrics: RunMetrics
    records: list[MessageRecord] | None
    node_utilization: dict[int, float]
    node_mean_queue: dict[int, float]


def arrival_digest(times: list[float]) -> str:
    """Hash of the exact arrival instants; equal digests mean equal streams."""
    h = hashlib.sha256()
    for t in times:
        h.update(t.hex().encode())
        h.update(b";")
    return h.hexdigest()


class Simulation:
    """A single replication of the coded-transport network model.

    Use execute() for a full run, or prepare()/engine.run()/finalize() to
    inspect intermediate state (the conservation audit does this).
    """

    def __init__(
        self,
        topology: Topology,
        policy: RoutingPolicy,
        code: CodeConfig,
        *,
        rate_msgs_s: float,
        horizon_s: float,
        deadline_s: float,
        service_mean_s: float,
        packet_size_bits: float,
        warmup_fraction: float,
        master_seed: int,
        replication: int,
        keep_records: bool = False,
    ):
        if not math.isfinite(horizon_s) or horizon_s <= 0:
            raise ParameterError(f"horizon must be positive, got {horizon_s!r}")
        if not 0.0 <= warmup_fraction < 1.0:
            raise ParameterError(f"warmup fraction must be in [0, 1), got {warmup_fraction!r}")
        if not math.isfinite(packet_size_bits) or packet_size_bits <= 0:
            raise ParameterError(f"packet size must be positive, got {packet_size_bits!r}")
        if replication < 0:
            raise ParameterError(f"replication index must be >= 0, got {replication!r}")

        self.topology = topology
        self.policy = policy
        self.code = code
        self.rate_msgs_s = rate_msgs_s
        self.horizon_s = horizon_s
        self.deadline_s = deadline_s
        self.service_mean_s = service_mean_s
        self.packet_size_bits = packet_size_bits
        self.warmup_end = warmup_fraction * horizon_s
        self.master_seed = master_seed
        self.replication = replication
        self.keep_records = keep_records

        self.engine = EventScheduler()
        self.router = topology.router(policy)
        self.ttl = policy.resolve_ttl(topology)
        self.receiver = ReceiverState(code, deadline_s)
        self.accumulator = RunAccumulator(self.warmup_end, deadline_s)

        ids = self.router.ids
        index_of = self.router.index_of
        self.sink_index = index_of[topology.sink]
        self.source_index = index_of[topology.source]
        rep = replication

        # one FIFO per node except the sink, which absorbs without queueing
        self.nodes: list[FifoNode | None] = []
        for i, u in enumerate(ids):
            if i == self.sink_index:
                self.nodes.append(None)
                continue
            node = FifoNode(u, i, service_mean_s, RngStream(f"rep{rep}/service/{u}", master_seed))
            node.measure_from = self.warmup_end
            self.nodes.append(node)

        self.routing_rng = [
            RngStream(f"rep{rep}/routing/{u}", master_seed) for u in ids
        ]
        # per node: neighbor index -> (link rng, 1/mean_delay)
        self.link_of: list[dict[int, tuple[RngStream, float]]] = []
        for u in ids:
            entry = {}
            for v in topology.neighbors(u):
                params = topology.link_params(u, v)
                entry[index_of[v]] = (
                    RngStream(f"rep{rep}/link/{u}-{v}", master_seed),
                    1.0 / params.mean_delay_s,
                )
            self.link_of.append(entry)

        self.arrivals = RngStream(f"rep{rep}/arrivals", master_seed)
        self.times: list[float] = []
        self.digest = ""
        self.records: list[MessageRecord] = []
        self.packets_generated = 0
        self.packets_delivered = 0
        self.packets_dropped = 0
        self.sink_bits = 0.0
        self._prepared = False
        self._finalized = False

    # -- handlers ------------------------------------------------------------

    def _bind_handlers(self) -> None:
        engine = self.engine
        schedule = engine.schedule
        times = self.times
        n = self.code.n
        size = self.packet_size_bits
        source_node = self.nodes[self.source_index]
        nodes = self.nodes
        router = self.router
        next_index = router.next_index
        routing_rng = self.routing_rng
        link_of = self.link_of
        sink_index = self.sink_index
        ttl = self.ttl
        receiver = self.receiver
        warmup_end = self.warmup_end
        num_messages = len(times)

        gen_kind = EventKind.MESSAGE_GENERATION
        link_kind = EventKind.LINK_DELIVERY

        def on_generation(time, msg_id):
            for index in range(n):
                pkt = Packet(msg_id, index, size, time)
                pkt.previous_hop = -1  # dense-index form of "no previous hop"
                source_node.admit(pkt, engine, time)
            self.packets_generated += n
            nxt = msg_id + 1
            if nxt < num_messages:
                schedule(times[nxt], gen_kind, nxt)

        def on_service(time, node):
            pkt = node.pop_completed(engine, time)
            u = node.index
            v = next_index(u, pkt.previous_hop, routing_rng[u])
            rng, rate = link_of[u][v]
            d = rng.expovariate(rate)
            while d <= 0.0:
                d = rng.expovariate(rate)
            pkt.previous_hop = u
            pkt.hops += 1
            schedule(time + d, link_kind, (pkt, v))

        def on_delivery(time, payload):
            pkt, v = payload
            if v == sink_index:
                self.packets_delivered += 1
                if time >= warmup_end:
                    self.sink_bits += pkt.size_bits
                done = receiver.on_packet_arrival(pkt, time)
                if done is not None:
                    rec = MessageRecord(
                        message_id=done.message_id,
                        created_at=pkt.created_at,
                        completed_at=done.completed_at,
                        delay=done.delay,
                        violated=done.violated,
                        hops_of_kth=done.hops_of_kth,
                    )
                    self.accumulator.record_completed(rec)
                    if self.keep_records:
                        self.records.append(rec)
            elif ttl is not None and pkt.hops >= ttl:
                self.packets_dropped += 1
                receiver.on_packet_dropped(pkt)
            else:
                nodes[v].admit(pkt, engine, time)

        engine.bind(EventKind.MESSAGE_GENERATION, on_generation)
        engine.bind(EventKind.SERVICE_COMPLETION, on_service)
        engine.bind(EventKind.LINK_DELIVERY, on_delivery)
        engine.bind(EventKind.END_OF_RUN, lambda time, payload: None)

    # -- lifecycle -----------------------------------------------------------

    def prepare(self) -> None:
        """Draw the arrival process and schedule the first events."""
        if self._prepared:
            raise TcodeError("prepare() called twice")
        self._prepared = True
        self.times = poisson_message_times(self.rate_msgs_s, self.horizon_s, self.arrivals)
        self.digest = arrival_digest(self.times)
        self._bind_handlers()
        if self.times:
            self.engine.schedule(self.times[0], EventKind.MESSAGE_GENERATION, 0)
        self.engine.schedule(self.horizon_s, EventKind.END_OF_RUN, None)

    def audit_conservation(self) -> dict[str, int]:
        """Packet conservation counts at the current clock.

        generated == delivered + dropped + queued + in_flight must hold at
        every instant; finalize() enforces it, tests may call it mid-run.
        """
        queued = sum(len(node.queue) for node in self.nodes if node is not None)
        in_flight = sum(
            1 for ev in self.engine.pending() if ev.kind == EventKind.LINK_DELIVERY
        )
        counts = {
            "generated": self.packets_generated,
            "delivered": self.packets_delivered,
            "dropped": self.packets_dropped,
            "queued": queued,
            "in_flight": in_flight,
        }
        if counts["generated"] != (
            counts["delivered"] + counts["dropped"] + counts["queued"] + counts["in_flight"]
        ):
            raise TcodeError(f"packet conservation violated: {counts}")
        return counts

    def finalize(self) -> SimOutput:
        """Close accounting at the horizon and assemble run metrics."""
        if not self._prepared:
            raise TcodeError("finalize() before prepare()")
        if self._finalized:
            raise TcodeError("finalize() called twice")
        if self.engine.now != self.horizon_s:
            raise TcodeError(
                f"finalize() at clock {self.engine.now}, expected horizon {self.horizon_s}"
            )
        self._finalized = True
        self.audit_conservation()

        horizon = self.horizon_s
        utilization: dict[int, float] = {}
        mean_queue: dict[int, float] = {}
        for node in self.nodes:
            if node is None:
                continue
            node.close_measurement(horizon)
            utilization[node.node_id] = node.utilization(horizon)
            mean_queue[node.node_id] = node.mean_queue_length(horizon)

        receiver = self.receiver
        for mid, created_at in enumerate(self.times):
            if receiver.is_completed(mid):
                continue
            failed = mid in receiver.failed
            _, violated = classify_unfinished(created_at, failed, horizon, self.deadline_s)
            rec = MessageRecord(
                message_id=mid,
                created_at=created_at,
                completed_at=None,
                delay=None,
                violated=violated,
                hops_of_kth=-1,
                failed=failed,
            )
            self.accumulator.record_unfinished(rec, horizon)
            if self.keep_records:
                self.records.append(rec)

        if self.keep_records:
            self.records.sort(key=lambda r: r.message_id)

        metrics = self.accumulator.finalize(
            replication=self.replication,
            horizon_s=horizon,
            k=self.code.k,
            packet_size_bits=self.packet_size_bits,
            packets_generated=self.packets_generated,
            packets_delivered=self.packets_delivered,
            packets_dropped=self.packets_dropped,
            surplus_packets=self.receiver.surplus,
            sink_bits=self.sink_bits,
            max_mean_queue=max(mean_queue.values(), default=0.0),
            rho_est=max(utilization.values(), default=0.0),
            arrival_digest=self.digest,
        )
        return SimOutput(
            metrics,
            self.records if self.keep_records else None,
            utilization,
            mean_queue,
        )

    def execute(self) -> SimOutput:
        self.prepare()
        self.engine.run(self.horizon_s)
        return self.finalize()
