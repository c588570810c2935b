"""Network and scenario descriptions for the fluid congestion-control simulator.

All quantities use packets and seconds.  Packet size is fixed at 1000 bytes,
so a 100 Mb/s link carries 12500 pkt/s; see mbps_to_pkts_per_s().
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

PACKET_BYTES = 1000
PACKET_BITS = 8 * PACKET_BYTES

ESTIMATOR_KINDS = ("naive_min", "rate_reduction", "delta_probe")
KAPPA_MODES = ("fast", "vegas")


class ValidationError(ValueError):
    """A scenario or topology failed static validation."""


def mbps_to_pkts_per_s(mbps: float) -> float:
    """Convert a rate in Mb/s to packets per second at the fixed packet size."""
    return mbps * 1e6 / PACKET_BITS


def pkts_per_s_to_mbps(pkts: float) -> float:
    return pkts * PACKET_BITS / 1e6


@dataclass(frozen=True)
class LinkSpec:
    """A unidirectional link with a fluid FIFO queue.

    buffer_limit is in packets; None means an unbounded buffer.
    """

    id: str
    capacity: float            # pkt/s
    prop_delay: float = 0.0    # s, one way
    buffer_limit: float | None = None

    def validate(self) -> None:
        if not self.id:
            raise ValidationError("link id must be non-empty")
        if not self.capacity > 0:
            raise ValidationError(f"link {self.id}: capacity must be > 0")
        if self.prop_delay < 0:
            raise ValidationError(f"link {self.id}: prop_delay must be >= 0")
        if self.buffer_limit is not None and not self.buffer_limit > 0:
            raise ValidationError(f"link {self.id}: buffer_limit must be > 0 when finite")


@dataclass(frozen=True)
class EstimatorSpec:
    """Propagation-delay estimator attached to a flow.

    kind selects the strategy:
      naive_min       running minimum of observed RTT samples
      rate_reduction  pause transmission once stable so queues can drain
      delta_probe     rate perturbation that measures the competing flow count
                      and subtracts the standing-queue bias from the estimate

    t_eps and pause_duration of None mean "use the RTT measured at the time
    the action starts".
    """

    kind: str = "naive_min"
    theta: float = -0.5
    t_eps: float | None = None
    pause_duration: float | None = None
    stable_window_rtts: float = 5.0
    stable_tol: float = 0.005
    max_retries: int = 3

    def validate(self) -> None:
        if self.kind not in ESTIMATOR_KINDS:
            raise ValidationError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "delta_probe":
            if not 0 < abs(self.theta) < 1:
                raise ValidationError("delta_probe: need 0 < |theta| < 1")
            if self.t_eps is not None and not self.t_eps > 0:
                raise ValidationError("delta_probe: t_eps must be > 0 when fixed")
            if self.max_retries < 0:
                raise ValidationError("delta_probe: max_retries must be >= 0")
        if self.kind == "rate_reduction":
            if self.pause_duration is not None and not self.pause_duration > 0:
                raise ValidationError("rate_reduction: pause_duration must be > 0 when fixed")
        if not self.stable_window_rtts > 0:
            raise ValidationError("stable_window_rtts must be > 0")
        if not self.stable_tol > 0:
            raise ValidationError("stable_tol must be > 0")


@dataclass(frozen=True)
class FlowSpec:
    """A congestion-controlled flow over an ordered list of links.

    reverse_delay models the ACK path as a pure delay; None defaults it to
    the sum of the forward propagation delays (symmetric routing).
    """

    id: str
    path: tuple[str, ...]
    alpha: float = 50.0        # target backlog, packets
    gamma: float = 0.5         # window gain in (0, 1]
    start_time: float = 0.0
    reverse_delay: float | None = None
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    kappa: str = "fast"        # "fast": k = gamma*alpha/rtt, "vegas": k = 1/rtt

    def validate(self) -> None:
        if not self.id:
            raise ValidationError("flow id must be non-empty")
        if not self.path:
            raise ValidationError(f"flow {self.id}: path must be non-empty")
        if len(set(self.path)) != len(self.path):
            raise ValidationError(f"flow {self.id}: path must not repeat links")
        if not self.alpha > 0:
            raise ValidationError(f"flow {self.id}: alpha must be > 0")
        if not 0 < self.gamma <= 1:
            raise ValidationError(f"flow {self.id}: gamma must be in (0, 1]")
        if self.start_time < 0:
            raise ValidationError(f"flow {self.id}: start_time must be >= 0")
        if self.reverse_delay is not None and self.reverse_delay < 0:
            raise ValidationError(f"flow {self.id}: reverse_delay must be >= 0")
        if self.kappa not in KAPPA_MODES:
            raise ValidationError(f"flow {self.id}: kappa must be one of {KAPPA_MODES}")
        self.estimator.validate()


@dataclass(frozen=True)
class ParetoSourceSpec:
    """On/off background source with Pareto-distributed burst and idle times."""

    path: tuple[str, ...]
    shape: float = 1.25
    mean_burst: float = 0.1
    mean_idle: float = 0.1
    peak_rate: float = 0.0     # pkt/s while on

    def validate(self) -> None:
        if not self.path:
            raise ValidationError("background: path must be non-empty")
        if not self.shape > 1:
            raise ValidationError("background: shape must be > 1 (finite mean)")
        if not self.mean_burst > 0 or not self.mean_idle > 0:
            raise ValidationError("background: mean burst and idle times must be > 0")
        if self.peak_rate < 0:
            raise ValidationError("background: peak_rate must be >= 0")


@dataclass(frozen=True)
class Topology:
    links: tuple[LinkSpec, ...]
    flows: tuple[FlowSpec, ...]

    def link_map(self) -> dict[str, LinkSpec]:
        return {l.id: l for l in self.links}

    def flow_map(self) -> dict[str, FlowSpec]:
        return {f.id: f for f in self.flows}

    def forward_prop(self, flow: FlowSpec) -> float:
        links = self.link_map()
        return sum(links[l].prop_delay for l in flow.path)

    def reverse_delay(self, flow: FlowSpec) -> float:
        if flow.reverse_delay is not None:
            return flow.reverse_delay
        return self.forward_prop(flow)

    def round_trip_prop(self, flow: FlowSpec) -> float:
        """Round-trip propagation delay: forward path plus ACK path."""
        return self.forward_prop(flow) + self.reverse_delay(flow)

    def validate(self) -> None:
        ids = [l.id for l in self.links]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate link ids")
        fids = [f.id for f in self.flows]
        if len(set(fids)) != len(fids):
            raise ValidationError("duplicate flow ids")
        for l in self.links:
            l.validate()
        known = set(ids)
        for f in self.flows:
            f.validate()
            for lid in f.path:
                if lid not in known:
                    raise ValidationError(f"flow {f.id}: unknown link {lid!r} in path")


@dataclass(frozen=True)
class Scenario:
    """A complete, runnable experiment description."""

    topology: Topology
    duration: float
    dt: float = 1e-3
    seed: int = 1
    background: ParetoSourceSpec | None = None
    output_interval: float = 0.1
    name: str = "scenario"

    def validate(self) -> None:
        self.topology.validate()
        if not self.topology.flows:
            raise ValidationError("scenario needs at least one flow")
        latest_start = max(f.start_time for f in self.topology.flows)
        if not self.duration > latest_start:
            raise ValidationError("duration must exceed the latest flow start time")
        if not self.dt > 0:
            raise ValidationError("dt must be > 0")
        min_rtprop = min(self.topology.round_trip_prop(f) for f in self.topology.flows)
        if self.dt > min_rtprop / 10:
            raise ValidationError(
                f"dt={self.dt:g} too coarse: must be <= min round-trip "
                f"propagation delay / 10 = {min_rtprop / 10:g}"
            )
        if self.output_interval < self.dt:
            raise ValidationError("output_interval must be >= dt")
        if self.background is not None:
            self.background.validate()
            links = set(l.id for l in self.topology.links)
            for lid in self.background.path:
                if lid not in links:
                    raise ValidationError(f"background: unknown link {lid!r} in path")
            if len(set(self.background.path)) != len(self.background.path):
                raise ValidationError("background: path must not repeat links")


def build_single_bottleneck(
    n_flows: int,
    capacity: float,
    access_delay: float,
    bottleneck_delay: float,
    alpha: float,
    start_gap: float,
    *,
    gamma: float = 0.5,
    estimator: EstimatorSpec | None = None,
    access_capacity: float | None = None,
    buffer_limit: float | None = None,
) -> Topology:
    """Dumbbell: per-flow access links feeding one shared bottleneck.

    Flow k (0-based) starts at k*start_gap.  Every flow's round-trip
    propagation delay is 2*(access_delay + bottleneck_delay).  Access links
    default to 10x the bottleneck capacity so queueing happens only at the
    bottleneck.
    """
    if n_flows < 1:
        raise ValidationError("n_flows must be >= 1")
    est = estimator if estimator is not None else EstimatorSpec()
    acap = access_capacity if access_capacity is not None else 10 * capacity
    links = [LinkSpec("bottleneck", capacity, bottleneck_delay, buffer_limit)]
    flows = []
    for k in range(n_flows):
        access = LinkSpec(f"access{k}", acap, access_delay)
        links.append(access)
        flows.append(
            FlowSpec(
                id=f"f{k}",
                path=(access.id, "bottleneck"),
                alpha=alpha,
                gamma=gamma,
                start_time=k * start_gap,
                estimator=est,
            )
        )
    topo = Topology(tuple(links), tuple(flows))
    topo.validate()
    return topo


def build_parking_lot(
    n_sources: int,
    link_capacity: float,
    link_delay: float,
    *,
    alpha: float = 50.0,
    gamma: float = 0.5,
    estimator: EstimatorSpec | None = None,
) -> Topology:
    """Chain of equal links; source k enters at hop k, all end at one sink.

    Source 1 traverses every hop, so its path strictly contains the path of
    every later source.  With n_sources sources there are n_sources hops.
    """
    if n_sources < 2:
        raise ValidationError("n_sources must be >= 2")
    est = estimator if estimator is not None else EstimatorSpec()
    links = tuple(
        LinkSpec(f"hop{k}", link_capacity, link_delay) for k in range(1, n_sources + 1)
    )
    flows = []
    for k in range(1, n_sources + 1):
        flows.append(
            FlowSpec(
                id=f"s{k}",
                path=tuple(f"hop{j}" for j in range(k, n_sources + 1)),
                alpha=alpha,
                gamma=gamma,
                estimator=est,
            )
        )
    topo = Topology(links, tuple(flows))
    topo.validate()
    return topo


def replace_flow(topology: Topology, flow_id: str, **changes) -> Topology:
    """Return a topology with one flow's fields replaced."""
    flows = []
    found = False
    for f in topology.flows:
        if f.id == flow_id:
            flows.append(dataclasses.replace(f, **changes))
            found = True
        else:
            flows.append(f)
    if not found:
        raise ValidationError(f"no flow named {flow_id!r}")
    return dataclasses.replace(topology, flows=tuple(flows))
