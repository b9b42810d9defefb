"""Event graph over bus-arrival events.

Every arrival is a vertex carrying the arriving bus's observed state and the
action taken there.  For a decision spanning the window (t, t_next], the
neighbor set collects all other buses' arrivals inside the window, split into
upstream events (higher bus index, i.e. followers) and downstream events
(lower index, i.e. leaders), each annotated with two edge features: stop
separation normalized by the stop count, and the raw vehicle index gap.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

from .errors import ProtocolError


@dataclass(frozen=True)
class EventNode:
    bus_index: int
    time: float
    stop: int
    observation: "Observation"  # env.Observation; duck-typed here
    action: float


@dataclass(frozen=True)
class EdgeFeature:
    stop_gap_norm: float  # |stop_other - stop_ego| / n_stops
    index_gap: int  # |j - i|


@dataclass
class NeighborSets:
    upstream: list[tuple[EventNode, EdgeFeature]]  # j > i (followers)
    downstream: list[tuple[EventNode, EdgeFeature]]  # j < i (leaders)
    window: tuple[float, float]  # (t, t_next]


@dataclass
class EventLog:
    nodes: list[EventNode] = field(default_factory=list)
    times: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


def record_event(log: EventLog, node: EventNode) -> None:
    """Chronological append; same-time nodes keep insertion (bus index) order."""
    if log.times and node.time < log.times[-1]:
        raise ProtocolError(
            f"event at t={node.time} recorded after t={log.times[-1]}"
        )
    log.nodes.append(node)
    log.times.append(node.time)


def edge_features(ego: EventNode, other: EventNode, n_stops: int) -> EdgeFeature:
    if other.bus_index == ego.bus_index:
        raise ValueError("edge features are defined between distinct buses")
    return EdgeFeature(
        stop_gap_norm=abs(other.stop - ego.stop) / n_stops,
        index_gap=abs(other.bus_index - ego.bus_index),
    )


def neighbor_sets(
    log: EventLog,
    ego_bus: int,
    t: float,
    t_next: float,
    ego_stop: int,
    n_stops: int,
) -> NeighborSets:
    """Other buses' arrivals with t < t' <= t_next, split by index side."""
    if not t < t_next:
        raise ValueError(f"window requires t < t_next, got ({t}, {t_next}]")
    ego_ref = EventNode(ego_bus, t, ego_stop, None, 0.0)
    lo = bisect_right(log.times, t)
    hi = bisect_right(log.times, t_next)
    up: list[tuple[EventNode, EdgeFeature]] = []
    down: list[tuple[EventNode, EdgeFeature]] = []
    for node in log.nodes[lo:hi]:
        if node.bus_index == ego_bus:
            continue
        pair = (node, edge_features(ego_ref, node, n_stops))
        if node.bus_index > ego_bus:
            up.append(pair)
        else:
            down.append(pair)
    return NeighborSets(upstream=up, downstream=down, window=(t, t_next))


def oracle_neighbor_sets(
    log: EventLog,
    ego_bus: int,
    t: float,
    t_next: float,
    ego_stop: int,
    n_stops: int,
) -> NeighborSets:
    """Brute-force reference: linear scan of the whole log, used by tests."""
    if not t < t_next:
        raise ValueError(f"window requires t < t_next, got ({t}, {t_next}]")
    ego_ref = EventNode(ego_bus, t, ego_stop, None, 0.0)
    up: list[tuple[EventNode, EdgeFeature]] = []
    down: list[tuple[EventNode, EdgeFeature]] = []
    for node in log.nodes:
        if node.bus_index == ego_bus:
            continue
        if t < node.time <= t_next:
            pair = (node, edge_features(ego_ref, node, n_stops))
            if node.bus_index > ego_bus:
                up.append(pair)
            else:
                down.append(pair)
    return NeighborSets(upstream=up, downstream=down, window=(t, t_next))
