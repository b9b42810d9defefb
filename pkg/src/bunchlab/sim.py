"""Deterministic discrete-event simulator of a single bus route.

The world advances through a priority queue of timed events.  Only two event
kinds exist: a bus *arriving* at a stop and a bus *departing* from a stop.
A dispatch is simply the arrival at stop 0 at the drawn dispatch time.

Every arrival is handed back to the caller as an :class:`ArrivalEvent` and
blocks the simulation until :func:`apply_holding` supplies the holding time
for that visit (callers pass 0 for the final stop, where holding has no
effect).  The departure is then scheduled at ``arrival + dwell + hold`` and
passengers arriving before the doors close may still board, subject to
capacity.

Determinism: all randomness flows from one seeded generator in a fixed draw
order (dispatch gaps, then per-stop passenger processes, then one speed draw
per link traversal in processing order).  Identical seed and holding script
give bitwise-identical logs.

No overtaking: a bus never departs a stop before its leader departed that
stop, and never arrives at a stop before its leader arrived there.  Scheduled
times are clamped to the leader's when the random speed draw would violate
this; positions are linear in time on each link, so the clamp is sufficient.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ProtocolError, StateError
from .routes import (
    MIN_DISPATCH_GAP_S,
    DemandProfile,
    RouteConfig,
    validate_demand,
    validate_route,
)

_DEPART = 0
_ARRIVE = 1

PENDING = "pending"
CRUISING = "cruising"
AT_STOP = "at_stop"
FINISHED = "finished"


@dataclass
class Passenger:
    origin: int
    destination: int
    arrive_time: float
    board_time: float | None = None
    alight_time: float | None = None


@dataclass
class ArrivalEvent:
    bus_index: int
    stop: int
    time: float
    n_alighted: int
    n_boarded: int  # includes passengers boarding during dwell + hold
    departure_time: float | None = None
    hold: float | None = None
    occupancy: int | None = None  # onboard count at departure


@dataclass
class EpisodeDone:
    reason: str  # "all_finished" | "horizon"


class _StopQueue:
    """Waiting passengers at one stop, sorted by arrival time, boarded FIFO."""

    __slots__ = ("passengers", "next_idx")

    def __init__(self, passengers: list[Passenger]):
        self.passengers = passengers
        self.next_idx = 0

    def board_until(self, now: float, room: int) -> list[Passenger]:
        taken = []
        while (
            room > 0
            and self.next_idx < len(self.passengers)
            and self.passengers[self.next_idx].arrive_time <= now
        ):
            taken.append(self.passengers[self.next_idx])
            self.next_idx += 1
            room -= 1
        return taken

    def waiting(self, now: float) -> int:
        n = 0
        i = self.next_idx
        while i < len(self.passengers) and self.passengers[i].arrive_time <= now:
            n += 1
            i += 1
        return n


class BusState:
    def __init__(self, bus_index: int, dispatch_time: float, n_stops: int):
        self.bus_index = bus_index
        self.dispatch_time = dispatch_time
        self.phase = PENDING
        self.current_stop: int | None = None  # valid while at a stop
        self.target_stop: int | None = 0  # next stop to arrive at
        self.onboard: dict[int, list[Passenger]] = {}
        self.occupancy = 0
        # Link interpolation segment while cruising: (t0, t1, pos0, pos1).
        self.link: tuple[float, float, float, float] | None = None
        self.arrival_times: list[float | None] = [None] * n_stops
        self.departure_times: list[float | None] = [None] * n_stops
        self.current_event: ArrivalEvent | None = None

    @property
    def active(self) -> bool:
        return self.phase in (CRUISING, AT_STOP)

    def position(self, clock: float, stop_positions) -> float:
        if self.phase == PENDING:
            return 0.0
        if self.phase == FINISHED:
            return stop_positions[-1]
        if self.phase == AT_STOP:
            return stop_positions[self.current_stop]
        t0, t1, p0, p1 = self.link
        if clock <= t0:
            return p0
        if clock >= t1:
            return p1
        return p0 + (clock - t0) * (p1 - p0) / (t1 - t0)


@dataclass
class SimState:
    config: RouteConfig
    demand: DemandProfile
    seed: int
    rng: np.random.Generator
    clock: float = 0.0
    buses: list[BusState] = field(default_factory=list)
    stop_queues: list[_StopQueue] = field(default_factory=list)
    event_log: list[ArrivalEvent] = field(default_factory=list)
    dispatch_times: list[float] = field(default_factory=list)
    pending_event: ArrivalEvent | None = None
    total_generated: int = 0
    total_boarded: int = 0
    total_alighted: int = 0
    u_override: float | None = None
    _queue: list[tuple[float, int, int]] = field(default_factory=list)
    _done: EpisodeDone | None = None

    def bus_position(self, i: int) -> float:
        return self.buses[i].position(self.clock, self.config.stop_positions)

    def active_buses(self) -> list[BusState]:
        return [b for b in self.buses if b.active]

    def conservation_counts(self) -> tuple[int, int, int, int]:
        """(generated, waiting_or_unserved, onboard, alighted) at the current clock."""
        onboard = self.total_boarded - self.total_alighted
        waiting = self.total_generated - self.total_boarded
        return self.total_generated, waiting, onboard, self.total_alighted


def dispatch_times(n: int, mean: float, std: float, rng: np.random.Generator) -> list[float]:
    """Terminal departure times: first at 0, gaps Normal(mean, std) floored at 60 s."""
    if n < 1:
        raise ConfigurationError("need at least one service")
    times = [0.0]
    for _ in range(n - 1):
        gap = mean if std == 0 else float(rng.normal(mean, std))
        times.append(times[-1] + max(MIN_DISPATCH_GAP_S, gap))
    return times


def generate_passengers(
    demand: DemandProfile, horizon: float, rng: np.random.Generator
) -> list[list[Passenger]]:
    """Pre-draw every passenger arrival over [0, horizon], per stop.

    Counts are Poisson(rate * horizon), times uniform and sorted, destinations
    sampled from the origin's downstream distribution.
    """
    if horizon <= 0:
        raise ConfigurationError("horizon must be > 0")
    n_stops = len(demand.boarding_rate)
    queues: list[list[Passenger]] = []
    for o, rate in enumerate(demand.boarding_rate):
        if rate == 0:
            queues.append([])
            continue
        n = int(rng.poisson(rate * horizon))
        times = np.sort(rng.uniform(0.0, horizon, size=n))
        row = np.asarray(demand.alight_weights[o], dtype=float)
        dests = rng.choice(n_stops, size=n, p=row / row.sum())
        queues.append(
            [Passenger(o, int(d), float(t)) for t, d in zip(times, dests)]
        )
    return queues


def link_travel_time(
    distance: float,
    speed_kmh: float,
    rng: np.random.Generator,
    u_override: float | None = None,
) -> float:
    """Seconds to traverse one link at speed v * U(0.6, 1.2), one draw per link."""
    if distance <= 0:
        raise ConfigurationError("link distance must be > 0")
    u = float(rng.uniform(0.6, 1.2)) if u_override is None else u_override
    return distance / (speed_kmh * u / 3.6)


def dwell_time(n_alight: int, n_board: int, t_alight: float = 1.8, t_board: float = 3.0) -> float:
    """Door time for one stop visit: sequential single-door sum rule."""
    if n_alight < 0 or n_board < 0:
        raise ValueError("passenger counts must be >= 0")
    return t_alight * n_alight + t_board * n_board


def build_simulation(
    config: RouteConfig,
    demand: DemandProfile,
    seed: int,
    u_override: float | None = None,
) -> SimState:
    """Create a fully seeded simulation with all dispatches and arrivals drawn."""
    validate_route(config)
    validate_demand(demand, config.n_stops)
    rng = np.random.default_rng(seed)
    sim = SimState(config=config, demand=demand, seed=seed, rng=rng, u_override=u_override)
    sim.dispatch_times = dispatch_times(
        config.n_services, config.dispatch_mean, config.dispatch_std, rng
    )
    queues = generate_passengers(demand, config.horizon, rng)
    sim.stop_queues = [_StopQueue(q) for q in queues]
    sim.total_generated = sum(len(q) for q in queues)
    sim.buses = [
        BusState(i, t, config.n_stops) for i, t in enumerate(sim.dispatch_times)
    ]
    for bus in sim.buses:
        heapq.heappush(sim._queue, (bus.dispatch_time, _ARRIVE, bus.bus_index))
    return sim


def _process_arrival(sim: SimState, bus: BusState, t: float) -> ArrivalEvent:
    cfg = sim.config
    stop = bus.target_stop
    bus.phase = AT_STOP
    bus.current_stop = stop
    bus.target_stop = None
    bus.link = None
    bus.arrival_times[stop] = t

    alighting = bus.onboard.pop(stop, [])
    for p in alighting:
        p.alight_time = t
    bus.occupancy -= len(alighting)
    sim.total_alighted += len(alighting)

    boarded = 0
    if stop < cfg.n_stops - 1:
        taken = sim.stop_queues[stop].board_until(t, cfg.capacity - bus.occupancy)
        for p in taken:
            p.board_time = t
            bus.onboard.setdefault(p.destination, []).append(p)
        bus.occupancy += len(taken)
        sim.total_boarded += len(taken)
        boarded = len(taken)

    ev = ArrivalEvent(
        bus_index=bus.bus_index,
        stop=stop,
        time=t,
        n_alighted=len(alighting),
        n_boarded=boarded,
    )
    sim.event_log.append(ev)
    bus.current_event = ev
    return ev


def _process_departure(sim: SimState, bus: BusState, t: float) -> None:
    cfg = sim.config
    stop = bus.current_stop
    ev = bus.current_event
    if stop < cfg.n_stops - 1:
        late = sim.stop_queues[stop].board_until(t, cfg.capacity - bus.occupancy)
        for p in late:
            p.board_time = p.arrive_time  # doors already open when they arrive
            bus.onboard.setdefault(p.destination, []).append(p)
        bus.occupancy += len(late)
        sim.total_boarded += len(late)
        ev.n_boarded += len(late)
    ev.occupancy = bus.occupancy
    bus.current_event = None

    if stop == cfg.n_stops - 1:
        bus.phase = FINISHED
        bus.current_stop = None
        return

    dist = cfg.stop_positions[stop + 1] - cfg.stop_positions[stop]
    travel = link_travel_time(dist, cfg.nominal_speed, sim.rng, sim.u_override)
    arrive_at = t + travel
    if bus.bus_index > 0:
        leader_arr = sim.buses[bus.bus_index - 1].arrival_times[stop + 1]
        if leader_arr is not None and arrive_at < leader_arr:
            arrive_at = leader_arr  # no overtaking on the link
    bus.phase = CRUISING
    bus.current_stop = None
    bus.target_stop = stop + 1
    # Commit the scheduled arrival now so the follower's clamp sees it.
    bus.arrival_times[stop + 1] = arrive_at
    bus.link = (t, arrive_at, cfg.stop_positions[stop], cfg.stop_positions[stop + 1])
    heapq.heappush(sim._queue, (arrive_at, _ARRIVE, bus.bus_index))


def advance_to_next_arrival(sim: SimState) -> ArrivalEvent | EpisodeDone:
    """Run the event queue forward until a bus arrives at a stop.

    Departures (and dispatch boarding) in between are processed silently.
    Returns EpisodeDone once all services have finished or the next event
    would fall beyond the horizon.
    """
    if sim.pending_event is not None:
        raise ProtocolError(
            "advance called while an arrival still awaits its holding decision"
        )
    if sim._done is not None:
        return sim._done
    while sim._queue:
        t, kind, bus_index = sim._queue[0]
        if t > sim.config.horizon:
            sim._done = EpisodeDone("horizon")
            return sim._done
        heapq.heappop(sim._queue)
        sim.clock = t
        bus = sim.buses[bus_index]
        if kind == _DEPART:
            _process_departure(sim, bus, t)
            continue
        ev = _process_arrival(sim, bus, t)
        sim.pending_event = ev
        return ev
    sim._done = EpisodeDone("all_finished")
    return sim._done


def apply_holding(sim: SimState, event: ArrivalEvent, hold: float) -> None:
    """Fix the departure for the pending arrival: arrival + dwell + hold.

    The departure never precedes the leader's departure from the same stop
    (no-overtaking constraint); passengers arriving before the departure may
    still board, resolved when the departure is processed.
    """
    if sim.pending_event is not event:
        raise ProtocolError("apply_holding called for an event that is not pending")
    if not (0.0 <= hold <= sim.config.max_hold):
        raise ValueError(
            f"hold {hold} outside [0, {sim.config.max_hold}]"
        )
    cfg = sim.config
    dwell = dwell_time(event.n_alighted, event.n_boarded, cfg.t_alight, cfg.t_board)
    depart = event.time + dwell + hold
    bus = sim.buses[event.bus_index]
    if event.bus_index > 0:
        leader_dep = sim.buses[event.bus_index - 1].departure_times[event.stop]
        if leader_dep is not None and depart < leader_dep:
            depart = leader_dep
    event.departure_time = depart
    event.hold = hold
    # Provisional; refined with late boarders when the departure is processed.
    # Kept as-is for departures the horizon cuts off.
    event.occupancy = bus.occupancy
    # Commit the departure now so the follower's clamp sees it before the
    # departure event is actually processed.
    bus.departure_times[event.stop] = depart
    heapq.heappush(sim._queue, (depart, _DEPART, event.bus_index))
    sim.pending_event = None


def headways(sim: SimState, bus_index: int) -> tuple[float, float]:
    """(forward, backward) headway of an active bus, in seconds.

    Estimated as positional gap over nominal cruise speed.  The lead bus's
    forward headway falls back to the scheduled dispatch mean; a bus whose
    follower has not yet dispatched uses time-to-dispatch plus its own
    distance from the terminal.
    """
    cfg = sim.config
    bus = sim.buses[bus_index]
    if not bus.active:
        raise StateError(f"bus {bus_index} is not active (phase={bus.phase})")
    v = cfg.speed_mps
    pos = sim.bus_position(bus_index)

    if bus_index == 0 or not sim.buses[bus_index - 1].active:
        forward = cfg.dispatch_mean
    else:
        forward = (sim.bus_position(bus_index - 1) - pos) / v

    if bus_index + 1 < len(sim.buses):
        follower = sim.buses[bus_index + 1]
        if follower.active:
            backward = (pos - sim.bus_position(bus_index + 1)) / v
        else:  # not yet dispatched
            backward = max(0.0, follower.dispatch_time - sim.clock) + pos / v
    else:
        virtual_dispatch = sim.dispatch_times[-1] + cfg.dispatch_mean
        backward = max(0.0, virtual_dispatch - sim.clock) + pos / v
    return forward, backward


# ---------------------------------------------------------------------------
# Log export.
# ---------------------------------------------------------------------------

EVENT_CSV_COLUMNS = (
    "bus",
    "stop",
    "arrive_s",
    "depart_s",
    "boarded",
    "alighted",
    "occupancy",
    "hold_s",
)


def write_event_csv(events: list[ArrivalEvent], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_CSV_COLUMNS)
        for ev in events:
            writer.writerow(
                [
                    ev.bus_index,
                    ev.stop,
                    repr(ev.time),
                    repr(ev.departure_time),
                    ev.n_boarded,
                    ev.n_alighted,
                    ev.occupancy,
                    repr(ev.hold),
                ]
            )


def read_event_csv(path: str | Path) -> list[ArrivalEvent]:
    events = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            events.append(
                ArrivalEvent(
                    bus_index=int(row["bus"]),
                    stop=int(row["stop"]),
                    time=float(row["arrive_s"]),
                    n_alighted=int(row["alighted"]),
                    n_boarded=int(row["boarded"]),
                    departure_time=float(row["depart_s"]),
                    hold=float(row["hold_s"]),
                    occupancy=int(row["occupancy"]),
                )
            )
    return events


PASSENGER_CSV_COLUMNS = ("origin", "destination", "arrive_s", "board_s", "alight_s")


def write_passenger_csv(queues_or_pax, path: str | Path) -> None:
    """Export passengers (either per-stop queues or a flat list)."""
    if queues_or_pax and isinstance(queues_or_pax[0], list):
        pax = [p for q in queues_or_pax for p in q]
    else:
        pax = list(queues_or_pax)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PASSENGER_CSV_COLUMNS)
        for p in pax:
            writer.writerow(
                [
                    p.origin,
                    p.destination,
                    repr(p.arrive_time),
                    "" if p.board_time is None else repr(p.board_time),
                    "" if p.alight_time is None else repr(p.alight_time),
                ]
            )


def read_passenger_csv(path: str | Path) -> list[Passenger]:
    pax = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            pax.append(
                Passenger(
                    origin=int(row["origin"]),
                    destination=int(row["destination"]),
                    arrive_time=float(row["arrive_s"]),
                    board_time=float(row["board_s"]) if row["board_s"] else None,
                    alight_time=float(row["alight_s"]) if row["alight_s"] else None,
                )
            )
    return pax


def all_passengers(sim: SimState) -> list[Passenger]:
    return [p for q in sim.stop_queues for p in q.passengers]
