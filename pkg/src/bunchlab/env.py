"""Asynchronous decision stream over the simulator.

Holding decisions happen at every stop except the last one.  The reward for
a decision is only known when the same bus reaches its next stop; the driver
finalizes the previous decision of a bus at that moment (fleet-wide headway
variability at the feedback clock plus the action penalty), attaches the next
observation, and marks the decision at the second-to-last stop as terminal.

Arrivals at the final stop are not decision points (holding there has no
effect): the driver applies a zero hold automatically, but the arrival is
still recorded as an event-graph node with action 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .events import EventLog, EventNode, record_event
from .routes import DemandProfile, RouteConfig
from .sim import ArrivalEvent, EpisodeDone, SimState, advance_to_next_arrival, apply_holding, headways


@dataclass(frozen=True)
class Observation:
    occupancy_norm: float  # onboard / capacity
    forward_headway_norm: float  # h_fwd / dispatch_mean
    backward_headway_norm: float  # h_bwd / dispatch_mean

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.occupancy_norm, self.forward_headway_norm, self.backward_headway_norm]
        )


@dataclass(frozen=True)
class RewardConfig:
    w: float = 0.2  # action-penalty weight
    gamma: float = 0.9  # discount used by learners

    def __post_init__(self):
        if not (0.0 <= self.w <= 1.0):
            raise ValueError(f"w must be in [0,1], got {self.w}")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma must be in [0,1), got {self.gamma}")


@dataclass
class PendingDecision:
    bus_index: int
    stop: int
    t: float
    observation: Observation
    action: float | None = None
    hold: float | None = None
    reward: float | None = None
    next_observation: Observation | None = None
    t_next: float | None = None  # feedback time; window is (t, t_next]
    terminal: bool = False
    truncated: bool = False  # terminal only because the horizon cut the episode
    headway_snapshot: tuple[float, ...] = ()  # fleet forward headways at feedback


@dataclass
class EpisodeSummary:
    config: RouteConfig
    demand: DemandProfile
    seed: int
    end_reason: str
    events: list[ArrivalEvent]
    passengers: list
    decisions: list[PendingDecision]
    node_log: EventLog
    dispatch_times: list[float]
    final_clock: float


def observe_bus(sim: SimState, bus_index: int) -> Observation:
    """Normalized local state of an active bus at the current clock."""
    cfg = sim.config
    fwd, bwd = headways(sim, bus_index)
    bus = sim.buses[bus_index]
    return Observation(
        occupancy_norm=bus.occupancy / cfg.capacity,
        forward_headway_norm=fwd / cfg.dispatch_mean,
        backward_headway_norm=bwd / cfg.dispatch_mean,
    )


def observe(sim: SimState, event: ArrivalEvent) -> Observation:
    """Normalized local state of the arriving bus at its decision time."""
    return observe_bus(sim, event.bus_index)


def action_to_hold_seconds(a: float, max_hold: float) -> float:
    if not (0.0 <= a <= 1.0):
        raise ValueError(f"action must be in [0,1], got {a}")
    return a * max_hold


def fleet_forward_headways(sim: SimState) -> tuple[float, ...]:
    return tuple(headways(sim, b.bus_index)[0] for b in sim.buses if b.active)


def headway_cv2(hs) -> float:
    """Population variance over squared mean; 0 when fewer than 2 samples."""
    hs = np.asarray(hs, dtype=float)
    if hs.size < 2:
        return 0.0
    mean = hs.mean()
    if mean == 0:
        return 0.0
    return float(hs.var() / mean**2)


def compute_reward(sim: SimState, decision: PendingDecision, reward_cfg: RewardConfig) -> float:
    """r = -(1-w) * CV^2 - w * a, with CV^2 over active forward headways now."""
    snapshot = fleet_forward_headways(sim)
    decision.headway_snapshot = snapshot
    return -(1.0 - reward_cfg.w) * headway_cv2(snapshot) - reward_cfg.w * decision.action


class EpisodeObserver:
    """Hook points for training loops; default implementation does nothing."""

    def on_clock(self, sim: SimState, t: float) -> None: ...

    def on_event(self, sim: SimState, node: EventNode) -> None: ...

    def on_decision(self, sim: SimState, decision: PendingDecision) -> None: ...

    def on_finalized(self, sim: SimState, decision: PendingDecision) -> None: ...

    def on_episode_end(self, sim: SimState) -> None: ...


def drive_episode(
    sim: SimState,
    reward_cfg: RewardConfig,
    choose_action,
    observer: EpisodeObserver | None = None,
) -> EpisodeSummary:
    """Run one full episode; ``choose_action(obs, decision) -> a`` in [0, 1]."""
    cfg = sim.config
    last_stop = cfg.n_stops - 1
    node_log = EventLog()
    open_decisions: dict[int, PendingDecision] = {}
    decisions: list[PendingDecision] = []

    def finalize(decision: PendingDecision, next_obs: Observation | None, terminal: bool,
                 truncated: bool = False):
        decision.t_next = sim.clock
        decision.terminal = terminal
        decision.truncated = truncated
        decision.next_observation = None if terminal else next_obs
        decision.reward = compute_reward(sim, decision, reward_cfg)
        if observer:
            observer.on_finalized(sim, decision)

    while True:
        ev = advance_to_next_arrival(sim)
        if isinstance(ev, EpisodeDone):
            # Horizon or fleet completion: any still-open decision becomes
            # terminal with feedback taken at the final clock.
            for decision in sorted(open_decisions.values(), key=lambda d: (d.t, d.bus_index)):
                finalize(decision, None, terminal=True, truncated=True)
            open_decisions.clear()
            if observer:
                observer.on_episode_end(sim)
            return EpisodeSummary(
                config=cfg,
                demand=sim.demand,
                seed=sim.seed,
                end_reason=ev.reason,
                events=sim.event_log,
                passengers=[p for q in sim.stop_queues for p in q.passengers],
                decisions=decisions,
                node_log=node_log,
                dispatch_times=list(sim.dispatch_times),
                final_clock=sim.clock,
            )

        if observer:
            observer.on_clock(sim, ev.time)

        obs = observe(sim, ev)
        prior = open_decisions.pop(ev.bus_index, None)
        if prior is not None:
            finalize(prior, obs, terminal=(ev.stop == last_stop))

        if ev.stop < last_stop:
            decision = PendingDecision(
                bus_index=ev.bus_index, stop=ev.stop, t=ev.time, observation=obs
            )
            a = float(choose_action(obs, decision))
            hold = action_to_hold_seconds(a, cfg.max_hold)
            decision.action = a
            decision.hold = hold
            apply_holding(sim, ev, hold)
            open_decisions[ev.bus_index] = decision
            decisions.append(decision)
            node_action = a
            if observer:
                observer.on_decision(sim, decision)
        else:
            apply_holding(sim, ev, 0.0)
            node_action = 0.0

        record_event(
            node_log,
            EventNode(
                bus_index=ev.bus_index,
                time=ev.time,
                stop=ev.stop,
                observation=obs,
                action=node_action,
            ),
        )
        if observer:
            observer.on_event(sim, node_log.nodes[-1])


def rollout_episode(
    sim: SimState, policy, reward_cfg: RewardConfig | None = None
) -> tuple[list[PendingDecision], EpisodeSummary]:
    """Evaluate a policy over one episode.

    Policies are plain ``obs -> a`` callables; rule-based policies that need
    simulator state mark themselves with ``contextual = True`` and are called
    as ``policy(obs, sim, decision)``.
    """
    rcfg = reward_cfg or RewardConfig()
    if getattr(policy, "contextual", False):
        summary = drive_episode(sim, rcfg, lambda obs, d: policy(obs, sim, d))
    else:
        summary = drive_episode(sim, rcfg, lambda obs, _d: policy(obs))
    return summary.decisions, summary


# ---------------------------------------------------------------------------
# Decision-trace export.
# ---------------------------------------------------------------------------

DECISION_CSV_COLUMNS = (
    "bus",
    "stop",
    "t",
    "obs_occ",
    "obs_fh",
    "obs_bh",
    "action",
    "hold_s",
    "reward",
    "terminal",
)


def write_decision_csv(decisions: list[PendingDecision], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DECISION_CSV_COLUMNS)
        for d in decisions:
            if d.reward is None:
                raise DataError("decision trace contains an unfinalized decision")
            o = d.observation
            writer.writerow(
                [
                    d.bus_index,
                    d.stop,
                    repr(d.t),
                    repr(o.occupancy_norm),
                    repr(o.forward_headway_norm),
                    repr(o.backward_headway_norm),
                    repr(d.action),
                    repr(d.hold),
                    repr(d.reward),
                    int(d.terminal),
                ]
            )


def read_decision_csv(path: str | Path) -> list[PendingDecision]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                PendingDecision(
                    bus_index=int(row["bus"]),
                    stop=int(row["stop"]),
                    t=float(row["t"]),
                    observation=Observation(
                        float(row["obs_occ"]), float(row["obs_fh"]), float(row["obs_bh"])
                    ),
                    action=float(row["action"]),
                    hold=float(row["hold_s"]),
                    reward=float(row["reward"]),
                    terminal=bool(int(row["terminal"])),
                )
            )
    return out
