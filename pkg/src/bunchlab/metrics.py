"""Episode indicators: holding, waiting, journey, travel time, occupancy dispersion.

All statistics are pure functions over immutable logs.  Population (not
sample) variance is used throughout, matching the headway-variability term
of the reward.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, StateError, UndefinedStatisticError
from .sim import ArrivalEvent, Passenger


@dataclass
class EpisodeMetrics:
    aht: float  # mean holding seconds per decision
    awt: float  # mean waiting seconds per passenger (stranded capped at horizon)
    ajt: float  # mean in-vehicle seconds per completed trip
    att: float  # mean terminal-to-terminal seconds per finished bus
    aod: float  # variance-to-mean ratio of occupancy snapshots
    cv2_by_stop: list[float]
    headway_samples: dict[int, list[float]]


def cv_squared(headways) -> float:
    """Squared coefficient of variation: population variance over squared mean."""
    hs = np.asarray(list(headways), dtype=float)
    if hs.size < 2:
        raise UndefinedStatisticError("need at least 2 headways for CV^2")
    if np.any(hs <= 0):
        raise UndefinedStatisticError("headways must be positive for CV^2")
    return float(hs.var() / hs.mean() ** 2)


def _arrivals_by_stop(events: list[ArrivalEvent]) -> dict[int, list[float]]:
    arr: dict[int, list[float]] = {}
    for ev in events:
        arr.setdefault(ev.stop, []).append(ev.time)
    return arr


def stop_headways(events: list[ArrivalEvent]) -> dict[int, list[float]]:
    """Gaps between consecutive arrivals at each stop."""
    return {
        stop: list(np.diff(sorted(times)))
        for stop, times in _arrivals_by_stop(events).items()
        if len(times) >= 2
    }


def compute_metrics(
    events: list[ArrivalEvent],
    passengers: list[Passenger],
    decisions,
    horizon: float,
    n_stops: int,
) -> EpisodeMetrics:
    """Aggregate the five indicators from an episode's logs.

    AWT counts passengers that never boarded with their wait capped at
    ``horizon - arrive_time``.  AJT covers completed trips only.  ATT covers
    buses that reached the final stop.  AOD pools the occupancy recorded at
    every stop visit across all buses.
    """
    for ev in events:
        if ev.departure_time is None or ev.occupancy is None:
            raise DataError("event log contains an unfinalized arrival")

    holds = [d.hold for d in decisions]
    aht = float(np.mean(holds)) if holds else 0.0

    waits = []
    journeys = []
    for p in passengers:
        if p.board_time is None:
            waits.append(horizon - p.arrive_time)
        else:
            if p.board_time < p.arrive_time:
                raise DataError("passenger boarded before arriving")
            waits.append(p.board_time - p.arrive_time)
            if p.alight_time is not None:
                journeys.append(p.alight_time - p.board_time)
    awt = float(np.mean(waits)) if waits else 0.0
    ajt = float(np.mean(journeys)) if journeys else 0.0

    first = {}
    last = {}
    for ev in events:
        if ev.stop == 0:
            first[ev.bus_index] = ev.time
        if ev.stop == n_stops - 1:
            last[ev.bus_index] = ev.time
    runs = [last[b] - first[b] for b in last if b in first]
    att = float(np.mean(runs)) if runs else 0.0

    occ = np.array([ev.occupancy for ev in events], dtype=float)
    aod = float(occ.var() / occ.mean()) if occ.size and occ.mean() > 0 else 0.0

    samples = stop_headways(events)
    cv2_by_stop = []
    for stop in range(n_stops):
        hs = samples.get(stop, [])
        cv2_by_stop.append(cv_squared(hs) if len(hs) >= 2 and min(hs) > 0 else 0.0)

    return EpisodeMetrics(
        aht=aht,
        awt=awt,
        ajt=ajt,
        att=att,
        aod=aod,
        cv2_by_stop=cv2_by_stop,
        headway_samples=samples,
    )


def metrics_from_summary(summary) -> EpisodeMetrics:
    return compute_metrics(
        summary.events,
        summary.passengers,
        summary.decisions,
        summary.config.horizon,
        summary.config.n_stops,
    )


@dataclass
class StopwiseSeries:
    stops: list[int]
    awt: list[float]  # mean wait of passengers originating at each stop
    aod: list[float]  # occupancy dispersion of visits at each stop
    added_travel: list[float]  # mean arrival delay vs. the reference run


def stopwise_series(
    events: list[ArrivalEvent],
    passengers: list[Passenger],
    n_stops: int,
    horizon: float,
    reference_events: list[ArrivalEvent] | None,
) -> StopwiseSeries:
    """Per-stop aggregation for plotting; delays are relative to a stored
    reference run (same route and seed, typically no-control)."""
    if reference_events is None:
        raise StateError("stopwise added travel time needs a reference event log")

    waits: dict[int, list[float]] = {}
    for p in passengers:
        wait = (horizon - p.arrive_time) if p.board_time is None else (p.board_time - p.arrive_time)
        waits.setdefault(p.origin, []).append(wait)

    occ: dict[int, list[float]] = {}
    mine: dict[tuple[int, int], float] = {}
    for ev in events:
        occ.setdefault(ev.stop, []).append(float(ev.occupancy))
        mine[(ev.bus_index, ev.stop)] = ev.time
    ref: dict[tuple[int, int], float] = {}
    for ev in reference_events:
        ref[(ev.bus_index, ev.stop)] = ev.time

    stops = list(range(n_stops))
    awt_row = [float(np.mean(waits[s])) if waits.get(s) else 0.0 for s in stops]
    aod_row = []
    for s in stops:
        xs = np.asarray(occ.get(s, []), dtype=float)
        aod_row.append(float(xs.var() / xs.mean()) if xs.size and xs.mean() > 0 else 0.0)
    added = []
    for s in stops:
        deltas = [
            t - ref[key] for key, t in mine.items() if key[1] == s and key in ref
        ]
        added.append(float(np.mean(deltas)) if deltas else 0.0)
    return StopwiseSeries(stops=stops, awt=awt_row, aod=aod_row, added_travel=added)


METRICS_CSV_COLUMNS = (
    "route",
    "policy",
    "seed",
    "aht",
    "awt",
    "ajt",
    "att",
    "aod",
    "d_awt",
    "d_ajt",
    "d_att",
    "d_aod",
    "note",
)


def write_metrics_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_CSV_COLUMNS)
        for row in rows:
            writer.writerow(
                [row["route"], row["policy"], row["seed"]]
                + [repr(float(row[k])) for k in METRICS_CSV_COLUMNS[3:12]]
                + [row.get("note", "")]
            )


def read_metrics_csv(path: str | Path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {"route": row["route"], "policy": row["policy"], "seed": int(row["seed"])}
            for k in METRICS_CSV_COLUMNS[3:12]:
                parsed[k] = float(row[k])
            parsed["note"] = row.get("note", "")
            out.append(parsed)
    return out
