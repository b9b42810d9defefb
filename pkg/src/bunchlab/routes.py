"""Route and demand configuration: validation, config-file I/O, synthetic presets.

A route is described by stop positions along the line plus dispatch and
service parameters; demand is a stationary per-stop Poisson boarding rate
together with a destination distribution over strictly-downstream stops.
Presets come in two families: full-size synthetic lines (``r1s``..``r4s``)
and small desk-scale lines (``desk1``..``desk4``) used for fast experiments
and the acceptance suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

MIN_DISPATCH_GAP_S = 60.0  # floor applied to dispatch headway draws


@dataclass(frozen=True)
class RouteConfig:
    stop_positions: tuple[float, ...]  # meters from terminal, increasing, first = 0
    n_services: int
    dispatch_mean: float  # seconds
    dispatch_std: float  # seconds
    nominal_speed: float  # km/h
    capacity: int
    t_alight: float = 1.8  # s per alighting passenger
    t_board: float = 3.0  # s per boarding passenger
    max_hold: float = 180.0  # seconds, upper bound of one holding action
    horizon: float = 57600.0  # seconds of service day

    @property
    def n_stops(self) -> int:
        return len(self.stop_positions)

    @property
    def route_length(self) -> float:
        return self.stop_positions[-1]

    @property
    def speed_mps(self) -> float:
        return self.nominal_speed / 3.6


@dataclass(frozen=True)
class DemandProfile:
    boarding_rate: tuple[float, ...]  # passengers/second per stop
    alight_weights: tuple[tuple[float, ...], ...]  # row o: distribution over d > o

    def scaled(self, factor: float) -> "DemandProfile":
        """Return a copy with all boarding rates multiplied by ``factor``."""
        if factor < 0:
            raise ConfigurationError(f"demand scale must be >= 0, got {factor}")
        return replace(
            self, boarding_rate=tuple(r * factor for r in self.boarding_rate)
        )


def validate_route(cfg: RouteConfig) -> None:
    """Raise ConfigurationError naming the first violated invariant."""
    pos = cfg.stop_positions
    if len(pos) < 2:
        raise ConfigurationError("stop_positions must contain at least 2 stops")
    if pos[0] != 0:
        raise ConfigurationError("stop_positions must start at 0")
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise ConfigurationError("stop_positions must be strictly increasing")
    if cfg.n_services < 1:
        raise ConfigurationError("n_services must be >= 1")
    if cfg.dispatch_mean <= 0:
        raise ConfigurationError("dispatch_mean must be > 0")
    if cfg.dispatch_std < 0:
        raise ConfigurationError("dispatch_std must be >= 0")
    if cfg.nominal_speed <= 0:
        raise ConfigurationError("nominal_speed must be > 0")
    if cfg.capacity < 1:
        raise ConfigurationError("capacity must be >= 1")
    if cfg.t_alight < 0 or cfg.t_board < 0:
        raise ConfigurationError("per-passenger service times must be >= 0")
    if cfg.max_hold < 0:
        raise ConfigurationError("max_hold must be >= 0")
    if cfg.horizon <= 0:
        raise ConfigurationError("horizon must be > 0")


def validate_demand(demand: DemandProfile, n_stops: int) -> None:
    """Raise ConfigurationError naming the first violated invariant."""
    rates = demand.boarding_rate
    if len(rates) != n_stops:
        raise ConfigurationError(
            f"boarding_rate has {len(rates)} entries for {n_stops} stops"
        )
    if any(r < 0 for r in rates):
        raise ConfigurationError("boarding_rate entries must be >= 0")
    if rates[-1] != 0:
        raise ConfigurationError("boarding_rate at the last stop must be 0")
    w = demand.alight_weights
    if len(w) != n_stops or any(len(row) != n_stops for row in w):
        raise ConfigurationError("alight_weights must be an n_stops x n_stops matrix")
    for o, row in enumerate(w):
        if any(row[d] != 0 for d in range(0, o + 1)):
            raise ConfigurationError(
                f"alight_weights[{o}] must be 0 for destinations <= origin"
            )
        if any(x < 0 for x in row):
            raise ConfigurationError("alight_weights entries must be >= 0")
        if o < n_stops - 1:
            s = sum(row[o + 1 :])
            if abs(s - 1.0) > 1e-9:
                raise ConfigurationError(
                    f"alight_weights[{o}] must sum to 1 over downstream stops, got {s!r}"
                )


def uniform_downstream_weights(n_stops: int) -> tuple[tuple[float, ...], ...]:
    """Destination matrix with equal weight on every strictly-downstream stop."""
    rows = []
    for o in range(n_stops):
        row = [0.0] * n_stops
        k = n_stops - 1 - o
        if k > 0:
            for d in range(o + 1, n_stops):
                row[d] = 1.0 / k
        rows.append(tuple(row))
    return tuple(rows)


# ---------------------------------------------------------------------------
# Config-file I/O.
#
# JSON object with keys: stops, services, dispatch_mean_s, dispatch_std_s,
# speed_kmh, capacity, t_alight_s, t_board_s, max_hold_s, horizon_s,
# boarding_rates, alight_weights.  ``stops`` is the list of stop positions in
# meters; ``alight_weights`` is either a full matrix or the string "uniform".
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = (
    "stops",
    "services",
    "dispatch_mean_s",
    "dispatch_std_s",
    "speed_kmh",
    "capacity",
    "boarding_rates",
    "alight_weights",
)


def route_from_dict(doc: dict) -> tuple[RouteConfig, DemandProfile]:
    for key in _REQUIRED_KEYS:
        if key not in doc:
            raise ConfigurationError(f"route config missing key {key!r}")
    cfg = RouteConfig(
        stop_positions=tuple(float(x) for x in doc["stops"]),
        n_services=int(doc["services"]),
        dispatch_mean=float(doc["dispatch_mean_s"]),
        dispatch_std=float(doc["dispatch_std_s"]),
        nominal_speed=float(doc["speed_kmh"]),
        capacity=int(doc["capacity"]),
        t_alight=float(doc.get("t_alight_s", 1.8)),
        t_board=float(doc.get("t_board_s", 3.0)),
        max_hold=float(doc.get("max_hold_s", 180.0)),
        horizon=float(doc.get("horizon_s", 57600.0)),
    )
    validate_route(cfg)
    weights = doc["alight_weights"]
    if weights == "uniform":
        aw = uniform_downstream_weights(cfg.n_stops)
    else:
        aw = tuple(tuple(float(x) for x in row) for row in weights)
    demand = DemandProfile(
        boarding_rate=tuple(float(x) for x in doc["boarding_rates"]),
        alight_weights=aw,
    )
    validate_demand(demand, cfg.n_stops)
    return cfg, demand


def route_to_dict(cfg: RouteConfig, demand: DemandProfile) -> dict:
    return {
        "stops": list(cfg.stop_positions),
        "services": cfg.n_services,
        "dispatch_mean_s": cfg.dispatch_mean,
        "dispatch_std_s": cfg.dispatch_std,
        "speed_kmh": cfg.nominal_speed,
        "capacity": cfg.capacity,
        "t_alight_s": cfg.t_alight,
        "t_board_s": cfg.t_board,
        "max_hold_s": cfg.max_hold,
        "horizon_s": cfg.horizon,
        "boarding_rates": list(demand.boarding_rate),
        "alight_weights": [list(row) for row in demand.alight_weights],
    }


def load_route_file(path: str | Path) -> tuple[RouteConfig, DemandProfile]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"route config {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigurationError(f"route config {path} must be a JSON object")
    return route_from_dict(doc)


def save_route_file(path: str | Path, cfg: RouteConfig, demand: DemandProfile) -> None:
    Path(path).write_text(json.dumps(route_to_dict(cfg, demand), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Synthetic presets.
# ---------------------------------------------------------------------------


def _even_stops(n_stops: int, length_m: float) -> tuple[float, ...]:
    return tuple(np.linspace(0.0, length_m, n_stops).tolist())


def _uniform_demand(n_stops: int, rate: float) -> DemandProfile:
    rates = [rate] * (n_stops - 1) + [0.0]
    return DemandProfile(
        boarding_rate=tuple(rates), alight_weights=uniform_downstream_weights(n_stops)
    )


def _full_size(stops, services, length_km, mean, std, rate) -> tuple[RouteConfig, DemandProfile]:
    cfg = RouteConfig(
        stop_positions=_even_stops(stops, length_km * 1000.0),
        n_services=services,
        dispatch_mean=mean,
        dispatch_std=std,
        nominal_speed=30.0,
        capacity=120,
        horizon=57600.0,
    )
    return cfg, _uniform_demand(stops, rate)


def _desk(stops, services, length_m, mean, std, rate, horizon) -> tuple[RouteConfig, DemandProfile]:
    # Horizon sized just past the typical no-control completion time:
    # with stationary demand, a horizon far beyond the service span would
    # strand most passengers and the capped stranded waits would swamp the
    # waiting-time statistics.
    cfg = RouteConfig(
        stop_positions=_even_stops(stops, length_m),
        n_services=services,
        dispatch_mean=mean,
        dispatch_std=std,
        nominal_speed=30.0,
        capacity=120,
        horizon=horizon,
    )
    return cfg, _uniform_demand(stops, rate)


_PRESETS = {
    # Full-size synthetic trunk lines (16 h service day, invented demand).
    "r1s": lambda: _full_size(46, 59, 17.4, 874.0, 302.0, 0.004),
    "r2s": lambda: _full_size(58, 72, 23.7, 745.0, 307.0, 0.004),
    "r3s": lambda: _full_size(61, 57, 23.2, 931.0, 354.0, 0.0035),
    "r4s": lambda: _full_size(46, 55, 22.5, 955.0, 351.0, 0.0035),
    # Desk-scale lines for fast experiments and tests.
    "desk1": lambda: _desk(20, 8, 7000.0, 420.0, 100.0, 0.020, 5100.0),
    "desk2": lambda: _desk(28, 10, 9800.0, 360.0, 90.0, 0.018, 5300.0),
    "desk3": lambda: _desk(24, 12, 8400.0, 330.0, 110.0, 0.022, 5500.0),
    "desk4": lambda: _desk(16, 6, 5600.0, 480.0, 120.0, 0.016, 3700.0),
}

_PRESET_ALIASES = {"desk": "desk1"}

# Desk-scale counterpart used when --desk-scale remaps a full-size preset.
DESK_EQUIVALENT = {"r1s": "desk1", "r2s": "desk2", "r3s": "desk3", "r4s": "desk4"}


def preset_names() -> tuple[str, ...]:
    return tuple(_PRESETS)


def load_route(name_or_path: str, desk_scale: bool = False) -> tuple[RouteConfig, DemandProfile]:
    """Resolve a preset name or a config-file path.

    With ``desk_scale`` set, full-size preset names are remapped to their
    desk-scale counterparts (``r1s`` -> ``desk1`` and so on).
    """
    name = _PRESET_ALIASES.get(name_or_path, name_or_path)
    if desk_scale:
        name = DESK_EQUIVALENT.get(name, name)
    if name in _PRESETS:
        return _PRESETS[name]()
    path = Path(name_or_path)
    if path.exists():
        return load_route_file(path)
    raise ConfigurationError(
        f"unknown route {name_or_path!r}: not a preset {sorted(_PRESETS)} and not a file"
    )
