"""Time-space trajectory diagrams rendered as standalone SVG.

Each bus draws one polyline through its arrival/departure points; every
segment is stroked with a color taken from a fixed blue-to-red gradient at
the bus's occupancy fraction, so bunching-induced load imbalance is visible
directly.  Output bytes are deterministic for a given log: coordinates are
formatted with fixed precision and nothing time- or environment-dependent
is embedded.
"""

from __future__ import annotations

from pathlib import Path

from .sim import ArrivalEvent

_LOW = (43, 131, 186)  # empty bus
_HIGH = (215, 25, 28)  # full bus

WIDTH, HEIGHT = 1000, 600
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 30, 50


def _color(frac: float) -> str:
    frac = min(1.0, max(0.0, frac))
    rgb = tuple(round(lo + frac * (hi - lo)) for lo, hi in zip(_LOW, _HIGH))
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def emit_trajectory_svg(
    events: list[ArrivalEvent],
    path: str | Path,
    stop_positions,
    capacity: int,
    title: str = "",
) -> None:
    """Render one episode's event log to ``path``."""
    if not events:
        raise ValueError("cannot plot an empty event log")
    stop_positions = list(stop_positions)
    t_max = max(ev.departure_time or ev.time for ev in events)
    t_min = min(ev.time for ev in events)
    span_t = max(t_max - t_min, 1.0)
    span_x = max(stop_positions[-1], 1.0)

    def sx(t: float) -> float:
        return MARGIN_L + (t - t_min) / span_t * (WIDTH - MARGIN_L - MARGIN_R)

    def sy(pos: float) -> float:
        return HEIGHT - MARGIN_B - pos / span_x * (HEIGHT - MARGIN_T - MARGIN_B)

    per_bus: dict[int, list[ArrivalEvent]] = {}
    for ev in events:
        per_bus.setdefault(ev.bus_index, []).append(ev)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>\n'
        )

    # Axes and stop grid lines.
    parts.append(
        f'<line x1="{MARGIN_L}" y1="{sy(0)}" x2="{WIDTH - MARGIN_R}" y2="{sy(0)}" '
        'stroke="black" stroke-width="1"/>\n'
        f'<line x1="{MARGIN_L}" y1="{sy(0)}" x2="{MARGIN_L}" y2="{MARGIN_T}" '
        'stroke="black" stroke-width="1"/>\n'
    )
    for pos in stop_positions:
        y = sy(pos)
        parts.append(
            f'<line x1="{MARGIN_L}" y1="{_fmt(y)}" x2="{WIDTH - MARGIN_R}" y2="{_fmt(y)}" '
            'stroke="#dddddd" stroke-width="0.5"/>\n'
        )
    n_ticks = 6
    for i in range(n_ticks + 1):
        t = t_min + span_t * i / n_ticks
        x = sx(t)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{sy(0)}" x2="{_fmt(x)}" y2="{sy(0) + 5}" stroke="black"/>\n'
            f'<text x="{_fmt(x)}" y="{sy(0) + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{int(round(t))}s</text>\n'
        )
    parts.append(
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 12}" text-anchor="middle" '
        'font-family="sans-serif" font-size="11">time</text>\n'
        f'<text x="18" y="{HEIGHT // 2}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="11" transform="rotate(-90 18 {HEIGHT // 2})">distance from terminal (m)</text>\n'
    )

    # Trajectories: dwell segment at each stop, then the cruise to the next.
    for bus in sorted(per_bus):
        evs = sorted(per_bus[bus], key=lambda e: e.time)
        for i, ev in enumerate(evs):
            pos = stop_positions[ev.stop]
            color = _color((ev.occupancy or 0) / capacity)
            dep = ev.departure_time if ev.departure_time is not None else ev.time
            parts.append(
                f'<line x1="{_fmt(sx(ev.time))}" y1="{_fmt(sy(pos))}" '
                f'x2="{_fmt(sx(dep))}" y2="{_fmt(sy(pos))}" '
                f'stroke="{color}" stroke-width="1.5"/>\n'
            )
            if i + 1 < len(evs):
                nxt = evs[i + 1]
                parts.append(
                    f'<line x1="{_fmt(sx(dep))}" y1="{_fmt(sy(pos))}" '
                    f'x2="{_fmt(sx(nxt.time))}" y2="{_fmt(sy(stop_positions[nxt.stop]))}" '
                    f'stroke="{color}" stroke-width="1.5"/>\n'
                )

    # Occupancy legend.
    for i in range(21):
        frac = i / 20
        parts.append(
            f'<rect x="{WIDTH - 180 + i * 6}" y="{MARGIN_T}" width="6" height="10" '
            f'fill="{_color(frac)}"/>\n'
        )
    parts.append(
        f'<text x="{WIDTH - 186}" y="{MARGIN_T + 9}" text-anchor="end" '
        'font-family="sans-serif" font-size="10">load 0</text>\n'
        f'<text x="{WIDTH - 52}" y="{MARGIN_T + 9}" font-family="sans-serif" '
        'font-size="10">1</text>\n'
    )
    parts.append("</svg>\n")
    Path(path).write_bytes("".join(parts).encode("utf-8"))
