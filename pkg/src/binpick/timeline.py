"""Self-contained SVG timeline of an episode: one lane per arm plus a
perception lane, one colored span per log record."""

from __future__ import annotations

from .simulator import ActionKind, EpisodeLog

_WIDTH = 1000.0
_LANE_HEIGHT = 40.0
_LANE_GAP = 10.0
_MARGIN = 60.0

_COLORS = {
    ActionKind.PERCEIVE: "#8e7cc3",
    ActionKind.GRASP_ATTEMPT: "#f1c232",
    ActionKind.GRASP_SUCCESS: "#6aa84f",
    ActionKind.GRASP_FAIL: "#cc0000",
    ActionKind.WEIGHT_REJECT: "#e69138",
    ActionKind.PLACE: "#3d85c6",
    ActionKind.MOVE_AWAY: "#45818e",
    ActionKind.IDLE: "#999999",
}


def _lane_of(record) -> int:
    if record.kind == ActionKind.PERCEIVE:
        return 2
    return record.arm if record.arm in (0, 1) else 2


def episode_timeline_svg(log: EpisodeLog) -> str:
    """Render the log to SVG. Layout is purely a function of the records, so
    identical logs produce identical files."""
    total = max(
        [log.outcome.get("total_time_s", 0.0) or 0.0]
        + [r.time_s for r in log.records]
        + [1.0]
    )
    scale = _WIDTH / total

    lanes = ("arm 0", "arm 1", "perception")
    height = _MARGIN + len(lanes) * (_LANE_HEIGHT + _LANE_GAP)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH + 2 * _MARGIN:.0f}" '
        f'height="{height:.0f}" font-family="sans-serif" font-size="11">',
        f'<text x="{_MARGIN:.1f}" y="20">episode timeline, {total:.1f} s</text>',
    ]
    for i, name in enumerate(lanes):
        y = _MARGIN + i * (_LANE_HEIGHT + _LANE_GAP)
        parts.append(f'<text x="4" y="{y + _LANE_HEIGHT / 2:.1f}">{name}</text>')
        parts.append(
            f'<line x1="{_MARGIN:.1f}" y1="{y + _LANE_HEIGHT:.1f}" x2="{_MARGIN + _WIDTH:.1f}" '
            f'y2="{y + _LANE_HEIGHT:.1f}" stroke="#cccccc"/>'
        )

    for record in log.records:
        duration = float(record.detail.get("duration_s", 0.0))
        start = float(record.detail.get("started_s", record.time_s - duration))
        lane = _lane_of(record)
        x = _MARGIN + start * scale
        w = max(duration * scale, 1.0)
        y = _MARGIN + lane * (_LANE_HEIGHT + _LANE_GAP)
        color = _COLORS.get(record.kind, "#000000")
        label = f"{record.kind.value}" + (f" {record.item_id}" if record.item_id else "")
        parts.append(
            f'<rect class="span" x="{x:.2f}" y="{y + 4:.2f}" width="{w:.2f}" '
            f'height="{_LANE_HEIGHT - 8:.2f}" fill="{color}" fill-opacity="0.8">'
            f"<title>{label} @ {record.time_s:.1f}s</title></rect>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
