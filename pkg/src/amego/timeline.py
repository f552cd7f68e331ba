"""Static timeline export of a Memory: one row per location instance and per
(hand side, object instance), with one span per segment or tracklet."""

from __future__ import annotations

import colorsys
from xml.sax.saxutils import escape

from .memory import Memory
from .stream import SIDES


def instance_color(kind: str, instance_id: int) -> str:
    """Stable hex colour; golden-ratio hue steps keep neighbouring ids apart."""
    hue = (instance_id * 0.618033988749895 + (0.0 if kind == "location" else 0.31)) % 1.0
    r, g, b = colorsys.hls_to_rgb(hue, 0.55 if kind == "location" else 0.45, 0.65)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


def build_timeline(m: Memory) -> dict:
    rows = []
    for iid in sorted({s.instance_id for s in m.segments}):
        spans = sorted(s.interval for s in m.segments if s.instance_id == iid)
        rows.append(
            {
                "kind": "location",
                "instance_id": iid,
                "hand_side": None,
                "color": instance_color("location", iid),
                "spans": [list(iv) for iv in spans],
            }
        )
    for side in SIDES:
        for iid in sorted({t.instance_id for t in m.tracklets if t.hand_side == side}):
            spans = sorted(t.interval for t in m.tracklets if t.hand_side == side and t.instance_id == iid)
            rows.append(
                {
                    "kind": "object",
                    "instance_id": iid,
                    "hand_side": side,
                    "color": instance_color("object", iid),
                    "spans": [list(iv) for iv in spans],
                }
            )
    return {
        "fps": m.header.fps,
        "last_frame": m.last_frame,
        "n_spans": sum(len(r["spans"]) for r in rows),
        "rows": rows,
    }


def render_svg(timeline: dict, width: int = 1200, row_height: int = 18) -> str:
    label_w = 130
    rows = timeline["rows"]
    height = max(1, len(rows)) * row_height + 30
    scale = (width - label_w - 10) / max(1, timeline["last_frame"] + 1)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">'
    ]
    for i, row in enumerate(rows):
        y = 10 + i * row_height
        name = f"loc {row['instance_id']}" if row["kind"] == "location" else f"{row['hand_side']} obj {row['instance_id']}"
        out.append(f'<text x="4" y="{y + row_height - 6}">{escape(name)}</text>')
        for a, b in row["spans"]:
            x = label_w + a * scale
            w = max(1.0, (b - a + 1) * scale)
            out.append(
                f'<rect x="{x:.2f}" y="{y + 2}" width="{w:.2f}" height="{row_height - 4}" fill="{row["color"]}">'
                f"<title>{a}-{b}</title></rect>"
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"
