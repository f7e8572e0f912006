"""Plain SVG 1.1 rendering of a layout."""

from typing import Dict, List, Optional
from xml.sax.saxutils import escape

from .geom import Segment, offset_rectangle
from .layout import Layout

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"]


def _fmt(v: float) -> str:
    return f"{v:.4f}".rstrip("0").rstrip(".")


def _pts(points, scale: float, oy: float, ox: float) -> str:
    return " ".join(f"{_fmt((p[0] - ox) * scale)},{_fmt((oy - p[1]) * scale)}" for p in points)


def render_svg(layout: Layout, scale: float = 4.0, ura_overlay: bool = False,
               colors: Optional[Dict[str, str]] = None) -> str:
    """SVG text: obstacles filled, routable areas outlined, one polyline per trace."""
    xs, ys = [], []
    for d in layout.dras:
        for p in d.region.vertices:
            xs.append(p[0])
            ys.append(p[1])
    for t in layout.traces:
        for p in t.nodes:
            xs.append(p[0])
            ys.append(p[1])
    minx, maxx, miny, maxy = min(xs), max(xs), min(ys), max(ys)
    w, h = (maxx - minx) * scale, (maxy - miny) * scale
    group_of = {}
    for k, g in enumerate(layout.groups):
        for m in g.members:
            group_of[m] = k
    for p in layout.pairs:
        if p.id in group_of:
            group_of[p.trace_p.id] = group_of[p.trace_n.id] = group_of[p.id]
    colors = colors or {}

    out: List[str] = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_fmt(w)}" height="{_fmt(h)}" '
        f'viewBox="0 0 {_fmt(w)} {_fmt(h)}">',
        f'<rect x="0" y="0" width="{_fmt(w)}" height="{_fmt(h)}" fill="#ffffff" stroke="none"/>',
    ]
    for d in layout.dras:
        out.append(f'<path d="M {_pts(d.region.vertices, scale, maxy, minx)} Z" fill="none" stroke="#bbbbbb" '
                   f'stroke-dasharray="4,2"><title>{escape(d.id)}</title></path>')
    if layout.routable_areas:
        for key in sorted(layout.routable_areas):
            for poly in layout.routable_areas[key]:
                out.append(f'<path d="M {_pts(poly.vertices, scale, maxy, minx)} Z" fill="none" stroke="#88aa88" '
                           f'stroke-width="0.5"><title>{escape(key)}</title></path>')
    for o in layout.obstacles:
        out.append(f'<polygon points="{_pts(o.vertices, scale, maxy, minx)}" fill="#777777" stroke="none"/>')
    if ura_overlay:
        for t in layout.traces:
            half = (layout.rules_at(t.nodes[0]).d_gap + t.width) / 2.0
            for a, b in t.segments():
                rect = offset_rectangle(Segment(a, b), half)
                out.append(f'<path d="M {_pts(rect.vertices, scale, maxy, minx)} Z" fill="#ffcc00" '
                           f'fill-opacity="0.15" stroke="none"/>')
    for t in layout.traces:
        k = group_of.get(t.id)
        color = colors.get(t.id) or (PALETTE[k % len(PALETTE)] if k is not None else "#000000")
        out.append(f'<polyline points="{_pts(t.nodes, scale, maxy, minx)}" fill="none" stroke="{color}" '
                   f'stroke-width="{_fmt(max(0.5, t.width * scale))}" stroke-linejoin="miter">'
                   f'<title>{escape(t.id)}</title></polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
