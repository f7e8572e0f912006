"""Synthetic layouts for experiments and tests."""

import math
import os
import random
from typing import Dict, List, Optional, Tuple

from shapely.geometry import LineString, Polygon as ShapelyPolygon

from .geom import Point, Polygon
from .layout import Dra, DifferentialPair, Layout, MatchGroup, RuleSet, Trace, dumps_layout, trace_length


def _rect(x0, y0, x1, y1) -> Polygon:
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def open_corridor_group(n_traces: int = 8, d_gap: float = 2.0, width: float = 1.0, d_protect: float = 2.0,
                        ratio: float = 200.0, band: float = 30.0, seed: int = 7) -> Layout:
    """Traces in parallel horizontal bands with a few diagonal jogs and a common target of ratio*d_gap."""
    rng = random.Random(seed)
    rules = RuleSet(d_gap, d_gap / 2.0, d_protect, width)
    target = ratio * d_gap
    traces = []
    right = 0.0
    for k in range(n_traces):
        y = band * (k + 0.5)
        length = rng.uniform(0.35, 0.6) * target
        x = 5.0
        nodes = [Point(x, y)]
        jog = rng.choice((-1, 1)) * rng.uniform(2.0, 4.0)
        run1 = length * rng.uniform(0.25, 0.4)
        nodes.append(Point(x + run1, y))
        nodes.append(Point(x + run1 + abs(jog), y + jog))
        rest = length - run1 - abs(jog) * math.sqrt(2.0)
        nodes.append(Point(x + run1 + abs(jog) + rest, y + jog))
        traces.append(Trace(f"t{k}", nodes, width))
        right = max(right, nodes[-1].x)
    board = _rect(0, 0, right + 5.0, band * n_traces)
    group = MatchGroup("g0", [t.id for t in traces], target, 0.0)
    return Layout([Dra("main", board, rules)], [], traces, [], [group])


def via_corridor(ratio: float, width: float = 1.0, length: float = 60.0, rows: int = 3) -> Layout:
    """One straight trace in a corridor lined with a regular via field.

    Clearances scale with d_gap = ratio * width; the via grid is laid out in
    units of the trace pitch so the geometry is comparable across ratios.
    """
    d_gap = ratio * width
    pitch = d_gap + width
    rules = RuleSet(d_gap, d_gap / 2.0, d_gap / 2.0, width)
    via = 0.6 * pitch
    col = 2.6 * pitch
    row = 2.2 * pitch
    height = rows * row + 1.5 * pitch
    obstacles = []
    x = 1.3 * pitch
    while x + via / 2 < length:
        for side in (-1, 1):
            for r in range(rows):
                cy = side * (1.8 * pitch + r * row)
                obstacles.append(_rect(x - via / 2, cy - via / 2, x + via / 2, cy + via / 2))
        x += col
    board = _rect(-pitch, -height, length + pitch, height)
    trace = Trace("t0", [Point(0.0, 0.0), Point(length, 0.0)], width)
    return Layout([Dra("main", board, rules)], obstacles, [trace], [], [MatchGroup("g0", ["t0"], 4 * length, 0.0)])


def single_open(length: float = 10.0, target: float = 30.0) -> Layout:
    rules = RuleSet(2.0, 1.0, 1.0, 0.5)
    board = _rect(-20, -40, length + 20, 40)
    t = Trace("t0", [Point(0, 0), Point(length, 0)], 0.5)
    return Layout([Dra("main", board, rules)], [], [t], [], [MatchGroup("g0", ["t0"], target, 0.01)])


def boxed_trace() -> Layout:
    """Trace whose only routable area is its own clearance envelope."""
    rules = RuleSet(2.0, 1.0, 1.0, 1.0)
    t = Trace("t0", [Point(0, 0), Point(20, 0)], 1.0)
    board = _rect(-1.5, -1.5, 21.5, 1.5)
    area = {"t0": [_rect(0, -1.5, 20, 1.5)]}
    return Layout([Dra("main", board, rules)], [], [t], [], [MatchGroup("g0", ["t0"], 40.0, 0.01)], area)


def obstacle_field(seed: int = 3) -> Layout:
    """Three any-direction traces with scattered rotated obstacles."""
    rng = random.Random(seed)
    rules = RuleSet(2.0, 1.5, 1.0, 1.0)
    board = _rect(0, 0, 120, 90)
    traces = [
        Trace("a", [Point(5, 12), Point(60, 12), Point(80, 32), Point(115, 32)], 1.0),
        Trace("b", [Point(5, 45), Point(40, 45), Point(55, 60), Point(115, 60)], 1.0),
        Trace("c", [Point(5, 78), Point(115, 78)], 1.0),
    ]
    obstacles = []
    while len(obstacles) < 12:
        cx, cy = rng.uniform(5, 115), rng.uniform(3, 87)
        s = rng.uniform(1.0, 3.0)
        ang = rng.uniform(0, math.pi / 2)
        pts = [Point(cx + s * math.cos(ang + k * math.pi / 2), cy + s * math.sin(ang + k * math.pi / 2))
               for k in range(4)]
        poly = Polygon(pts)
        sp = ShapelyPolygon(poly.vertices)
        if any(LineString(t.nodes).distance(sp) < 8.0 for t in traces):
            continue
        obstacles.append(poly)
    longest = max(trace_length(t) for t in traces)
    return Layout([Dra("main", board, rules)], obstacles, traces, [],
                  [MatchGroup("g0", ["a", "b", "c"], longest * 1.8, 0.5)])


def pair_group() -> Layout:
    """A differential pair with a tiny skew pattern, matched with a single-ended trace."""
    from .msdtw import offset_polyline

    rules = RuleSet(3.0, 1.5, 1.0, 1.0)
    gap = 1.0
    half = (gap + 1.0) / 2.0
    centre = [Point(5, 20), Point(80, 20), Point(100, 40), Point(140, 40)]
    p_nodes = offset_polyline(centre, half)
    n_nodes = offset_polyline(centre, -half)
    # tiny pattern on P, bulging away from N
    y = p_nodes[0].y
    p_nodes = [p_nodes[0], Point(30, y), Point(30, y + 1.5), Point(34, y + 1.5), Point(34, y)] + p_nodes[1:]
    tp = Trace("dp_p", p_nodes, 1.0)
    tn = Trace("dp_n", n_nodes, 1.0)
    single = Trace("s0", [Point(5, 75), Point(140, 75)], 1.0)
    board = _rect(0, 0, 145, 100)
    pair = DifferentialPair("dp", tp, tn, gap)
    return Layout([Dra("main", board, rules)], [_rect(60, 50, 66, 56)], [tp, tn, single], [pair],
                  [MatchGroup("g0", ["dp", "s0"], 260.0, 0.5)])


def two_dra() -> Layout:
    """Two traces crossing from a loose design-rule area into a tight one."""
    loose = RuleSet(3.0, 1.5, 1.5, 1.0)
    tight = RuleSet(1.5, 1.0, 1.0, 1.0)
    dras = [Dra("loose", _rect(0, 0, 60, 60), loose), Dra("tight", _rect(60, 0, 120, 60), tight)]
    traces = [Trace("a", [Point(5, 18), Point(115, 18)], 1.0),
              Trace("b", [Point(5, 42), Point(115, 42)], 1.0)]
    return Layout(dras, [_rect(30, 28, 34, 32), _rect(90, 28, 93, 31)], traces, [],
                  [MatchGroup("g0", ["a", "b"], 250.0, 0.5)])


def tiny_pattern_pair(r_small: float = 1.0, r_large: float = 3.0) -> DifferentialPair:
    """A pair passing a tight and a loose area, with a tiny pattern on P inside the tight one.

    A node of the tiny pattern sits closer than sqrt(2)*r_large to an N node,
    so a single loose round would pair it; the tight round isolates it first.
    """
    a, b = r_small / 2.0, r_large / 2.0
    P = [Point(0, a), Point(4, a), Point(4, a + 1.5), Point(5, a + 1.5), Point(5, a), Point(10, a),
         Point(12, b), Point(30, b)]
    N = [Point(0, -a), Point(10, -a), Point(12, -b), Point(30, -b)]
    return DifferentialPair("tp", Trace("tp_p", P, 0.2), Trace("tp_n", N, 0.2), r_small - 0.2)


def bundled() -> Dict[str, Layout]:
    return {
        "open_corridor": open_corridor_group(),
        "via_corridor": via_corridor(3.0),
        "single_open": single_open(),
        "boxed_trace": boxed_trace(),
        "obstacle_field": obstacle_field(),
        "pair_group": pair_group(),
        "two_dra": two_dra(),
    }


def write_bundled(folder: str) -> List[str]:
    os.makedirs(folder, exist_ok=True)
    paths = []
    for name, lay in bundled().items():
        path = os.path.join(folder, f"{name}.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps_layout(lay))
        paths.append(path)
    return paths
