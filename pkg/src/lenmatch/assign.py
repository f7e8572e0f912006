"""
Routable-area assignment.

Free board space is cut into vertical slabs; every slab piece is a region
with an area capacity. Each trace (or differential pair) that must grow
demands area proportional to its missing length. A max-flow decides whether
the demands fit, and shared regions are then cut into per-trace parts.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import shapely
import shapely.ops
from shapely.geometry import LineString, Polygon as ShapelyPolygon, box

from .geom import EPS, Polygon
from .layout import Layout, Trace, trace_length


class AssignmentError(RuntimeError):
    pass


@dataclass
class Region:
    id: str
    polygon: Polygon
    capacity: float
    neighbors: List[str] = field(default_factory=list)


@dataclass
class Demand:
    trace_id: str
    required: float


@dataclass
class Assignment:
    allocations: Dict[Tuple[str, str], float]

    def of_region(self, rid: str) -> Dict[str, float]:
        return {t: x for (r, t), x in self.allocations.items() if r == rid and x > 0}


@dataclass
class Infeasible:
    deficits: Dict[str, float]  # trace id -> unmet area
    saturated_regions: List[str]  # regions on the source side of a minimum cut's sink boundary

    def report(self) -> str:
        lines = ["assignment infeasible"]
        for tid in sorted(self.deficits):
            lines.append(f"  {tid}: deficit {self.deficits[tid]:.6g}")
        if self.saturated_regions:
            lines.append("  saturated regions: " + ", ".join(self.saturated_regions))
        return "\n".join(lines)


def _shapes(geom) -> List[ShapelyPolygon]:
    if geom.is_empty:
        return []
    if isinstance(geom, ShapelyPolygon):
        return [geom]
    return [g for g in getattr(geom, "geoms", []) if isinstance(g, ShapelyPolygon) and not g.is_empty]


def _split_holes(poly: ShapelyPolygon) -> List[ShapelyPolygon]:
    """Cut a polygon with holes by vertical lines until every piece is hole-free."""
    if not poly.interiors:
        return [poly]
    hole = poly.interiors[0]
    x = shapely.Polygon(hole).representative_point().x
    minx, miny, maxx, maxy = poly.bounds
    left = poly.intersection(box(minx - 1, miny - 1, x, maxy + 1))
    right = poly.intersection(box(x, miny - 1, maxx + 1, maxy + 1))
    out = []
    for part in _shapes(left) + _shapes(right):
        out.extend(_split_holes(part))
    return out


def _to_polygon(sp: ShapelyPolygon) -> Polygon:
    return Polygon(list(sp.exterior.coords))


def member_pitch(layout: Layout, member: str) -> float:
    """Centerline pitch of the (possibly merged) trace that meanders for `member`."""
    try:
        pair = layout.pair(member)
    except KeyError:
        t = layout.trace(member)
        mid = t.nodes[len(t.nodes) // 2]
        return layout.rules_at(mid).d_gap + t.width
    t = pair.trace_p
    mid = t.nodes[len(t.nodes) // 2]
    return layout.rules_at(mid).d_gap + pair.s_center + t.width


def member_traces(layout: Layout, member: str) -> List[Trace]:
    try:
        pair = layout.pair(member)
    except KeyError:
        return [layout.trace(member)]
    return [pair.trace_p, pair.trace_n]


def corridor(layout: Layout, member: str) -> ShapelyPolygon:
    """Clearance envelope of a member's original routing (half a pitch around each centerline)."""
    shapes = []
    for t in member_traces(layout, member):
        mid = t.nodes[len(t.nodes) // 2]
        half = (layout.rules_at(mid).d_gap + t.width) / 2.0
        shapes.append(LineString(t.nodes).buffer(half, cap_style="flat", join_style="mitre", mitre_limit=4.0))
    merged = shapely.unary_union(shapes)
    parts = _shapes(merged)
    if len(parts) != 1:
        merged = merged.convex_hull if len(parts) > 1 else merged
        parts = _shapes(merged)
    return ShapelyPolygon(parts[0].exterior)


def _all_members(layout: Layout) -> List[str]:
    """Group members plus every trace that is not part of one, each as a routing entity."""
    seen = []
    for g in layout.groups:
        for m in g.members:
            if m not in seen:
                seen.append(m)
    covered = set()
    for m in seen:
        covered.update(t.id for t in member_traces(layout, m))
    for p in layout.pairs:
        if p.trace_p.id not in covered and p.id not in seen:
            seen.append(p.id)
            covered.update((p.trace_p.id, p.trace_n.id))
    for t in layout.traces:
        if t.id not in covered:
            seen.append(t.id)
    return seen


def board_shape(layout: Layout):
    return shapely.unary_union([ShapelyPolygon(d.region.vertices) for d in layout.dras])


def default_slab_pitch(layout: Layout) -> float:
    pitches = [member_pitch(layout, m) for m in _all_members(layout)] or [1.0]
    return 12.0 * max(pitches)


def build_regions(layout: Layout, slab_pitch: Optional[float] = None) -> Tuple[List[Region], List[Demand]]:
    """Regions of free space with capacities and neighbors, plus per-member area demands."""
    slab_pitch = slab_pitch or default_slab_pitch(layout)
    if slab_pitch <= 0:
        raise AssignmentError("slab pitch must be positive")
    members = _all_members(layout)
    corridors = {m: corridor(layout, m) for m in members}
    board = board_shape(layout)
    blocked = shapely.unary_union([ShapelyPolygon(o.vertices) for o in layout.obstacles] + list(corridors.values()))
    free = board.difference(blocked)

    targets: Dict[str, float] = {}
    for g in layout.groups:
        for m in g.members:
            targets[m] = g.l_target
    demands = []
    for m in members:
        if m not in targets:
            continue
        delta = max(0.0, targets[m] - layout.member_length(m))
        demands.append(Demand(m, delta / 2.0 * member_pitch(layout, m)))

    minx, miny, maxx, maxy = board.bounds
    count = max(1, math.ceil((maxx - minx) / slab_pitch - 1e-9))
    width = (maxx - minx) / count
    regions: List[Region] = []
    demanding = [d.trace_id for d in demands]
    for k in range(count):
        x0 = minx + k * width
        x1 = maxx if k == count - 1 else x0 + width
        slab = free.intersection(box(x0, miny - 1, x1, maxy + 1))
        pieces = []
        for part in _shapes(slab):
            pieces.extend(_split_holes(part))
        pieces.sort(key=lambda p: (round(p.bounds[1], 9), round(p.bounds[0], 9)))
        for piece in pieces:
            if piece.area <= EPS:
                continue
            rid = f"r{len(regions)}"
            nbrs = []
            for m in demanding:
                if piece.distance(corridors[m]) <= _d_gap_of(layout, m) + EPS:
                    nbrs.append(m)
            regions.append(Region(rid, _to_polygon(piece), piece.area, nbrs))
    return regions, demands


def _d_gap_of(layout: Layout, member: str) -> float:
    t = member_traces(layout, member)[0]
    return layout.rules_at(t.nodes[len(t.nodes) // 2]).d_gap


def solve_assignment(regions: Sequence[Region], demands: Sequence[Demand]) -> Union[Assignment, Infeasible]:
    """Feasible allocation of region area to demands, or a certificate of infeasibility."""
    g = nx.DiGraph()
    src, snk = ("src",), ("snk",)
    g.add_node(src)
    g.add_node(snk)
    total = Fraction(0)
    for r in regions:
        g.add_edge(src, ("r", r.id), capacity=Fraction(r.capacity))
        for t in r.neighbors:
            g.add_edge(("r", r.id), ("t", t))  # no capacity attribute: unbounded
    for d in demands:
        req = Fraction(d.required)
        total += req
        g.add_node(("t", d.trace_id))
        if req > 0:
            g.add_edge(("t", d.trace_id), snk, capacity=req)
    value, flow = nx.maximum_flow(g, src, snk, flow_func=nx.algorithms.flow.edmonds_karp)
    if value >= total:
        alloc = {}
        for r in regions:
            for t in r.neighbors:
                x = flow[("r", r.id)].get(("t", t), 0)
                if x > 0:
                    alloc[(r.id, t)] = float(x)
        return Assignment(alloc)
    deficits = {}
    for d in demands:
        got = sum((flow[u].get(("t", d.trace_id), 0) for u in g.predecessors(("t", d.trace_id))), Fraction(0))
        if Fraction(d.required) - got > 0:
            deficits[d.trace_id] = float(Fraction(d.required) - got)
    _, (reach, _) = nx.minimum_cut(g, src, snk, flow_func=nx.algorithms.flow.edmonds_karp)
    saturated = sorted(r.id for r in regions if ("r", r.id) not in reach)
    return Infeasible(deficits, saturated)


def _axis(layout: Layout, members: Sequence[str], region: ShapelyPolygon) -> Tuple[float, float]:
    """Dominant direction of the members' segments near the region (axial average)."""
    sx = sy = 0.0
    near = region.buffer(max(region.bounds[2] - region.bounds[0], region.bounds[3] - region.bounds[1]))
    for m in members:
        for t in member_traces(layout, m):
            for a, b in t.segments():
                part = LineString([a, b]).intersection(near)
                length = part.length
                if length <= EPS:
                    continue
                ang = math.atan2(b[1] - a[1], b[0] - a[0])
                sx += length * math.cos(2 * ang)
                sy += length * math.sin(2 * ang)
    if abs(sx) <= EPS and abs(sy) <= EPS:
        return 1.0, 0.0
    ang = math.atan2(sy, sx) / 2.0
    return math.cos(ang), math.sin(ang)


def _slice(region: ShapelyPolygon, normal: Tuple[float, float], lo: float, hi: float) -> ShapelyPolygon:
    """Part of region with lo <= p.normal <= hi."""
    nx_, ny = normal
    tx, ty = -ny, nx_
    minx, miny, maxx, maxy = region.bounds
    big = 2.0 * (maxx - minx + maxy - miny) + 1.0
    cx, cy = (minx + maxx) / 2, (miny + maxy) / 2
    along = cx * tx + cy * ty

    def pt(s, u):
        return (s * nx_ + u * tx, s * ny + u * ty)

    strip = ShapelyPolygon([pt(lo, along - big), pt(hi, along - big), pt(hi, along + big), pt(lo, along + big)])
    return region.intersection(strip)


def _member_offset(layout: Layout, member: str, region: ShapelyPolygon, normal) -> float:
    """Position of the member across the sweep axis, taken at its closest approach to the region."""
    best, where = math.inf, 0.0
    for t in member_traces(layout, member):
        line = LineString(t.nodes)
        d = line.distance(region)
        p = shapely.ops.nearest_points(line, region)[0]
        if d < best - EPS:
            best, where = d, p.x * normal[0] + p.y * normal[1]
    return where


def carve_routable_areas(layout: Layout, regions: Sequence[Region], assignment: Assignment,
                         include_corridors: bool = True) -> Dict[str, List[Polygon]]:
    """Per-member routable areas: the member's corridor plus its share of every assigned region."""
    out: Dict[str, List[Polygon]] = {}
    for r in regions:
        shares = assignment.of_region(r.id)
        if not shares:
            continue
        poly = ShapelyPolygon(r.polygon.vertices)
        members = sorted(shares)
        if len(members) == 1:
            out.setdefault(members[0], []).append(r.polygon)
            continue
        ax = _axis(layout, members, poly)
        normal = (-ax[1], ax[0])
        members.sort(key=lambda m: (_member_offset(layout, m, poly, normal), m))
        total = sum(shares.values())
        proj = [x * normal[0] + y * normal[1] for x, y in poly.exterior.coords]
        lo_all, hi_all = min(proj), max(proj)
        lo = lo_all
        for k, m in enumerate(members):
            if k == len(members) - 1:
                hi = hi_all
            else:
                want = poly.area * shares[m] / total
                a, b = lo, hi_all
                for _ in range(80):
                    mid = (a + b) / 2
                    if _slice(poly, normal, lo, mid).area < want:
                        a = mid
                    else:
                        b = mid
                hi = (a + b) / 2
            piece = _slice(poly, normal, lo, hi)
            for part in _shapes(piece):
                if part.area > EPS:
                    out.setdefault(m, []).append(_to_polygon(part))
            lo = hi
        for m in members:
            for t in member_traces(layout, m):
                inside = LineString(t.nodes).intersection(poly)
                if inside.length <= EPS:
                    continue
                mine = shapely.unary_union([ShapelyPolygon(p.vertices) for p in out.get(m, [])])
                if not mine.buffer(1e-6).covers(inside):
                    raise AssignmentError(f"carved area of {m} does not contain its routing in region {r.id}")
    if include_corridors:
        for m in _all_members(layout):
            if any(x > 0 for (_, t), x in assignment.allocations.items() if t == m) or m in out:
                out.setdefault(m, []).insert(0, _to_polygon(corridor(layout, m)))
    return {m: out[m] for m in sorted(out)}


def spread_slack(regions: Sequence[Region], assignment: Assignment) -> Assignment:
    """Hand every region's unused capacity to its neighbors.

    The flow only covers the demands; the remaining area is split among a
    region's neighbors in proportion to their flow there (equally when the
    region carries no flow), so meanders get room beyond the bare minimum.
    """
    alloc = dict(assignment.allocations)
    for r in regions:
        if not r.neighbors:
            continue
        used = {t: alloc.get((r.id, t), 0.0) for t in r.neighbors}
        total = sum(used.values())
        slack = r.capacity - total
        if slack <= 0:
            continue
        for t in r.neighbors:
            share = used[t] / total if total > 0 else 1.0 / len(r.neighbors)
            alloc[(r.id, t)] = used[t] + slack * share
    return Assignment({k: v for k, v in alloc.items() if v > 0})


def assign_layout(layout: Layout, slab_pitch: Optional[float] = None) -> Union[Dict[str, List[Polygon]], Infeasible]:
    regions, demands = build_regions(layout, slab_pitch)
    result = solve_assignment(regions, demands)
    if isinstance(result, Infeasible):
        return result
    areas = carve_routable_areas(layout, regions, spread_slack(regions, result))
    for d in demands:
        if d.trace_id not in areas:
            areas[d.trace_id] = [_to_polygon(corridor(layout, d.trace_id))]
    return {m: areas[m] for m in sorted(areas)}
