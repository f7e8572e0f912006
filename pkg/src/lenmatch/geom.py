"""
2D geometry kernel for any-direction traces.

Coordinates are floats in nanometers. Every predicate uses the absolute
tolerance EPS so that results stay consistent across orientations.
"""

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

EPS = 1e-6


class GeometryError(ValueError):
    pass


class Point(NamedTuple):
    x: float
    y: float

    def __add__(self, other):
        return Point(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Point(self.x - other[0], self.y - other[1])

    def scale(self, k: float) -> "Point":
        return Point(self.x * k, self.y * k)


def close(a: Sequence[float], b: Sequence[float], eps: float = EPS) -> bool:
    return abs(a[0] - b[0]) <= eps and abs(a[1] - b[1]) <= eps


def dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def rotate(p: Sequence[float], angle: float, about: Sequence[float] = (0.0, 0.0)) -> Point:
    c, s = math.cos(angle), math.sin(angle)
    dx, dy = p[0] - about[0], p[1] - about[1]
    return Point(about[0] + c * dx - s * dy, about[1] + s * dx + c * dy)


@dataclass(frozen=True)
class Segment:
    a: Point
    b: Point

    def __post_init__(self):
        object.__setattr__(self, "a", Point(*self.a))
        object.__setattr__(self, "b", Point(*self.b))
        if dist(self.a, self.b) <= EPS:
            raise GeometryError(f"degenerate segment at {tuple(self.a)}")

    @property
    def length(self) -> float:
        return dist(self.a, self.b)

    @property
    def direction(self) -> Point:
        """Unit vector from a to b."""
        n = self.length
        return Point((self.b.x - self.a.x) / n, (self.b.y - self.a.y) / n)

    def normal(self, side: int = 1) -> Point:
        """Unit normal; side=+1 is the left (counterclockwise) normal."""
        t = self.direction
        return Point(-t.y * side, t.x * side)

    def at(self, s: float) -> Point:
        """Point at arc length s from a."""
        t = self.direction
        return Point(self.a.x + t.x * s, self.a.y + t.y * s)


def seg_point_dist(seg: Segment, p: Sequence[float]) -> float:
    ax, ay = seg.a
    dx, dy = seg.b.x - ax, seg.b.y - ay
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / (dx * dx + dy * dy)
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def line_point_dist(seg: Segment, p: Sequence[float]) -> float:
    """Distance from p to the infinite line through seg."""
    return abs(cross(seg.a, seg.b, p)) / seg.length


class Intersection(NamedTuple):
    kind: str  # "none", "point" or "overlap"
    points: Tuple[Point, ...]


_NO_HIT = Intersection("none", ())


def seg_seg_intersect(s1: Segment, s2: Segment, eps: float = EPS) -> Intersection:
    """Classify the intersection of two closed segments.

    Collinear overlaps are returned as an "overlap" with the two end points
    ordered lexicographically so the result does not depend on argument order.
    """
    p, r = s1.a, s1.b - s1.a
    q, s = s2.a, s2.b - s2.a
    rxs = r.x * s.y - r.y * s.x
    qp = q - p
    len1, len2 = s1.length, s2.length
    if abs(rxs) <= eps * max(len1, len2):
        # parallel: collinear only if both ends of s2 lie on s1's line
        if line_point_dist(s1, s2.a) > eps or line_point_dist(s1, s2.b) > eps:
            return _NO_HIT
        rr = r.x * r.x + r.y * r.y
        t0 = (qp.x * r.x + qp.y * r.y) / rr
        t1 = t0 + (s.x * r.x + s.y * r.y) / rr
        lo, hi = max(0.0, min(t0, t1)), min(1.0, max(t0, t1))
        if (hi - lo) * len1 < -eps:
            return _NO_HIT
        a = Point(p.x + r.x * lo, p.y + r.y * lo)
        b = Point(p.x + r.x * hi, p.y + r.y * hi)
        if dist(a, b) <= eps:
            return Intersection("point", (a,))
        return Intersection("overlap", tuple(sorted((a, b))))
    t = (qp.x * s.y - qp.y * s.x) / rxs
    u = (qp.x * r.y - qp.y * r.x) / rxs
    et, eu = eps / len1, eps / len2
    if -et <= t <= 1 + et and -eu <= u <= 1 + eu:
        t = min(1.0, max(0.0, t))
        return Intersection("point", (Point(p.x + r.x * t, p.y + r.y * t),))
    return _NO_HIT


def seg_seg_dist(s1: Segment, s2: Segment) -> float:
    if seg_seg_intersect(s1, s2).kind != "none":
        return 0.0
    return min(
        seg_point_dist(s1, s2.a),
        seg_point_dist(s1, s2.b),
        seg_point_dist(s2, s1.a),
        seg_point_dist(s2, s1.b),
    )


def signed_area(pts: Sequence[Sequence[float]]) -> float:
    total = 0.0
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return total / 2.0


class Polygon:
    """Simple closed polygon, stored counterclockwise."""

    __slots__ = ("vertices",)

    def __init__(self, vertices: Sequence[Sequence[float]]):
        pts = [Point(float(x), float(y)) for x, y in vertices]
        if len(pts) > 1 and close(pts[0], pts[-1]):
            pts.pop()
        cleaned: List[Point] = []
        for p in pts:
            if not cleaned or not close(cleaned[-1], p):
                cleaned.append(p)
        if len(cleaned) > 1 and close(cleaned[0], cleaned[-1]):
            cleaned.pop()
        if len(cleaned) < 3:
            raise GeometryError("polygon needs at least 3 distinct vertices")
        if signed_area(cleaned) < 0:
            cleaned.reverse()
        self.vertices: Tuple[Point, ...] = tuple(cleaned)

    def __len__(self):
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def __eq__(self, other):
        return isinstance(other, Polygon) and self.vertices == other.vertices

    def __hash__(self):
        return hash(self.vertices)

    def __repr__(self):
        return f"Polygon({[tuple(v) for v in self.vertices]})"

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    def edges(self):
        v = self.vertices
        for i in range(len(v)):
            yield v[i], v[(i + 1) % len(v)]

    def bbox(self) -> Tuple[float, float, float, float]:
        xs = [p.x for p in self.vertices]
        ys = [p.y for p in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def is_simple(self) -> bool:
        edges = [Segment(a, b) for a, b in self.edges()]
        n = len(edges)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    hit = seg_seg_intersect(edges[i], edges[j])
                    if hit.kind == "overlap":
                        return False
                    continue
                if seg_seg_intersect(edges[i], edges[j]).kind != "none":
                    return False
        return True


INSIDE, BOUNDARY, OUTSIDE = "inside", "boundary", "outside"


def point_in_polygon(p: Sequence[float], poly: Polygon, eps: float = EPS) -> str:
    """Even-odd ray casting with an explicit boundary band of width eps."""
    x, y = p
    verts = poly.vertices
    n = len(verts)
    inside = False
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        # boundary test
        dx, dy = bx - ax, by - ay
        ll = dx * dx + dy * dy
        t = ((x - ax) * dx + (y - ay) * dy) / ll
        t = min(1.0, max(0.0, t))
        if math.hypot(x - (ax + t * dx), y - (ay + t * dy)) <= eps:
            return BOUNDARY
        if (ay > y) != (by > y):
            xc = ax + (y - ay) * dx / dy
            if x < xc:
                inside = not inside
    return INSIDE if inside else OUTSIDE


def offset_rectangle(seg: Segment, half: float) -> Polygon:
    """Rectangle at distance `half` around seg on both sides and both ends."""
    t = seg.direction
    n = Point(-t.y, t.x)
    a = seg.a - t.scale(half)
    b = seg.b + t.scale(half)
    return Polygon([a - n.scale(half), b - n.scale(half), b + n.scale(half), a + n.scale(half)])


@dataclass(frozen=True)
class Ura:
    outer: Polygon
    inner: Optional[Polygon]
    base: Segment
    h_ob: float


def build_segment_ura(seg: Segment, d_gap: float) -> Ura:
    if d_gap <= 0:
        raise GeometryError("d_gap must be positive")
    rect = offset_rectangle(seg, d_gap / 2.0)
    return Ura(rect, None, seg, d_gap / 2.0)


def build_pattern_ura(feet: Tuple[Sequence[float], Sequence[float]], h: float, direction: int,
                      d_gap: float) -> Ura:
    """URA of a convex pattern standing on the chord between `feet`.

    Only the part above the base chord is represented; the region below it is
    covered by the URA of the chord itself and never needs checking.
    """
    if h < 0:
        raise GeometryError("pattern height must be non-negative")
    base = Segment(Point(*feet[0]), Point(*feet[1]))
    half = d_gap / 2.0
    t = base.direction
    n = base.normal(direction)
    h_ob = h + half

    def local(x: float, y: float) -> Point:
        return Point(base.a.x + t.x * x + n.x * y, base.a.y + t.y * x + n.y * y)

    w = base.length
    outer = Polygon([local(-half, 0), local(w + half, 0), local(w + half, h_ob), local(-half, h_ob)])
    inner = None
    if w > 2 * half + EPS and h - half > EPS:
        inner = Polygon([local(half, 0), local(w - half, 0), local(w - half, h - half), local(half, h - half)])
    return Ura(outer, inner, base, h_ob)


def polyline_length(nodes: Sequence[Sequence[float]]) -> float:
    return sum(dist(nodes[i], nodes[i + 1]) for i in range(len(nodes) - 1))


def turn_interior_angle(a, b, c) -> float:
    """Interior angle at b in degrees (180 means straight)."""
    v1 = (a[0] - b[0], a[1] - b[1])
    v2 = (c[0] - b[0], c[1] - b[1])
    n1, n2 = math.hypot(*v1), math.hypot(*v2)
    cosang = (v1[0] * v2[0] + v1[1] * v2[1]) / (n1 * n2)
    return math.degrees(math.acos(max(-1.0, min(1.0, cosang))))
