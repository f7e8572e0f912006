"""Independent brute-force references used by the test-suite."""

import itertools
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon as SPoly, box
from shapely import affinity

from lenmatch.extend import BOUNDARY, HOLE


def pattern_band(ds, left, right, d, h, half):
    """Clearance region of the pattern's three new edges, clipped to the pattern's side of the chord."""
    seg = ds.base
    nrm = seg.normal(d)
    fl, fr = ds.points[left], ds.points[right]
    line = LineString([fl, fl + nrm.scale(h), fr + nrm.scale(h), fr])
    band = line.buffer(half, cap_style="flat", join_style="mitre", mitre_limit=10.0)
    # square caps at the feet are replaced by the half-plane clip below
    t = seg.direction
    big = 1e6
    a = seg.a
    half_plane = SPoly([
        a - t.scale(big), a + t.scale(big),
        a + t.scale(big) + nrm.scale(big), a - t.scale(big) + nrm.scale(big)])
    side_boxes = [
        LineString([fl, fl + nrm.scale(h + half)]).buffer(half, cap_style="flat"),
        LineString([fr, fr + nrm.scale(h + half)]).buffer(half, cap_style="flat"),
    ]
    return shapely.unary_union([band] + side_boxes).intersection(half_plane)


def pattern_clean(polys, ds, left, right, d, h, half, tol=1e-7):
    band = pattern_band(ds, left, right, d, h, half)
    for verts, kind in polys:
        sp = SPoly(verts)
        if kind == HOLE:
            if band.intersection(sp).area > tol:
                return False
        else:
            if band.difference(sp).area > tol:
                return False
    return True


def scan_height(polys, ds, left, right, d, h_request, half, step):
    """First clean height scanning downward from h_request in steps of `step` (0 if none)."""
    h = h_request
    while h > 1e-12:
        if pattern_clean(polys, ds, left, right, d, h, half):
            return h
        h -= step
    return 0.0


def best_placement(ds, gap, protect, min_w, height, min_height, right_ok):
    """Optimum total gain over all compatible pattern sequences.

    Patterns are enumerated explicitly and chained by the spacing rules; the
    optimum is a longest path in the resulting compatibility DAG.
    """
    n = ds.n
    pats = []
    for j in range(n):
        for i in range(j + min_w, n):
            for d in (-1, 1):
                if not right_ok(i, d):
                    continue
                if j == 0 and not ds.node_ok_left[d]:
                    continue
                if 0 < j < protect:
                    continue
                h = height(j, i, d)
                if h >= min_height - 1e-9:
                    pats.append((j, i, d, 2.0 * h))
    pats.sort()

    def compatible(p, q):
        sep = q[0] - p[1]
        if p[2] == q[2]:
            return sep >= gap
        return sep == 0 or sep >= protect

    @lru_cache(maxsize=None)
    def best_from(k):
        p = pats[k]
        tail = 0.0
        for m in range(len(pats)):
            if pats[m][0] >= p[1] and compatible(p, pats[m]):
                tail = max(tail, best_from(m))
        return p[3] + tail

    return max([0.0] + [best_from(k) for k in range(len(pats))])


def enumerate_subsets_best(ds, gap, protect, min_w, height, min_height, right_ok):
    """Plain enumeration of every pattern subset (tiny instances only)."""
    n = ds.n
    pats = []
    for j in range(n):
        for i in range(j + min_w, n):
            for d in (-1, 1):
                if not right_ok(i, d) or (j == 0 and not ds.node_ok_left[d]) or 0 < j < protect:
                    continue
                h = height(j, i, d)
                if h >= min_height - 1e-9:
                    pats.append((j, i, d, 2.0 * h))
    best = 0.0

    def rec(start, last, total):
        nonlocal best
        best = max(best, total)
        for k in range(start, len(pats)):
            q = pats[k]
            if last is not None:
                sep = q[0] - last[1]
                if sep < 0:
                    continue
                ok = sep >= gap if q[2] == last[2] else (sep == 0 or sep >= protect)
                if not ok:
                    continue
            rec(k + 1, q, total + q[3])

    pats.sort()
    rec(0, None, 0.0)
    return best


# --------------------------------------------------------------------------- random extension scenes


def _local(a, seg):
    t, nrm = seg.direction, seg.normal(1)
    return lambda x, y: a + t.scale(x) + nrm.scale(y)


def height_case(rng):
    """Random segment with up to three rotated obstacles and a bounding area, or None if degenerate."""
    from lenmatch.extend import Environment, SegmentScene, discretize, scene_polygons
    from lenmatch.geom import Point, Polygon, Segment
    from lenmatch.layout import RuleSet

    ang = rng.uniform(0, 2 * math.pi)
    L = rng.uniform(6, 14)
    a = Point(rng.uniform(-5, 5), rng.uniform(-5, 5))
    b = a + (L * math.cos(ang), L * math.sin(ang))
    seg = Segment(a, b)
    l_disc = 0.5
    ds = discretize(seg, l_disc)
    rules = RuleSet(2.0, 1.0, 1.0, 1e-9)
    loc = _local(a, seg)
    obs = []
    for _ in range(rng.randint(0, 3)):
        cx, cy = rng.uniform(-2, L + 2), rng.uniform(-12, 12)
        if abs(cy) < 2.5:
            cy = math.copysign(2.5 + rng.random() * 3, cy)
        wx, wy = rng.uniform(0.3, 3), rng.uniform(0.3, 3)
        rot = rng.uniform(0, math.pi)
        pts = [loc(cx + u * math.cos(rot) - v * math.sin(rot), cy + u * math.sin(rot) + v * math.cos(rot))
               for u, v in ((-wx, -wy), (wx, -wy), (wx, wy), (-wx, wy))]
        obs.append(Polygon(pts))
    top, bot = rng.uniform(4, 15), rng.uniform(4, 15)
    area = Polygon([loc(-3, -bot), loc(L + 3, -bot), loc(L + 3, top), loc(-3, top)])
    env = Environment.build(area=[area], obstacles=obs)
    polys = scene_polygons(env, [a, b], 0, rules, 0.0, math.inf)
    chord = LineString([a, b]).buffer(1.0)
    if any(SPoly(v).intersects(chord) for v, k in polys if k == HOLE):
        return None
    w = rng.randint(4, ds.n - 1)
    i = rng.randint(w, ds.n - 1)
    return dict(env=env, ds=ds, rules=rules, polys=polys, scene=SegmentScene(polys, ds, 1.0),
                i=i, w=w, d=rng.choice((-1, 1)), h_request=rng.uniform(1, 20), l_disc=l_disc)


def dp_case(rng, max_n=30):
    """Random small DP instance (n <= max_n, <= 3 obstacles), or None if degenerate."""
    from lenmatch.extend import Environment, SegmentScene, discretize, scene_polygons
    from lenmatch.geom import Point, Polygon, Segment
    from lenmatch.layout import RuleSet

    L = rng.uniform(5, 14.5)
    a, b = Point(0, 0), Point(L * 0.8, L * 0.6)
    seg = Segment(a, b)
    ds = discretize(seg, 0.5)
    if ds.n > max_n:
        return None
    for d in (-1, 1):
        ds.node_ok_left[d] = rng.random() < 0.7
        ds.node_ok_right[d] = rng.random() < 0.7
    loc = _local(a, seg)
    obs = []
    for _ in range(rng.randint(0, 3)):
        cx, cy = rng.uniform(-1, L + 1), rng.choice((-1, 1)) * rng.uniform(2.2, 8)
        wx, wy = rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5)
        obs.append(Polygon([loc(cx - wx, cy - wy), loc(cx + wx, cy - wy), loc(cx + wx, cy + wy), loc(cx - wx, cy + wy)]))
    top, bot = rng.uniform(3, 9), rng.uniform(3, 9)
    env = Environment.build(area=[Polygon([loc(-2, -bot), loc(L + 2, -bot), loc(L + 2, top), loc(-2, top)])],
                            obstacles=obs)
    gap = rng.choice((1.0, 1.5, 2.0))
    protect = min(rng.choice((0.5, 1.0, gap)), gap)
    rules = RuleSet(gap, 1.0, protect, 1e-9)
    polys = scene_polygons(env, [a, b], 0, rules, 0.0, math.inf)
    chord = LineString([a, b]).buffer(gap / 2)
    if any(SPoly(v).intersects(chord) for v, k in polys if k == HOLE):
        return None
    return dict(env=env, ds=ds, rules=rules, scene=SegmentScene(polys, ds, gap / 2))


def dp_oracle(case, need):
    from lenmatch.extend import right_foot_ok, spacing_for

    ds, rules, scene = case["ds"], case["rules"], case["scene"]
    sp = spacing_for(ds, rules)
    hf = lambda j, i, d: scene.height(j, i, d, need / 2)
    ro = lambda i, d: right_foot_ok(ds, sp, i, d)
    args = (ds, sp.gap, sp.protect, sp.min_w, hf, rules.d_protect, ro)
    return best_placement(*args), (enumerate_subsets_best(*args) if ds.n <= 14 else None)


# --------------------------------------------------------------------------- DTW


def best_alignment_cost(P, N):
    """Cheapest monotone alignment by recursive enumeration of all warping paths."""

    def d(i, j):
        return math.hypot(P[i][0] - N[j][0], P[i][1] - N[j][1])

    I, J = len(P), len(N)
    best = math.inf

    def walk(i, j, acc):
        nonlocal best
        acc += d(i, j)
        if acc >= best:
            return
        if i == I - 1 and j == J - 1:
            best = acc
            return
        if i + 1 < I and j + 1 < J:
            walk(i + 1, j + 1, acc)
        if i + 1 < I:
            walk(i + 1, j, acc)
        if j + 1 < J:
            walk(i, j + 1, acc)

    walk(0, 0, 0.0)
    return best


# --------------------------------------------------------------------------- assignment


def transport_feasible(caps, reqs, neighbors):
    """Supply/demand feasibility by the subset condition, in exact rationals.

    Demands T can be met iff, for every subset S of traces, the total
    requirement of S does not exceed the capacity of the regions adjacent
    to at least one member of S.
    """
    caps = [Fraction(c) for c in caps]
    reqs = [Fraction(r) for r in reqs]
    m = len(reqs)
    for size in range(1, m + 1):
        for S in itertools.combinations(range(m), size):
            supply = sum((caps[i] for i in range(len(caps)) if neighbors[i] & set(S)), Fraction(0))
            if sum(reqs[j] for j in S) > supply:
                return False
    return True


# --------------------------------------------------------------------------- pair generators


def random_centerline(rng):
    """Rectilinear or 45-degree polyline with long segments (so offsets never fold)."""
    from lenmatch.geom import Point

    p = Point(0.0, 0.0)
    nodes = [p]
    heading = rng.choice(range(8))
    for _ in range(rng.randint(1, 5)):
        heading = (heading + rng.choice((-2, -1, 1, 2))) % 8
        ang = heading * math.pi / 4
        step = rng.uniform(8, 20)
        p = Point(p.x + step * math.cos(ang), p.y + step * math.sin(ang))
        nodes.append(p)
    return nodes


def coupled(centre, s_center, width=1.0):
    from lenmatch.layout import DifferentialPair, Trace
    from lenmatch.msdtw import offset_polyline

    return DifferentialPair("dp", Trace("p", offset_polyline(centre, s_center / 2), width),
                            Trace("n", offset_polyline(centre, -s_center / 2), width), s_center - width)
