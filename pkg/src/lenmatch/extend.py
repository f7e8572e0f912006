"""
DP-based segment extension.

A segment is discretized into evenly spaced points; a DP over (point, last
pattern direction) chooses feet, widths and directions of convex patterns,
each pattern getting the largest height its unreachable area (URA) allows.
The trace-level driver pops segments from a FIFO queue, extends them, and
pushes the component segments of new patterns back for further extension.
"""

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import shapely
from shapely.geometry import Polygon as ShapelyPolygon

from .geom import EPS, Point, Polygon, Segment, dist, offset_rectangle, polyline_length
from .layout import Dra, RuleSet, Trace, dra_at
from .spatial import build_index, query_ids

NEG = -math.inf
DIRS = (-1, 1)
HOLE, BOUNDARY = 0, 1


class ExtensionError(ValueError):
    pass


# --------------------------------------------------------------------------- discretization


@dataclass
class DiscretizedSegment:
    base: Segment
    points: List[Point]
    step: float
    n: int
    # whether a pattern side may start/end right at the segment's end nodes, per direction
    node_ok_left: Dict[int, bool] = field(default_factory=lambda: {-1: True, 1: True})
    node_ok_right: Dict[int, bool] = field(default_factory=lambda: {-1: True, 1: True})

    def steps(self, length: float) -> int:
        """Length rounded up to whole steps."""
        return max(0, math.ceil(length / self.step - 1e-9))


def discretize(seg: Segment, l_disc: float) -> DiscretizedSegment:
    if l_disc <= 0:
        raise ExtensionError("l_disc must be positive")
    length = seg.length
    if length < l_disc - EPS:
        raise ExtensionError("segment too short to extend")
    k = max(1, math.ceil(length / l_disc - 1e-9))
    step = length / k
    pts = [seg.at(i * step) for i in range(k)] + [seg.b]
    return DiscretizedSegment(seg, pts, step, k + 1)


# --------------------------------------------------------------------------- environment


@dataclass
class Environment:
    """Static geometry a trace must respect while meandering.

    `boundaries` are rings the pattern must stay inside (routable area),
    `holes` are polygons it must stay out of; `foreign` are segments of
    other traces as (a, b, width). The trace's own segments are added per
    extended segment by `scene_polygons`.
    """

    boundaries: List[np.ndarray] = field(default_factory=list)
    holes: List[np.ndarray] = field(default_factory=list)
    obstacles: List[Polygon] = field(default_factory=list)
    foreign: List[Tuple[Point, Point, float]] = field(default_factory=list)
    _inflated: Dict[float, List[np.ndarray]] = field(default_factory=dict, repr=False)
    _areas: List = field(default_factory=list, repr=False)

    @classmethod
    def build(cls, area: Optional[Sequence[Polygon]] = None, obstacles: Sequence[Polygon] = (),
              foreign: Sequence[Tuple[Sequence[Sequence[float]], float]] = ()) -> "Environment":
        env = cls(obstacles=list(obstacles))
        if area:
            merged = shapely.unary_union([ShapelyPolygon(p.vertices) for p in area])
            parts = list(merged.geoms) if hasattr(merged, "geoms") else [merged]
            env._areas = [p for p in parts if not p.is_empty]
        for nodes, width in foreign:
            for a, b in zip(nodes[:-1], nodes[1:]):
                env.foreign.append((Point(*a), Point(*b), width))
        return env

    def area_rings(self, p: Sequence[float]) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """Exterior and hole rings of the routable-area part containing p."""
        if not self._areas:
            return [], []
        pt = shapely.Point(p)
        part = min(self._areas, key=lambda a: a.distance(pt))
        ext = np.asarray(part.exterior.coords[:-1], dtype=float)
        holes = [np.asarray(r.coords[:-1], dtype=float) for r in part.interiors]
        return [ext], holes

    def inflated_obstacles(self, grow: float) -> List[np.ndarray]:
        key = round(grow, 9)
        if key not in self._inflated:
            out = []
            for o in self.obstacles:
                sp = ShapelyPolygon(o.vertices)
                if grow > EPS:
                    sp = sp.buffer(grow, join_style="mitre", mitre_limit=2.0)
                out.append(np.asarray(sp.exterior.coords[:-1], dtype=float))
            self._inflated[key] = out
        return self._inflated[key]


def scene_polygons(env: Environment, nodes: Sequence[Point], seg_index: int, rules: RuleSet, width: float,
                   reach: float) -> List[Tuple[np.ndarray, int]]:
    """Polygons relevant to extending segment `seg_index` of the polyline `nodes`."""
    a, b = nodes[seg_index], nodes[seg_index + 1]
    seg = Segment(a, b)
    pitch = rules.d_gap + width
    half = pitch / 2.0
    t = seg.direction
    nrm = Point(-t.y, t.x)
    length = seg.length

    def near(poly: np.ndarray) -> bool:
        rel = poly - np.array([a.x, a.y])
        lx = rel @ np.array([t.x, t.y])
        ly = rel @ np.array([nrm.x, nrm.y])
        return lx.max() >= -half - EPS and lx.min() <= length + half + EPS and ly.max() >= -reach and ly.min() <= reach

    polys: List[Tuple[np.ndarray, int]] = []
    ext, area_holes = env.area_rings(((a.x + b.x) / 2, (a.y + b.y) / 2))
    polys += [(r, BOUNDARY) for r in ext]
    polys += [(r, HOLE) for r in area_holes if near(r)]
    grow = rules.d_obs + width / 2.0 - half
    polys += [(r, HOLE) for r in env.inflated_obstacles(grow) if near(r)]
    for fa, fb, fw in env.foreign:
        if dist(fa, fb) <= EPS:
            continue
        rect = np.array(offset_rectangle(Segment(fa, fb), (rules.d_gap + fw) / 2.0).vertices)
        if near(rect):
            polys.append((rect, HOLE))
    last = len(nodes) - 2
    for k in range(len(nodes) - 1):
        if k == seg_index:
            continue
        p, q = nodes[k], nodes[k + 1]
        # adjacent segments are cut back by one pitch at the shared node
        start = pitch if k == seg_index + 1 else 0.0
        end = pitch if k == seg_index - 1 else 0.0
        seg_len = dist(p, q)
        if start + end >= seg_len - EPS:
            continue
        s = Segment(p, q)
        piece = Segment(s.at(start), s.at(seg_len - end))
        rect = np.array(offset_rectangle(piece, half).vertices)
        if near(rect):
            polys.append((rect, HOLE))
    del last
    return polys


# --------------------------------------------------------------------------- heights


class SegmentScene:
    """Local-frame view of the environment around one discretized segment.

    x runs along the chord from its start, y along the left normal. Heights
    for direction dir use y' = dir * y.
    """

    def __init__(self, polygons: Sequence[Tuple[np.ndarray, int]], ds: DiscretizedSegment, half: float):
        self.ds = ds
        self.half = half
        seg = ds.base
        t = seg.direction
        nrm = Point(-t.y, t.x)
        origin = np.array([seg.a.x, seg.a.y])
        rot = np.array([[t.x, nrm.x], [t.y, nrm.y]])
        locs, owners, kinds, sizes = [], [], [], []
        for k, (verts, kind) in enumerate(polygons):
            loc = (np.asarray(verts, dtype=float) - origin) @ rot
            locs.append(loc)
            owners.append(np.full(len(loc), k, dtype=np.int64))
            kinds.append(kind)
            sizes.append(len(loc))
        self.kinds = np.array(kinds, dtype=np.int64)
        self.sizes = np.array(sizes, dtype=np.int64)
        self.polys = locs
        if locs:
            self.nodes = np.vstack(locs)
            self.owner = np.concatenate(owners)
            nxt = np.concatenate([np.roll(l, -1, axis=0) for l in locs])
            self.edges = np.hstack([self.nodes, nxt])
        else:
            self.nodes = np.empty((0, 2))
            self.owner = np.empty(0, dtype=np.int64)
            self.edges = np.empty((0, 4))
        self.poly_min_y = {d: np.array([(d * l[:, 1]).min() for l in locs]) for d in DIRS}
        self.index = build_index([(p, int(o)) for p, o in zip(self.nodes.tolist(), self.owner.tolist())])
        xs = np.array([i * ds.step for i in range(ds.n)])
        xs[-1] = seg.length
        self.xs = xs
        self._side = {}
        for d in DIRS:
            self._side[(d, "L")] = self._side_limits(xs - half + 1e-7, d)
            self._side[(d, "R")] = self._side_limits(xs + half - 1e-7, d)
        self._cache: Dict[Tuple[int, int, int, float], float] = {}

    def _side_limits(self, X: np.ndarray, d: int) -> np.ndarray:
        """Lowest height at which the vertical line x=X (above the chord) meets a polygon edge.

        Returns 0 where the base of the line already lies inside a hole or
        outside the routable area.
        """
        out = np.full(len(X), np.inf)
        if len(self.edges) == 0:
            return out
        x1, y1, x2, y2 = (self.edges[:, k][:, None] for k in range(4))
        y1, y2 = d * y1, d * y2
        Xr = X[None, :]
        crosses = ((x1 <= Xr) & (Xr < x2)) | ((x2 <= Xr) & (Xr < x1))
        with np.errstate(divide="ignore", invalid="ignore"):
            yc = y1 + (Xr - x1) * (y2 - y1) / (x2 - x1)
        above = crosses & (yc > 1e-7)
        first = np.where(above, yc, np.inf).min(axis=0)
        counts = np.zeros((len(self.sizes), len(X)), dtype=np.int64)
        np.add.at(counts, self.owner, above.astype(np.int64))
        inside = counts % 2 == 1
        blocked = ((self.kinds[:, None] == HOLE) & inside) | ((self.kinds[:, None] == BOUNDARY) & ~inside)
        out = np.where(blocked.any(axis=0), 0.0, first)
        return out

    def side_limit(self, foot: int, d: int, side: str) -> float:
        return float(self._side[(d, side)][foot])

    def height(self, left: int, right: int, d: int, h_request: float) -> float:
        key = (left, right, d, h_request)
        if key not in self._cache:
            self._cache[key] = self._height(left, right, d, h_request)
        return self._cache[key]

    def _height(self, left: int, right: int, d: int, h_request: float) -> float:
        half = self.half
        xl, xr = self.xs[left], self.xs[right]
        h_ob = min(h_request + half, self.side_limit(left, d, "L"), self.side_limit(right, d, "R"))
        if h_ob <= half or len(self.nodes) == 0:
            return max(0.0, h_ob - half)
        lo_x, hi_x = xl - half + 1e-7, xr + half - 1e-7
        in_lo, in_hi = xl + half - 1e-7, xr - half + 1e-7
        while h_ob > half:
            if d > 0:
                ids = query_ids(self.index, (lo_x, hi_x), (1e-7, h_ob - 1e-7))
            else:
                ids = query_ids(self.index, (lo_x, hi_x), (-(h_ob - 1e-7), -1e-7))
            if len(ids) == 0:
                break
            pts = self.nodes[ids]
            own = self.owner[ids]
            yy = d * pts[:, 1]
            counts = np.bincount(own, minlength=len(self.sizes))
            touched = np.nonzero(counts)[0]
            new_h = h_ob
            straddle = touched[counts[touched] < self.sizes[touched]]
            if len(straddle):
                # part of polygon k inside the outer border, part outside
                mask = np.isin(own, straddle)
                new_h = min(new_h, float(yy[mask].min()))
            else:
                enclosed = touched
                inner_top = h_ob - 2 * half
                for k in enclosed.tolist():
                    loc = self.polys[k]
                    ly = d * loc[:, 1]
                    ok = (in_lo < in_hi and inner_top > 0 and bool(np.all(
                        (loc[:, 0] > in_lo) & (loc[:, 0] < in_hi) & (ly < inner_top + 1e-7))))
                    if not ok:
                        new_h = min(new_h, float(self.poly_min_y[d][k]))
            if new_h >= h_ob - 1e-12:
                break
            h_ob = new_h
        return max(0.0, h_ob - half)


def make_scene(env: Optional[Environment], ds: DiscretizedSegment, rules: RuleSet, width: float = 0.0,
               nodes: Optional[Sequence[Point]] = None, seg_index: int = 0, reach: float = math.inf) -> SegmentScene:
    env = env or Environment()
    if nodes is None:
        nodes = [ds.base.a, ds.base.b]
        seg_index = 0
    polys = scene_polygons(env, nodes, seg_index, rules, width, reach)
    return SegmentScene(polys, ds, (rules.d_gap + width) / 2.0)


def max_valid_height(env: Optional[Environment], ds: DiscretizedSegment, i: int, w: int, dir: int, h_request: float,
                     rules: RuleSet, width: float = 0.0, scene: Optional[SegmentScene] = None) -> float:
    """Largest DRC-clean height of the pattern with feet at points i-w and i."""
    if scene is None:
        scene = make_scene(env, ds, rules, width)
    return scene.height(i - w, i, dir, h_request)


# --------------------------------------------------------------------------- DP


@dataclass(frozen=True)
class Pattern:
    foot_left: int
    foot_right: int
    w: int
    h: float
    dir: int

    @property
    def gain(self) -> float:
        return 2.0 * self.h


@dataclass
class DpTable:
    n: int
    dp: List[List[float]]  # [i][dir index] best gain with all patterns right of nothing past i
    transit: List[List[Tuple[int, int, int, str]]]  # (i', dir', w', table of i')
    ends: List[List[float]]  # best gain with a pattern whose right foot is exactly i
    end_transit: List[List[Optional[Tuple[int, int, int, str]]]]
    heights: Dict[Tuple[int, int, int], float] = field(default_factory=dict)

    def best(self) -> Tuple[float, int]:
        v_neg, v_pos = self.dp[self.n - 1][0], self.dp[self.n - 1][1]
        return (v_pos, 1) if v_pos >= v_neg - 1e-9 else (v_neg, -1)


def _di(d: int) -> int:
    return 0 if d < 0 else 1


@dataclass(frozen=True)
class DpSpacing:
    gap: int  # steps between feet of same-direction patterns
    protect: int  # steps between feet of opposite-direction patterns
    min_w: int
    max_w: Optional[int] = None


def spacing_for(ds: DiscretizedSegment, rules: RuleSet, width: float = 0.0,
                max_width: Optional[float] = None) -> DpSpacing:
    gap = max(1, ds.steps(rules.d_gap + width))
    protect = max(1, ds.steps(rules.d_protect))
    max_w = None if max_width is None else max(gap, int(math.floor(max_width / ds.step + 1e-9)))
    return DpSpacing(gap, protect, gap, max_w)


def right_foot_ok(ds: DiscretizedSegment, sp: DpSpacing, i: int, d: int) -> bool:
    if i == ds.n - 1:
        return ds.node_ok_right[d]
    return ds.n - 1 - i >= sp.protect


def run_dp(ds: DiscretizedSegment, sp: DpSpacing, height: Callable[[int, int, int], float],
           min_height: float) -> DpTable:
    """Fill the DP table. `height(left, right, dir)` gives the pattern height for those feet."""
    n = ds.n
    dp = [[0.0, 0.0] for _ in range(n)]
    transit: List[List[Tuple[int, int, int, str]]] = [[(0, -1, 0, "dp"), (0, 1, 0, "dp")] for _ in range(n)]
    ends = [[NEG, NEG] for _ in range(n)]
    end_tr: List[List[Optional[Tuple[int, int, int, str]]]] = [[None, None] for _ in range(n)]
    heights: Dict[Tuple[int, int, int], float] = {}
    tol = 1e-9
    for i in range(1, n):
        for d in DIRS:
            di, oi = _di(d), _di(-d)
            dp[i][di] = dp[i - 1][di]
            transit[i][di] = (i - 1, d, 0, "dp")
            if not right_foot_ok(ds, sp, i, d):
                continue
            best, best_rec, best_rank = NEG, None, 9
            top = i if sp.max_w is None else min(i, sp.max_w)
            for w in range(sp.min_w, top + 1):
                j = i - w
                # predecessor candidates as (value, rank, record); lower rank wins ties
                cands = []
                if j >= 1 and ends[j][oi] > NEG:
                    cands.append((ends[j][oi], 0, (j, -d, w, "end")))
                if j == 0 and ds.node_ok_left[d]:
                    cands.append((0.0, 1, (0, d, w, "dp")))
                if j - sp.gap >= 0:
                    cands.append((dp[j - sp.gap][di], 2, (j - sp.gap, d, w, "dp")))
                if j - sp.protect >= 0:
                    cands.append((dp[j - sp.protect][oi], 2, (j - sp.protect, -d, w, "dp")))
                if not cands:
                    continue
                pv, prank, prec = cands[0]
                for v, r, rec in cands[1:]:
                    if v > pv + tol or (abs(v - pv) <= tol and r < prank):
                        pv, prank, prec = v, r, rec
                h = height(j, i, d)
                if h < min_height - 1e-9:
                    continue
                heights[(j, i, d)] = h
                val = pv + 2.0 * h
                if val > best + tol or (abs(val - best) <= tol and prank < best_rank):
                    best, best_rec, best_rank = val, prec, prank
            if best_rec is not None:
                ends[i][di] = best
                end_tr[i][di] = best_rec
                if best >= dp[i][di] - tol:
                    dp[i][di] = best
                    transit[i][di] = best_rec
    return DpTable(n, dp, transit, ends, end_tr, heights)


def restore_patterns(table: DpTable, dir_max: int) -> List[Pattern]:
    """Backtrack the transit records from the last point; patterns come out left to right."""
    out: List[Pattern] = []
    i, d, tab = table.n - 1, dir_max, "dp"
    guard = 0
    while i > 0:
        guard += 1
        if guard > 4 * table.n + 4:
            raise ExtensionError("inconsistent transit chain")
        rec = table.transit[i][_di(d)] if tab == "dp" else table.end_transit[i][_di(d)]
        if rec is None:
            raise ExtensionError(f"inconsistent transit chain at ({i}, {d})")
        pi, pd, w, ptab = rec
        if w == 0:
            if pi != i - 1 or pd != d or tab != "dp":
                raise ExtensionError(f"inconsistent transit chain at ({i}, {d})")
            i, d, tab = pi, pd, "dp"
            continue
        key = (i - w, i, d)
        if key not in table.heights:
            raise ExtensionError(f"missing pattern height at {key}")
        out.append(Pattern(i - w, i, w, table.heights[key], d))
        if pi > i - w:
            raise ExtensionError(f"inconsistent transit chain at ({i}, {d})")
        i, d, tab = pi, pd, ptab
    out.reverse()
    return out


def dp_solve(scene: SegmentScene, sp: DpSpacing, h_request: float, min_height: float) -> DpTable:
    return run_dp(scene.ds, sp, lambda j, i, d: scene.height(j, i, d, h_request), min_height)


def trim_patterns(patterns: Sequence[Pattern], need: float, min_height: float,
                  valid: Callable[[Pattern, float], bool]) -> List[Pattern]:
    """Drop or lower patterns so their total gain does not exceed `need`."""
    chosen: List[Pattern] = []
    total = 0.0
    for p in patterns:
        remaining = need - total
        if remaining <= EPS:
            break
        if p.gain <= remaining + EPS:
            chosen.append(p)
            total += p.gain
            continue
        h_new = remaining / 2.0
        if h_new >= min_height - EPS and valid(p, h_new):
            chosen.append(replace(p, h=h_new))
            total = need
            break
        # lower an earlier pattern so that this one can take at least the minimum height
        delta = min_height - h_new
        for k in range(len(chosen) - 1, -1, -1):
            q = chosen[k]
            if q.h - delta >= min_height - EPS and valid(q, q.h - delta) and valid(p, min_height):
                chosen[k] = replace(q, h=q.h - delta)
                chosen.append(replace(p, h=min_height))
                total = need
                break
        if total >= need - EPS:
            break
    chosen.sort(key=lambda p: p.foot_left)
    return chosen


def dp_extend_segment(env: Optional[Environment], ds: DiscretizedSegment, need: float, rules: RuleSet,
                      width: float = 0.0, max_width: Optional[float] = None,
                      scene: Optional[SegmentScene] = None) -> Tuple[float, List[Pattern]]:
    """Best single-pass extension of one segment, capped at `need`."""
    if need <= 0:
        return 0.0, []
    scene = scene or make_scene(env, ds, rules, width)
    sp = spacing_for(ds, rules, width, max_width)
    h_req = need / 2.0
    table = dp_solve(scene, sp, h_req, rules.d_protect)
    value, d_max = table.best()
    if value <= EPS:
        return 0.0, []
    patterns = restore_patterns(table, d_max)

    def valid(p: Pattern, h: float) -> bool:
        return scene.height(p.foot_left, p.foot_right, p.dir, h) >= h - 1e-9

    patterns = trim_patterns(patterns, need, rules.d_protect, valid)
    return sum(p.gain for p in patterns), patterns


def baseline_extend_segment(env: Optional[Environment], ds: DiscretizedSegment, need: float, rules: RuleSet,
                            width: float = 0.0, scene: Optional[SegmentScene] = None) -> Tuple[float, List[Pattern]]:
    """Fixed-track, constant-width greedy extension used as the ablation baseline.

    Patterns of the minimum width sit on tracks at a pitch of twice that
    width starting one protect distance from the chord start; each takes the
    better of the two directions.
    """
    if need <= 0:
        return 0.0, []
    scene = scene or make_scene(env, ds, rules, width)
    sp = spacing_for(ds, rules, width)
    h_req = need / 2.0
    out = []
    left = sp.protect
    while left + sp.gap <= ds.n - 1:
        right = left + sp.gap
        best = None
        for d in (1, -1):
            if not right_foot_ok(ds, sp, right, d):
                continue
            h = scene.height(left, right, d, h_req)
            if h >= rules.d_protect - 1e-9 and (best is None or h > best.h + 1e-9):
                best = Pattern(left, right, sp.gap, h, d)
        if best is not None:
            out.append(best)
        left += 2 * sp.gap

    def valid(p: Pattern, h: float) -> bool:
        return scene.height(p.foot_left, p.foot_right, p.dir, h) >= h - 1e-9

    out = trim_patterns(out, need, rules.d_protect, valid)
    return sum(p.gain for p in out), out


# --------------------------------------------------------------------------- applying patterns


def _drop_straight_nodes(nodes: List[Point], keep: Sequence[int]) -> List[Point]:
    keep = set(keep)
    out = [nodes[0]]
    for k in range(1, len(nodes) - 1):
        a, b, c = out[-1], nodes[k], nodes[k + 1]
        crs = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x)
        dot = (b.x - a.x) * (c.x - b.x) + (b.y - a.y) * (c.y - b.y)
        if k not in keep and abs(crs) <= EPS * max(1.0, dist(a, b), dist(b, c)) and dot > 0:
            continue
        out.append(b)
    out.append(nodes[-1])
    return out


def pattern_nodes(ds: DiscretizedSegment, patterns: Sequence[Pattern]) -> List[Point]:
    """Polyline from the chord start to its end detouring around every pattern."""
    seg = ds.base
    nodes: List[Point] = [seg.a]
    keep = [0]
    for p in sorted(patterns, key=lambda q: q.foot_left):
        nrm = seg.normal(p.dir)
        fl, fr = ds.points[p.foot_left], ds.points[p.foot_right]
        if dist(nodes[-1], fl) > EPS:
            nodes.append(fl)
        nodes.append(fl + nrm.scale(p.h))
        nodes.append(fr + nrm.scale(p.h))
        nodes.append(fr)
    if dist(nodes[-1], seg.b) > EPS:
        nodes.append(seg.b)
    return _drop_straight_nodes(nodes, keep)


def apply_patterns(trace: Trace, seg_index: int, patterns: Sequence[Pattern],
                   ds: DiscretizedSegment) -> Tuple[Trace, List[Tuple[Point, Point]]]:
    """Replace the chord `seg_index` of `trace` by its detoured polyline."""
    a, b = trace.nodes[seg_index], trace.nodes[seg_index + 1]
    if not patterns:
        return trace, [(a, b)]
    piece = pattern_nodes(ds, patterns)
    piece[0], piece[-1] = a, b
    nodes = list(trace.nodes[:seg_index]) + piece + list(trace.nodes[seg_index + 2:])
    new_segments = [(piece[k], piece[k + 1]) for k in range(len(piece) - 1)]
    return replace(trace, nodes=nodes), new_segments


# --------------------------------------------------------------------------- trace driver


RuleSource = Union[RuleSet, Sequence[Dra]]


def _rules_at(rules: RuleSource, p: Sequence[float]) -> RuleSet:
    if isinstance(rules, RuleSet):
        return rules
    return dra_at(rules, p).rules


def split_at_dras(nodes: Sequence[Point], dras: Sequence[Dra], min_piece: float) -> List[Point]:
    """Insert collinear nodes where segments cross DRA borders (pieces shorter than min_piece are not cut)."""
    if len(dras) < 2:
        return list(nodes)
    borders = [shapely.LineString(list(d.region.vertices) + [d.region.vertices[0]]) for d in dras]
    out = [nodes[0]]
    for a, b in zip(nodes[:-1], nodes[1:]):
        seg = Segment(a, b)
        line = shapely.LineString([a, b])
        cuts = set()
        for border in borders:
            hit = line.intersection(border)
            for g in getattr(hit, "geoms", [hit]):
                if g.is_empty:
                    continue
                for c in g.coords:
                    cuts.add(round(line.project(shapely.Point(c)), 9))
        prev = 0.0
        for s in sorted(cuts):
            if s - prev >= min_piece and seg.length - s >= min_piece:
                out.append(seg.at(s))
                prev = s
        out.append(b)
    return out


@dataclass
class MeanderConfig:
    l_disc: Optional[float] = None  # default: half the protect distance of each segment's rules
    max_width: Optional[float] = None  # widest pattern considered, in length units
    method: str = "dp"  # or "baseline"
    max_depth: Optional[int] = None  # limit on meandering meanders; 1 = original segments only


def _node_flags(nodes: Sequence[Point], k: int, ds: DiscretizedSegment):
    seg = ds.base
    for d in DIRS:
        nrm = seg.normal(d)
        if k == 0:
            ds.node_ok_left[d] = False
        else:
            prev = nodes[k - 1]
            din = Segment(prev, nodes[k]).direction
            ds.node_ok_left[d] = din.x * nrm.x + din.y * nrm.y >= -1e-9
        if k + 2 >= len(nodes):
            ds.node_ok_right[d] = False
        else:
            dout = Segment(nodes[k + 1], nodes[k + 2]).direction
            ds.node_ok_right[d] = dout.x * nrm.x + dout.y * nrm.y <= 1e-9


def meander_trace(trace: Trace, l_target: float, env: Optional[Environment], rules: RuleSource,
                  tolerance: float = 0.0, l_disc: Optional[float] = None,
                  config: Optional[MeanderConfig] = None) -> Trace:
    """Extend `trace` toward `l_target` by repeated single-segment extensions."""
    config = config or MeanderConfig()
    if l_disc is not None:
        config = replace(config, l_disc=l_disc)
    env = env or Environment()
    length = polyline_length(trace.nodes)
    if l_target - length <= tolerance + EPS:
        return trace
    original = [Point(*p) for p in trace.nodes]
    nodes = list(original)
    if not isinstance(rules, RuleSet):
        min_protect = min(d.rules.d_protect for d in rules)
        nodes = split_at_dras(nodes, rules, min_protect)
    queue = deque()
    depth: Dict[Tuple[Point, Point], int] = {}

    def seg_rules(a, b) -> RuleSet:
        return _rules_at(rules, ((a.x + b.x) / 2, (a.y + b.y) / 2))

    def worth(a, b) -> bool:
        r = seg_rules(a, b)
        step = config.l_disc or r.d_protect / 2.0
        return dist(a, b) >= max(2 * r.d_protect + step, r.d_gap + trace.width) - EPS

    for a, b in zip(nodes[:-1], nodes[1:]):
        if worth(a, b):
            queue.append((a, b))
            depth[(a, b)] = 0
    current = replace(trace, nodes=nodes)
    while queue and l_target - length > tolerance + EPS:
        a, b = queue.popleft()
        k = _find_segment(current.nodes, a, b)
        if k is None:
            continue
        r = seg_rules(a, b)
        step = config.l_disc or r.d_protect / 2.0
        seg = Segment(a, b)
        if seg.length < step - EPS:
            continue
        ds = discretize(seg, step)
        _node_flags(current.nodes, k, ds)
        need = l_target - length
        scene = make_scene(env, ds, r, trace.width, current.nodes, k, reach=need / 2.0 + r.d_gap + trace.width)
        if config.method == "baseline":
            gain, patterns = baseline_extend_segment(env, ds, need, r, trace.width, scene=scene)
        else:
            gain, patterns = dp_extend_segment(env, ds, need, r, trace.width, config.max_width, scene=scene)
        if gain <= EPS:
            continue
        current, pieces = apply_patterns(current, k, patterns, ds)
        length = polyline_length(current.nodes)
        level = depth.get((a, b), 0) + 1
        if config.max_depth is not None and level >= config.max_depth:
            continue
        for p, q in pieces:
            if worth(p, q):
                queue.append((p, q))
                depth[(p, q)] = level
    return replace(current, nodes=_drop_straight_nodes(list(current.nodes), _original_positions(current.nodes, original)))


def _find_segment(nodes: Sequence[Point], a: Point, b: Point) -> Optional[int]:
    for k in range(len(nodes) - 1):
        if nodes[k] == a and nodes[k + 1] == b:
            return k
    return None


def _original_positions(nodes: Sequence[Point], original: Sequence[Point]) -> List[int]:
    orig = set(original)
    return [k for k, p in enumerate(nodes) if p in orig]


def extension_upper_bound(trace: Trace, env: Optional[Environment], rules: RuleSource,
                          config: Optional[MeanderConfig] = None) -> Tuple[float, Trace]:
    """Relative length gain when the trace is extended as far as its space allows."""
    original = polyline_length(trace.nodes)
    out = meander_trace(trace, original * 1e6, env, rules, 0.0, config=config)
    return (polyline_length(out.nodes) - original) / original, out
