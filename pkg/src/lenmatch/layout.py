"""
Layout data model, JSON I/O, length accounting, design-rule checks and
match-group metrics.
"""

import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import LineString
from shapely.geometry import Polygon as ShapelyPolygon

from .geom import (EPS, GeometryError, INSIDE, BOUNDARY, Point, Polygon, dist, point_in_polygon,
                   polyline_length, turn_interior_angle)

SINGLE, MEDIAN = "single-ended", "median-of-pair"


class LayoutError(ValueError):
    """Schema or invariant violation in a layout document."""

    def __init__(self, entity: str, field_name: str, message: str):
        self.entity = entity
        self.field = field_name
        super().__init__(f"{entity}: {field_name}: {message}")


@dataclass(frozen=True)
class RuleSet:
    d_gap: float
    d_obs: float
    d_protect: float
    trace_width: float

    def validate(self, entity: str = "rules"):
        for name in ("d_gap", "d_obs", "d_protect", "trace_width"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise LayoutError(entity, name, f"must be a positive number, got {v!r}")
        if self.d_protect > self.d_gap:
            raise LayoutError(entity, "d_protect", "must not exceed d_gap")

    def pitch(self, width: Optional[float] = None) -> float:
        """Minimum centerline spacing between two traces of this width."""
        return self.d_gap + (self.trace_width if width is None else width)


@dataclass
class Dra:
    id: str
    region: Polygon
    rules: RuleSet


@dataclass
class Trace:
    id: str
    nodes: List[Point]
    width: float
    kind: str = SINGLE

    @property
    def length(self) -> float:
        return trace_length(self)

    def segments(self):
        for i in range(len(self.nodes) - 1):
            yield self.nodes[i], self.nodes[i + 1]


@dataclass
class DifferentialPair:
    id: str
    trace_p: Trace
    trace_n: Trace
    pair_gap: float
    breakout_p: int = 0
    breakout_n: int = 0

    @property
    def s_center(self) -> float:
        return self.pair_gap + self.trace_p.width


@dataclass
class MatchGroup:
    id: str
    members: List[str]
    l_target: float
    tolerance: float


@dataclass
class Layout:
    dras: List[Dra]
    obstacles: List[Polygon] = field(default_factory=list)
    traces: List[Trace] = field(default_factory=list)
    pairs: List[DifferentialPair] = field(default_factory=list)
    groups: List[MatchGroup] = field(default_factory=list)
    routable_areas: Optional[Dict[str, List[Polygon]]] = None
    legacy: List[dict] = field(default_factory=list)
    units: str = "nm"

    def trace(self, tid: str) -> Trace:
        for t in self.traces:
            if t.id == tid:
                return t
        raise KeyError(tid)

    def pair(self, pid: str) -> DifferentialPair:
        for p in self.pairs:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def pair_of(self, tid: str) -> Optional[DifferentialPair]:
        for p in self.pairs:
            if tid in (p.trace_p.id, p.trace_n.id):
                return p
        return None

    def member_length(self, mid: str) -> float:
        try:
            p = self.pair(mid)
        except KeyError:
            return trace_length(self.trace(mid))
        return max(trace_length(p.trace_p), trace_length(p.trace_n))

    def rules_at(self, p: Sequence[float]) -> RuleSet:
        return dra_at(self.dras, p).rules

    def area_key(self, tid: str) -> str:
        """Routable areas of paired sub-traces are stored under the pair id."""
        if self.routable_areas and tid in self.routable_areas:
            return tid
        pair = self.pair_of(tid)
        return pair.id if pair is not None else tid


def dra_at(dras: Sequence[Dra], p: Sequence[float]) -> Dra:
    """DRA containing p; ties go to the lowest id, points outside all DRAs to the nearest one."""
    hits = [d for d in dras if point_in_polygon(p, d.region) in (INSIDE, BOUNDARY)]
    if hits:
        return min(hits, key=lambda d: d.id)
    if not dras:
        raise LayoutError("layout", "dras", "at least one design-rule area is required")
    pt = shapely.Point(p)
    return min(dras, key=lambda d: (ShapelyPolygon(d.region.vertices).distance(pt), d.id))


def trace_length(trace: Trace) -> float:
    return polyline_length(trace.nodes)


# --------------------------------------------------------------------------- I/O


def _num(entity: str, name: str, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise LayoutError(entity, name, f"expected a finite number, got {v!r}")
    return float(v)


def _points(entity: str, name: str, raw) -> List[Point]:
    if not isinstance(raw, list):
        raise LayoutError(entity, name, "expected a list of [x, y] pairs")
    out = []
    for k, p in enumerate(raw):
        if not (isinstance(p, (list, tuple)) and len(p) == 2):
            raise LayoutError(entity, f"{name}[{k}]", "expected [x, y]")
        out.append(Point(_num(entity, f"{name}[{k}]", p[0]), _num(entity, f"{name}[{k}]", p[1])))
    return out


def _polygon(entity: str, name: str, raw) -> Polygon:
    pts = _points(entity, name, raw)
    try:
        return Polygon(pts)
    except GeometryError as exc:
        raise LayoutError(entity, name, str(exc)) from None


def _require(d: dict, key: str, entity: str):
    if not isinstance(d, dict):
        raise LayoutError(entity, key, "expected an object")
    if key not in d:
        raise LayoutError(entity, key, "missing")
    return d[key]


def validate_trace(t: Trace, entity: Optional[str] = None):
    entity = entity or f"trace {t.id}"
    if len(t.nodes) < 2:
        raise LayoutError(entity, "nodes", "trace needs ≥2 nodes")
    for i in range(len(t.nodes) - 1):
        if dist(t.nodes[i], t.nodes[i + 1]) <= EPS:
            raise LayoutError(entity, f"nodes[{i + 1}]", "consecutive nodes coincide")
    for i in range(1, len(t.nodes) - 1):
        if turn_interior_angle(t.nodes[i - 1], t.nodes[i], t.nodes[i + 1]) < 90.0 - 1e-6:
            raise LayoutError(entity, f"nodes[{i}]", "acute turn; turns must be right or obtuse")
    if t.width <= 0:
        raise LayoutError(entity, "width", "must be positive")


def layout_from_dict(doc: dict) -> Layout:
    if not isinstance(doc, dict):
        raise LayoutError("layout", "<root>", "expected an object")
    units = doc.get("units", "nm")
    if units != "nm":
        raise LayoutError("layout", "units", f"only 'nm' is supported, got {units!r}")

    dras = []
    for k, raw in enumerate(_require(doc, "dras", "layout")):
        ent = f"dra {raw.get('id', k) if isinstance(raw, dict) else k}"
        rr = _require(raw, "rules", ent)
        rules = RuleSet(*(_num(ent, f"rules.{n}", _require(rr, n, ent))
                          for n in ("d_gap", "d_obs", "d_protect", "trace_width")))
        rules.validate(ent)
        dras.append(Dra(str(_require(raw, "id", ent)), _polygon(ent, "polygon", _require(raw, "polygon", ent)), rules))
    if not dras:
        raise LayoutError("layout", "dras", "at least one design-rule area is required")

    obstacles = [_polygon(f"obstacle {k}", "polygon", raw) for k, raw in enumerate(doc.get("obstacles", []))]

    traces = []
    seen = set()
    for k, raw in enumerate(doc.get("traces", [])):
        ent = f"trace {raw.get('id', k) if isinstance(raw, dict) else k}"
        tid = str(_require(raw, "id", ent))
        if tid in seen:
            raise LayoutError(ent, "id", "duplicate id")
        seen.add(tid)
        t = Trace(tid, _points(ent, "nodes", _require(raw, "nodes", ent)), _num(ent, "width", _require(raw, "width", ent)),
                  raw.get("kind", SINGLE))
        validate_trace(t, ent)
        traces.append(t)
    by_id = {t.id: t for t in traces}

    pairs = []
    for k, raw in enumerate(doc.get("pairs", [])):
        ent = f"pair {raw.get('id', k) if isinstance(raw, dict) else k}"
        pid = str(_require(raw, "id", ent))
        refs = []
        for side in ("p", "n"):
            ref = str(_require(raw, side, ent))
            if ref not in by_id:
                raise LayoutError(ent, side, f"unknown trace {ref!r}")
            refs.append(by_id[ref])
        gap = _num(ent, "gap", _require(raw, "gap", ent))
        if gap <= 0:
            raise LayoutError(ent, "gap", "must be positive")
        if abs(refs[0].width - refs[1].width) > EPS:
            raise LayoutError(ent, "n", "sub-traces must share one width")
        bp, bn = int(raw.get("breakout_p", 0)), int(raw.get("breakout_n", 0))
        if not (0 <= bp < len(refs[0].nodes) and 0 <= bn < len(refs[1].nodes)):
            raise LayoutError(ent, "breakout_p", "breakout prefix leaves no nodes to match")
        pairs.append(DifferentialPair(pid, refs[0], refs[1], gap, bp, bn))
        seen.add(pid)

    groups = []
    for k, raw in enumerate(doc.get("groups", [])):
        ent = f"group {raw.get('id', k) if isinstance(raw, dict) else k}"
        members = [str(m) for m in _require(raw, "members", ent)]
        for m in members:
            if m not in seen:
                raise LayoutError(ent, "members", f"unknown member {m!r}")
        g = MatchGroup(str(_require(raw, "id", ent)), members, _num(ent, "target_length", _require(raw, "target_length", ent)),
                       _num(ent, "tolerance", raw.get("tolerance", 0.0)))
        groups.append(g)

    areas = None
    if "routable_areas" in doc and doc["routable_areas"] is not None:
        areas = {}
        for key, polys in doc["routable_areas"].items():
            areas[str(key)] = [_polygon(f"routable area {key}", f"[{k}]", p) for k, p in enumerate(polys)]

    layout = Layout(dras, obstacles, traces, pairs, groups, areas, list(doc.get("legacy_violations", [])), units)
    for g in groups:
        longest = max((layout.member_length(m) for m in g.members), default=0.0)
        if g.l_target < longest - 1e-9 * max(1.0, longest):
            raise LayoutError(f"group {g.id}", "target_length", f"below the longest member length {longest:.6g}")
    return layout


def _pts(poly) -> list:
    return [[p[0], p[1]] for p in poly]


def layout_to_dict(layout: Layout) -> dict:
    doc = {
        "units": layout.units,
        "dras": [{"id": d.id, "polygon": _pts(d.region.vertices),
                  "rules": {"d_gap": d.rules.d_gap, "d_obs": d.rules.d_obs,
                            "d_protect": d.rules.d_protect, "trace_width": d.rules.trace_width}}
                 for d in layout.dras],
        "obstacles": [_pts(o.vertices) for o in layout.obstacles],
        "traces": [],
        "pairs": [{"id": p.id, "p": p.trace_p.id, "n": p.trace_n.id, "gap": p.pair_gap,
                   "breakout_p": p.breakout_p, "breakout_n": p.breakout_n} for p in layout.pairs],
        "groups": [{"id": g.id, "members": list(g.members), "target_length": g.l_target, "tolerance": g.tolerance}
                   for g in layout.groups],
    }
    for t in layout.traces:
        entry = {"id": t.id, "width": t.width, "nodes": _pts(t.nodes)}
        if t.kind != SINGLE:
            entry["kind"] = t.kind
        doc["traces"].append(entry)
    if layout.routable_areas is not None:
        doc["routable_areas"] = {k: [_pts(p.vertices) for p in v] for k, v in sorted(layout.routable_areas.items())}
    if layout.legacy:
        doc["legacy_violations"] = layout.legacy
    return doc


def dumps_layout(layout: Layout) -> str:
    """Line-oriented JSON: one entity per line, stable key order."""
    doc = layout_to_dict(layout)
    lines = ["{"]
    keys = list(doc)
    for ki, key in enumerate(keys):
        val = doc[key]
        tail = "," if ki < len(keys) - 1 else ""
        if isinstance(val, list) and val:
            lines.append(f"  {json.dumps(key)}: [")
            for i, item in enumerate(val):
                sep = "," if i < len(val) - 1 else ""
                lines.append("    " + json.dumps(item) + sep)
            lines.append("  ]" + tail)
        elif isinstance(val, dict) and val:
            lines.append(f"  {json.dumps(key)}: {{")
            items = list(val.items())
            for i, (k, v) in enumerate(items):
                sep = "," if i < len(items) - 1 else ""
                lines.append(f"    {json.dumps(k)}: {json.dumps(v)}{sep}")
            lines.append("  }" + tail)
        else:
            lines.append(f"  {json.dumps(key)}: {json.dumps(val)}{tail}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def load_layout(path) -> Layout:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LayoutError("layout", "<json>", str(exc)) from None
    return layout_from_dict(doc)


def save_layout(layout: Layout, path) -> None:
    text = dumps_layout(layout)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# --------------------------------------------------------------------------- DRC


@dataclass(frozen=True)
class Violation:
    rule: str  # d_gap | pair_gap | d_obs | d_protect | area
    entities: Tuple[str, ...]
    segments: Tuple[Tuple[Tuple[float, float], Tuple[float, float]], ...]
    measured: float
    required: float

    def describe(self) -> str:
        segs = " ".join(f"({a[0]:.6g},{a[1]:.6g})-({b[0]:.6g},{b[1]:.6g})" for a, b in self.segments)
        return f"{self.rule}: {' / '.join(self.entities)} measured {self.measured:.6g} < required {self.required:.6g} at {segs}"

    def to_dict(self) -> dict:
        return {"rule": self.rule, "entities": list(self.entities),
                "segments": [[list(a), list(b)] for a, b in self.segments],
                "measured": self.measured, "required": self.required}

    @classmethod
    def from_dict(cls, d: dict) -> "Violation":
        return cls(d["rule"], tuple(d["entities"]),
                   tuple((tuple(a), tuple(b)) for a, b in d["segments"]), d["measured"], d["required"])


# same-trace pairs closer than this multiple of the pitch along the trace are not checked
_ARC_EXEMPT = math.sqrt(2.0)


def _trim(a, b, start: float, end: float):
    """Sub-segment of a-b with `start` cut from a and `end` cut from b, or None."""
    length = dist(a, b)
    if start + end >= length - EPS:
        return None
    ux, uy = (b[0] - a[0]) / length, (b[1] - a[1]) / length
    return ((a[0] + ux * start, a[1] + uy * start), (b[0] - ux * end, b[1] - uy * end))


def _seg_dist(s1, s2) -> float:
    if s1 is None or s2 is None:
        return math.inf
    return LineString(s1).distance(LineString(s2))


@dataclass
class _Seg:
    trace: str
    index: int
    a: Tuple[float, float]
    b: Tuple[float, float]
    width: float
    rules: RuleSet
    arc0: float  # arc length of a along the trace


def _collect_segments(layout: Layout) -> List[_Seg]:
    segs = []
    for t in layout.traces:
        arc = 0.0
        for i, (a, b) in enumerate(t.segments()):
            mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
            segs.append(_Seg(t.id, i, tuple(a), tuple(b), t.width, layout.rules_at(mid), arc))
            arc += dist(a, b)
    return segs


def drc_check(layout: Layout) -> List[Violation]:
    """All design-rule violations, measured edge to edge."""
    segs = _collect_segments(layout)
    out: List[Violation] = []
    if not segs:
        return out
    lines = [LineString([s.a, s.b]) for s in segs]
    tree = shapely.STRtree(lines)
    max_reach = max(s.rules.d_gap + s.width for s in segs) + EPS
    pair_partner = {}
    for p in layout.pairs:
        pair_partner[(p.trace_p.id, p.trace_n.id)] = p.pair_gap
        pair_partner[(p.trace_n.id, p.trace_p.id)] = p.pair_gap

    left, right = tree.query(lines, predicate="dwithin", distance=max_reach)
    for i, j in zip(left.tolist(), right.tolist()):
        if j <= i:
            continue
        s1, s2 = segs[i], segs[j]
        half = (s1.width + s2.width) / 2.0
        if s1.trace == s2.trace:
            if abs(s1.index - s2.index) <= 1:
                continue
            first, second = (s1, s2) if s1.index < s2.index else (s2, s1)
            required = max(first.rules.d_gap, second.rules.d_gap)
            pitch = required + half
            gap_arc = second.arc0 - (first.arc0 + dist(first.a, first.b))
            exempt = _ARC_EXEMPT * pitch - gap_arc
            if exempt > 0:
                centre = min(_seg_dist(_trim(first.a, first.b, 0.0, exempt), (second.a, second.b)),
                             _seg_dist((first.a, first.b), _trim(second.a, second.b, exempt, 0.0)))
            else:
                centre = lines[i].distance(lines[j])
            rule = "d_gap"
        else:
            centre = lines[i].distance(lines[j])
            key = (s1.trace, s2.trace)
            if key in pair_partner:
                required, rule = pair_partner[key], "pair_gap"
            else:
                required, rule = max(s1.rules.d_gap, s2.rules.d_gap), "d_gap"
        measured = centre - half
        if measured < required - EPS:
            ents = (s1.trace, s2.trace) if s1.trace != s2.trace else (s1.trace,)
            out.append(Violation(rule, ents, ((s1.a, s1.b), (s2.a, s2.b)), measured, required))

    if layout.obstacles:
        obs = [ShapelyPolygon(o.vertices) for o in layout.obstacles]
        otree = shapely.STRtree(obs)
        max_obs = max(s.rules.d_obs + s.width / 2 for s in segs) + EPS
        left, right = otree.query(lines, predicate="dwithin", distance=max_obs)
        for i, k in zip(left.tolist(), right.tolist()):
            s = segs[i]
            measured = lines[i].distance(obs[k]) - s.width / 2
            if measured < s.rules.d_obs - EPS:
                out.append(Violation("d_obs", (s.trace, f"obstacle {k}"), ((s.a, s.b),), measured, s.rules.d_obs))

    for s in segs:
        length = dist(s.a, s.b)
        if length < s.rules.d_protect - EPS:
            out.append(Violation("d_protect", (s.trace,), ((s.a, s.b),), length, s.rules.d_protect))

    if layout.routable_areas:
        unions = {k: shapely.unary_union([ShapelyPolygon(p.vertices) for p in v]).buffer(10 * EPS, join_style="mitre")
                  for k, v in layout.routable_areas.items()}
        for i, s in enumerate(segs):
            key = layout.area_key(s.trace)
            if key not in unions:
                continue
            if not unions[key].covers(lines[i]):
                outside = lines[i].difference(unions[key]).length
                out.append(Violation("area", (s.trace,), ((s.a, s.b),), -outside, 0.0))
    out.sort(key=lambda v: (v.rule, v.entities, v.segments))
    return out


def _contained(inner, outer) -> bool:
    a, b = outer
    seg_len = dist(a, b)
    for p in inner:
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        if abs(cross) / seg_len > 1e-4:
            return False
        t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / seg_len
        if t < -1e-4 or t > seg_len + 1e-4:
            return False
    return True


def is_legacy(v: Violation, legacy: Iterable[Violation]) -> bool:
    """A violation is legacy when a recorded one has the same rule and entities and covers its segments."""
    for u in legacy:
        if u.rule != v.rule or set(u.entities) != set(v.entities):
            continue
        if all(any(_contained(s, t) for t in u.segments) for s in v.segments):
            return True
    return False


def new_violations(layout: Layout, legacy: Optional[Iterable[Violation]] = None) -> List[Violation]:
    if legacy is None:
        legacy = [Violation.from_dict(d) for d in layout.legacy]
    legacy = list(legacy)
    return [v for v in drc_check(layout) if not is_legacy(v, legacy)]


# --------------------------------------------------------------------------- metrics


class MetricError(ValueError):
    pass


def group_metrics(group: MatchGroup, layout: Layout) -> Tuple[float, float]:
    """(max error, average error) as fractions of the target length."""
    target = group.l_target
    errors = []
    for m in group.members:
        length = layout.member_length(m)
        if length > target * (1 + 1e-9) + EPS:
            raise MetricError(f"member {m} is longer than the target ({length:.9g} > {target:.9g})")
        errors.append(max(0.0, (target - length) / target))
    if not errors:
        return 0.0, 0.0
    return max(errors), sum(errors) / len(errors)


def extension_ratio(l_extended: float, l_original: float) -> float:
    if l_original <= 0:
        raise MetricError("original length must be positive")
    return (l_extended - l_original) / l_original
