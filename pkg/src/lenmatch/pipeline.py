"""
Group tuning: merge pairs, meander every member to its group target, restore pairs.

Each member is tuned against the immutable input layout only, so members can
run on a thread pool and still give identical results.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import shapely
from shapely.geometry import LineString, Polygon as ShapelyPolygon

from .assign import Infeasible, assign_layout
from .extend import Environment, MeanderConfig, meander_trace
from .geom import EPS, Point, polyline_length
from .layout import (Dra, Layout, Trace, Violation, drc_check, group_metrics, is_legacy,
                     trace_length)
from .msdtw import MedianTrace, merge_to_median, msdtw, restore_pair, virtual_rules

log = logging.getLogger(__name__)


@dataclass
class TuneConfig:
    l_disc: Optional[float] = None
    tolerance: Optional[float] = None  # overrides every group's tolerance
    threads: int = 1
    max_width: Optional[float] = None  # widest pattern in length units
    max_width_pitches: float = 8.0  # used when max_width is unset


@dataclass
class MemberResult:
    member: str
    traces: List[Trace]
    residual: float
    reverted: bool = False


@dataclass
class TuneReport:
    metrics: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    residuals: Dict[str, float] = field(default_factory=dict)
    reverted: List[str] = field(default_factory=list)

    def within_tolerance(self, layout: Layout, tolerance: Optional[float] = None) -> bool:
        for g in layout.groups:
            tol = g.tolerance if tolerance is None else tolerance
            for m in g.members:
                if self.residuals.get(m, 0.0) > tol + 1e-6:
                    return False
        return True


def _area_polys(layout: Layout, key: str):
    if not layout.routable_areas or key not in layout.routable_areas:
        return None
    return layout.routable_areas[key]


def _foreign(layout: Layout, skip: set, area) -> List[Tuple[List[Point], float]]:
    """Other traces close enough to the member's area to matter."""
    if area:
        zone = shapely.unary_union([ShapelyPolygon(p.vertices) for p in area])
    else:
        zone = None
    out = []
    for t in layout.traces:
        if t.id in skip:
            continue
        if zone is not None:
            reach = max(d.rules.d_gap for d in layout.dras) + 2 * t.width + 1.0
            if LineString(t.nodes).distance(zone) > reach:
                continue
        out.append((list(t.nodes), t.width))
    return out


def _max_width(layout: Layout, width: float, cfg: TuneConfig, extra: float = 0.0) -> Optional[float]:
    if cfg.max_width is not None:
        return cfg.max_width
    pitch = max(d.rules.d_gap for d in layout.dras) + width + extra
    return cfg.max_width_pitches * pitch


def _violations_of(layout: Layout, ids: set, legacy) -> List[Violation]:
    return [v for v in drc_check(layout) if set(v.entities) & ids and not is_legacy(v, legacy)]


def tune_single(layout: Layout, tid: str, target: float, tol: float, cfg: TuneConfig) -> MemberResult:
    t = layout.trace(tid)
    area = _area_polys(layout, layout.area_key(tid))
    env = Environment.build(area=area, obstacles=layout.obstacles, foreign=_foreign(layout, {tid}, area))
    mc = MeanderConfig(l_disc=cfg.l_disc, max_width=_max_width(layout, t.width, cfg))
    out = meander_trace(t, target, env, layout.dras, tol, config=mc)
    return MemberResult(tid, [out], target - trace_length(out))


def tune_pair(layout: Layout, pid: str, target: float, tol: float, cfg: TuneConfig) -> MemberResult:
    pair = layout.pair(pid)
    s = pair.s_center
    ms = msdtw(pair, [s])
    median: MedianTrace = merge_to_median(pair, ms)
    area = _area_polys(layout, layout.area_key(pid))
    env = Environment.build(area=area, obstacles=layout.obstacles,
                            foreign=_foreign(layout, {pair.trace_p.id, pair.trace_n.id}, area))
    vdras = [Dra(d.id, d.region, virtual_rules(d.rules, s)) for d in layout.dras]
    prefix = max(polyline_length(pair.trace_p.nodes[:pair.breakout_p]),
                 polyline_length(pair.trace_n.nodes[:pair.breakout_n]))
    lead = max(median.offset_delta) + prefix
    m_target = target - lead
    mc = MeanderConfig(l_disc=cfg.l_disc, max_width=_max_width(layout, pair.trace_p.width, cfg, s))
    tuned = meander_trace(median.trace, max(m_target, trace_length(median.trace)), env, vdras, tol, config=mc)

    others = [o for o in layout.traces if o.id not in (pair.trace_p.id, pair.trace_n.id)]

    def accept(tid: str, nodes: List[Point]) -> bool:
        trial_p = replace(pair.trace_p, nodes=nodes) if tid == pair.trace_p.id else pair.trace_p
        trial_n = replace(pair.trace_n, nodes=nodes) if tid == pair.trace_n.id else pair.trace_n
        trial = replace(layout, traces=others + [trial_p, trial_n],
                        pairs=[replace(pair, trace_p=trial_p, trace_n=trial_n)])
        return not [v for v in drc_check(trial) if tid in v.entities and v.rule != "area"] and _inside(trial, tid)

    restored = restore_pair(median, tuned, layout.rules_at(pair.trace_p.nodes[0]), accept=accept)
    longest = max(trace_length(restored.trace_p), trace_length(restored.trace_n))
    return MemberResult(pid, [restored.trace_p, restored.trace_n], target - longest)


def _inside(layout: Layout, tid: str) -> bool:
    polys = _area_polys(layout, layout.area_key(tid))
    if not polys:
        return True
    zone = shapely.unary_union([ShapelyPolygon(p.vertices) for p in polys]).buffer(1e-6)
    return zone.covers(LineString(layout.trace(tid).nodes))


def _jobs(layout: Layout, cfg: TuneConfig) -> List[Tuple[str, float, float]]:
    jobs = {}
    for g in layout.groups:
        tol = g.tolerance if cfg.tolerance is None else cfg.tolerance
        for m in g.members:
            jobs[m] = (g.l_target, tol)
    return [(m, *jobs[m]) for m in sorted(jobs)]


def _is_pair(layout: Layout, member: str) -> bool:
    return any(p.id == member for p in layout.pairs)


def tune_layout(layout: Layout, cfg: Optional[TuneConfig] = None) -> Tuple[Layout, TuneReport]:
    """Tune every group member. The input layout is not modified."""
    cfg = cfg or TuneConfig()
    if layout.routable_areas is None:
        areas = assign_layout(layout)
        if isinstance(areas, Infeasible):
            raise InfeasibleError(areas)
        layout = replace(layout, routable_areas=areas)
    legacy_now = [v.to_dict() for v in drc_check(layout)]
    legacy = list(layout.legacy) + [v for v in legacy_now if v not in layout.legacy]
    layout = replace(layout, legacy=legacy)
    legacy_v = [Violation.from_dict(d) for d in legacy]

    def work(job):
        member, target, tol = job
        if layout.member_length(member) >= target - tol - EPS:
            traces = ([layout.pair(member).trace_p, layout.pair(member).trace_n] if _is_pair(layout, member)
                      else [layout.trace(member)])
            return MemberResult(member, traces, target - layout.member_length(member))
        if _is_pair(layout, member):
            return tune_pair(layout, member, target, tol, cfg)
        return tune_single(layout, member, target, tol, cfg)

    jobs = _jobs(layout, cfg)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    report = TuneReport()
    by_id = {t.id: t for t in layout.traces}
    for res in sorted(results, key=lambda r: r.member):
        ids = {t.id for t in res.traces}
        trial_map = dict(by_id)
        for t in res.traces:
            trial_map[t.id] = t
        trial = _rebuild(layout, trial_map)
        if _violations_of(trial, ids, legacy_v):
            log.warning("member %s: tuned geometry failed the rule check, keeping original routing", res.member)
            report.reverted.append(res.member)
            res = replace(res, residual=_target_of(layout, res.member) - layout.member_length(res.member))
        else:
            by_id = trial_map
        report.residuals[res.member] = res.residual
    out = _rebuild(layout, by_id)
    for g in out.groups:
        report.metrics[g.id] = group_metrics(g, out)
    return out, report


def _target_of(layout: Layout, member: str) -> float:
    for g in layout.groups:
        if member in g.members:
            return g.l_target
    return layout.member_length(member)


def _rebuild(layout: Layout, by_id: Dict[str, Trace]) -> Layout:
    traces = [by_id[t.id] for t in layout.traces]
    pairs = [replace(p, trace_p=by_id[p.trace_p.id], trace_n=by_id[p.trace_n.id]) for p in layout.pairs]
    return replace(layout, traces=traces, pairs=pairs)


class InfeasibleError(RuntimeError):
    def __init__(self, certificate: Infeasible):
        self.certificate = certificate
        super().__init__(certificate.report())
