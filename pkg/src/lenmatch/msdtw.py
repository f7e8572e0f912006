"""
Differential pairs as median traces.

Nodes of the two sub-traces are aligned with dynamic time warping, repeated
over ascending distance rules so that tiny skew-compensation patterns and
nodes from other design-rule areas never pull the alignment off. Connected
matches collapse into one median node each; after tuning, the median is
offset back into two sub-traces.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .geom import EPS, Point, Segment, dist, polyline_length
from .layout import MEDIAN, DifferentialPair, RuleSet, Trace

SQRT2 = math.sqrt(2.0)


class PairError(ValueError):
    pass


@dataclass(frozen=True)
class MatchedPair:
    p_index: int
    n_index: int
    cost: float


@dataclass
class DtwTable:
    C: List[List[float]]  # (I+1) x (J+1), row/column 0 are the virtual start
    back: List[List[Optional[Tuple[int, int]]]]


def dtw_table(nodes_p: Sequence[Sequence[float]], nodes_n: Sequence[Sequence[float]]) -> DtwTable:
    if not nodes_p or not nodes_n:
        raise PairError("dtw needs non-empty node lists")
    I, J = len(nodes_p), len(nodes_n)
    inf = math.inf
    C = [[inf] * (J + 1) for _ in range(I + 1)]
    back: List[List[Optional[Tuple[int, int]]]] = [[None] * (J + 1) for _ in range(I + 1)]
    C[0][0] = 0.0
    for i in range(1, I + 1):
        for j in range(1, J + 1):
            # diagonal first so that ties keep one-to-one matches
            best, arg = C[i - 1][j - 1], (i - 1, j - 1)
            if C[i - 1][j] < best:
                best, arg = C[i - 1][j], (i - 1, j)
            if C[i][j - 1] < best:
                best, arg = C[i][j - 1], (i, j - 1)
            C[i][j] = best + dist(nodes_p[i - 1], nodes_n[j - 1])
            back[i][j] = arg
    return DtwTable(C, back)


def dtw_match(nodes_p: Sequence[Sequence[float]], nodes_n: Sequence[Sequence[float]]) -> List[MatchedPair]:
    """Optimal monotone alignment; indices are positions in the given lists."""
    table = dtw_table(nodes_p, nodes_n)
    i, j = len(nodes_p), len(nodes_n)
    out = []
    while i > 0 and j > 0:
        out.append(MatchedPair(i - 1, j - 1, dist(nodes_p[i - 1], nodes_n[j - 1])))
        i, j = table.back[i][j]
    out.reverse()
    return out


def filter_unpaired(pairs: Sequence[MatchedPair], r: float) -> Tuple[List[MatchedPair], List[MatchedPair]]:
    if r <= 0:
        raise PairError("distance rule must be positive")
    bound = SQRT2 * r
    kept = [p for p in pairs if p.cost <= bound + EPS]
    dropped = [p for p in pairs if p.cost > bound + EPS]
    return kept, dropped


@dataclass
class SubPair:
    p: List[int]  # node indices on trace P
    n: List[int]


@dataclass
class MatchSet:
    pairs: List[MatchedPair]
    components: List[Tuple[List[int], List[int]]] = field(default_factory=list)
    rounds: List[List[SubPair]] = field(default_factory=list)  # sub-pairs present at the start of each round

    def paired_p(self) -> set:
        return {m.p_index for m in self.pairs}

    def paired_n(self) -> set:
        return {m.n_index for m in self.pairs}


def _split(sub: SubPair, kept: Sequence[MatchedPair]) -> List[SubPair]:
    """Unmatched stretches of `sub` between consecutive kept matches."""
    out = []
    bounds = [(-math.inf, -math.inf)] + [(m.p_index, m.n_index) for m in kept] + [(math.inf, math.inf)]
    for (p0, n0), (p1, n1) in zip(bounds[:-1], bounds[1:]):
        ps = [i for i in sub.p if p0 < i < p1]
        ns = [j for j in sub.n if n0 < j < n1]
        if ps and ns:
            out.append(SubPair(ps, ns))
    return out


def _components(pairs: Sequence[MatchedPair]) -> List[Tuple[List[int], List[int]]]:
    parent: Dict[Tuple[str, int], Tuple[str, int]] = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for m in pairs:
        for key in (("p", m.p_index), ("n", m.n_index)):
            parent.setdefault(key, key)
        ra, rb = find(("p", m.p_index)), find(("n", m.n_index))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: Dict[Tuple[str, int], Tuple[List[int], List[int]]] = {}
    for key in sorted(parent):
        root = find(key)
        ps, ns = groups.setdefault(root, ([], []))
        (ps if key[0] == "p" else ns).append(key[1])
    comps = [(sorted(ps), sorted(ns)) for ps, ns in groups.values()]
    comps.sort(key=lambda c: (c[0][0], c[1][0]))
    return comps


def msdtw(pair: DifferentialPair, rules: Sequence[float]) -> MatchSet:
    """Match the pair's nodes round by round over ascending distance rules."""
    if not rules:
        raise PairError("at least one distance rule is required")
    rules = sorted(rules)
    P, N = pair.trace_p.nodes, pair.trace_n.nodes
    start_p, start_n = max(0, pair.breakout_p - 1), max(0, pair.breakout_n - 1)
    subs = [SubPair(list(range(start_p, len(P))), list(range(start_n, len(N))))]
    found: List[MatchedPair] = []
    rounds = []
    for r in rules:
        rounds.append([SubPair(list(s.p), list(s.n)) for s in subs])
        nxt = []
        for sub in subs:
            local = dtw_match([P[i] for i in sub.p], [N[j] for j in sub.n])
            glob = [MatchedPair(sub.p[m.p_index], sub.n[m.n_index], m.cost) for m in local]
            kept, _ = filter_unpaired(glob, r)
            if not kept:
                nxt.append(sub)
                continue
            found.extend(kept)
            nxt.extend(_split(sub, kept))
        subs = nxt
    found.sort(key=lambda m: (m.p_index, m.n_index))
    return MatchSet(found, _components(found), rounds)


def median_point(ps: Sequence[Sequence[float]], ns: Sequence[Sequence[float]]) -> Point:
    mp = (sum(p[0] for p in ps) / len(ps), sum(p[1] for p in ps) / len(ps))
    mn = (sum(p[0] for p in ns) / len(ns), sum(p[1] for p in ns) / len(ns))
    return Point((mp[0] + mn[0]) / 2.0, (mp[1] + mn[1]) / 2.0)


def virtual_rules(rules: RuleSet, s_center: float) -> RuleSet:
    """Rules for the median centerline so that the restored sub-traces meet `rules`.

    Two median segments one pitch apart leave d_gap + width between the
    nearest sub-traces; an obstacle keeps d_obs from the outer sub-trace;
    segments of the inner sub-trace are shorter than the median's by up to
    s_center, so the protect length grows by that much.
    """
    return RuleSet(rules.d_gap + s_center, rules.d_obs + s_center / 2.0, rules.d_protect + s_center,
                   rules.trace_width)


@dataclass
class MedianTrace:
    trace: Trace
    pair: DifferentialPair
    match_set: MatchSet
    side_p: int  # +1 when trace P lies left of the median
    offset_delta: Tuple[float, float]  # restored minus median length for P and N before tuning


def merge_to_median(pair: DifferentialPair, match_set: MatchSet) -> MedianTrace:
    if not match_set.pairs:
        raise PairError(f"pair {pair.id}: no matched nodes, sub-traces too decoupled to merge")
    P, N = pair.trace_p.nodes, pair.trace_n.nodes
    comps = match_set.components or _components(match_set.pairs)
    nodes = [median_point([P[i] for i in ps], [N[j] for j in ns]) for ps, ns in comps]
    cleaned = [nodes[0]]
    for p in nodes[1:]:
        if dist(p, cleaned[-1]) > EPS:
            cleaned.append(p)
    if len(cleaned) < 2:
        raise PairError(f"pair {pair.id}: median collapses to a point")
    median = Trace(pair.id, cleaned, pair.trace_p.width, MEDIAN)
    ps0, _ = comps[0]
    seg = Segment(cleaned[0], cleaned[1])
    nrm = seg.normal(1)
    rel = P[ps0[0]] - cleaned[0]
    side = 1 if rel.x * nrm.x + rel.y * nrm.y >= 0 else -1
    out = MedianTrace(median, pair, match_set, side, (0.0, 0.0))
    rp, rn = _offset_both(out, cleaned)
    base = polyline_length(cleaned)
    out.offset_delta = (polyline_length(rp) - base, polyline_length(rn) - base)
    return out


def offset_polyline(nodes: Sequence[Point], d: float) -> List[Point]:
    """Mitered offset by signed distance d (positive = left)."""
    out = []
    n = len(nodes)
    for k in range(n):
        if k == 0:
            nrm = Segment(nodes[0], nodes[1]).normal(1)
            out.append(nodes[0] + nrm.scale(d))
            continue
        if k == n - 1:
            nrm = Segment(nodes[-2], nodes[-1]).normal(1)
            out.append(nodes[-1] + nrm.scale(d))
            continue
        n1 = Segment(nodes[k - 1], nodes[k]).normal(1)
        n2 = Segment(nodes[k], nodes[k + 1]).normal(1)
        bis = Point(n1.x + n2.x, n1.y + n2.y)
        cosh = (bis.x * n1.x + bis.y * n1.y)  # = 1 + cos(turn)
        if cosh <= 1e-9:
            raise PairError(f"offset reverses at corner {k} {tuple(nodes[k])}")
        k_scale = d / cosh
        out.append(nodes[k] + bis.scale(k_scale))
    return out


def _offset_both(median: MedianTrace, nodes: Sequence[Point]) -> Tuple[List[Point], List[Point]]:
    half = median.pair.s_center / 2.0
    return offset_polyline(nodes, half * median.side_p), offset_polyline(nodes, -half * median.side_p)


def _check_offset(orig: Sequence[Point], off: Sequence[Point], name: str):
    for k in range(len(orig) - 1):
        a, b = orig[k + 1] - orig[k], off[k + 1] - off[k]
        if a.x * b.x + a.y * b.y <= EPS:
            raise PairError(f"offset of {name} folds over at corner {k + 1} {tuple(orig[k + 1])}")


def _stitch(prefix: Sequence[Point], body: List[Point]) -> List[Point]:
    out = list(prefix[:-1]) if prefix else []
    for p in body:
        if not out or dist(out[-1], p) > EPS:
            out.append(p)
    return out


def tiny_pattern(nodes: Sequence[Point], delta: float, width: float, away: int,
                 accept: Optional[Callable[[List[Point]], bool]] = None) -> Optional[List[Point]]:
    """Add one rectangular detour of total gain `delta` on the longest usable straight span.

    `away` is the side (+1 left, -1 right) the detour bulges to.
    """
    h = delta / 2.0
    spans = sorted(range(len(nodes) - 1), key=lambda k: (-dist(nodes[k], nodes[k + 1]), k))
    for k in spans:
        a, b = nodes[k], nodes[k + 1]
        length = dist(a, b)
        if length < width + 2 * width - EPS:
            break
        seg = Segment(a, b)
        nrm = seg.normal(away)
        s0 = (length - width) / 2.0
        f1, f2 = seg.at(s0), seg.at(s0 + width)
        new = list(nodes[:k + 1]) + [f1, f1 + nrm.scale(h), f2 + nrm.scale(h), f2] + list(nodes[k + 1:])
        if accept is None or accept(new):
            return new
    return None


def restore_pair(median: MedianTrace, tuned: Trace, rules: Optional[RuleSet] = None,
                 skew_tolerance: Optional[float] = None,
                 accept: Optional[Callable[[str, List[Point]], bool]] = None) -> DifferentialPair:
    """Offset the tuned median back into two sub-traces and rebalance their lengths."""
    pair = median.pair
    rp, rn = _offset_both(median, tuned.nodes)
    _check_offset(tuned.nodes, rp, pair.trace_p.id)
    _check_offset(tuned.nodes, rn, pair.trace_n.id)
    P, N = pair.trace_p.nodes, pair.trace_n.nodes
    new_p = _stitch(P[:pair.breakout_p], rp)
    new_n = _stitch(N[:pair.breakout_n], rn)
    protect = rules.d_protect if rules is not None else 0.0
    tol = protect if skew_tolerance is None else skew_tolerance
    lp, ln = polyline_length(new_p), polyline_length(new_n)
    delta = abs(lp - ln)
    if delta > tol + EPS and delta / 2.0 >= protect - EPS and protect > 0:
        shorter_p = lp < ln
        nodes = new_p if shorter_p else new_n
        # bulge away from the partner
        away = median.side_p if shorter_p else -median.side_p
        check = None
        if accept is not None:
            tid = pair.trace_p.id if shorter_p else pair.trace_n.id
            check = lambda ns: accept(tid, ns)  # noqa: E731
        fixed = tiny_pattern(nodes, delta, protect, away, check)
        if fixed is not None:
            if shorter_p:
                new_p = fixed
            else:
                new_n = fixed
    tp = replace(pair.trace_p, nodes=new_p)
    tn = replace(pair.trace_n, nodes=new_n)
    return replace(pair, trace_p=tp, trace_n=tn)
