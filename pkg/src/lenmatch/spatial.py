"""
Static segment tree over polygon node points for orthogonal range queries.

Leaves are abscissa ranks; each tree node keeps the ordinates of the points
in its rank interval, sorted, so a query is a canonical cover of the x range
followed by one binary search per covering node.
"""

import bisect
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geom import Point


@dataclass
class PointIndex:
    points: np.ndarray  # (N, 2) in insertion order
    owners: np.ndarray  # (N,) polygon id per point
    vertex_ids: np.ndarray  # (N,) vertex position inside its polygon
    xs_sorted: List[float] = field(default_factory=list)
    size: int = 1  # number of leaves, a power of two
    node_ys: List[Optional[np.ndarray]] = field(default_factory=list)
    node_ids: List[Optional[np.ndarray]] = field(default_factory=list)
    visited: int = 0  # tree nodes scanned by the last query

    def __len__(self):
        return len(self.points)

    @property
    def stored_entries(self) -> int:
        return sum(len(a) for a in self.node_ids if a is not None)

    def entry(self, k: int) -> Tuple[Point, int, int]:
        return Point(*self.points[k]), int(self.owners[k]), int(self.vertex_ids[k])


def build_index(points: Sequence[Tuple[Sequence[float], int]], vertex_ids: Optional[Sequence[int]] = None) -> PointIndex:
    """Index (point, polygon-id) pairs. Vertex ids default to running counters per polygon."""
    n = len(points)
    pts = np.array([p for p, _ in points], dtype=float).reshape(n, 2)
    owners = np.array([o for _, o in points], dtype=np.int64)
    if vertex_ids is None:
        counters = {}
        vids = []
        for o in owners.tolist():
            vids.append(counters.get(o, 0))
            counters[o] = vids[-1] + 1
        vertex_ids = vids
    idx = PointIndex(pts, owners, np.asarray(vertex_ids, dtype=np.int64))
    if n == 0:
        return idx

    order = np.lexsort((pts[:, 1], pts[:, 0]))
    idx.xs_sorted = pts[order, 0].tolist()
    size = 1 << max(0, math.ceil(math.log2(n)))
    idx.size = size
    node_ys: List[Optional[np.ndarray]] = [None] * (2 * size)
    node_ids: List[Optional[np.ndarray]] = [None] * (2 * size)
    for rank, k in enumerate(order.tolist()):
        node_ids[size + rank] = np.array([k], dtype=np.int64)
        node_ys[size + rank] = pts[k:k + 1, 1].copy()
    for v in range(size - 1, 0, -1):
        parts = [node_ids[c] for c in (2 * v, 2 * v + 1) if node_ids[c] is not None]
        if not parts:
            continue
        ids = np.concatenate(parts)
        ys = pts[ids, 1]
        srt = np.argsort(ys, kind="stable")
        node_ids[v] = ids[srt]
        node_ys[v] = ys[srt]
    idx.node_ys = node_ys
    idx.node_ids = node_ids
    return idx


def query_ids(idx: PointIndex, x_range: Tuple[float, float], y_range: Tuple[float, float]) -> np.ndarray:
    """Entry numbers of all points inside the closed rectangle."""
    idx.visited = 0
    if len(idx.points) == 0:
        return np.empty(0, dtype=np.int64)
    lo = bisect.bisect_left(idx.xs_sorted, x_range[0])
    hi = bisect.bisect_right(idx.xs_sorted, x_range[1])
    if lo >= hi:
        return np.empty(0, dtype=np.int64)
    y0, y1 = y_range
    found = []
    l, r = lo + idx.size, hi + idx.size
    while l < r:
        if l & 1:
            found.append(_scan(idx, l, y0, y1))
            l += 1
        if r & 1:
            r -= 1
            found.append(_scan(idx, r, y0, y1))
        l >>= 1
        r >>= 1
    found = [f for f in found if len(f)]
    if not found:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(found)


def _scan(idx: PointIndex, v: int, y0: float, y1: float) -> np.ndarray:
    idx.visited += 1
    ys = idx.node_ys[v]
    if ys is None:
        return np.empty(0, dtype=np.int64)
    a = np.searchsorted(ys, y0, side="left")
    b = np.searchsorted(ys, y1, side="right")
    return idx.node_ids[v][a:b]


def range_query(idx: PointIndex, x_range: Tuple[float, float], y_range: Tuple[float, float]) -> List[Tuple[Point, int, int]]:
    ids = query_ids(idx, x_range, y_range)
    return [idx.entry(k) for k in sorted(ids.tolist())]
