import random
from fractions import Fraction

import pytest
from shapely.geometry import Polygon as SPoly

from lenmatch.assign import (Assignment, Demand, Infeasible, Region, assign_layout, build_regions,
                             carve_routable_areas, corridor, solve_assignment)
from lenmatch.geom import Point, Polygon
from lenmatch.layout import Dra, Layout, MatchGroup, RuleSet, Trace
from oracles import transport_feasible


def rect(x0, y0, x1, y1):
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def region(rid, cap, nbrs):
    return Region(rid, rect(0, 0, 1, 1), cap, list(nbrs))


def one_trace(target, obstacles=(), width=1.0, d_gap=2.0):
    rules = RuleSet(d_gap, 1.0, 1.0, width)
    t = Trace("t1", [Point(10, 50), Point(90, 50)], width)
    return Layout([Dra("d", rect(0, 0, 100, 100), rules)], list(obstacles), [t], [],
                  [MatchGroup("g", ["t1"], target, 0.0)])


def test_zero_demand_is_trivially_feasible():
    regions, demands = build_regions(one_trace(80.0))
    assert all(d.required == 0 for d in demands)
    assert isinstance(solve_assignment(regions, demands), Assignment)


def test_requirement_formula():
    _, demands = build_regions(one_trace(100.0))
    assert demands[0].required == pytest.approx(30.0)


def test_capacity_bookkeeping():
    lay = one_trace(100.0, [rect(20, 70, 40, 90)])
    regions, _ = build_regions(lay, slab_pitch=10.0)
    want = 10000 - 400 - corridor(lay, "t1").area
    assert sum(r.capacity for r in regions) == pytest.approx(want, rel=1e-9)


def test_single_region_examples():
    got = solve_assignment([region("r1", 10, ["t1"])], [Demand("t1", 8)])
    assert got.allocations == {("r1", "t1"): 8}
    got = solve_assignment([region("r1", 10, ["t1"])], [Demand("t1", 12)])
    assert isinstance(got, Infeasible) and got.deficits == {"t1": pytest.approx(2)}
    assert "t1" in got.report()


def test_two_region_example():
    regions = [region("r1", 5, ["t1"]), region("r2", 5, ["t1", "t2"])]
    got = solve_assignment(regions, [Demand("t1", 6), Demand("t2", 4)])
    assert got.allocations == {("r1", "t1"): 5, ("r2", "t1"): 1, ("r2", "t2"): 4}


def random_instance(rng):
    nr, nt = rng.randint(1, 4), rng.randint(1, 4)
    caps = [Fraction(rng.randint(0, 40), rng.randint(1, 4)) for _ in range(nr)]
    reqs = [Fraction(rng.randint(0, 40), rng.randint(1, 4)) for _ in range(nt)]
    nbrs = [{j for j in range(nt) if rng.random() < 0.5} for _ in range(nr)]
    return caps, reqs, nbrs


def check_against_oracle(caps, reqs, nbrs):
    regions = [Region(f"r{i}", rect(0, 0, 1, 1), float(c), [f"t{j}" for j in sorted(nbrs[i])])
               for i, c in enumerate(caps)]
    demands = [Demand(f"t{j}", float(r)) for j, r in enumerate(reqs)]
    got = solve_assignment(regions, demands)
    want = transport_feasible(caps, reqs, nbrs)
    assert isinstance(got, Assignment) == want
    if want:
        # allocations respect neighbors, capacities, and meet every demand; flow is conserved
        used = {r.id: 0.0 for r in regions}
        recv = {d.trace_id: 0.0 for d in demands}
        for (rid, tid), x in got.allocations.items():
            assert x >= 0
            assert tid in next(r for r in regions if r.id == rid).neighbors
            used[rid] += x
            recv[tid] += x
        for r in regions:
            assert used[r.id] <= r.capacity + 1e-9
        for d in demands:
            assert recv[d.trace_id] >= d.required - 1e-9
        assert sum(got.allocations.values()) == pytest.approx(sum(d.required for d in demands))
    else:
        assert sum(got.deficits.values()) > 0


def test_feasibility_matches_subset_oracle():
    rng = random.Random(2)
    for _ in range(300):
        check_against_oracle(*random_instance(rng))


def two_parallel():
    rules = RuleSet(1.0, 0.5, 0.5, 0.2)
    traces = [Trace("a", [Point(0, 3), Point(10, 3)], 0.2), Trace("b", [Point(0, 7), Point(10, 7)], 0.2)]
    return Layout([Dra("d", rect(0, 0, 10, 10), rules)], [], traces, [], [])


@pytest.mark.parametrize("share_a,cut", [(50, 5.0), (60, 6.0)])
def test_carve_parallel_split(share_a, cut):
    lay = two_parallel()
    reg = [Region("r0", rect(0, 0, 10, 10), 100.0, ["a", "b"])]
    out = carve_routable_areas(lay, reg, Assignment({("r0", "a"): share_a, ("r0", "b"): 100 - share_a}),
                               include_corridors=False)
    a, b = SPoly(out["a"][0].vertices), SPoly(out["b"][0].vertices)
    assert a.area == pytest.approx(share_a, rel=0.05) and b.area == pytest.approx(100 - share_a, rel=0.05)
    assert a.bounds[3] == pytest.approx(cut, abs=1e-6)
    assert a.intersection(b).area < 1e-9


def test_carve_single_user_gets_whole_region():
    lay = two_parallel()
    reg = [Region("r0", rect(0, 0, 10, 10), 100.0, ["a", "b"])]
    out = carve_routable_areas(lay, reg, Assignment({("r0", "a"): 30.0}), include_corridors=False)
    assert out == {"a": [reg[0].polygon]}


def test_assigned_areas_disjoint_and_contain_routing():
    from lenmatch.fixtures import open_corridor_group
    import shapely
    from shapely.geometry import LineString
    lay = open_corridor_group()
    areas = assign_layout(lay)
    assert not isinstance(areas, Infeasible)
    unions = {k: shapely.unary_union([SPoly(p.vertices) for p in v]) for k, v in areas.items()}
    keys = sorted(unions)
    for i, k in enumerate(keys):
        assert unions[k].buffer(1e-6).covers(LineString(lay.trace(k).nodes))
        for m in keys[i + 1:]:
            assert unions[k].intersection(unions[m]).area < 1e-6
