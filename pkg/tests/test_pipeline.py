import os

import pytest

from conftest import FIXTURE_DIR
from lenmatch import pipeline
from lenmatch.fixtures import bundled, pair_group, single_open
from lenmatch.geom import Point, Polygon
from lenmatch.layout import (Dra, Layout, MatchGroup, RuleSet, Trace, drc_check, dumps_layout, new_violations,
                             trace_length)
from lenmatch.pipeline import MemberResult, TuneConfig, tune_layout


def rect(x0, y0, x1, y1):
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def test_bundled_files_match_generators():
    for name, lay in bundled().items():
        with open(os.path.join(FIXTURE_DIR, f"{name}.json"), encoding="utf-8") as fh:
            assert fh.read() == dumps_layout(lay), name


def test_input_is_not_modified():
    lay = single_open()
    before = dumps_layout(lay)
    tune_layout(lay)
    assert dumps_layout(lay) == before


def test_pair_member_reaches_target_cleanly():
    lay = pair_group()
    tuned, rep = tune_layout(lay)
    assert new_violations(tuned) == []
    mx, _ = rep.metrics["g0"]
    assert mx <= 0.5 / 260 + 1e-9
    p = tuned.pair("dp")
    assert abs(trace_length(p.trace_p) - trace_length(p.trace_n)) <= lay.dras[0].rules.d_protect + 1e-6


def test_legacy_violation_tolerated():
    rules = RuleSet(2.0, 1.0, 1.0, 0.5)
    jog = Trace("t0", [Point(0, 0), Point(10, 0), Point(10, 0.5), Point(20, 0.5)], 0.5)
    lay = Layout([Dra("d", rect(-10, -30, 30, 30), rules)], [], [jog], [], [MatchGroup("g", ["t0"], 40.0, 0.1)])
    assert [v.rule for v in drc_check(lay)] == ["d_protect"]
    tuned, rep = tune_layout(lay)
    assert tuned.legacy and new_violations(tuned) == []
    assert trace_length(tuned.traces[0]) == pytest.approx(40.0, abs=0.1)


def test_bad_member_result_is_reverted(monkeypatch, caplog):
    lay = single_open()
    original = lay.traces[0]

    def broken(layout, tid, target, tol, cfg):
        # a detour far outside the board and routable area
        nodes = [Point(0, 0), Point(2, 0), Point(2, 500), Point(4, 500), Point(4, 0), Point(10, 0)]
        return MemberResult(tid, [Trace(tid, nodes, original.width)], 0.0)

    monkeypatch.setattr(pipeline, "tune_single", broken)
    tuned, rep = tune_layout(lay, TuneConfig())
    assert rep.reverted == ["t0"]
    assert tuned.traces[0].nodes == original.nodes
    assert "keeping original routing" in caplog.text
    assert not rep.within_tolerance(tuned)


def test_threads_equal_results():
    lay = bundled()["obstacle_field"]
    a, _ = tune_layout(lay, TuneConfig(threads=1))
    b, _ = tune_layout(lay, TuneConfig(threads=4))
    assert dumps_layout(a) == dumps_layout(b)
