"""tune-cli: assign, tune, check and render layout files."""

import argparse
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass, replace
from typing import List, Optional

from .assign import Infeasible, assign_layout
from .layout import LayoutError, MetricError, dumps_layout, group_metrics, load_layout, new_violations
from .pipeline import InfeasibleError, TuneConfig, tune_layout
from .render import render_svg

OK, DRC_FAIL, INFEASIBLE, IO_ERROR = 0, 1, 2, 3

log = logging.getLogger("lenmatch")


@dataclass
class RunConfig:
    command: str
    input: str
    output: Optional[str] = None
    l_disc: Optional[float] = None
    tolerance: Optional[float] = None
    threads: int = 1
    render: Optional[str] = None
    ura_overlay: bool = False
    scale: float = 4.0
    slab_pitch: Optional[float] = None


def _write_atomic(path: str, text: str) -> None:
    """Write through a temporary file so a failure never leaves partial output."""
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load(cfg: RunConfig):
    try:
        return load_layout(cfg.input)
    except OSError as exc:
        print(f"error: cannot read {cfg.input}: {exc.strerror or exc}", file=sys.stderr)
    except LayoutError as exc:
        print(f"error: invalid layout {cfg.input}: {exc}", file=sys.stderr)
    return None


def _emit(cfg: RunConfig, text: str) -> int:
    try:
        if cfg.output:
            _write_atomic(cfg.output, text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"error: cannot write {cfg.output}: {exc.strerror or exc}", file=sys.stderr)
        return IO_ERROR
    return OK


def cmd_assign(cfg: RunConfig) -> int:
    layout = _load(cfg)
    if layout is None:
        return IO_ERROR
    result = assign_layout(replace(layout, routable_areas=None), cfg.slab_pitch)
    if isinstance(result, Infeasible):
        print(result.report(), file=sys.stderr)
        return INFEASIBLE
    return _emit(cfg, dumps_layout(replace(layout, routable_areas=result)))


def cmd_tune(cfg: RunConfig) -> int:
    layout = _load(cfg)
    if layout is None:
        return IO_ERROR
    t0 = time.perf_counter()
    try:
        tuned, report = tune_layout(layout, TuneConfig(l_disc=cfg.l_disc, tolerance=cfg.tolerance,
                                                       threads=cfg.threads))
    except InfeasibleError as exc:
        print(f"assign: {exc}", file=sys.stderr)
        return INFEASIBLE
    except MetricError as exc:
        print(f"metrics: {exc}", file=sys.stderr)
        return DRC_FAIL
    except Exception as exc:  # stage errors carry their own context
        print(f"tune: {type(exc).__name__}: {exc}", file=sys.stderr)
        return DRC_FAIL
    elapsed = time.perf_counter() - t0
    status = _emit(cfg, dumps_layout(tuned))
    if status != OK:
        return status
    out = sys.stderr if not cfg.output else sys.stdout
    for gid in sorted(report.metrics):
        mx, avg = report.metrics[gid]
        print(f"group {gid}: max error {mx * 100:.3f}%  avg error {avg * 100:.3f}%", file=out)
    for m in report.reverted:
        print(f"warning: {m} kept its original routing", file=out)
    print(f"time {elapsed:.3f} s", file=out)
    if cfg.render:
        status = _render_to(tuned, cfg.render, cfg)
        if status != OK:
            return status
    return OK if report.within_tolerance(tuned, cfg.tolerance) else DRC_FAIL


def cmd_check(cfg: RunConfig) -> int:
    layout = _load(cfg)
    if layout is None:
        return IO_ERROR
    found = new_violations(layout)
    for v in found:
        print(v.describe())
    status = OK if not found else DRC_FAIL
    for g in layout.groups:
        try:
            mx, avg = group_metrics(g, layout)
        except MetricError as exc:
            print(f"group {g.id}: {exc}")
            status = DRC_FAIL
            continue
        print(f"group {g.id}: max error {mx * 100:.3f}%  avg error {avg * 100:.3f}%")
    return status


def _render_to(layout, path: str, cfg: RunConfig) -> int:
    try:
        _write_atomic(path, render_svg(layout, cfg.scale, cfg.ura_overlay))
    except OSError as exc:
        print(f"error: cannot write {path}: {exc.strerror or exc}", file=sys.stderr)
        return IO_ERROR
    return OK


def cmd_render(cfg: RunConfig) -> int:
    layout = _load(cfg)
    if layout is None:
        return IO_ERROR
    target = cfg.render or cfg.output
    if not target:
        sys.stdout.write(render_svg(layout, cfg.scale, cfg.ura_overlay))
        return OK
    return _render_to(layout, target, cfg)


COMMANDS = {"assign": cmd_assign, "tune": cmd_tune, "check": cmd_check, "render": cmd_render}


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tune-cli", description="Length matching for PCB traces.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (("assign", "assign routable areas"), ("tune", "meander group members to target"),
                            ("check", "report rule violations and group errors"), ("render", "write an SVG view")):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("input")
        sp.add_argument("-o", "--output")
        sp.add_argument("--l-disc", type=_positive(float), dest="l_disc")
        sp.add_argument("--tolerance", type=float)
        sp.add_argument("--threads", type=_positive(int), default=1)
        sp.add_argument("--render")
        sp.add_argument("--ura-overlay", action="store_true", dest="ura_overlay")
        sp.add_argument("--scale", type=_positive(float), default=4.0)
        sp.add_argument("--slab-pitch", type=_positive(float), dest="slab_pitch")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.tolerance is not None and args.tolerance < 0:
        print("error: --tolerance must be non-negative", file=sys.stderr)
        return IO_ERROR
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    cfg = RunConfig(**vars(args))
    return COMMANDS[cfg.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
