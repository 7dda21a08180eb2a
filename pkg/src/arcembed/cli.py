"""Deterministic command-line front end.

Every artifact is JSON with exact "p/q" rationals (or SVG rendered at a fixed
float precision); repeated runs with identical inputs produce byte-identical
files.  Exit codes: 0 success, 1 verification/domain failure, 2 usage errors.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from . import jsonio
from .jsonio import format_rational, parse_rational
from .plmap import PLMap, from_json_dict, tent, to_json_dict
from .visors import (
    MarkedSet,
    all_visors_removable,
    assign_targets,
    choose_visor_family,
    marked,
    visor_components,
)


class UsageError(ValueError):
    pass


def _parse_rat_list(text: str) -> list[Fraction]:
    try:
        return [parse_rational(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"bad rational list {text!r}: {e}")


def _load_map(path: str) -> PLMap:
    doc = jsonio.read_json(path)
    return from_json_dict(doc)


def _write_text(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _emit(doc, out: str | None) -> None:
    text = jsonio.dumps(doc)
    if out:
        _write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_tent(args) -> int:
    if args.m < 1:
        raise UsageError("tent order must be >= 1")
    _emit(to_json_dict(tent(args.m)), args.out)
    return 0


def _factor_doc(inst) -> dict:
    from .tentfactor import FactorInstance  # noqa: F401

    return {
        "schema": "factor-instance/1",
        "m": inst.m,
        "n": inst.n,
        "z": [format_rational(z) for z in inst.Z.points],
        "pattern_bounds": [format_rational(a) for a in inst.plan.a],
        "s": to_json_dict(inst.s),
        "s_of_z": [format_rational(w) for w in inst.images()],
    }


def _example_doc(ex) -> dict:
    return {
        "schema": "knaster-example/1",
        "n": ex.n,
        "k": ex.k,
        "m": ex.m,
        "z": [format_rational(z) for z in ex.z],
        "zprime": [format_rational(z) for z in ex.zprime],
        "s": to_json_dict(ex.factor.s),
        "map": to_json_dict(ex.f),
        "all_visors_removable": ex.removability.all_removable,
    }


def cmd_factor(args) -> int:
    from .knaster import build_example_instance

    ex = build_example_instance(args.n)
    _emit(_factor_doc(ex.factor), args.out)
    if args.svg:
        from .svg import render_map_panels

        panels = [
            (f"tent({ex.m})", tent(ex.m), ex.z),
            (f"repositioning map", ex.factor.s, ex.z),
            (f"tent({2 * ex.n - 1})", tent(2 * ex.n - 1), ex.factor.images()),
            ("composite self-map", ex.f, ex.zprime),
        ]
        _write_text(args.svg, render_map_panels(panels))
    return 0


def cmd_knaster_example(args) -> int:
    from .knaster import build_example_instance

    ex = build_example_instance(args.n)
    _emit(_example_doc(ex), args.out)
    return 0


def cmd_visors(args) -> int:
    f = _load_map(args.map)
    Z = marked(_parse_rat_list(args.z))
    comps = visor_components(f, Z)
    rep = all_visors_removable(f, Z)
    doc = {
        "schema": "visor-report/1",
        "z": [format_rational(z) for z in Z.points],
        "components": [
            {
                "mark_index": c.j,
                "lo": format_rational(c.lo),
                "hi": format_rational(c.hi),
                "closed_left": c.closed_left,
            }
            for c in comps
        ],
        "all_removable": rep.all_removable,
        "non_removable_cells": [
            {"mark_index": j, "lo": format_rational(lo), "hi": format_rational(hi)}
            for j, lo, hi in rep.failing
        ],
    }
    if rep.all_removable:
        fam = assign_targets(f, Z, choose_visor_family(f, Z))
        doc["family"] = [
            {
                "v": format_rational(m.v),
                "interval": [format_rational(m.interval.a), format_rational(m.interval.b)],
                "target": format_rational(m.target),
            }
            for m in fam.members
        ]
    _emit(doc, args.out)
    return 0


def _arc_doc(arc) -> dict:
    return {
        "schema": "half-plane-arc/1",
        "vertices": [jsonio.point_to_json(p) for p in arc.path.vertices],
        "params": [format_rational(t) for t in arc.params],
        "marks": [[j, idx] for j, idx in arc.marks],
        "orientation": arc.orientation,
    }


def cmd_tuck(args) -> int:
    from .tuck import build_half_plane_arc, verify_half_plane_arc

    f = _load_map(args.map)
    Z = marked(_parse_rat_list(args.z))
    eps = parse_rational(args.eps)
    arc = build_half_plane_arc(f, Z, eps)
    report = verify_half_plane_arc(f, Z, eps, arc)
    doc = _arc_doc(arc)
    doc["verified"] = report.ok
    _emit(doc, args.out)
    if args.svg:
        from .svg import render_arc

        _write_text(args.svg, render_arc(arc))
    return 0 if report.ok else 1


def cmd_composants(args) -> int:
    from .knaster import InverseSystem, Thread, composant_evidence

    f = tent(args.m)
    sysm = InverseSystem.constant(f)
    p = Thread.constant(parse_rational(args.x))
    q = Thread.constant(parse_rational(args.y))
    count = composant_evidence(sysm, p, q, args.horizon)
    _emit(
        {
            "schema": "composant-evidence/1",
            "tent_order": args.m,
            "x": args.x,
            "y": args.y,
            "horizon": args.horizon,
            "levels_with_separating_extremum": count,
            "verdict": "distinct composants (evidence at every level)"
            if count == args.horizon
            else "inconclusive at this horizon",
        },
        args.out,
    )
    return 0


def cmd_embed(args) -> int:
    from .embed import export_stage, run_pipeline
    from .knaster import build_example_instance

    if args.n is not None:
        ex = build_example_instance(args.n)
        f = ex.f
        schedule = list(ex.zprime)
    elif args.map and args.z:
        f = _load_map(args.map)
        schedule = _parse_rat_list(args.z)
    else:
        raise UsageError("embed needs either --n or both --map and --z")
    eps1 = parse_rational(args.eps)
    stages = run_pipeline(f, schedule, args.depth, eps1)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for stage in stages:
        (outdir / f"stage{stage.index}.json").write_text(
            export_stage(stage, "json"), encoding="utf-8"
        )
        (outdir / f"stage{stage.index}.svg").write_text(
            export_stage(stage, "svg"), encoding="utf-8"
        )
    sys.stdout.write(f"wrote {len(stages)} stages to {outdir}\n")
    return 0


def cmd_verify(args) -> int:
    from .embed import stage_from_json, verify_stage

    doc = jsonio.read_json(args.stage)
    try:
        stage = stage_from_json(doc)
    except (ValueError, KeyError) as e:
        sys.stderr.write(f"malformed stage file: {e}\n")
        return 1
    report = verify_stage(stage)
    if report.ok:
        sys.stdout.write(f"stage {stage.index}: all invariants hold\n")
        return 0
    for failure in report.failures:
        sys.stderr.write(f"stage {stage.index}: {failure}\n")
    return 1


def cmd_svg(args) -> int:
    doc = jsonio.read_json(args.input)
    schema = doc.get("schema", "")
    if schema == "embedding-stage/1":
        from .embed import stage_from_json
        from .svg import render_stage

        _write_text(args.out, render_stage(stage_from_json(doc)))
    elif schema == "half-plane-arc/1":
        from .geom import Polyline
        from .tuck import HalfPlaneArc
        from .svg import render_arc

        arc = HalfPlaneArc(
            Polyline(tuple(jsonio.point_from_json(p) for p in doc["vertices"])),
            tuple(parse_rational(t) for t in doc["params"]),
            tuple((int(j), int(i)) for j, i in doc["marks"]),
        )
        _write_text(args.out, render_arc(arc))
    elif schema == "plmap/1":
        from .svg import render_map_panels

        _write_text(args.out, render_map_panels([("map", from_json_dict(doc), [])]))
    else:
        raise UsageError(f"no renderer for schema {schema!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="arcembed",
        description="Exact PL interval-map algebra and certified plane-embedding stages",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tent", help="write a tent map file")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_tent)

    p = sub.add_parser("factor", help="build the tent factorization instance for n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--svg")
    p.set_defaults(fn=cmd_factor)

    p = sub.add_parser("visors", help="visor components, removability, family")
    p.add_argument("--map", required=True)
    p.add_argument("--z", required=True, help="comma-separated marked points")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_visors)

    p = sub.add_parser("tuck", help="build and verify the half-plane embedding")
    p.add_argument("--map", required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--out")
    p.add_argument("--svg")
    p.set_defaults(fn=cmd_tuck)

    p = sub.add_parser("knaster-example", help="assemble the worked instance for n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_knaster_example)

    p = sub.add_parser("composants", help="composant-separation evidence for two threads")
    p.add_argument("--m", type=int, required=True, help="tent order of the system")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_composants)

    p = sub.add_parser("embed", help="run the stagewise embedding pipeline")
    p.add_argument("--n", type=int, help="use the worked instance for this n")
    p.add_argument("--map")
    p.add_argument("--z")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("verify", help="re-run all invariant checks on a stage file")
    p.add_argument("--stage", required=True)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("svg", help="render a stored artifact")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_svg)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        sys.stderr.write(f"usage error: {e}\n")
        return 2
    except FileNotFoundError as e:
        sys.stderr.write(f"missing input: {e}\n")
        return 2
    except Exception as e:  # domain/verification failures
        sys.stderr.write(f"{type(e).__name__}: {e}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
