"""Deterministic SVG rendering of maps, arcs, and embedding stages.

Exact rationals are converted to decimal floats only here, at serialization,
with a fixed significant-digit count, so identical inputs always produce
byte-identical documents.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .geom import Point

PRECISION = 12


def fnum(x) -> str:
    return f"{float(x):.{PRECISION}g}"


def _document(body: list[str], x0, y0, x1, y1, scale: int) -> str:
    w = fnum((x1 - x0) * scale)
    h = fnum((y1 - y0) * scale)
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{w}" height="{h}" '
        f'viewBox="{fnum(x0)} {fnum(-float(y1))} {fnum(x1 - x0)} {fnum(y1 - y0)}">\n'
    )
    return head + "".join(b + "\n" for b in body) + "</svg>\n"


def _path(points: Iterable[Point], stroke: str, width, dash: Optional[str] = None) -> str:
    pts = " ".join(f"{fnum(p.x)},{fnum(-float(p.y))}" for p in points)
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
        f'stroke-width="{fnum(width)}"{dash_attr}/>'
    )


def _polygon(points: Iterable[Point], fill: str, opacity: str) -> str:
    pts = " ".join(f"{fnum(p.x)},{fnum(-float(p.y))}" for p in points)
    return f'<polygon points="{pts}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>'


def _dot(p: Point, r, color: str) -> str:
    return f'<circle cx="{fnum(p.x)}" cy="{fnum(-float(p.y))}" r="{fnum(r)}" fill="{color}"/>'


def render_map_panels(
    panels: Sequence[tuple[str, object, Sequence[Fraction]]], scale: int = 240
) -> str:
    """Side-by-side unit-square graphs of PL maps with marked points."""
    body = []
    gap = Fraction(5, 4)
    for k, (label, f, marks) in enumerate(panels):
        ox = k * gap
        body.append(
            f'<rect x="{fnum(ox)}" y="-1" width="1" height="1" '
            f'fill="none" stroke="#999999" stroke-width="0.004"/>'
        )
        body.append(_path([Point(ox + x, y) for x, y in f.breakpoints], "#1f4e9c", 0.008))
        for z in marks:
            body.append(_dot(Point(ox + Fraction(z), f(z)), 0.014, "#c03020"))
        body.append(
            f'<text x="{fnum(ox)}" y="0.1" font-size="0.07" '
            f'font-family="monospace" fill="#333333">{label}</text>'
        )
    n = max(len(panels), 1)
    return _document(
        body,
        Fraction(-1, 10),
        Fraction(-1, 5),
        (n - 1) * gap + 1 + Fraction(1, 10),
        Fraction(23, 20),
        scale,
    )


def render_arc(arc, scale: int = 640) -> str:
    """The half-plane embedding: boundary line, arc path, marked dots."""
    xs = [p.x for p in arc.path.vertices]
    ys = [p.y for p in arc.path.vertices]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    span = max(x1 - x0, y1 - y0, Fraction(1, 100))
    lw = span / 300
    body = [
        _path([Point(Fraction(0), y0 - span / 20), Point(Fraction(0), y1 + span / 20)],
              "#999999", lw),
        _path(arc.path.vertices, "#1f4e9c", lw),
    ]
    for _, idx in arc.marks:
        body.append(_dot(arc.path.vertices[idx], span / 70, "#c03020"))
    pad = span / 10
    return _document(body, x0 - pad, y0 - pad, x1 + pad, y1 + pad, scale)


def render_stage(stage, scale: int = 640) -> str:
    """A pipeline stage: shaded tube, curve, whiskers, marked dots."""
    xs = [p.x for p in stage.curve.vertices]
    ys = [p.y for p in stage.curve.vertices]
    for w in stage.whiskers:
        xs.extend(p.x for p in w.probe.vertices)
        ys.extend(p.y for p in w.probe.vertices)
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    span = max(x1 - x0, y1 - y0, Fraction(1, 100))
    lw = span / 400
    body = []
    for q in stage.tube.quads:
        body.append(_polygon(q, "#7aa7d8", "0.35"))
    body.append(_path(stage.curve.vertices, "#1f4e9c", lw))
    for w in stage.whiskers:
        body.append(_path(w.probe.vertices, "#2e8540", lw, dash=fnum(span / 60)))
    for _owner, idx in stage.marks:
        body.append(_dot(stage.curve.vertices[idx], span / 90, "#c03020"))
    pad = span / 12
    return _document(body, x0 - pad, y0 - pad, x1 + pad, y1 + pad, scale)
