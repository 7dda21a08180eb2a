"""Exact-rational JSON plumbing shared by the file formats and the CLI.

Rationals travel as strings "p" or "p/q" in lowest terms; emission is
canonical so identical inputs always produce byte-identical artifacts.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any


def parse_rational(s: str) -> Fraction:
    if isinstance(s, int):
        return Fraction(s)
    if not isinstance(s, str):
        raise ValueError(f"expected rational string, got {s!r}")
    return Fraction(s.strip())


def format_rational(x: Fraction) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def point_to_json(p) -> list[str]:
    return [format_rational(p.x), format_rational(p.y)]


def point_from_json(doc) :
    from .geom import Point

    return Point(parse_rational(doc[0]), parse_rational(doc[1]))


def dumps(obj: Any) -> str:
    """Deterministic JSON text: sorted keys, fixed separators, newline EOF."""
    return json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=1) + "\n"


def write_json(path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def read_json(path) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
