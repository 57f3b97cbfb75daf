"""Scalar value semantics: exact rationals or binary64 floats.

Update rules only use ``+``, ``-``, ``*``, ``/``, ``min`` and ``max``, so the
same code runs on :class:`fractions.Fraction` and on :class:`float`. This
module holds the few places where the two modes differ: conversion,
tolerant comparison and printing.
"""

from __future__ import annotations

import enum
import math
from fractions import Fraction
from typing import Union

Value = Union[Fraction, float]

#: absolute slack applied to inequality checks when either side is a float
FLOAT_TOL = 1e-12


class NumericMode(str, enum.Enum):
    RATIONAL = "rational"
    FLOAT = "float"


def to_fraction(x: object) -> Fraction:
    """Exact conversion; decimal strings and floats map to the decimal they denote.

    ``0.1`` becomes ``1/10`` rather than the binary64 neighbour, which is
    what a user typing a tolerance or an initial value means.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot interpret {x!r} as a number")


def convert(x: object, mode: NumericMode | str) -> Value:
    mode = NumericMode(mode)
    if mode is NumericMode.RATIONAL:
        return to_fraction(x)
    if isinstance(x, str):
        return float(Fraction(x.strip()))
    return float(x)


def mode_of(x: Value) -> NumericMode:
    return NumericMode.FLOAT if isinstance(x, float) else NumericMode.RATIONAL


def leq(a: Value, b: Value) -> bool:
    """``a <= b``, exact for rationals, with :data:`FLOAT_TOL` slack for floats."""
    if isinstance(a, float) or isinstance(b, float):
        return a <= b + FLOAT_TOL
    return a <= b


def format_value(x: Value) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"
