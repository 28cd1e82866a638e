"""Shared tolerances, exceptions, and exact-number coercion helpers."""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational

import numpy as np

# Mass-balance slack for validating that the two sides of a market carry the
# same total mass (absolute, relative to max(1, total)).
TAU_MASS = 1e-9

# Coupling entries below TAU_SUPP * total_mass are treated as numerical zeros
# and dropped before support-based audits.
TAU_SUPP = 1e-12

# Root-finding / linear-solve tolerance for float-mode piecewise solves.
TAU_ROOT = 1e-12

# Overflow guard for the exponential cost family in float mode.
ALPHA_SPAN_LIMIT = 700.0


class MatchportError(Exception):
    """Base class for all package errors."""


class ValidationError(MatchportError):
    """Malformed market, coupling, or file input."""


class SolverError(MatchportError):
    """A solver failed to produce a certified solution."""


def as_fraction(value) -> Fraction:
    """Coerce ints, Fractions, floats, and "p/q" strings to an exact Fraction.

    Floats convert exactly (every float is a binary rational), so round trips
    through float inputs lose nothing; "p/q" strings are the file-format
    representation of exact rationals.
    """
    if isinstance(value, bool):
        raise ValidationError(f"boolean is not a number: {value!r}")
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, float):
        if not np.isfinite(value):
            raise ValidationError(f"non-finite number: {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"cannot parse rational {value!r}") from exc
    if isinstance(value, np.floating):
        return as_fraction(float(value))
    if isinstance(value, np.integer):
        return Fraction(int(value))
    raise ValidationError(f"cannot coerce {value!r} to a rational")


def is_exact(value) -> bool:
    """True when the input was given as an exact rational (not a float)."""
    return isinstance(value, (Rational, str, np.integer)) and not isinstance(value, bool)


def frac_format(q: Fraction) -> str:
    """Render a Fraction as the canonical file-format string "p/q" (or "p")."""
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def freeze_array(a: np.ndarray) -> np.ndarray:
    out = np.array(a, copy=True)
    out.setflags(write=False)
    return out
