"""The ``matchport/1`` market file format.

One JSON document per market, conventionally with a ``.mm`` extension.
Four kinds cover the object zoo:

``discrete``
    finite two-sided market: a utility spec plus per-side masses, with
    optional atom coordinates and labels;
``piecewise_line``
    piecewise-constant densities on a shared breakpoint grid;
``k_discrete``
    k-sided market with a dense utility tensor;
``preference_profile``
    ordinal rankings of each side over the other.

Exact rationals travel as strings ("3/7", "2"); floats stay JSON numbers
(an IEEE double round-trips exactly through repr).  Parsing a serialized
market always reproduces the original values bit for bit.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np

from ._common import ValidationError, as_fraction, frac_format
from .markets import (
    DiscreteMarket,
    PiecewiseDensityMarket,
    UtilitySpec,
    discrete_market,
    line_market,
)
from .multiway import KMarket, k_market
from .ordinal import PreferenceProfile, preference_profile

__all__ = [
    "SCHEMA",
    "parse_market",
    "serialize_market",
    "load_market",
    "save_market",
    "fixture_path",
    "load_fixture",
]

SCHEMA = "matchport/1"


def _num_out(v):
    if isinstance(v, Fraction):
        return frac_format(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def _num_in(v):
    if isinstance(v, bool) or v is None:
        raise ValidationError(f"not a number: {v!r}")
    if isinstance(v, str):
        return as_fraction(v)
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        return v
    raise ValidationError(f"not a number: {v!r}")


def _require(doc: dict, key: str, kind: str):
    if key not in doc:
        raise ValidationError(f"{kind} document is missing {key!r}")
    return doc[key]


def _utility_out(u: UtilitySpec) -> dict:
    if u.family == "neg_distance_lp":
        p = "inf" if math.isinf(u.p) else float(u.p)
        return {"family": "neg_distance_lp", "p": p}
    if u.family == "table":
        return {"family": "table", "values": [[float(v) for v in row] for row in u.values]}
    if u.family == "nash_surplus":
        return {
            "family": "nash_surplus",
            "values": [[float(v) for v in row] for row in u.values],
            "beta": float(u.beta),
        }
    raise ValidationError(f"unknown utility family {u.family!r}")


def _utility_in(doc) -> UtilitySpec:
    if not isinstance(doc, dict):
        raise ValidationError("utility must be an object")
    family = _require(doc, "family", "utility")
    if family == "neg_distance_lp":
        p = doc.get("p", 2.0)
        if p == "inf":
            p = math.inf
        return UtilitySpec.neg_distance(p=float(p))
    if family == "table":
        return UtilitySpec.table(_require(doc, "values", "table utility"))
    if family == "nash_surplus":
        return UtilitySpec.nash(
            _require(doc, "values", "nash utility"),
            beta=float(doc.get("beta", 0.5)),
        )
    raise ValidationError(f"unknown utility family {family!r}")


def _side_out(masses_exact, masses_float, atoms, labels) -> dict:
    if masses_exact is not None:
        out = {"masses": [_num_out(q) for q in masses_exact]}
    else:
        out = {"masses": [float(v) for v in masses_float]}
    if atoms is not None:
        out["atoms"] = [[float(c) for c in row] for row in atoms]
    if labels is not None:
        out["labels"] = list(labels)
    return out


def serialize_market(obj) -> dict:
    """Plain-dict form of a market object, ready for ``json.dump``."""
    if isinstance(obj, DiscreteMarket):
        return {
            "schema": SCHEMA,
            "kind": "discrete",
            "utility": _utility_out(obj.utility),
            "x": _side_out(obj.x_exact, obj.x_masses, obj.x_atoms, obj.x_labels),
            "y": _side_out(obj.y_exact, obj.y_masses, obj.y_atoms, obj.y_labels),
        }
    if isinstance(obj, PiecewiseDensityMarket):
        if obj.exact:
            conv = _num_out
        else:
            conv = lambda q: float(q)
        return {
            "schema": SCHEMA,
            "kind": "piecewise_line",
            "breakpoints": [conv(v) for v in obj.breakpoints],
            "mu": [conv(v) for v in obj.mu],
            "nu": [conv(v) for v in obj.nu],
        }
    if isinstance(obj, KMarket):
        doc = {
            "schema": SCHEMA,
            "kind": "k_discrete",
            "utilities": np.asarray(obj.utilities, dtype=float).tolist(),
        }
        if obj.exact_masses is not None:
            doc["masses"] = [[_num_out(q) for q in side] for side in obj.exact_masses]
        else:
            doc["masses"] = [[float(v) for v in side] for side in obj.masses]
        if obj.labels is not None:
            doc["labels"] = [list(side) for side in obj.labels]
        return doc
    if isinstance(obj, PreferenceProfile):
        return {
            "schema": SCHEMA,
            "kind": "preference_profile",
            "x_ranks": obj.x_ranks.tolist(),
            "y_ranks": obj.y_ranks.tolist(),
        }
    raise ValidationError(f"cannot serialize {type(obj).__name__}")


def parse_market(doc: dict):
    """Validate and build the market object a document describes."""
    if not isinstance(doc, dict):
        raise ValidationError("market document must be a JSON object")
    schema = doc.get("schema")
    if schema != SCHEMA:
        raise ValidationError(
            f"unsupported schema {schema!r}; this reader speaks {SCHEMA!r}"
        )
    kind = _require(doc, "kind", "market")
    if kind == "discrete":
        util = _utility_in(_require(doc, "utility", "discrete"))
        sides = []
        for key in ("x", "y"):
            side = _require(doc, key, "discrete")
            if not isinstance(side, dict):
                raise ValidationError(f"side {key!r} must be an object")
            masses = [_num_in(v) for v in _require(side, "masses", f"side {key}")]
            atoms = side.get("atoms")
            if atoms is not None:
                # Coordinates may use the same "p/q" spelling as masses;
                # they feed the float geometry pipeline either way.
                atoms = [
                    [float(_num_in(c)) for c in row]
                    if isinstance(row, (list, tuple))
                    else float(_num_in(row))
                    for row in atoms
                ]
            sides.append((masses, atoms, side.get("labels")))
        (xm, xa, xl), (ym, ya, yl) = sides
        return discrete_market(
            util, xm, ym, x_atoms=xa, y_atoms=ya, x_labels=xl, y_labels=yl
        )
    if kind == "piecewise_line":
        return line_market(
            [_num_in(v) for v in _require(doc, "breakpoints", kind)],
            [_num_in(v) for v in _require(doc, "mu", kind)],
            [_num_in(v) for v in _require(doc, "nu", kind)],
        )
    if kind == "k_discrete":
        masses = [
            [_num_in(v) for v in side] for side in _require(doc, "masses", kind)
        ]
        return k_market(
            _require(doc, "utilities", kind), masses, labels=doc.get("labels")
        )
    if kind == "preference_profile":
        return preference_profile(
            _require(doc, "x_ranks", kind), _require(doc, "y_ranks", kind)
        )
    raise ValidationError(f"unknown market kind {kind!r}")


def save_market(obj, path) -> None:
    doc = serialize_market(obj)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_market(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
    return parse_market(doc)


def fixture_path(name: str):
    """Filesystem path of a bundled example market."""
    from importlib.resources import files as _files

    root = _files("matchport") / "fixtures"
    candidate = root / name
    if not candidate.is_file():
        have = sorted(p.name for p in root.iterdir() if p.name.endswith(".mm"))
        raise ValidationError(f"no fixture {name!r}; bundled: {', '.join(have)}")
    return candidate


def load_fixture(name: str):
    """Parse a bundled example market by file name."""
    return parse_market(json.loads(fixture_path(name).read_text(encoding="utf-8")))
