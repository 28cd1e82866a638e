"""Shared market builders for the test suite.

Random markets keep utilities inside [0, 1] on purpose: the exponential
cost family only resolves pairwise comparisons in float while
|alpha| * span stays well under ln(1/eps) ~ 36, and the theorem-bound
suites run alpha up to 20.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from matchport import (
    UtilitySpec,
    discrete_market,
    line_market,
)


def table_market(u, x_masses=None, y_masses=None):
    u = np.asarray(u, dtype=float)
    n, m = u.shape
    if x_masses is None:
        x_masses = [Fraction(1, n)] * n
    if y_masses is None:
        y_masses = [Fraction(1, m)] * m
    return discrete_market(UtilitySpec.table(u), x_masses, y_masses)


def unit_square_market(seed, n_lo=2, n_hi=13):
    """Rectangular market, uniform[0,1] utilities, unit total mass."""
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(n_lo, n_hi)), int(rng.integers(n_lo, n_hi))
    u = rng.random((n, m))
    xm = rng.random(n) + 0.1
    ym = rng.random(m) + 0.1
    return table_market(u, list(xm / xm.sum()), list(ym / ym.sum()))


def equal_mass_market(seed, n, mass=1.0):
    """Square market with the same mass on every atom."""
    rng = np.random.default_rng(seed)
    u = rng.random((n, n))
    return table_market(u, [mass] * n, [mass] * n)


def running_example():
    """Two humps against two troughs; total mass 3 per side."""
    return line_market([-2, -1, 0, 1, 3], [1, 0, 2, 0], [0, 1, 0, 1])


def uniform_halves():
    """mu uniform on [-1, 0], nu uniform on [0, 1]."""
    return line_market([-1, 0, 1], [1, 0], [0, 1])


def nonuniqueness_market():
    """Two atoms per side on the line with two stable matchings."""
    return discrete_market(
        UtilitySpec.neg_distance(),
        [Fraction(1, 2), Fraction(1, 2)],
        [Fraction(1, 2), Fraction(1, 2)],
        x_atoms=[Fraction(1, 3), Fraction(1)],
        y_atoms=[Fraction(0), Fraction(2, 3)],
    )


def four_ball_market(seed=20260822, delta=0.05, points_per_ball=40):
    """Two source balls at (0,0), (0,1) vs targets at (0,0), (1,0)."""
    rng = np.random.default_rng(seed)

    def ball(cx, cy):
        r = delta * np.sqrt(rng.random(points_per_ball))
        t = 2.0 * np.pi * rng.random(points_per_ball)
        return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])

    xa = np.vstack([ball(0.0, 0.0), ball(0.0, 1.0)])
    ya = np.vstack([ball(0.0, 0.0), ball(1.0, 0.0)])
    n = 2 * points_per_ball
    w = Fraction(1, n)
    return discrete_market(
        UtilitySpec.neg_distance(), [w] * n, [w] * n, x_atoms=xa, y_atoms=ya
    )
