"""Market containers and utility specifications.

A market is a pair of mass distributions (the two sides) together with an
aligned utility: both partners in a couple (x, y) enjoy the same value
u(x, y).  Three utility families are supported:

``neg_distance_lp``
    u(x, y) = -||x - y||_p for atoms embedded in R^d.

``table``
    an explicit matrix over labelled atoms.

``nash_surplus``
    a transferable-surplus matrix s(x, y) plus a bargaining weight
    beta in (0, 1); the aligned representative of such a market is the
    surplus itself (see :func:`nash_bargaining_reduce`).

Discrete markets carry atoms with strictly positive masses; piecewise
markets carry piecewise-constant densities on a common breakpoint grid,
with the half-open convention [lo, hi) for constancy intervals.  Masses
supplied as ints, Fractions, or "p/q" strings are kept exactly, which is
what makes bit-exact golden outputs possible downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from ._common import (
    TAU_MASS,
    TAU_SUPP,
    ValidationError,
    as_fraction,
    freeze_array,
    is_exact,
)

__all__ = [
    "UtilitySpec",
    "DiscreteMarket",
    "PiecewiseDensityMarket",
    "Coupling",
    "utility_eval",
    "nash_bargaining_reduce",
    "discretize_line_market",
    "compute_delta",
]


# ---------------------------------------------------------------------------
# utility specifications


@dataclass(frozen=True, eq=False)
class UtilitySpec:
    """Aligned utility family tag plus its parameters."""

    family: str
    p: float = 2.0
    values: np.ndarray | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.family not in ("neg_distance_lp", "table", "nash_surplus"):
            raise ValidationError(f"unknown utility family {self.family!r}")
        if self.family == "neg_distance_lp":
            if not (self.p >= 1):
                raise ValidationError("neg_distance_lp needs p >= 1")
        else:
            if self.values is None:
                raise ValidationError(f"{self.family} needs a value matrix")
            vals = np.asarray(self.values, dtype=float)
            if vals.ndim != 2 or not np.all(np.isfinite(vals)):
                raise ValidationError("utility matrix must be finite and 2-d")
            object.__setattr__(self, "values", freeze_array(vals))
        if self.family == "nash_surplus":
            if self.beta is None or not (0.0 < float(self.beta) < 1.0):
                raise ValidationError("nash_surplus needs beta in (0, 1)")

    @staticmethod
    def neg_distance(p: float = 2.0) -> "UtilitySpec":
        return UtilitySpec(family="neg_distance_lp", p=p)

    @staticmethod
    def table(values) -> "UtilitySpec":
        return UtilitySpec(family="table", values=np.asarray(values, dtype=float))

    @staticmethod
    def nash(surplus, beta: float) -> "UtilitySpec":
        return UtilitySpec(
            family="nash_surplus", values=np.asarray(surplus, dtype=float), beta=beta
        )


def utility_eval(spec: UtilitySpec, x, y) -> float:
    """Evaluate the aligned utility of a couple.

    For ``neg_distance_lp``, `x` and `y` are points in R^d; for the matrix
    families they are atom indices.  For ``nash_surplus`` the value is the
    surplus s(x, y), which is the aligned representative of the bargaining
    market (both partners rank couples by surplus once weights are fixed).
    """
    if spec.family == "neg_distance_lp":
        dx = np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        return -float(np.linalg.norm(dx, ord=spec.p))
    return float(spec.values[int(x), int(y)])


# ---------------------------------------------------------------------------
# discrete markets


def _dedupe_points(atoms: np.ndarray, masses: list[Fraction]):
    # Coincident atoms are one agent type; merge their masses, keep first-seen
    # order so the result is deterministic.
    seen: dict[tuple, int] = {}
    keep: list[int] = []
    merged: list[Fraction] = []
    for i in range(atoms.shape[0]):
        key = tuple(atoms[i].tolist())
        if key in seen:
            merged[seen[key]] += masses[i]
        else:
            seen[key] = len(keep)
            keep.append(i)
            merged.append(masses[i])
    return atoms[keep], merged


@dataclass(frozen=True, eq=False)
class DiscreteMarket:
    """Two finite sides with positive masses and an aligned utility.

    Point markets (``neg_distance_lp``) store atom coordinates with shape
    (n, d); matrix markets store labels and index into the utility table.
    Construction merges coincident point atoms, rejects non-positive masses,
    and requires the two sides to balance within ``TAU_MASS`` unless
    ``pad_unbalanced`` is set, in which case the light side receives a dummy
    atom with utility 0 against everyone (the market then becomes a table
    market over labels).
    """

    utility: UtilitySpec
    x_masses: np.ndarray
    y_masses: np.ndarray
    x_atoms: np.ndarray | None = None
    y_atoms: np.ndarray | None = None
    x_labels: tuple[str, ...] | None = None
    y_labels: tuple[str, ...] | None = None
    x_exact: tuple[Fraction, ...] | None = None
    y_exact: tuple[Fraction, ...] | None = None

    @property
    def n_x(self) -> int:
        return len(self.x_masses)

    @property
    def n_y(self) -> int:
        return len(self.y_masses)

    @property
    def total_mass(self) -> float:
        return float(self.x_masses.sum())

    @property
    def exact(self) -> bool:
        return self.x_exact is not None and self.y_exact is not None

    def utility_matrix(self) -> np.ndarray:
        """Dense (n_x, n_y) matrix of aligned utilities."""
        if self.utility.family == "neg_distance_lp":
            diff = self.x_atoms[:, None, :] - self.y_atoms[None, :, :]
            if self.utility.p == np.inf:
                d = np.abs(diff).max(axis=2)
            else:
                d = np.abs(diff) ** self.utility.p
                d = d.sum(axis=2) ** (1.0 / self.utility.p)
            return -d
        vals = self.utility.values
        if vals.shape != (self.n_x, self.n_y):
            raise ValidationError(
                f"utility matrix shape {vals.shape} does not match market "
                f"({self.n_x}, {self.n_y})"
            )
        return np.array(vals)

    def utility_bounds(self) -> tuple[float, float]:
        u = self.utility_matrix()
        return float(u.min()), float(u.max())


def discrete_market(
    utility: UtilitySpec,
    x_masses: Sequence,
    y_masses: Sequence,
    x_atoms=None,
    y_atoms=None,
    x_labels: Sequence[str] | None = None,
    y_labels: Sequence[str] | None = None,
    pad_unbalanced: bool = False,
) -> DiscreteMarket:
    """Validating constructor for :class:`DiscreteMarket`."""
    xm = [as_fraction(m) for m in x_masses]
    ym = [as_fraction(m) for m in y_masses]
    exact = all(is_exact(m) for m in x_masses) and all(is_exact(m) for m in y_masses)
    if any(m <= 0 for m in xm) or any(m <= 0 for m in ym):
        raise ValidationError("all atom masses must be strictly positive")

    if utility.family == "neg_distance_lp":
        if x_atoms is None or y_atoms is None:
            raise ValidationError("point markets need atom coordinates")
        xa = np.asarray(x_atoms, dtype=float)
        ya = np.asarray(y_atoms, dtype=float)
        # A flat list of scalars means points on the line, except when the
        # mass count says it is a single point in R^n.
        if xa.ndim == 1:
            xa = xa[None, :] if len(xm) == 1 and xa.shape[0] != 1 else xa[:, None]
        if ya.ndim == 1:
            ya = ya[None, :] if len(ym) == 1 and ya.shape[0] != 1 else ya[:, None]
        if xa.ndim != 2 or ya.ndim != 2 or xa.shape[1] != ya.shape[1]:
            raise ValidationError("atom arrays must share one ambient dimension")
        if xa.shape[0] != len(xm) or ya.shape[0] != len(ym):
            raise ValidationError("atom/mass lengths differ")
        if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
            raise ValidationError("atom coordinates must be finite")
        xa, xm = _dedupe_points(xa, xm)
        ya, ym = _dedupe_points(ya, ym)
        xl = yl = None
    else:
        if x_atoms is not None or y_atoms is not None:
            raise ValidationError("matrix markets index atoms by label, not point")
        xl = tuple(x_labels) if x_labels is not None else tuple(
            f"x{i}" for i in range(len(xm))
        )
        yl = tuple(y_labels) if y_labels is not None else tuple(
            f"y{j}" for j in range(len(ym))
        )
        if len(set(xl)) != len(xl) or len(set(yl)) != len(yl):
            raise ValidationError("duplicate labels on one side")
        if len(xl) != len(xm) or len(yl) != len(ym):
            raise ValidationError("label/mass lengths differ")
        xa = ya = None

    mx, my = sum(xm), sum(ym)
    scale = max(1.0, float(mx), float(my))
    if abs(float(mx - my)) > TAU_MASS * scale:
        if not pad_unbalanced:
            raise ValidationError(
                f"sides do not balance: {float(mx)} vs {float(my)} "
                "(pass pad_unbalanced=True to add a zero-utility dummy)"
            )
        # Dummy padding turns the market into a table market: the dummy has
        # utility 0 against every partner, matching the usual opt-out agent.
        u = DiscreteMarket(
            utility=utility,
            x_masses=np.array([float(m) for m in xm]),
            y_masses=np.array([float(m) for m in ym]),
            x_atoms=xa,
            y_atoms=ya,
            x_labels=xl,
            y_labels=yl,
        ).utility_matrix() if utility.family == "neg_distance_lp" else np.array(
            utility.values
        )
        if xl is None:
            xl = tuple(f"x{i}" for i in range(len(xm)))
            yl = tuple(f"y{j}" for j in range(len(ym)))
        if mx < my:
            u = np.vstack([u, np.zeros((1, u.shape[1]))])
            xm = xm + [my - mx]
            xl = xl + ("dummy",)
        else:
            u = np.hstack([u, np.zeros((u.shape[0], 1))])
            ym = ym + [mx - my]
            yl = yl + ("dummy",)
        return discrete_market(
            UtilitySpec.table(u), xm, ym, x_labels=xl, y_labels=yl
        )

    return DiscreteMarket(
        utility=utility,
        x_masses=freeze_array(np.array([float(m) for m in xm])),
        y_masses=freeze_array(np.array([float(m) for m in ym])),
        x_atoms=freeze_array(xa) if xa is not None else None,
        y_atoms=freeze_array(ya) if ya is not None else None,
        x_labels=xl,
        y_labels=yl,
        x_exact=tuple(xm) if exact else None,
        y_exact=tuple(ym) if exact else None,
    )


# ---------------------------------------------------------------------------
# couplings


@dataclass(frozen=True, eq=False)
class Coupling:
    """Sparse transport plan over a discrete market.

    Entries are (i, j, mass) with strictly positive mass, unique (i, j)
    keys (duplicates are merged at construction), sorted lexicographically.
    Marginals must match the market masses within ``TAU_MASS``.
    """

    market: DiscreteMarket
    entries: tuple[tuple[int, int, float], ...]
    exact_masses: tuple[Fraction, ...] | None = None

    @property
    def total_mass(self) -> float:
        return float(sum(m for _, _, m in self.entries))

    def matrix(self) -> np.ndarray:
        out = np.zeros((self.market.n_x, self.market.n_y))
        for i, j, m in self.entries:
            out[i, j] = m
        return out

    def support(self, tau: float = TAU_SUPP):
        """Entries after dropping numerical dust below tau * total_mass."""
        cut = tau * self.total_mass
        return [e for e in self.entries if e[2] > cut]


def coupling(market: DiscreteMarket, entries) -> Coupling:
    """Validating constructor for :class:`Coupling`; merges duplicate keys."""
    acc: dict[tuple[int, int], Fraction] = {}
    exact = True
    for i, j, m in entries:
        i, j = int(i), int(j)
        if not (0 <= i < market.n_x and 0 <= j < market.n_y):
            raise ValidationError(f"entry index ({i}, {j}) out of range")
        exact = exact and is_exact(m)
        q = as_fraction(m)
        if q < 0:
            raise ValidationError("coupling masses must be nonnegative")
        if q > 0:
            acc[(i, j)] = acc.get((i, j), Fraction(0)) + q
    keys = sorted(acc)
    row = np.zeros(market.n_x)
    col = np.zeros(market.n_y)
    for (i, j), q in acc.items():
        row[i] += float(q)
        col[j] += float(q)
    scale = max(1.0, market.total_mass)
    if np.max(np.abs(row - market.x_masses), initial=0.0) > TAU_MASS * scale or np.max(
        np.abs(col - market.y_masses), initial=0.0
    ) > TAU_MASS * scale:
        raise ValidationError("coupling marginals do not match the market")
    return Coupling(
        market=market,
        entries=tuple((i, j, float(acc[(i, j)])) for i, j in keys),
        exact_masses=tuple(acc[k] for k in keys) if exact else None,
    )


# ---------------------------------------------------------------------------
# piecewise-constant line markets


@dataclass(frozen=True, eq=False)
class PiecewiseDensityMarket:
    """Piecewise-constant densities for both sides on a shared breakpoint grid.

    ``breakpoints`` has length m+1 and is strictly increasing; interval i is
    [breakpoints[i], breakpoints[i+1]) and carries constant densities
    ``mu[i]`` and ``nu[i]``.  All values live as exact Fractions; float
    inputs are converted exactly.  The two sides must carry equal total mass
    within ``TAU_MASS``: an exactly-zero imbalance is kept as is, a tiny
    nonzero one is removed by exactly rescaling nu, anything larger is
    rejected.
    """

    breakpoints: tuple[Fraction, ...]
    mu: tuple[Fraction, ...]
    nu: tuple[Fraction, ...]
    exact: bool = True

    @property
    def n_intervals(self) -> int:
        return len(self.mu)

    def widths(self) -> tuple[Fraction, ...]:
        b = self.breakpoints
        return tuple(b[i + 1] - b[i] for i in range(len(b) - 1))

    def mu_mass(self) -> Fraction:
        return sum(
            (f * w for f, w in zip(self.mu, self.widths())), start=Fraction(0)
        )

    def nu_mass(self) -> Fraction:
        return sum(
            (g * w for g, w in zip(self.nu, self.widths())), start=Fraction(0)
        )


def line_market(breakpoints, mu_density, nu_density) -> PiecewiseDensityMarket:
    """Validating constructor for :class:`PiecewiseDensityMarket`."""
    b = tuple(as_fraction(v) for v in breakpoints)
    f = tuple(as_fraction(v) for v in mu_density)
    g = tuple(as_fraction(v) for v in nu_density)
    exact = all(
        is_exact(v) for v in (*breakpoints, *mu_density, *nu_density)
    )
    if len(b) < 2 or len(f) != len(b) - 1 or len(g) != len(b) - 1:
        raise ValidationError("need m+1 breakpoints and m densities per side")
    if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
        raise ValidationError("breakpoints must be strictly increasing")
    if any(v < 0 for v in f) or any(v < 0 for v in g):
        raise ValidationError("densities must be nonnegative")
    m = PiecewiseDensityMarket(breakpoints=b, mu=f, nu=g, exact=exact)
    mf, mg = m.mu_mass(), m.nu_mass()
    if mf <= 0 or mg <= 0:
        raise ValidationError("each side needs positive total mass")
    scale = max(1.0, float(mf))
    if abs(float(mf - mg)) > TAU_MASS * scale:
        raise ValidationError(
            f"sides do not balance: {float(mf)} vs {float(mg)}"
        )
    if mf != mg:
        g = tuple(v * mf / mg for v in g)
        m = PiecewiseDensityMarket(breakpoints=b, mu=f, nu=g, exact=exact)
    return m


def discretize_line_market(
    m: PiecewiseDensityMarket, cells_per_interval: int
) -> DiscreteMarket:
    """Midpoint discretization of a line market.

    Every constancy interval is split into ``cells_per_interval`` equal
    cells; a side with positive density on the interval contributes one atom
    per cell at the cell midpoint with mass density * cell_width.  Total
    mass per side is preserved exactly (midpoints and masses are computed in
    Fraction arithmetic before any float conversion).
    """
    if cells_per_interval < 1:
        raise ValidationError("cells_per_interval must be >= 1")
    xs: list[Fraction] = []
    xm: list[Fraction] = []
    ys: list[Fraction] = []
    ym: list[Fraction] = []
    for i in range(m.n_intervals):
        lo, hi = m.breakpoints[i], m.breakpoints[i + 1]
        w = (hi - lo) / cells_per_interval
        for c in range(cells_per_interval):
            mid = lo + w * c + w / 2
            if m.mu[i] > 0:
                xs.append(mid)
                xm.append(m.mu[i] * w)
            if m.nu[i] > 0:
                ys.append(mid)
                ym.append(m.nu[i] * w)
    return discrete_market(
        UtilitySpec.neg_distance(p=2.0),
        xm,
        ym,
        x_atoms=np.array([[float(v)] for v in xs]),
        y_atoms=np.array([[float(v)] for v in ys]),
    )


# ---------------------------------------------------------------------------
# derived quantities


def nash_bargaining_reduce(
    m: DiscreteMarket, beta: float | None = None
) -> tuple[DiscreteMarket, Callable[[float], float]]:
    """Reduce a Nash-bargaining market to its aligned representative.

    Returns the market whose table utility is the transferable surplus, plus
    the guarantee transform: a stability slack eps on the surplus market
    costs each partner at most eps / min(beta, 1 - beta) in Nash value, so
    the transform maps eps -> eps / min(beta, 1 - beta).
    """
    if beta is None:
        beta = m.utility.beta
    if beta is None or not (0.0 < float(beta) < 1.0):
        raise ValidationError("need a bargaining weight beta in (0, 1)")
    beta = float(beta)
    surplus = m.utility_matrix()
    reduced = DiscreteMarket(
        utility=UtilitySpec.table(surplus),
        x_masses=m.x_masses,
        y_masses=m.y_masses,
        x_labels=m.x_labels or tuple(f"x{i}" for i in range(m.n_x)),
        y_labels=m.y_labels or tuple(f"y{j}" for j in range(m.n_y)),
        x_exact=m.x_exact,
        y_exact=m.y_exact,
    )
    factor = 1.0 / min(beta, 1.0 - beta)

    def eps_transform(eps: float) -> float:
        return eps * factor

    return reduced, eps_transform


def compute_delta(m: DiscreteMarket) -> float:
    """Minimum nonzero utility gap along rows and columns.

    The gap of a market is min |u(x, y) - u(x, y')| over same-x pairs united
    with min |u(x, y) - u(x', y)| over same-y pairs, excluding zero gaps;
    if every gap is zero (all utilities equal per line) the gap is 0.  A
    coupling that is eps-stable with eps below this gap is exactly stable.

    Gaps below 1e-12 of the utility span count as ties: they are rounding
    residue of values that agree (one ulp apart), not genuine preferences.
    """
    u = m.utility_matrix()
    lo, hi = float(np.min(u)), float(np.max(u))
    dust = 1e-12 * max(1.0, hi - lo)
    best = np.inf
    for axis in (1, 0):
        s = np.sort(u, axis=axis)
        d = np.abs(np.diff(s, axis=axis))
        pos = d[d > dust]
        if pos.size:
            best = min(best, float(pos.min()))
    return 0.0 if not np.isfinite(best) else best
