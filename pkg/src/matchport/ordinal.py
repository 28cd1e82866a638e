"""From ordinal rankings to cardinal utilities, when that is possible.

Agents here rank the other side instead of producing numbers.  Put the
couples Z = X x Y in a directed graph: (x, y) -> (x, y') when x weakly
prefers y' to y, and (x, y) -> (x', y) when y weakly prefers x' to x,
marking the edge strict on a strict preference.  A cardinal utility
aligned with both sides' rankings exists exactly when no directed cycle
carries a strict edge, and one witness utility is

    u(z) = sum of 2^(-r(z')) over couples z' that reach z,

with r the row-major position of z' (from 1).  Distinct dyadic weights
make strict preferences strictly profitable while ties collapse to equal
reachable sets, so the potential reproduces the rankings.

Everything runs on the boolean transitive closure (repeated squaring of
the adjacency matrix), which both functions share.  Potentials are kept
as exact dyadic Fractions; their float image loses nothing as long as the
couple count stays within the 52 mantissa bits of a double.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._common import ValidationError
from .markets import DiscreteMarket, UtilitySpec, discrete_market

__all__ = [
    "PreferenceProfile",
    "AcyclicityCheck",
    "Potential",
    "preference_profile",
    "check_acyclicity",
    "build_potential",
    "potential_market",
]


@dataclass(frozen=True, eq=False)
class PreferenceProfile:
    """Complete rankings: ``x_ranks[i, j]`` is how x_i ranks y_j (0 best).

    Ties are allowed; only the order within each row matters.
    """

    x_ranks: np.ndarray
    y_ranks: np.ndarray

    @property
    def n_x(self) -> int:
        return self.x_ranks.shape[0]

    @property
    def n_y(self) -> int:
        return self.y_ranks.shape[0]


def preference_profile(x_ranks, y_ranks) -> PreferenceProfile:
    xr = np.asarray(x_ranks, dtype=int)
    yr = np.asarray(y_ranks, dtype=int)
    if xr.ndim != 2 or yr.ndim != 2:
        raise ValidationError("rank tables must be two-dimensional")
    if xr.shape[0] != yr.shape[1] or xr.shape[1] != yr.shape[0]:
        raise ValidationError(
            "rank tables disagree: x_ranks is (n_x, n_y), y_ranks is (n_y, n_x)"
        )
    xr = xr.copy()
    yr = yr.copy()
    xr.setflags(write=False)
    yr.setflags(write=False)
    return PreferenceProfile(x_ranks=xr, y_ranks=yr)


def _couple_graph(profile: PreferenceProfile):
    """Weak adjacency and strict mask over couples, row-major order."""
    nx, ny = profile.n_x, profile.n_y
    n = nx * ny
    weak = np.zeros((n, n), dtype=bool)
    strict = np.zeros((n, n), dtype=bool)
    for i in range(nx):
        r = profile.x_ranks[i]
        sl = slice(i * ny, (i + 1) * ny)
        weak[sl, sl] = r[None, :] <= r[:, None]
        strict[sl, sl] = r[None, :] < r[:, None]
    for j in range(ny):
        r = profile.y_ranks[j]
        idx = np.arange(nx) * ny + j
        weak[np.ix_(idx, idx)] |= r[None, :] <= r[:, None]
        strict[np.ix_(idx, idx)] |= r[None, :] < r[:, None]
    np.fill_diagonal(weak, True)
    return weak, strict


def _closure(adj: np.ndarray) -> np.ndarray:
    reach = adj.copy()
    while True:
        nxt = reach @ reach
        if np.array_equal(nxt, reach):
            return reach
        reach = nxt


@dataclass(frozen=True)
class AcyclicityCheck:
    acyclic: bool
    witness: tuple[tuple[int, int], ...] | None


def _find_path(adj: np.ndarray, src: int, dst: int) -> list[int]:
    prev = {src: -1}
    queue = deque([src])
    while queue:
        v = queue.popleft()
        if v == dst:
            path = [v]
            while prev[path[-1]] != -1:
                path.append(prev[path[-1]])
            return path[::-1]
        for w in np.nonzero(adj[v])[0]:
            if w not in prev:
                prev[int(w)] = v
                queue.append(int(w))
    raise AssertionError("closure promised a path that BFS cannot find")


def check_acyclicity(profile: PreferenceProfile) -> AcyclicityCheck:
    """Does any directed couple cycle carry a strict preference?

    Returns the verdict plus, when cyclic, a witness cycle as a list of
    couples (x index, y index) whose consecutive moves are all weakly
    preferred and at least one strictly.
    """
    weak, strict = _couple_graph(profile)
    reach = _closure(weak)
    bad = strict & reach.T  # strict edge u -> v with v reaching back to u
    if not bad.any():
        return AcyclicityCheck(acyclic=True, witness=None)
    u, v = map(int, np.argwhere(bad)[0])
    loop = _find_path(weak & ~np.eye(len(weak), dtype=bool), v, u) + [v]
    ny = profile.n_y
    couples = tuple((z // ny, z % ny) for z in loop)
    return AcyclicityCheck(acyclic=False, witness=couples)


@dataclass(frozen=True, eq=False)
class Potential:
    """Cardinal utilities over couples that reproduce the rankings."""

    values: np.ndarray
    exact: tuple[tuple[Fraction, ...], ...]

    @property
    def float_exact(self) -> bool:
        # Dyadic weights 2^-1 .. 2^-r fit a double's mantissa up to 52
        return self.values.size <= 52


def build_potential(profile: PreferenceProfile) -> Potential:
    """The reachability potential, exact over dyadic Fractions.

    Raises when the profile has a strict cycle (no aligned cardinal
    utility exists); check first with :func:`check_acyclicity` to get the
    witness instead of an error.
    """
    weak, strict = _couple_graph(profile)
    reach = _closure(weak)
    if (strict & reach.T).any():
        raise ValidationError(
            "preferences admit a strict cycle; no aligned utility exists"
        )
    nx, ny = profile.n_x, profile.n_y
    n = nx * ny
    weights = [Fraction(1, 2**r) for r in range(1, n + 1)]
    flat = []
    for z in range(n):
        below = np.nonzero(reach[:, z])[0]
        flat.append(sum((weights[int(w)] for w in below), Fraction(0)))
    exact = tuple(
        tuple(flat[i * ny + j] for j in range(ny)) for i in range(nx)
    )
    values = np.array([[float(q) for q in row] for row in exact])
    values.setflags(write=False)
    return Potential(values=values, exact=exact)


def potential_market(
    profile: PreferenceProfile, x_masses=None, y_masses=None
) -> DiscreteMarket:
    """Discrete market whose table utility is the profile's potential.

    Default masses are uniform with unit totals on both sides, which
    keeps the welfare and egalitarian audits directly applicable.
    """
    pot = build_potential(profile)
    nx, ny = profile.n_x, profile.n_y
    if x_masses is None:
        x_masses = [Fraction(1, nx)] * nx
    if y_masses is None:
        y_masses = [Fraction(1, ny)] * ny
    return discrete_market(
        UtilitySpec.table(pot.values), x_masses, y_masses
    )
