"""Markets with k >= 2 sides coupled through a dense utility tensor.

The two-sided machinery generalizes: a coupling is a nonnegative tensor
with the k side masses as marginals, the cost family applies cellwise,
and the solver hands the linear program to HiGHS (dual simplex, so the
returned point is a vertex of the transportation polytope and its support
cannot exceed sum(n_i) - k + 1).  Cross-tuple stability compares each
assembled tuple against the best-off of its k donors, and the welfare
guarantee weakens from one half to one k-th.

Tensors are dense by design; the cell count is capped, and anything
larger belongs to a sparser formulation than this module provides.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import inf, isclose

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ._common import TAU_MASS, TAU_SUPP, SolverError, ValidationError, as_fraction, is_exact
from .transport import BoundContext, CostSpec, cost_eval, theoretical_bounds

__all__ = [
    "KMarket",
    "KCoupling",
    "KSolveReport",
    "KAuditReport",
    "k_market",
    "solve_k_transport",
    "k_stability_gap",
    "k_bottleneck_bound",
    "k_egalitarian_eps",
    "k_audits",
    "organ_exchange_market",
]

MAX_CELLS = 200_000


@dataclass(frozen=True, eq=False)
class KMarket:
    utilities: np.ndarray
    masses: tuple[np.ndarray, ...]
    labels: tuple[tuple[str, ...], ...] | None = None
    exact_masses: tuple[tuple[Fraction, ...], ...] | None = None

    @property
    def k(self) -> int:
        return self.utilities.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.utilities.shape

    @property
    def total_mass(self) -> float:
        return float(self.masses[0].sum())

    @property
    def exact(self) -> bool:
        return self.exact_masses is not None


def k_market(utilities, masses, labels=None) -> KMarket:
    """Validating constructor: k sides, balanced positive masses."""
    u = np.asarray(utilities, dtype=float)
    if u.ndim < 2:
        raise ValidationError("utility tensor needs at least two axes")
    if u.size > MAX_CELLS:
        raise ValidationError(
            f"tensor has {u.size} cells; the dense formulation is capped at {MAX_CELLS}"
        )
    if not np.all(np.isfinite(u)):
        raise ValidationError("utilities must be finite")
    if len(masses) != u.ndim:
        raise ValidationError("need one mass vector per tensor axis")
    exact = all(is_exact(v) for side in masses for v in side)
    sides = []
    for axis, side in enumerate(masses):
        vec = np.asarray([float(as_fraction(v)) for v in side])
        if len(vec) != u.shape[axis]:
            raise ValidationError(f"side {axis} mass length does not match the tensor")
        if np.any(vec <= 0):
            raise ValidationError("masses must be strictly positive")
        sides.append(vec)
    totals = [s.sum() for s in sides]
    scale = max(1.0, totals[0])
    if max(totals) - min(totals) > TAU_MASS * scale:
        raise ValidationError("all sides must carry the same total mass")
    lab = None
    if labels is not None:
        lab = tuple(tuple(str(x) for x in side) for side in labels)
        if any(len(l) != n for l, n in zip(lab, u.shape)):
            raise ValidationError("label lengths do not match the tensor")
    ex = (
        tuple(tuple(as_fraction(v) for v in side) for side in masses)
        if exact
        else None
    )
    frozen = u.copy()
    frozen.setflags(write=False)
    return KMarket(
        utilities=frozen,
        masses=tuple(np.asarray(s) for s in sides),
        labels=lab,
        exact_masses=ex,
    )


@dataclass(frozen=True, eq=False)
class KCoupling:
    market: KMarket
    entries: tuple[tuple[tuple[int, ...], float], ...]

    @property
    def total_mass(self) -> float:
        return float(sum(m for _, m in self.entries))

    def support(self, tau: float = TAU_SUPP):
        cut = tau * self.total_mass
        return [(idx, m) for idx, m in self.entries if m > cut]


def _marginal_system(shape):
    """Sparse equality system: one row per (side, index), one col per cell."""
    n_cells = int(np.prod(shape))
    k = len(shape)
    grids = np.indices(shape).reshape(k, n_cells)
    rows = []
    offset = 0
    for axis in range(k):
        rows.append(grids[axis] + offset)
        offset += shape[axis]
    row_idx = np.concatenate(rows)
    col_idx = np.tile(np.arange(n_cells), k)
    data = np.ones(len(row_idx))
    return sparse.csr_matrix(
        (data, (row_idx, col_idx)), shape=(offset, n_cells)
    )


@dataclass(frozen=True)
class KSolveReport:
    coupling: KCoupling
    objective: float
    iterations: int
    cost: CostSpec


def solve_k_transport(market: KMarket, cost: CostSpec) -> KSolveReport:
    """Minimize the cellwise cost over couplings of the k marginals.

    The cost tensor is shifted (only the utility span matters to the
    family) and rescaled to [0, 1] before the simplex sees it; both maps
    are affine, so the argmin is untouched, and the reported objective is
    re-evaluated against the true costs on the solution support.
    """
    u = market.utilities
    shift = float(np.max(u)) if (cost.family == "alpha" and cost.alpha > 0) else float(np.min(u))
    if cost.family == "neg_utility":
        shift = 0.0
    c = cost_eval(cost, u - shift)
    lo, hi = float(np.min(c)), float(np.max(c))
    span = hi - lo
    c_norm = (c - lo) / span if span > 0 else np.zeros_like(c)

    A = _marginal_system(market.shape)
    b = np.concatenate([s for s in market.masses])
    res = linprog(
        c_norm.ravel(),
        A_eq=A,
        b_eq=b,
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status != 0:
        raise SolverError(f"multiway solve failed: {res.message}")
    x = res.x
    cut = 1e-12 * market.total_mass
    entries = []
    for flat in np.nonzero(x > cut)[0]:
        idx = tuple(int(v) for v in np.unravel_index(flat, market.shape))
        entries.append((idx, float(x[flat])))
    entries.sort()
    support_cap = sum(market.shape) - market.k + 1
    if len(entries) > support_cap:
        raise SolverError(
            f"solver returned {len(entries)} support cells; a vertex has at most {support_cap}"
        )
    plan = KCoupling(market=market, entries=tuple(entries))
    obj = float(sum(m * cost_eval(cost, u[idx]) for idx, m in entries))
    return KSolveReport(
        coupling=plan,
        objective=obj,
        iterations=int(getattr(res, "nit", 0)),
        cost=cost,
    )


def k_stability_gap(
    plan: KCoupling,
    tau: float = TAU_SUPP,
    sample_budget: int = 100_000,
    seed: int = 0,
    return_witness: bool = False,
):
    """Largest gain of an assembled tuple over its best-off donor.

    A candidate tuple takes side s from the s-th of k supported tuples;
    its utility is compared with the maximum utility among the donors.
    All k-tuples of support cells are enumerated when that stays within
    the budget, otherwise a seeded sample of the same size is drawn (the
    result is then a lower bound on the true gap).  With return_witness
    the result is a (gap, blocking tuple) pair, the tuple being the
    assembled type indices of the worst offender (None when the gap
    clips to zero).
    """
    supp = plan.support(tau)
    if not supp:
        raise ValidationError("coupling has empty support")
    u = plan.market.utilities
    k = plan.market.k
    S = np.array([idx for idx, _ in supp])
    own = np.array([float(u[tuple(idx)]) for idx, _ in supp])
    s = len(supp)
    if s**k <= sample_budget:
        cols = [S[:, axis] for axis in range(k)]
        cross = u[np.ix_(*cols)]
        worst = own.reshape((s,) + (1,) * (k - 1))
        best = worst
        for axis in range(1, k):
            shape = [1] * k
            shape[axis] = s
            best = np.maximum(best, own.reshape(shape))
        diff = cross - best
        flat = int(np.argmax(diff))
        donors = np.unravel_index(flat, diff.shape)
        gap = float(diff[donors])
        assembled = tuple(int(S[donors[axis], axis]) for axis in range(k))
    else:
        rng = np.random.default_rng(seed)
        picks = rng.integers(0, s, size=(sample_budget, k))
        donor_best = own[picks].max(axis=1)
        coords = tuple(S[picks[:, axis], axis] for axis in range(k))
        diffs = u[coords] - donor_best
        best_row = int(np.argmax(diffs))
        gap = float(diffs[best_row])
        assembled = tuple(int(c[best_row]) for c in coords)
    if not return_witness:
        return max(gap, 0.0)
    if gap <= 0.0:
        return 0.0, None
    return gap, assembled


def k_bottleneck_bound(market: KMarket) -> float:
    """Best achievable worst-cell utility, by thresholded feasibility LPs."""
    u = market.utilities
    values = np.unique(u)
    A = _marginal_system(market.shape)
    b = np.concatenate([s for s in market.masses])
    span = max(1.0, float(values[-1] - values[0]))
    cushion = 1e-12 * span

    def feasible(v: float) -> bool:
        blocked = (u < v - cushion).ravel()
        bounds = [(0, 0) if blk else (0, None) for blk in blocked]
        res = linprog(
            np.zeros(u.size), A_eq=A, b_eq=b, bounds=bounds, method="highs-ds"
        )
        return res.status == 0

    lo, hi = 0, len(values) - 1
    if not feasible(values[lo]):
        raise ValidationError("market admits no feasible coupling at all")
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if feasible(values[mid]):
            lo = mid
        else:
            hi = mid - 1
    return float(values[lo])


def k_egalitarian_eps(
    plan: KCoupling, opt: float | None = None, tau: float = TAU_SUPP
) -> float:
    """Smallest eps with mass(u < opt - eps) <= eps * total on the support."""
    if opt is None:
        opt = k_bottleneck_bound(plan.market)
    supp = plan.support(tau)
    u = plan.market.utilities
    total = sum(m for _, m in supp)
    buckets: dict[float, float] = {}
    for idx, m in supp:
        v = float(u[tuple(idx)])
        buckets[v] = buckets.get(v, 0.0) + m
    best = inf
    below = 0.0
    for v in sorted(buckets):
        best = min(best, max(opt - v, below / total, 0.0))
        below += buckets[v]
    return float(best)


@dataclass(frozen=True)
class KAuditReport:
    stability_eps: float
    welfare: float
    bottleneck_opt: float
    egalitarian_eps: float
    welfare_shifted: float
    welfare_opt_shifted: float
    welfare_lower_bound: float | None
    welfare_ok: bool | None
    egalitarian_limit: float
    egalitarian_ok: bool
    bounds: BoundContext | None


def k_audits(
    plan: KCoupling, alpha: float | None = None, tol: float = 1e-9
) -> KAuditReport:
    """Stability, welfare, and bottleneck audit for a k-sided coupling.

    The welfare guarantee W >= (W* - eps) / k after shifting utilities to
    be nonnegative applies on unit populations; on other masses the bound
    fields are None.  The egalitarian limit max(1/k, eps) is checked
    either way.
    """
    market = plan.market
    u = market.utilities
    k = market.k
    eps = k_stability_gap(plan)
    w = float(sum(m * u[tuple(idx)] for idx, m in plan.entries))
    b_opt = k_bottleneck_bound(market)
    e_eps = k_egalitarian_eps(plan, opt=b_opt)
    u_min = float(np.min(u))
    opt = -solve_k_transport(market, CostSpec.neg_utility()).objective
    w_shift = w - u_min * market.total_mass
    opt_shift = opt - u_min * market.total_mass
    unit = isclose(market.total_mass, 1.0, abs_tol=1e-9)
    bound = ok = None
    if unit:
        bound = (opt_shift - eps) / k
        ok = w_shift >= bound - tol * max(1.0, abs(opt_shift))
    e_limit = max(1.0 / k, eps)
    e_ok = e_eps <= e_limit + tol
    bounds = theoretical_bounds(alpha, sides=k) if alpha is not None else None
    return KAuditReport(
        stability_eps=eps,
        welfare=w,
        bottleneck_opt=b_opt,
        egalitarian_eps=e_eps,
        welfare_shifted=w_shift,
        welfare_opt_shifted=opt_shift,
        welfare_lower_bound=bound,
        welfare_ok=ok,
        egalitarian_limit=e_limit,
        egalitarian_ok=e_ok,
        bounds=bounds,
    )


def organ_exchange_market(
    type_masses: dict[str, object],
    compat: dict[tuple[str, str], object],
    k: int = 3,
    penalty: float | None = None,
    dummy_mass: float | None = None,
) -> KMarket:
    """Paired-exchange pools embedded in a k-way clearing platform.

    Each side carries the same roster of agents plus one "dummy" slot.
    A type's entry in ``type_masses`` is either a bare mass (one
    sizeless agent of that type) or a list of ``(point, mass)`` pairs,
    where the point records the agent's donor/recipient sizes.  A
    cleared tuple with exactly two real agents earns the compatibility
    surplus of that ordered type pair (sides are role-ordered, donor
    first); the surplus under ``compat`` may be a number or a callable
    receiving the two agents' size points.  A tuple whose reals are not
    a listed pair, or with three or more reals, is priced at -penalty
    so no optimal clearing uses it; tuples with at most one real agent
    are neutral opt-outs.  The dummy mass defaults to the total real
    mass per side, leaving room for everyone to stay out.
    """
    if k < 2:
        raise ValidationError("need at least two sides")
    if not type_masses:
        raise ValidationError("need at least one agent type")

    # Flatten the roster: one atom per sizeless type, one per size point
    # otherwise.  Atom order follows the dict, then each type's list.
    atom_type: list[str] = []
    atom_point: list[tuple[float, ...] | None] = []
    atom_mass: list[Fraction] = []
    atom_label: list[str] = []
    for t, entry in type_masses.items():
        if isinstance(entry, (list, tuple)):
            if not entry:
                raise ValidationError(f"type {t!r} has no atoms")
            for j, (point, mass) in enumerate(entry):
                pt = point if isinstance(point, (list, tuple)) else (point,)
                atom_type.append(t)
                atom_point.append(tuple(float(c) for c in pt))
                atom_mass.append(as_fraction(mass))
                atom_label.append(f"{t}#{j}" if len(entry) > 1 else t)
        else:
            atom_type.append(t)
            atom_point.append(None)
            atom_mass.append(as_fraction(entry))
            atom_label.append(t)

    pair_q = {}
    for (a, b), qv in compat.items():
        if a not in type_masses or b not in type_masses:
            raise ValidationError(f"compat pair ({a}, {b}) names an unknown type")
        pair_q[(a, b)] = qv if callable(qv) else float(as_fraction(qv))

    def edge_value(a: int, b: int) -> float | None:
        qv = pair_q.get((atom_type[a], atom_type[b]))
        if qv is None:
            return None
        if callable(qv):
            return float(qv(atom_point[a], atom_point[b]))
        return qv

    if penalty is None:
        worst = 1.0
        for a in range(len(atom_type)):
            for b in range(len(atom_type)):
                qv = edge_value(a, b)
                if qv is not None:
                    worst = max(worst, abs(qv))
        penalty = 1.0 + 2.0 * worst

    total = sum(atom_mass, Fraction(0))
    dummy = as_fraction(dummy_mass) if dummy_mass is not None else total
    if dummy <= 0:
        raise ValidationError("dummy mass must be positive")
    r = len(atom_type)
    n = r + 1
    if n**k > MAX_CELLS:
        raise ValidationError("too many types for the dense tensor cap")

    u = np.empty((n,) * k)
    for idx in product(range(n), repeat=k):
        reals = [(axis, t) for axis, t in enumerate(idx) if t < r]
        if len(reals) <= 1:
            u[idx] = 0.0
        elif len(reals) == 2:
            (_, a), (_, b) = reals
            qv = edge_value(a, b)
            u[idx] = -penalty if qv is None else qv
        else:
            u[idx] = -penalty
    side = list(atom_mass) + [dummy]
    labels = tuple(tuple(atom_label + ["dummy"]) for _ in range(k))
    return k_market(u, [side] * k, labels=labels)
