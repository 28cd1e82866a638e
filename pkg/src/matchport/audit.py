"""Independent checks on couplings: stability, welfare, bottleneck fairness.

Everything here recomputes its verdict from the coupling and the market
alone.  In particular the bottleneck optimum runs on a max-flow
feasibility search, not on the transport solver, so the two routes can
disagree loudly when one of them is wrong.

Conventions.  The stability gap of a coupling is the largest amount any
cross pair (x1, y2) of two supported pairs (x1, y1), (x2, y2) would gain
over the better-off current partner:

    gap = max u(x1, y2) - max(u(x1, y1), u(x2, y2))

clipped at zero; a gap of eps means eps-stability.  A coupling is
eps-egalitarian when the mass of supported pairs with utility below
(bottleneck optimum - eps) is at most eps times the total mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from math import gcd, inf, isclose

import numpy as np

from ._common import TAU_SUPP, ValidationError
from ._maxflow import bipartite_feasible
from .markets import Coupling, DiscreteMarket

__all__ = [
    "AuditReport",
    "WelfareBoundCheck",
    "BruteForceReport",
    "stability_gap",
    "welfare",
    "egalitarian_value",
    "egalitarian_bound",
    "egalitarian_eps",
    "welfare_bound_check",
    "no_crossing_check",
    "brute_force_oracle",
    "audit_coupling",
]


def _support(plan: Coupling, tau: float):
    supp = plan.support(tau)
    if not supp:
        raise ValidationError("coupling has empty support")
    return supp


def stability_gap(plan: Coupling, tau: float = TAU_SUPP) -> float:
    """Largest blocking-pair improvement over the supported pairs, >= 0."""
    supp = _support(plan, tau)
    u = plan.market.utility_matrix()
    rows = np.array([i for i, _, _ in supp])
    cols = np.array([j for _, j, _ in supp])
    own = u[rows, cols]
    cross = u[np.ix_(rows, cols)]
    worse = np.maximum(own[:, None], own[None, :])
    gap = float(np.max(cross - worse))
    return max(gap, 0.0)


def welfare(plan: Coupling) -> float:
    u = plan.market.utility_matrix()
    return float(sum(m * u[i, j] for i, j, m in plan.entries))


def egalitarian_value(plan: Coupling, tau: float = TAU_SUPP) -> float:
    """Utility of the worst-off supported pair."""
    u = plan.market.utility_matrix()
    return min(float(u[i, j]) for i, j, _ in _support(plan, tau))


def _exact_caps(market: DiscreteMarket):
    masses = list(market.x_exact) + list(market.y_exact)
    denom = 1
    for q in masses:
        denom = denom * q.denominator // gcd(denom, q.denominator)
    a = [int(q * denom) for q in market.x_exact]
    b = [int(q * denom) for q in market.y_exact]
    return a, b


def egalitarian_bound(market: DiscreteMarket) -> float:
    """Best achievable worst-pair utility (the bottleneck optimum).

    Binary search over the distinct utility values; each candidate v asks
    a max-flow feasibility question: can all mass ride on pairs with
    utility >= v?  Exact markets use integer capacities, so the verdict
    does not depend on float dust.
    """
    u = market.utility_matrix()
    values = np.unique(u)
    if market.exact:
        a, b = _exact_caps(market)
        tol = 0
    else:
        a = [float(v) for v in market.x_masses]
        b = [float(v) for v in market.y_masses]
        tol = 1e-9 * max(1.0, float(market.total_mass))

    span = max(1.0, float(values[-1] - values[0]))
    cushion = 1e-12 * span

    def feasible(v: float) -> bool:
        allowed = u >= v - cushion
        return bipartite_feasible(a, b, allowed, tol)

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


def egalitarian_eps(
    plan: Coupling, opt: float | None = None, tau: float = TAU_SUPP
) -> float:
    """Smallest eps for which the coupling is eps-egalitarian.

    Scanning the distinct supported utilities v in increasing order with
    M(v) the mass strictly below v, the answer is

        min over v of max(opt - v, M(v) / total, 0).
    """
    if opt is None:
        opt = egalitarian_bound(plan.market)
    supp = _support(plan, tau)
    u = plan.market.utility_matrix()
    total = sum(m for _, _, m in supp)
    buckets: dict[float, float] = {}
    for i, j, m in supp:
        v = float(u[i, j])
        buckets[v] = buckets.get(v, 0.0) + m
    best = inf
    below = 0.0
    for v in sorted(buckets):
        best = min(best, max(opt - v, below / total, 0.0))
        below += buckets[v]
    return float(best)


@dataclass(frozen=True)
class WelfareBoundCheck:
    eps: float
    welfare_shifted: float
    opt_shifted: float
    lower_bound: float
    egalitarian_eps: float
    egalitarian_limit: float
    welfare_ok: bool
    egalitarian_ok: bool

    @property
    def passed(self) -> bool:
        return self.welfare_ok and self.egalitarian_ok


def welfare_bound_check(
    plan: Coupling, eps: float | None = None, tol: float = 1e-9
) -> WelfareBoundCheck:
    """Check the eps-stability consequences on unit populations.

    After shifting utilities to be nonnegative (subtract their minimum),
    an eps-stable coupling must reach at least half of the optimal
    shifted welfare minus eps / 2, and be max(1/2, eps)-egalitarian.
    Requires both sides to carry unit mass.
    """
    market = plan.market
    if not isclose(float(market.total_mass), 1.0, abs_tol=1e-9):
        raise ValidationError("welfare bound is stated for unit populations")
    if eps is None:
        eps = stability_gap(plan)
    from .transport import CostSpec, solve_transport

    u = market.utility_matrix()
    u_min = float(np.min(u))
    opt = -solve_transport(market, CostSpec.neg_utility()).objective
    w = welfare(plan)
    w_shift = w - u_min
    opt_shift = opt - u_min
    bound = 0.5 * (opt_shift - eps)
    slack = tol * max(1.0, abs(opt_shift))
    e_opt = egalitarian_bound(market)
    e_eps = egalitarian_eps(plan, opt=e_opt)
    e_limit = max(0.5, eps)
    return WelfareBoundCheck(
        eps=float(eps),
        welfare_shifted=w_shift,
        opt_shifted=opt_shift,
        lower_bound=bound,
        egalitarian_eps=e_eps,
        egalitarian_limit=e_limit,
        welfare_ok=w_shift >= bound - slack,
        egalitarian_ok=e_eps <= e_limit + slack,
    )


def no_crossing_check(lm, samples_per_piece: int = 64):
    """Interlacing test for a line matching.

    Samples each Monge piece (endpoints included) and reports two matched
    intervals that strictly cross, i.e. a < a' < b < b', or None when the
    sampled intervals are pairwise nested or disjoint.  Arithmetic is
    exact, so a reported witness is a real crossing.
    """
    intervals = []
    for p in lm.pieces:
        step = (p.hi - p.lo) / (samples_per_piece + 1)
        for s in range(samples_per_piece + 2):
            x = p.lo + step * s
            y = p(x)
            a, b = (x, y) if x <= y else (y, x)
            if a < b:
                intervals.append((a, b, x, y))
    intervals.sort()
    for idx, (a, b, x1, y1) in enumerate(intervals):
        for a2, b2, x2, y2 in intervals[idx + 1 :]:
            if a2 >= b:
                break
            if a < a2 and a2 < b < b2:
                return ((x1, y1), (x2, y2))
    return None


@dataclass(frozen=True)
class BruteForceReport:
    stable: tuple[tuple[int, ...], ...]
    greedy: tuple[int, ...]
    greedy_welfare: float
    welfare_opt: float
    welfare_argmax: tuple[int, ...]
    bottleneck_opt: float
    bottleneck_argmax: tuple[int, ...]


def brute_force_oracle(market: DiscreteMarket) -> BruteForceReport:
    """Ground truth by enumeration for tiny symmetric markets.

    Needs equal atom counts with equal masses so that deterministic
    matchings are exactly the permutations; up to n = 8 that is 40320
    candidates.  Stability of a permutation uses the same cross-pair gap
    as :func:`stability_gap` with exact comparisons.
    """
    n = market.n_x
    if market.n_y != n or n > 8:
        raise ValidationError("oracle handles square markets with n <= 8")
    masses = [float(v) for v in market.x_masses] + [float(v) for v in market.y_masses]
    if any(q != masses[0] for q in masses):
        raise ValidationError("oracle needs equal atom masses")
    u = market.utility_matrix()

    def gap_of(perm) -> float:
        own = [u[i, perm[i]] for i in range(n)]
        g = 0.0
        for i in range(n):
            for k in range(n):
                g = max(g, u[i, perm[k]] - max(own[i], own[k]))
        return g

    stable = []
    best_w, best_w_perm = -inf, None
    best_b, best_b_perm = -inf, None
    for perm in permutations(range(n)):
        w = sum(u[i, perm[i]] for i in range(n))
        b = min(u[i, perm[i]] for i in range(n))
        if gap_of(perm) <= 0:
            stable.append(perm)
        if w > best_w:
            best_w, best_w_perm = w, perm
        if b > best_b:
            best_b, best_b_perm = b, perm

    taken_i, taken_j = set(), set()
    greedy: list[int] = [-1] * n
    masked = u.astype(float).copy()
    for _ in range(n):
        k = int(np.argmax(masked))
        i, j = divmod(k, n)
        greedy[i] = j
        taken_i.add(i)
        taken_j.add(j)
        masked[i, :] = -inf
        masked[:, j] = -inf
    greedy_w = float(sum(u[i, greedy[i]] for i in range(n)))

    return BruteForceReport(
        stable=tuple(stable),
        greedy=tuple(greedy),
        greedy_welfare=greedy_w,
        welfare_opt=float(best_w),
        welfare_argmax=best_w_perm,
        bottleneck_opt=float(best_b),
        bottleneck_argmax=best_b_perm,
    )


@dataclass(frozen=True)
class AuditReport:
    stability_eps: float
    welfare: float
    egalitarian_value: float
    egalitarian_opt: float | None
    egalitarian_eps: float | None
    welfare_check: WelfareBoundCheck | None
    alpha: float | None = None

    def summary(self) -> str:
        parts = [
            f"stability eps = {self.stability_eps:.6g}",
            f"welfare = {self.welfare:.6g}",
            f"worst pair = {self.egalitarian_value:.6g}",
        ]
        if self.egalitarian_opt is not None:
            parts.append(
                f"bottleneck opt = {self.egalitarian_opt:.6g}"
                f" (eps = {self.egalitarian_eps:.6g})"
            )
        if self.welfare_check is not None:
            verdict = "ok" if self.welfare_check.passed else "VIOLATED"
            parts.append(f"welfare bound {verdict}")
        return "; ".join(parts)


def audit_coupling(
    plan: Coupling,
    alpha: float | None = None,
    egalitarian: bool = True,
    tau: float = TAU_SUPP,
) -> AuditReport:
    """Run the full audit battery on one coupling.

    The welfare-consequence check only applies to unit populations and is
    skipped (None) otherwise; the bottleneck searches can be switched off
    for bulk sweeps over large markets.
    """
    eps = stability_gap(plan, tau)
    w = welfare(plan)
    worst = egalitarian_value(plan, tau)
    e_opt = e_eps = None
    if egalitarian:
        e_opt = egalitarian_bound(plan.market)
        e_eps = egalitarian_eps(plan, opt=e_opt, tau=tau)
    check = None
    if isclose(float(plan.market.total_mass), 1.0, abs_tol=1e-9):
        check = welfare_bound_check(plan, eps=eps)
    return AuditReport(
        stability_eps=eps,
        welfare=w,
        egalitarian_value=worst,
        egalitarian_opt=e_opt,
        egalitarian_eps=e_eps,
        welfare_check=check,
        alpha=alpha,
    )
