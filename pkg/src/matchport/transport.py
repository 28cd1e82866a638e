"""Exact optimal-transport solves over the exponential cost family.

The cost of a couple with aligned utility u is

    c_alpha(u) = (1 - exp(alpha * u)) / alpha        (alpha != 0)
    c_0(u)     = -u

which is strictly decreasing in u for every alpha, continuous in alpha at
0, and interpolates between welfare maximization (alpha = 0), stability
(alpha -> +inf), and egalitarian matching (alpha -> -inf).  Minimizers for
positive alpha are ln(2)/alpha-stable; for negative alpha they are
epsilon-egalitarian with epsilon = max(1, ln|alpha|)/|alpha|.

Solves go through a hand-rolled primal network simplex so that solutions
are true vertices of the transportation polytope (support at most
n_x + n_y - 1) with dual certificates, deterministic tie-breaking, pivot
counters, and an optional exact-rational mode for the linear cost.
Internally utilities are shifted by a constant before exponentiation
(an argmin-preserving affine change of cost) so only the utility *span*
matters for overflow, capped at ``ALPHA_SPAN_LIMIT``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, permutations

import numpy as np

from ._common import (
    ALPHA_SPAN_LIMIT,
    SolverError,
    ValidationError,
    as_fraction,
)
from ._simplex import solve_transportation
from .markets import Coupling, DiscreteMarket, coupling

__all__ = [
    "CostSpec",
    "SolveReport",
    "BoundContext",
    "cost_eval",
    "solve_transport",
    "alpha_sweep",
    "stable_limit",
    "check_cyclic_monotone",
    "theoretical_bounds",
]


# ---------------------------------------------------------------------------
# cost specifications

# Named analytic forms for the general increasing-transform cost -h(u).
# Each entry maps a name to (h, h_prime, log_derivative) as closures over
# the single parameter a.
_H_FORMS = {
    # h(t) = exp(a t), positive and increasing for a > 0; h'/h = a.
    "exp": lambda a: (
        lambda t: np.exp(a * t),
        lambda t: a * np.exp(a * t),
        lambda t: np.full_like(np.asarray(t, dtype=float), a),
    ),
    # h(t) = -exp(a t), negative and increasing for a < 0; h'/h = a.
    "neg_exp": lambda a: (
        lambda t: -np.exp(a * t),
        lambda t: -a * np.exp(a * t),
        lambda t: np.full_like(np.asarray(t, dtype=float), a),
    ),
}


@dataclass(frozen=True)
class CostSpec:
    """Cost family tag: 'alpha', 'neg_utility', or 'general_h'."""

    family: str
    alpha: float = 0.0
    h_name: str | None = None
    h_param: float | None = None
    alpha_bound: float | None = None

    def __post_init__(self):
        if self.family not in ("alpha", "neg_utility", "general_h"):
            raise ValidationError(f"unknown cost family {self.family!r}")
        if self.family == "alpha" and not math.isfinite(self.alpha):
            raise ValidationError("alpha must be finite")
        if self.family == "general_h":
            if self.h_name not in _H_FORMS:
                raise ValidationError(
                    f"unknown h form {self.h_name!r}; known: {sorted(_H_FORMS)}"
                )
            if self.h_param is None:
                raise ValidationError("general_h needs its parameter")
            if self.h_name == "exp" and not self.h_param > 0:
                raise ValidationError("exp form needs a positive parameter")
            if self.h_name == "neg_exp" and not self.h_param < 0:
                raise ValidationError("neg_exp form needs a negative parameter")

    @staticmethod
    def alpha_family(alpha: float) -> "CostSpec":
        return CostSpec(family="alpha", alpha=float(alpha))

    @staticmethod
    def neg_utility() -> "CostSpec":
        return CostSpec(family="neg_utility")

    @staticmethod
    def general(h_name: str, h_param: float, alpha_bound: float | None = None) -> "CostSpec":
        return CostSpec(
            family="general_h",
            h_name=h_name,
            h_param=float(h_param),
            alpha_bound=alpha_bound,
        )

    def validate_log_derivative(self, u_lo: float, u_hi: float, samples: int = 64):
        """Check h'(t)/h(t) >= alpha_bound over the utility range.

        For the named exponential forms the log-derivative is constant, but
        the sampled check runs anyway so any future form added to the
        registry is held to the same contract.
        """
        if self.family != "general_h" or self.alpha_bound is None:
            return
        _, _, logd = _H_FORMS[self.h_name](self.h_param)
        grid = np.linspace(u_lo, u_hi, samples)
        vals = np.asarray(logd(grid), dtype=float)
        if np.any(vals < self.alpha_bound - 1e-12):
            raise ValidationError(
                f"log-derivative of {self.h_name} dips below alpha_bound="
                f"{self.alpha_bound} on [{u_lo}, {u_hi}]"
            )


def cost_eval(spec: CostSpec, u):
    """Evaluate the cost of utility values (scalar or array).

    The alpha family uses expm1 so the alpha -> 0 limit is hit smoothly;
    inputs whose exponent overflows float range raise with a hint to shift
    utilities (the solver does this shift internally, so the cap there is
    on the utility span, not its location).
    """
    arr = np.asarray(u, dtype=float)
    if spec.family == "neg_utility":
        out = -arr
    elif spec.family == "alpha":
        a = spec.alpha
        if a == 0.0:
            out = -arr
        else:
            with np.errstate(over="raise"):
                try:
                    out = -np.expm1(a * arr) / a
                except FloatingPointError as exc:
                    raise ValidationError(
                        "cost overflow: alpha * u exceeds float range; "
                        "shift utilities toward 0 or lower |alpha|"
                    ) from exc
    else:
        h, _, _ = _H_FORMS[spec.h_name](spec.h_param)
        with np.errstate(over="raise"):
            try:
                out = -np.asarray(h(arr), dtype=float)
            except FloatingPointError as exc:
                raise ValidationError("cost overflow in general_h form") from exc
    if np.isscalar(u) or np.asarray(u).ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# solve reports


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Outcome of one exact transport solve."""

    coupling: Coupling
    objective: float | Fraction
    iterations: int
    degenerate_pivots: int
    mode: str
    cost: CostSpec
    phi: tuple
    psi: tuple
    dual_shift: float = 0.0
    """Utility shift whose cost matrix the duals certify.

    Zero whenever the certificate could be mapped back to the unshifted
    cost; otherwise phi/psi certify c(u - dual_shift), an affine-equivalent
    cost with the same minimizers.
    """

    def dual_gap_matrix(self, u: np.ndarray) -> np.ndarray:
        """c(u - dual_shift) - phi_i - psi_j; nonnegative at optimality."""
        c = cost_eval(self.cost, u - self.dual_shift)
        return c - np.asarray(self.phi, dtype=float)[:, None] - np.asarray(
            self.psi, dtype=float
        )[None, :]


def _shifted_cost_matrix(spec: CostSpec, u: np.ndarray):
    """Cost matrix on shifted utilities, plus the affine map back.

    Returns (C_shift, shift, scale_B, offset_K) with
    c_true = scale_B * c_shift + offset_K elementwise; scale_B may be None
    when the map itself overflows (callers then keep the shifted scale).
    """
    u_lo, u_hi = float(u.min()), float(u.max())
    if spec.family == "neg_utility" or (spec.family == "alpha" and spec.alpha == 0.0):
        return -u, 0.0, 1.0, 0.0
    if spec.family == "general_h":
        spec.validate_log_derivative(u_lo, u_hi)
        a = spec.h_param
    else:
        a = spec.alpha
    span = abs(a) * (u_hi - u_lo)
    if span > ALPHA_SPAN_LIMIT:
        raise ValidationError(
            f"|alpha| * utility span = {span:.3g} exceeds {ALPHA_SPAN_LIMIT}; "
            "rescale utilities or lower |alpha|"
        )
    shift = u_hi if a > 0 else u_lo
    if spec.family == "general_h":
        h, _, _ = _H_FORMS[spec.h_name](spec.h_param)
        c_shift = -np.asarray(h(u - shift), dtype=float)
        # c_true = -h(u) = exp(a*shift) * (-h(u - shift)) for the exp forms.
        b = math.exp(a * shift) if abs(a * shift) < ALPHA_SPAN_LIMIT else None
        return c_shift, shift, b, 0.0
    c_shift = -np.expm1(a * (u - shift)) / a
    # c_alpha(u) = B * c_alpha(u - shift) + (1 - B)/alpha with B = e^(a*shift).
    if abs(a * shift) < ALPHA_SPAN_LIMIT:
        b = math.exp(a * shift)
        return c_shift, shift, b, (1.0 - b) / a
    return c_shift, shift, None, 0.0


def solve_transport(
    market: DiscreteMarket, cost: CostSpec, mode: str = "auto"
) -> SolveReport:
    """Solve min sum pi_ij c(u(x_i, y_j)) over couplings of the market.

    Returns a basic (vertex) optimum: support has at most n_x + n_y - 1
    entries and carries dual potentials with phi_i + psi_j <= c everywhere
    and equality on the support.  ``mode`` is 'auto' (float), 'float', or
    'rational'; the rational mode runs the whole pivot sequence over
    Fractions and is only available for the linear cost (the exponential
    families are transcendental).

    Float caveat for steep exponential costs: once |alpha| times the
    utility span passes ln(1/eps) ~ 36, cost cells at the shallow end sit
    below one ulp of the largest cell, and no float solver (this one or
    any LP package) can order them.  The returned plan is still optimal
    for the float cost matrix, but approximation guarantees that lean on
    exact optimality, like the ln(2)/alpha stability bound, may fail on
    the unresolvable cells.  Keep |alpha|*(u_max - u_min) under ~30 when
    those guarantees matter; the hard overflow cap sits much higher.
    """
    if mode not in ("auto", "float", "rational"):
        raise ValidationError(f"unknown mode {mode!r}")
    linear = cost.family == "neg_utility" or (
        cost.family == "alpha" and cost.alpha == 0.0
    )
    if mode == "rational":
        if not linear:
            raise ValidationError(
                "rational mode needs the linear cost; exponential costs "
                "have no exact rational representation"
            )
        if not market.exact:
            raise ValidationError("rational mode needs exactly-given masses")
        return _solve_rational(market, cost)

    u = market.utility_matrix()
    c_shift, shift, b, k = _shifted_cost_matrix(cost, u)

    # Affine normalization to [0, 1] keeps the simplex tolerances meaningful
    # regardless of the cost magnitude; argmin is unchanged.
    c_lo, c_hi = float(c_shift.min()), float(c_shift.max())
    scale = c_hi - c_lo
    if scale <= 0:
        c_norm = np.zeros_like(c_shift)
        scale = 1.0
    else:
        c_norm = (c_shift - c_lo) / scale

    a_masses = np.asarray(market.x_masses, dtype=float)
    b_masses = np.asarray(market.y_masses, dtype=float)
    # The tree solver conserves flow exactly, so zero out the float-level
    # imbalance the market tolerance allows before solving.
    b_masses = b_masses * (a_masses.sum() / b_masses.sum())

    res = solve_transportation(a_masses, b_masses, c_norm)
    entries = sorted((i, j, m) for (i, j), m in res["flows"].items())
    plan = coupling(market, entries)

    phi_n = np.asarray(res["phi"], dtype=float)
    psi_n = np.asarray(res["psi"], dtype=float)
    # Undo normalization (duals for c_shift), then the utility shift when
    # the affine map back stays in float range.
    phi_s = phi_n * scale + c_lo
    psi_s = psi_n * scale
    if b is not None:
        phi = phi_s * b + k
        psi = psi_s * b
        dual_shift = 0.0
    else:
        phi, psi = phi_s, psi_s
        dual_shift = shift

    objective = float(
        sum(m * cost_eval(cost, float(u[i, j])) for i, j, m in plan.entries)
    )
    return SolveReport(
        coupling=plan,
        objective=objective,
        iterations=res["iterations"],
        degenerate_pivots=res["degenerate_pivots"],
        mode="float",
        cost=cost,
        phi=tuple(float(v) for v in phi),
        psi=tuple(float(v) for v in psi),
        dual_shift=dual_shift,
    )


def _exact_utility_matrix(market: DiscreteMarket) -> list[list[Fraction]]:
    if market.utility.family == "neg_distance_lp":
        if market.x_atoms.shape[1] != 1:
            raise ValidationError(
                "rational mode supports point markets only on the line"
            )
        xs = [as_fraction(float(v)) for v in market.x_atoms[:, 0]]
        ys = [as_fraction(float(v)) for v in market.y_atoms[:, 0]]
        return [[-abs(x - y) for y in ys] for x in xs]
    vals = market.utility.values
    return [[as_fraction(float(vals[i, j])) for j in range(vals.shape[1])]
            for i in range(vals.shape[0])]


def _solve_rational(market: DiscreteMarket, cost: CostSpec) -> SolveReport:
    u_exact = _exact_utility_matrix(market)
    c_exact = [[-v for v in row] for row in u_exact]
    res = solve_transportation(
        market.x_exact, market.y_exact, c_exact, exact=True
    )
    entries = sorted(((i, j), m) for (i, j), m in res["flows"].items())
    plan = coupling(market, [(i, j, m) for (i, j), m in entries])
    objective = sum(
        (m * c_exact[i][j] for (i, j), m in entries), start=Fraction(0)
    )
    return SolveReport(
        coupling=plan,
        objective=objective,
        iterations=res["iterations"],
        degenerate_pivots=res["degenerate_pivots"],
        mode="rational",
        cost=cost,
        phi=tuple(res["phi"]),
        psi=tuple(res["psi"]),
    )


# ---------------------------------------------------------------------------
# theoretical guarantees per alpha


@dataclass(frozen=True)
class BoundContext:
    """Guarantees attached to an exact minimizer at a given alpha."""

    alpha: float
    stability_eps: float | None
    egalitarian_eps: float | None
    sides: int = 2


def theoretical_bounds(alpha: float, sides: int = 2) -> BoundContext:
    """Stability / egalitarian slack certified for minimizers at alpha.

    Positive alpha: ln(k)/alpha-stable (k = number of sides).  Negative
    alpha: epsilon-egalitarian with epsilon = max(1, ln|alpha|)/|alpha|.
    At alpha = 0 the minimizer is welfare-maximal but neither slack is
    certified.
    """
    if alpha > 0:
        return BoundContext(alpha, math.log(sides) / alpha, None, sides)
    if alpha < 0:
        a = abs(alpha)
        return BoundContext(alpha, None, max(1.0, math.log(a)) / a, sides)
    return BoundContext(alpha, None, None, sides)


def alpha_sweep(
    market: DiscreteMarket,
    alphas,
    audit: bool = True,
) -> list[dict]:
    """Solve the market across a list of alphas and audit each solution.

    One record per alpha with keys ``alpha``, ``report``, ``audit``,
    ``bounds``, ``error``; a failed solve stores its error message and
    leaves the rest of the sweep alive.  The MATCHPORT_THREADS environment
    variable caps how many solves run concurrently (results keep the input
    order either way).
    """
    from . import audit as audit_mod

    alphas = [float(a) for a in alphas]

    def run(a: float) -> dict:
        rec: dict = {"alpha": a, "report": None, "audit": None,
                     "bounds": theoretical_bounds(a), "error": None}
        try:
            rec["report"] = solve_transport(market, CostSpec.alpha_family(a))
            if audit:
                rec["audit"] = audit_mod.audit_coupling(
                    rec["report"].coupling, alpha=a
                )
        except (ValidationError, SolverError) as exc:
            rec["error"] = str(exc)
        return rec

    workers = max(1, int(os.environ.get("MATCHPORT_THREADS", "1")))
    if workers == 1 or len(alphas) <= 1:
        return [run(a) for a in alphas]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, alphas))


@dataclass(frozen=True)
class StableLimitResult:
    report: SolveReport
    alpha: float
    gap: float


def stable_limit(market: DiscreteMarket) -> StableLimitResult:
    """Exactly stable coupling via a finite alpha.

    With delta the minimum nonzero utility gap, any ln(2)/alpha-stable
    coupling with ln(2)/alpha < delta is exactly stable, so alpha =
    2 ln(2)/delta suffices.  The achieved stability gap is audited after
    the solve; when delta = 0 (ties everywhere) the method escalates alpha
    until the gap stops improving or the overflow cap binds.
    """
    from .audit import stability_gap
    from .markets import compute_delta

    u_lo, u_hi = market.utility_bounds()
    span = max(u_hi - u_lo, 1e-300)
    # The solve shifts utilities, but the reported objective is evaluated
    # at the raw ones, so the cap has to keep alpha * |u| in float range
    # too, not only alpha * span.
    reach = max(span, abs(u_lo), abs(u_hi))
    alpha_cap = 0.999 * ALPHA_SPAN_LIMIT / reach
    delta = compute_delta(market)

    if delta > 0:
        alpha = min(2.0 * math.log(2.0) / delta, alpha_cap)
        report = solve_transport(market, CostSpec.alpha_family(alpha))
        gap = stability_gap(report.coupling)
        if gap == 0.0:
            return StableLimitResult(report, alpha, gap)
        best = (report, alpha, gap)
    else:
        best = None

    alpha = 1.0
    while alpha <= alpha_cap:
        report = solve_transport(market, CostSpec.alpha_family(alpha))
        gap = stability_gap(report.coupling)
        if best is None or gap < best[2]:
            best = (report, alpha, gap)
        if gap == 0.0:
            break
        alpha *= 2.0
    if best is None:
        raise SolverError("could not solve at any alpha within the overflow cap")
    return StableLimitResult(*best)


# ---------------------------------------------------------------------------
# c-cyclic monotonicity


def check_cyclic_monotone(
    plan: Coupling,
    cost: CostSpec,
    n_max: int = 4,
    samples: int = 500,
    seed: int = 0,
    tol: float = 1e-9,
):
    """Search for a cycle of support couples violating c-cyclic monotonicity.

    Checks sum c(x_i, y_i) <= sum c(x_i, y_{i+1}) over cycles of distinct
    support couples: exhaustively for lengths 2..n_max when the support is
    small (at most 12 couples), by seeded random sampling otherwise and for
    longer cycles.  Returns the first violating cycle as a list of (i, j)
    index pairs, or None; optima of exact solves never yield one.
    """
    sup = plan.support()
    idx = [(i, j) for i, j, _ in sup]
    if len(idx) < 2:
        return None
    u = plan.market.utility_matrix()
    c = cost_eval(cost, u)

    def violates(order):
        cells = [(idx[t][0], idx[t][1]) for t in order]
        cells += [
            (idx[order[t]][0], idx[order[(t + 1) % len(order)]][1])
            for t in range(len(order))
        ]
        matched = sum(c[a] for a in cells[: len(order)])
        rotated = sum(c[a] for a in cells[len(order) :])
        # Judge the excess against the cycle's own cost magnitudes, not the
        # global maximum: steep cost families put most cells many orders of
        # magnitude below the largest one, and a real violation among those
        # would vanish under a globally scaled tolerance.
        local = max(abs(c[a]) for a in cells)
        return matched - rotated > tol * local > 0.0

    n = len(idx)
    if n <= 12:
        for length in range(2, min(n_max, n) + 1):
            for combo in combinations(range(n), length):
                # Fixing the smallest index first enumerates each cyclic
                # order exactly once.
                for rest in permutations(combo[1:]):
                    order = (combo[0],) + rest
                    if violates(order):
                        return [idx[t] for t in order]

    # Longer cycles (and everything on large supports) by seeded sampling.
    rng = np.random.default_rng(seed)
    top = min(n, max(n_max + 2, 8))
    for _ in range(samples):
        length = int(rng.integers(2, top + 1))
        order = tuple(int(t) for t in rng.choice(n, size=length, replace=False))
        if violates(order):
            return [idx[t] for t in order]
    return None
