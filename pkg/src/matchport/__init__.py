"""Stable, welfare-optimal, and egalitarian matchings via optimal transport.

A single cost family c_alpha interpolates between three classical goals
for transferable-utility matching markets: alpha -> 0 maximizes welfare,
large positive alpha buys approximate stability at rate ln(2)/alpha, and
large negative alpha levels the worst-off pairs.  The package solves the
resulting transport problems exactly (network simplex, optionally over
rationals), constructs exact stable matchings for piecewise-constant
markets on the line, generalizes to k-sided tensors, converts ordinal
rankings into aligned cardinal utilities, and audits every solution with
independent checkers.
"""

from ._common import (
    ALPHA_SPAN_LIMIT,
    MatchportError,
    SolverError,
    ValidationError,
    as_fraction,
    frac_format,
)
from .audit import (
    AuditReport,
    BruteForceReport,
    WelfareBoundCheck,
    audit_coupling,
    brute_force_oracle,
    egalitarian_bound,
    egalitarian_eps,
    egalitarian_value,
    no_crossing_check,
    stability_gap,
    welfare,
    welfare_bound_check,
)
from .files import (
    fixture_path,
    load_fixture,
    load_market,
    parse_market,
    save_market,
    serialize_market,
)
from .line import (
    AffinePiece,
    DiagonalSegment,
    LineMatching,
    SignedDecomposition,
    anti_assortative,
    assortative_matching,
    discretize_matching,
    eval_match_map,
    extract_independent_pair,
    sign_changes,
    split_diagonal,
    stable_line_matching,
)
from .markets import (
    Coupling,
    DiscreteMarket,
    PiecewiseDensityMarket,
    UtilitySpec,
    compute_delta,
    coupling,
    discrete_market,
    discretize_line_market,
    line_market,
    nash_bargaining_reduce,
    utility_eval,
)
from .multiway import (
    KCoupling,
    KMarket,
    k_audits,
    k_bottleneck_bound,
    k_egalitarian_eps,
    k_market,
    k_stability_gap,
    organ_exchange_market,
    solve_k_transport,
)
from .ordinal import (
    Potential,
    PreferenceProfile,
    build_potential,
    check_acyclicity,
    potential_market,
    preference_profile,
)
from .svg import render_coupling, render_line_matching
from .transport import (
    BoundContext,
    CostSpec,
    SolveReport,
    StableLimitResult,
    alpha_sweep,
    check_cyclic_monotone,
    cost_eval,
    solve_transport,
    stable_limit,
    theoretical_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "ALPHA_SPAN_LIMIT",
    "MatchportError",
    "SolverError",
    "ValidationError",
    "as_fraction",
    "frac_format",
    "AuditReport",
    "BruteForceReport",
    "WelfareBoundCheck",
    "audit_coupling",
    "brute_force_oracle",
    "egalitarian_bound",
    "egalitarian_eps",
    "egalitarian_value",
    "no_crossing_check",
    "stability_gap",
    "welfare",
    "welfare_bound_check",
    "fixture_path",
    "load_fixture",
    "load_market",
    "parse_market",
    "save_market",
    "serialize_market",
    "AffinePiece",
    "DiagonalSegment",
    "LineMatching",
    "SignedDecomposition",
    "anti_assortative",
    "assortative_matching",
    "discretize_matching",
    "eval_match_map",
    "extract_independent_pair",
    "sign_changes",
    "split_diagonal",
    "stable_line_matching",
    "Coupling",
    "DiscreteMarket",
    "PiecewiseDensityMarket",
    "UtilitySpec",
    "compute_delta",
    "coupling",
    "discrete_market",
    "discretize_line_market",
    "line_market",
    "nash_bargaining_reduce",
    "utility_eval",
    "KCoupling",
    "KMarket",
    "k_audits",
    "k_bottleneck_bound",
    "k_egalitarian_eps",
    "k_market",
    "k_stability_gap",
    "organ_exchange_market",
    "solve_k_transport",
    "Potential",
    "PreferenceProfile",
    "build_potential",
    "check_acyclicity",
    "potential_market",
    "preference_profile",
    "render_coupling",
    "render_line_matching",
    "BoundContext",
    "CostSpec",
    "SolveReport",
    "StableLimitResult",
    "alpha_sweep",
    "check_cyclic_monotone",
    "cost_eval",
    "solve_transport",
    "stable_limit",
    "theoretical_bounds",
    "__version__",
]
