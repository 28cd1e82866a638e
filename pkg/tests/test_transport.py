import math
import os
from fractions import Fraction

import numpy as np
import pytest

from matchport import (
    CostSpec,
    SolverError,
    UtilitySpec,
    ValidationError,
    alpha_sweep,
    check_cyclic_monotone,
    cost_eval,
    coupling,
    discrete_market,
    solve_transport,
    stable_limit,
    theoretical_bounds,
)
from matchport.audit import brute_force_oracle, stability_gap
from helpers import (
    equal_mass_market,
    nonuniqueness_market,
    table_market,
    unit_square_market,
)


def test_cost_eval_zero_utility():
    for a in (-8.0, -1.0, 0.0, 1.0, 8.0):
        assert cost_eval(CostSpec.alpha_family(a), 0.0) == 0.0


def test_cost_eval_log2_point():
    got = cost_eval(CostSpec.alpha_family(math.log(2.0)), 1.0)
    assert got == pytest.approx((1 - 2) / math.log(2.0), abs=1e-12)
    assert got == pytest.approx(-1.442695, abs=1e-6)


def test_cost_eval_alpha_zero_is_neg_utility():
    u = np.linspace(-5, 5, 41)
    assert np.array_equal(cost_eval(CostSpec.alpha_family(0.0), u), -u)
    assert np.array_equal(cost_eval(CostSpec.neg_utility(), u), -u)


def test_cost_eval_continuity_at_zero():
    # Taylor: c_a(u) + u = a u^2/2 + O(a^2); at a=1e-8 the best any
    # evaluator can do on |u| <= 5 is ~1.25e-7, so the 1e-7 window only
    # holds on |u| <= 4 and the wider range gets the Taylor envelope.
    a = 1e-8
    spec = CostSpec.alpha_family(a)
    for u in np.linspace(-4, 4, 33):
        assert abs(cost_eval(spec, u) + u) <= 1e-7
    for u in np.linspace(-5, 5, 41):
        assert abs(cost_eval(spec, u) + u) <= a * 5**2 / 2 * (1 + 1e-6) + 1e-15


def test_cost_eval_strictly_decreasing_in_u():
    for a in (-4.0, -0.5, 0.0, 0.5, 4.0):
        vals = cost_eval(CostSpec.alpha_family(a), np.linspace(-3, 3, 25))
        assert np.all(np.diff(vals) < 0)


def test_cost_eval_overflow_guard():
    with pytest.raises(ValidationError):
        cost_eval(CostSpec.alpha_family(100.0), 20.0)


def test_general_h_matches_alpha_family():
    a = 1.7
    exp_spec = CostSpec.general("exp", a, alpha_bound=a)
    alpha_spec = CostSpec.alpha_family(a)
    u = np.linspace(-2, 2, 17)
    mkt = table_market(np.random.default_rng(3).random((4, 5)))
    ra = solve_transport(mkt, alpha_spec)
    rh = solve_transport(mkt, exp_spec)
    assert sorted(ra.coupling.support()) == sorted(rh.coupling.support())
    # general exp cost is -h(u) = -e^(a u), an affine image of c_alpha
    ca = cost_eval(alpha_spec, u)
    ch = cost_eval(exp_spec, u)
    assert np.allclose((1.0 + ch) / a, ca, atol=1e-12)


def test_solve_diagonal_market_identity():
    m = discrete_market(
        UtilitySpec.neg_distance(),
        [0.25, 0.75],
        [0.25, 0.75],
        x_atoms=[0.0, 1.0],
        y_atoms=[0.0, 1.0],
    )
    for a in (-3.0, 0.0, 3.0):
        rep = solve_transport(m, CostSpec.alpha_family(a))
        assert sorted((i, j) for i, j, _ in rep.coupling.support()) == [(0, 0), (1, 1)]
        assert rep.objective == pytest.approx(0.0, abs=1e-12)


def test_solve_nonuniqueness_alpha10_selects_deterministic():
    rep = solve_transport(nonuniqueness_market(), CostSpec.alpha_family(10.0))
    sup = sorted(rep.coupling.support())
    assert [(i, j) for i, j, _ in sup] == [(0, 0), (1, 1)]
    assert all(m == pytest.approx(0.5) for _, _, m in sup)


def test_solve_nonuniqueness_alpha0_welfare():
    rep = solve_transport(nonuniqueness_market(), CostSpec.alpha_family(0.0))
    assert -rep.objective == pytest.approx(-1 / 3, abs=1e-12)


def test_randomized_plan_welfare_is_half():
    m = nonuniqueness_market()
    pi_prime = coupling(m, [(0, 0, 0.25), (0, 1, 0.25), (1, 0, 0.25), (1, 1, 0.25)])
    from matchport import welfare

    assert welfare(pi_prime) == pytest.approx(-0.5, abs=1e-12)


def test_support_size_is_basic():
    for seed in range(40, 52):
        m = unit_square_market(seed)
        rep = solve_transport(m, CostSpec.alpha_family(2.0))
        assert len(rep.coupling.support()) <= m.n_x + m.n_y - 1


def test_dual_certificate():
    for seed in (7, 8, 9):
        m = unit_square_market(seed)
        for a in (-4.0, 0.0, 4.0):
            rep = solve_transport(m, CostSpec.alpha_family(a))
            gap = rep.dual_gap_matrix(m.utility_matrix())
            assert gap.min() >= -1e-7
            for i, j, _ in rep.coupling.support():
                assert abs(gap[i, j]) <= 1e-7


def test_alpha_zero_equals_neg_utility_objective():
    for seed in (11, 12):
        m = unit_square_market(seed)
        r0 = solve_transport(m, CostSpec.alpha_family(0.0))
        rn = solve_transport(m, CostSpec.neg_utility())
        assert abs(r0.objective - rn.objective) <= 1e-9


def test_rational_mode_matches_float():
    m = nonuniqueness_market()
    rf = solve_transport(m, CostSpec.neg_utility(), mode="float")
    rr = solve_transport(m, CostSpec.neg_utility(), mode="rational")
    assert rr.mode == "rational"
    assert rf.objective == pytest.approx(rr.objective, abs=1e-12)
    assert sorted((i, j) for i, j, _ in rf.coupling.support()) == sorted(
        (i, j) for i, j, _ in rr.coupling.support()
    )


def test_rational_mode_rejects_exponential_cost():
    with pytest.raises(ValidationError):
        solve_transport(nonuniqueness_market(), CostSpec.alpha_family(2.0), mode="rational")


def test_objective_matches_support_sum():
    m = unit_square_market(21)
    rep = solve_transport(m, CostSpec.alpha_family(3.0))
    u = m.utility_matrix()
    direct = sum(
        mass * cost_eval(CostSpec.alpha_family(3.0), float(u[i, j]))
        for i, j, mass in rep.coupling.entries
    )
    assert rep.objective == pytest.approx(direct, rel=1e-9)


def test_cyclic_monotone_on_solver_output():
    for seed in (31, 32, 33):
        m = unit_square_market(seed)
        rep = solve_transport(m, CostSpec.alpha_family(3.0))
        assert check_cyclic_monotone(rep.coupling, CostSpec.alpha_family(3.0), n_max=2) is None


def test_cyclic_monotone_flags_swapped_plan():
    m = nonuniqueness_market()
    swapped = coupling(m, [(0, 1, 0.5), (1, 0, 0.5)])
    w = check_cyclic_monotone(swapped, CostSpec.alpha_family(10.0))
    assert w is not None and len(w) == 2
    assert sorted(w) == [(0, 1), (1, 0)]


def test_cyclic_monotone_single_entry():
    m = discrete_market(
        UtilitySpec.neg_distance(), [1.0], [1.0], x_atoms=[0.0], y_atoms=[2.0]
    )
    rep = solve_transport(m, CostSpec.alpha_family(1.0))
    assert check_cyclic_monotone(rep.coupling, CostSpec.alpha_family(1.0)) is None


def test_cyclic_monotone_local_scale_regression():
    """A float-optimal plan can violate exact 2-monotonicity once
    alpha * span exceeds what float64 resolves; the checker has to judge
    each cycle at its own cost scale to see this, not at the global max."""
    rng = np.random.default_rng(143)
    n, m = int(rng.integers(2, 13)), int(rng.integers(2, 13))
    u = rng.normal(size=(n, m))
    xm = rng.random(n) + 0.1
    ym = rng.random(m) + 0.1
    mkt = table_market(u, list(xm / xm.sum()), list(ym / ym.sum()))
    rep = solve_transport(mkt, CostSpec.alpha_family(10.0))
    assert stability_gap(rep.coupling) > math.log(2) / 10.0
    assert check_cyclic_monotone(rep.coupling, CostSpec.alpha_family(10.0)) is not None


def test_stable_limit_nonuniqueness():
    res = stable_limit(nonuniqueness_market())
    # delta = 2/3, so alpha = 2 ln2 / delta = 3 ln2
    assert res.alpha == pytest.approx(3 * math.log(2.0))
    assert res.gap == 0.0
    assert [(i, j) for i, j, _ in sorted(res.report.coupling.support())] == [(0, 0), (1, 1)]


def test_stable_limit_diagonal():
    m = discrete_market(
        UtilitySpec.neg_distance(),
        [0.5, 0.5],
        [0.5, 0.5],
        x_atoms=[0.0, 1.0],
        y_atoms=[0.0, 1.0],
    )
    res = stable_limit(m)
    assert res.gap == 0.0
    assert sorted((i, j) for i, j, _ in res.report.coupling.support()) == [(0, 0), (1, 1)]


def test_stable_limit_matches_greedy():
    for seed in (61, 62, 63):
        rng = np.random.default_rng(seed)
        vals = (rng.permutation(9) + 1.0) / 9.0
        m = table_market(vals.reshape(3, 3), [1.0] * 3, [1.0] * 3)
        res = stable_limit(m)
        rep = brute_force_oracle(m)
        assert res.gap == 0.0
        assert sorted((i, j) for i, j, _ in res.report.coupling.support()) == sorted(
            (i, rep.greedy[i]) for i in range(3)
        )


def test_stable_limit_large_offset_utilities():
    # alpha cap must account for |u|, not only the span
    rng = np.random.default_rng(9)
    u = rng.random((4, 4)) + 50.0
    res = stable_limit(table_market(u, [1.0] * 4, [1.0] * 4))
    assert res.gap == 0.0


def test_theoretical_bounds_values():
    b = theoretical_bounds(5.0)
    assert b.stability_eps == pytest.approx(math.log(2) / 5)
    assert b.egalitarian_eps is None
    b = theoretical_bounds(-5.0)
    assert b.egalitarian_eps == pytest.approx(max(1.0, math.log(5.0)) / 5.0)
    assert b.egalitarian_eps == pytest.approx(0.3219, abs=5e-5)
    assert theoretical_bounds(-5.0).stability_eps is None
    b0 = theoretical_bounds(0.0)
    assert b0.stability_eps is None and b0.egalitarian_eps is None
    assert theoretical_bounds(5.0, sides=3).stability_eps == pytest.approx(math.log(3) / 5)


def test_alpha_sweep_records():
    m = unit_square_market(77)
    recs = alpha_sweep(m, [-5.0, 0.0, 5.0])
    assert [r["alpha"] for r in recs] == [-5.0, 0.0, 5.0]
    assert all(r["error"] is None for r in recs)
    assert recs[0]["bounds"].egalitarian_eps == pytest.approx(0.3219, abs=5e-5)
    assert recs[1]["bounds"].stability_eps is None
    assert recs[2]["bounds"].stability_eps == pytest.approx(0.1386, abs=5e-5)
    assert all(r["audit"] is not None for r in recs)


def test_alpha_sweep_isolates_errors():
    m = table_market([[0.0, 500.0], [500.0, 0.0]])
    recs = alpha_sweep(m, [0.0, 50.0])
    assert recs[0]["error"] is None
    assert recs[1]["error"] is not None
    assert recs[1]["report"] is None


def test_alpha_sweep_thread_determinism():
    m = unit_square_market(78)
    seq = alpha_sweep(m, [-3.0, -1.0, 0.0, 1.0, 3.0])
    os.environ["MATCHPORT_THREADS"] = "3"
    try:
        par = alpha_sweep(m, [-3.0, -1.0, 0.0, 1.0, 3.0])
    finally:
        del os.environ["MATCHPORT_THREADS"]
    for a, b in zip(seq, par):
        assert a["alpha"] == b["alpha"]
        assert a["report"].objective == b["report"].objective
        assert sorted(a["report"].coupling.support()) == sorted(b["report"].coupling.support())


def test_unbalanced_market_rejected_by_solver():
    with pytest.raises(ValidationError):
        table_market([[1.0, 0.0]], [1.0], [0.3, 0.3])


def test_theorem1_stability_sample():
    m = equal_mass_market(55, 8, mass=1.0 / 8)
    rep = solve_transport(m, CostSpec.alpha_family(5.0))
    assert stability_gap(rep.coupling) <= math.log(2) / 5 + 1e-9
