"""Auditors: stability gap, welfare, egalitarian quantities, brute force.

The brute-force oracle is the ground truth for everything else in this
file, so its own tests use hand-computed 1x1 and 2x2 markets first.
"""

from fractions import Fraction as F

import numpy as np
import pytest

from matchport import ValidationError, coupling, discretize_line_market, solve_transport
from matchport.audit import (
    audit_coupling,
    brute_force_oracle,
    egalitarian_bound,
    egalitarian_eps,
    no_crossing_check,
    stability_gap,
    welfare,
    welfare_bound_check,
)
from matchport.line import (
    assortative_matching,
    discretize_matching,
    stable_line_matching,
)
from matchport.transport import CostSpec

from helpers import (
    equal_mass_market,
    nonuniqueness_market,
    running_example,
    table_market,
    uniform_halves,
)


def pi_coupling(nm):
    return coupling(nm, [(0, 0, F(1, 2)), (1, 1, F(1, 2))])


def pi_prime_coupling(nm):
    quarter = F(1, 4)
    return coupling(nm, [(0, 0, quarter), (0, 1, quarter), (1, 0, quarter), (1, 1, quarter)])


class TestStabilityGap:
    def test_both_optima_are_exactly_stable(self):
        nm = nonuniqueness_market()
        assert stability_gap(pi_coupling(nm)) == 0.0
        assert stability_gap(pi_prime_coupling(nm)) == 0.0

    def test_assortative_gap_on_uniform_halves_grid(self):
        # The worst blocking pair in the assortative matching of the
        # mirrored uniform halves sits at the interval ends; on the
        # 100-cell grid the cell centres clip that to exactly 0.99.
        am = assortative_matching(uniform_halves())
        _, plan = discretize_matching(am, 100)
        gap = stability_gap(plan)
        assert gap == 0.99
        assert 0.97 <= gap <= 1.0

    def test_stable_matching_gap_zero_on_same_grid(self):
        sm = stable_line_matching(uniform_halves())
        _, plan = discretize_matching(sm, 100)
        assert stability_gap(plan) == 0.0

    def test_greedy_matching_is_stable(self):
        for seed in (11, 12, 13):
            m = equal_mass_market(seed, 5)
            rep = brute_force_oracle(m)
            plan = coupling(m, [(i, rep.greedy[i], 1.0) for i in range(5)])
            assert stability_gap(plan) <= 1e-12


class TestWelfare:
    def test_hand_values(self):
        nm = nonuniqueness_market()
        assert welfare(pi_coupling(nm)) == pytest.approx(-1 / 3)
        assert welfare(pi_prime_coupling(nm)) == pytest.approx(-1 / 2)
        diag = table_market([[0.0]])
        assert welfare(coupling(diag, [(0, 0, 1.0)])) == 0.0

    def test_discretized_stable_welfare_running_example(self):
        lm = stable_line_matching(running_example())
        _, plan = discretize_matching(lm, 200)
        assert welfare(plan) == pytest.approx(-220 / 49, abs=0.02)

    def test_alpha_zero_solve_attains_brute_optimum(self):
        for seed in (21, 22, 23):
            m = equal_mass_market(seed, 5)
            rep = solve_transport(m, CostSpec.neg_utility())
            assert -rep.objective == pytest.approx(brute_force_oracle(m).welfare_opt, abs=1e-9)


class TestEgalitarianBound:
    def test_uniform_halves_grid(self):
        d = discretize_line_market(uniform_halves(), 100)
        assert egalitarian_bound(d) == pytest.approx(-1.0, abs=1 / 100)

    def test_diagonal_market(self):
        assert egalitarian_bound(table_market([[0.0]])) == 0.0

    def test_nonuniqueness_market(self):
        assert egalitarian_bound(nonuniqueness_market()) == pytest.approx(-1 / 3)

    def test_matches_brute_bottleneck(self):
        for seed in (31, 32, 33, 34):
            m = equal_mass_market(seed, 4)
            assert egalitarian_bound(m) == pytest.approx(
                brute_force_oracle(m).bottleneck_opt, abs=1e-9
            )


class TestEgalitarianEps:
    def test_everyone_above_threshold(self):
        m = table_market([[2.0, 1.0], [1.0, 2.0]])
        plan = coupling(m, [(0, 0, 0.5), (1, 1, 0.5)])
        assert egalitarian_eps(plan, opt=0.5) == 0.0

    def test_unattainable_sentinel_is_harmless(self):
        m = table_market([[2.0, 1.0], [1.0, 2.0]])
        plan = coupling(m, [(0, 0, 0.5), (1, 1, 0.5)])
        assert egalitarian_eps(plan, opt=float("-inf")) == 0.0

    def test_uniform_halves_stable_third(self):
        # A third of the population sits more than opt - 1/3 below the
        # egalitarian optimum under the anti-diagonal matching.
        sm = stable_line_matching(uniform_halves())
        _, plan = discretize_matching(sm, 100)
        opt = egalitarian_bound(plan.market)
        assert egalitarian_eps(plan, opt=opt) == pytest.approx(1 / 3, abs=0.02)

    def test_monotone_under_upward_mass_moves(self):
        # Moving mass from a badly matched pair to a well matched one can
        # only shrink the shortfall measure.
        m = table_market([[1.0, 0.0], [0.0, 1.0]])
        worse = coupling(m, [(0, 0, 0.25), (0, 1, 0.25), (1, 0, 0.25), (1, 1, 0.25)])
        better = coupling(m, [(0, 0, 0.45), (0, 1, 0.05), (1, 0, 0.05), (1, 1, 0.45)])
        opt = 1.0
        assert egalitarian_eps(better, opt=opt) <= egalitarian_eps(worse, opt=opt)


class TestBruteForce:
    def test_two_by_two_hand_checked(self):
        rep = brute_force_oracle(table_market([[3.0, 1.0], [2.0, 0.0]]))
        assert rep.greedy == (0, 1)
        assert rep.stable == ((0, 1),)
        # Both permutations happen to tie on welfare here.
        assert rep.welfare_opt == 3.0
        assert rep.bottleneck_opt == 1.0
        assert rep.bottleneck_argmax == (1, 0)

    def test_single_atom(self):
        rep = brute_force_oracle(table_market([[5.0]]))
        assert rep.greedy == (0,)
        assert rep.stable == ((0,),)
        assert rep.welfare_opt == 5.0
        assert rep.bottleneck_opt == 5.0

    def test_nonuniqueness_market_both_stable(self):
        rep = brute_force_oracle(nonuniqueness_market())
        assert rep.greedy == (0, 1)
        assert set(rep.stable) == {(0, 1), (1, 0)}

    def test_greedy_welfare_consistent(self):
        for seed in (41, 42):
            m = equal_mass_market(seed, 6)
            rep = brute_force_oracle(m)
            u = rep.greedy_welfare
            direct = sum(float(m.utility_matrix()[i, rep.greedy[i]]) for i in range(6))
            assert u == pytest.approx(direct)
            assert u <= rep.welfare_opt + 1e-12

    def test_half_welfare_bound_on_stable_permutations(self):
        # Exactly stable one-to-one matchings of unit populations reach at
        # least half the optimal welfare and miss the bottleneck optimum
        # by at most a half.
        for seed in (51, 52, 53):
            rng = np.random.default_rng(seed)
            n = 5
            u = rng.random((n, n))
            m = table_market(u, [1.0] * n, [1.0] * n)
            rep = brute_force_oracle(m)
            for perm in rep.stable:
                plan = coupling(m, [(i, perm[i], 1.0) for i in range(n)])
                assert welfare(plan) >= 0.5 * rep.welfare_opt - 1e-9
                assert egalitarian_eps(plan, opt=rep.bottleneck_opt) <= 0.5 + 1e-9


class TestNoCrossing:
    def test_stable_matching_clean(self):
        assert no_crossing_check(stable_line_matching(uniform_halves())) is None

    def test_assortative_flags_crossing(self):
        w = no_crossing_check(assortative_matching(uniform_halves()))
        assert w is not None
        (x1, y1), (x2, y2) = w
        lo1, hi1 = min(x1, y1), max(x1, y1)
        lo2, hi2 = min(x2, y2), max(x2, y2)
        assert lo1 < lo2 < hi1 < hi2

    def test_pure_diagonal_clean(self):
        lm = stable_line_matching(line_market_identity())
        assert no_crossing_check(lm) is None


def line_market_identity():
    from matchport import line_market

    return line_market([0, 1], [1], [1])


class TestWelfareBoundCheck:
    def test_exact_optimum_passes(self):
        nm = nonuniqueness_market()
        chk = welfare_bound_check(pi_coupling(nm), eps=np.log(2) / 10)
        assert chk.welfare_ok
        assert chk.egalitarian_ok
        assert chk.welfare_shifted == pytest.approx(2 / 3)
        assert chk.opt_shifted == pytest.approx(2 / 3)
        assert chk.lower_bound <= chk.welfare_shifted

    def test_requires_unit_population(self):
        m = table_market([[1.0]], [2.0], [2.0])
        with pytest.raises(ValidationError):
            welfare_bound_check(coupling(m, [(0, 0, 2.0)]))


class TestAuditCoupling:
    def test_composite_report_fields(self):
        nm = nonuniqueness_market()
        rep = audit_coupling(pi_coupling(nm), alpha=10.0)
        assert rep.alpha == 10.0
        assert rep.stability_eps == 0.0
        assert rep.welfare == pytest.approx(-1 / 3)
        assert rep.egalitarian_opt == pytest.approx(-1 / 3)
        assert rep.egalitarian_eps == pytest.approx(0.0, abs=1e-12)
        assert rep.welfare_check is not None
        assert rep.welfare_check.welfare_ok

    def test_egalitarian_skippable(self):
        nm = nonuniqueness_market()
        rep = audit_coupling(pi_coupling(nm), egalitarian=False)
        assert rep.egalitarian_opt is None
        assert rep.egalitarian_eps is None
