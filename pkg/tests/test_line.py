"""Continuum line solver: decomposition, extraction, closed-form matchings.

Most expectations here are exact rationals because the solver runs in
Fraction arithmetic on rational inputs.  The convergence and complexity
tests at the bottom freeze measured values from the current
implementation; they exist to catch behavioural drift, not to assert
universal constants.
"""

from fractions import Fraction as F

import numpy as np
import pytest

from matchport import (
    UtilitySpec,
    ValidationError,
    discrete_market,
    discretize_line_market,
    line_market,
    solve_transport,
    stable_limit,
)
from matchport.audit import no_crossing_check
from matchport.line import (
    anti_assortative,
    assortative_matching,
    discretize_matching,
    eval_match_map,
    extract_independent_pair,
    sign_changes,
    split_diagonal,
    stable_line_matching,
)
from matchport.transport import CostSpec

from helpers import running_example, uniform_halves


def piece_tuples(lm):
    return [(p.lo, p.hi, p.slope, p.intercept) for p in lm.pieces]


def alternating_comb(m):
    # m unit intervals, mu on the even ones, nu on the odd ones; K = m - 1.
    bps = list(range(m + 1))
    f = [1 if i % 2 == 0 else 0 for i in range(m)]
    g = [0 if i % 2 == 0 else 1 for i in range(m)]
    return line_market(bps, f, g)


class TestSignChanges:
    def test_uniform_halves_k1(self):
        sd = sign_changes(uniform_halves())
        assert sd.k == 1
        assert sd.blocks == ((F(-1), F(0), 1), (F(0), F(1), -1))

    def test_running_example_k3(self):
        sd = sign_changes(running_example())
        assert sd.k == 3
        signs = [b[2] for b in sd.blocks]
        assert signs == [1, -1, 1, -1]

    def test_identical_measures_k0(self):
        m = line_market([0, 1], [1], [1])
        assert sign_changes(m).k == 0


class TestSplitDiagonal:
    def test_identical_measures_all_diagonal(self):
        segs, resid = split_diagonal(line_market([0, 1], [1], [1]))
        assert len(segs) == 1
        assert (segs[0].lo, segs[0].hi, segs[0].density) == (F(0), F(1), F(1))
        assert resid is None

    def test_running_example_empty_diagonal(self):
        # Disjoint supports: nothing to put on y = x.
        segs, resid = split_diagonal(running_example())
        assert segs == ()
        assert resid.breakpoints == (F(-2), F(-1), F(0), F(1), F(3))
        assert resid.mu == (F(1), F(0), F(2), F(0))
        assert resid.nu == (F(0), F(1), F(0), F(1))

    def test_common_component_peels_off(self):
        # uniform_halves plus a uniform unit density on [-1, 1] on both
        # sides: the shared part goes to the diagonal and the residual is
        # exactly uniform_halves again.
        aug = line_market([-1, 0, 1], [2, 1], [1, 2])
        segs, resid = split_diagonal(aug)
        assert len(segs) == 1
        assert (segs[0].lo, segs[0].hi, segs[0].density) == (F(-1), F(1), F(1))
        assert resid.breakpoints == (F(-1), F(0), F(1))
        assert resid.mu == (F(1), F(0))
        assert resid.nu == (F(0), F(1))


class TestExtraction:
    def test_running_example_pair(self):
        _, resid = split_diagonal(running_example())
        j1, j2, rem, step = extract_independent_pair(resid)
        assert (j1.breakpoints[0], j1.breakpoints[-1]) == (F(-10, 7), F(-4, 7))
        assert (j2.breakpoints[0], j2.breakpoints[-1]) == (F(-4, 7), F(2, 7))
        assert step.delta == F(6, 7)

        # Each extracted window is internally balanced.
        def masses(sub):
            widths = [b - a for a, b in zip(sub.breakpoints, sub.breakpoints[1:])]
            return (
                sum(d * w for d, w in zip(sub.mu, widths)),
                sum(d * w for d, w in zip(sub.nu, widths)),
            )

        assert masses(j1) == (F(3, 7), F(3, 7))
        assert masses(j2) == (F(4, 7), F(4, 7))
        # The remainder is the original minus the extracted window.
        assert F(-10, 7) in rem.breakpoints and F(2, 7) in rem.breakpoints

    def test_plus_minus_plus_single_extraction(self):
        # One positive hump, a negative middle, another positive hump: the
        # extraction window swallows everything in one step.
        m = line_market([0, 1, 3, 4], [1, 0, 1], [0, 1, 0])
        assert sign_changes(m).k == 2
        lm = stable_line_matching(m)
        ext = [s for s in lm.provenance if s.kind == "extract"]
        assert len(ext) == 1
        assert (ext[0].lo, ext[0].hi, ext[0].delta) == (F(0), F(4), F(2))
        assert piece_tuples(lm) == [
            (F(0), F(1), F(-1), F(2)),
            (F(3), F(4), F(-1), F(6)),
        ]

    def test_single_sign_change_rejected(self):
        with pytest.raises(ValidationError):
            extract_independent_pair(uniform_halves())


class TestClosedForms:
    def test_anti_assortative_uniform_halves(self):
        lm = anti_assortative(uniform_halves())
        assert piece_tuples(lm) == [(F(-1), F(0), F(-1), F(0))]

    def test_anti_assortative_disjoint_shift(self):
        lm = anti_assortative(line_market([0, 1, 2], [1, 0], [0, 1]))
        assert piece_tuples(lm) == [(F(0), F(1), F(-1), F(2))]

    def test_assortative_uniform_halves(self):
        lm = assortative_matching(uniform_halves())
        assert piece_tuples(lm) == [(F(-1), F(0), F(1), F(1))]

    def test_assortative_running_example(self):
        lm = assortative_matching(running_example())
        assert piece_tuples(lm) == [
            (F(-2), F(-1), F(1), F(1)),
            (F(0), F(1), F(2), F(1)),
        ]


class TestStableMatching:
    def test_uniform_halves_is_anti_diagonal(self):
        lm = stable_line_matching(uniform_halves())
        assert lm.diagonal == ()
        assert piece_tuples(lm) == [(F(-1), F(0), F(-1), F(0))]

    def test_running_example_exact_pieces(self):
        lm = stable_line_matching(running_example())
        assert lm.diagonal == ()
        assert piece_tuples(lm) == [
            (F(-2), F(-10, 7), F(-1), F(1)),
            (F(-10, 7), F(-1), F(-1), F(-2)),
            (F(0), F(2, 7), F(-2), F(0)),
            (F(2, 7), F(1), F(-2), F(3)),
        ]

    def test_identical_measures_stay_put(self):
        lm = stable_line_matching(line_market([0, 1], [1], [1]))
        assert lm.pieces == ()
        assert len(lm.diagonal) == 1

    def test_float_inputs_agree_with_rational(self):
        exact = stable_line_matching(running_example())
        approx = stable_line_matching(
            line_market([-2.0, -1.0, 0.0, 1.0, 3.0], [1.0, 0.0, 2.0, 0.0], [0.0, 1.0, 0.0, 1.0])
        )
        for x in (F(-19, 10), F(-6, 5), F(1, 8), F(7, 8)):
            ye = eval_match_map(exact, x)
            ya = eval_match_map(approx, x)
            assert len(ye) == len(ya)
            for (y1, m1), (y2, m2) in zip(ye, ya):
                assert abs(float(y1) - float(y2)) < 1e-9
                assert abs(float(m1) - float(m2)) < 1e-9

    def test_deterministic(self):
        a = stable_line_matching(running_example())
        b = stable_line_matching(running_example())
        assert a.pieces == b.pieces
        assert a.diagonal == b.diagonal
        assert a.provenance == b.provenance


class TestEvalMatchMap:
    def test_running_example_point(self):
        lm = stable_line_matching(running_example())
        assert eval_match_map(lm, F(-19, 10)) == [(F(29, 10), F(1))]

    def test_diagonal_point(self):
        lm = stable_line_matching(line_market([0, 1], [1], [1]))
        assert eval_match_map(lm, F(3, 10)) == [(F(3, 10), F(1))]

    def test_split_between_diagonal_and_monge(self):
        # Where the diagonal and an off-diagonal piece overlap, the local
        # density splits: half stays at y = x, half follows the piece.
        aug = line_market([-1, 0, 1], [2, 1], [1, 2])
        lm = stable_line_matching(aug)
        x = F(-1) + F(1, 10**6)
        targets = dict(eval_match_map(lm, x))
        assert targets == {x: F(1, 2), -x: F(1, 2)}

    def test_at_most_two_targets_one_diagonal(self):
        aug = line_market([-1, 0, 1], [2, 1], [1, 2])
        lm = stable_line_matching(aug)
        for x in np.linspace(-0.999, 0.999, 117):
            targets = eval_match_map(lm, F(x).limit_denominator(10**9))
            assert 1 <= len(targets) <= 2
            if len(targets) == 2:
                assert any(y == pytest.approx(float(x)) for y, _ in ((float(a), b) for a, b in targets))


class TestInvariants:
    @pytest.mark.parametrize("maker", [running_example, uniform_halves, lambda: alternating_comb(8)])
    def test_no_crossing(self, maker):
        lm = stable_line_matching(maker())
        assert no_crossing_check(lm, samples_per_piece=64) is None

    @pytest.mark.parametrize("m", [6, 10, 14])
    def test_extraction_count_bounded_by_k(self, m):
        mk = alternating_comb(m)
        k0 = sign_changes(mk).k
        lm = stable_line_matching(mk)
        ext = [s for s in lm.provenance if s.kind == "extract"]
        assert 1 <= len(ext) <= k0

    @pytest.mark.parametrize(
        "maker",
        [running_example, uniform_halves, lambda: alternating_comb(8), lambda: line_market([-1, 0, 1], [2, 1], [1, 2])],
    )
    def test_mass_conserved_exactly(self, maker):
        mk = maker()
        lm = stable_line_matching(mk)
        total = sum(d * (b - a) for a, b, d in zip(mk.breakpoints, mk.breakpoints[1:], mk.mu))
        pieces = sum(p.density * (p.hi - p.lo) for p in lm.pieces)
        diag = sum(s.density * (s.hi - s.lo) for s in lm.diagonal)
        assert pieces + diag == total

    def test_complexity_subquadratic_growth(self):
        # Frozen operation counts on the alternating comb; the ratio bound
        # is the real invariant (doubling m must stay under quadratic).
        ops = {}
        for m in (10, 20, 40, 80):
            ops[m] = stable_line_matching(alternating_comb(m)).total_ops
        assert [ops[m] for m in (10, 20, 40, 80)] == [60, 220, 840, 3280]
        for m in (10, 20, 40):
            assert ops[2 * m] / ops[m] <= 4.5


class TestConvergenceToTransport:
    def _w1(self, ca, cb):
        # Ground-metric L1 transport between two couplings seen as point
        # masses in the plane; its optimum is the Wasserstein-1 distance.
        def flat(c):
            xa, ya = c.market.x_atoms, c.market.y_atoms
            pts, ms = [], []
            for i, j, m in c.entries:
                xi = xa[i] if np.ndim(xa[i]) == 0 else xa[i][0]
                yj = ya[j] if np.ndim(ya[j]) == 0 else ya[j][0]
                pts.append((float(xi), float(yj)))
                ms.append(float(m))
            return pts, ms

        pa, ma = flat(ca)
        pb, mb = flat(cb)
        mk = discrete_market(UtilitySpec.neg_distance(p=1), ma, mb, x_atoms=pa, y_atoms=pb)
        return solve_transport(mk, CostSpec.neg_utility()).objective

    def test_gap_shrinks_as_grid_refines(self):
        run = running_example()
        lm = stable_line_matching(run)
        gaps = {}
        for n in (8, 16, 32):
            _, dc = discretize_matching(lm, n)
            ot = stable_limit(discretize_line_market(run, n))
            gaps[n] = self._w1(dc, ot.report.coupling)
        assert gaps[32] < gaps[8]
        # Halving the grid step should roughly halve the gap; allow a
        # factor-3 cushion around that rate.
        assert gaps[16] <= 1.5 * gaps[8] + 1e-12
        assert gaps[32] <= 1.5 * gaps[16] + 1e-12

    def test_matched_grids_agree_exactly(self):
        # uniform_halves discretizes onto mirrored grids, so the stable
        # line matching and the transport limit coincide cell by cell.
        uh = uniform_halves()
        lm = stable_line_matching(uh)
        for n in (8, 16):
            _, dc = discretize_matching(lm, n)
            ot = stable_limit(discretize_line_market(uh, n))
            assert self._w1(dc, ot.report.coupling) == pytest.approx(0.0, abs=1e-12)
