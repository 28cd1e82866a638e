"""Exact stable matchings for piecewise-constant markets on the line.

Utilities are -|x - y|, so a matching is described geometrically: a
diagonal part (agents matched to their own location) plus affine Monge
pieces y = p x + q mapping intervals of one side onto intervals of the
other.  The construction follows the reduction to independent submarkets:

1.  Split off the common part of the two densities (pointwise min); it is
    matched diagonally at distance zero.
2.  The residual densities are mutually singular, so the signed difference
    rho = mu - nu alternates between K+1 blocks of constant sign.  While
    K >= 2, locate an interior block that can be "pinched": a triple
    alpha^- <= alpha <= alpha^+ with rho vanishing on [alpha^-, alpha] and
    [alpha, alpha^+] and both intervals of equal length.  The two cut
    submarkets are anti-diagonal and independent of the rest; the pinch
    with the smallest half-width delta is extracted first (leftmost on
    ties), and each extraction removes at least one sign change.
3.  A residual with K <= 1 is anti-diagonal; it is matched by the
    anti-assortative benchmark F_mu(x) = total - F_nu(y), which is the
    unique stable matching there.

All arithmetic runs over Fractions (float inputs convert exactly), so
breakpoints such as -10/7 come out exact and goldens are bit-stable.
The matchings this produces send each source point to at most two targets
(its own location and one Monge image), and matched intervals never
interlace.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from ._common import SolverError, ValidationError, as_fraction
from .markets import (
    Coupling,
    DiscreteMarket,
    PiecewiseDensityMarket,
    UtilitySpec,
    coupling,
    discrete_market,
)

__all__ = [
    "SignedDecomposition",
    "DiagonalSegment",
    "AffinePiece",
    "ExtractionStep",
    "LineMatching",
    "sign_changes",
    "split_diagonal",
    "extract_independent_pair",
    "anti_assortative",
    "assortative_matching",
    "stable_line_matching",
    "eval_match_map",
    "discretize_matching",
]


# ---------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class DiagonalSegment:
    lo: Fraction
    hi: Fraction
    density: Fraction


@dataclass(frozen=True)
class AffinePiece:
    """Monge piece: x in [lo, hi) maps to y = slope * x + intercept."""

    lo: Fraction
    hi: Fraction
    slope: Fraction
    intercept: Fraction
    density: Fraction
    source: str = "mu"

    def __call__(self, x):
        return self.slope * x + self.intercept

    @property
    def mass(self) -> Fraction:
        return self.density * (self.hi - self.lo)

    def target_interval(self) -> tuple[Fraction, Fraction]:
        a, b = self(self.lo), self(self.hi)
        return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class ExtractionStep:
    kind: str  # "diagonal" | "extract" | "base"
    lo: Fraction | None = None
    hi: Fraction | None = None
    delta: Fraction | None = None
    ops: int = 0


@dataclass(frozen=True, eq=False)
class LineMatching:
    diagonal: tuple[DiagonalSegment, ...]
    pieces: tuple[AffinePiece, ...]
    provenance: tuple[ExtractionStep, ...] = ()

    def __post_init__(self):
        spans = sorted((p.lo, p.hi) for p in self.pieces)
        for (l1, h1), (l2, h2) in zip(spans, spans[1:]):
            if l2 < h1:
                raise ValidationError("piece source intervals overlap")
        for p in self.pieces:
            if p.slope == 0 or p.density <= 0 or p.lo >= p.hi:
                raise ValidationError("degenerate Monge piece")
        dspans = sorted((d.lo, d.hi) for d in self.diagonal)
        for (l1, h1), (l2, h2) in zip(dspans, dspans[1:]):
            if l2 < h1:
                raise ValidationError("diagonal segments overlap")

    @property
    def total_ops(self) -> int:
        return sum(s.ops for s in self.provenance)

    def matched_mass(self) -> Fraction:
        diag = sum((d.density * (d.hi - d.lo) for d in self.diagonal), Fraction(0))
        return diag + sum((p.mass for p in self.pieces), Fraction(0))


@dataclass(frozen=True)
class SignedDecomposition:
    """Minimal alternating blocks of sign(mu - nu) over the support."""

    blocks: tuple[tuple[Fraction, Fraction, int], ...]
    k: int


# ---------------------------------------------------------------------------
# internal segment lists
#
# A segment list is the working representation of a (sub)market: sorted
# tuples (lo, hi, f, g) with lo < hi and f + g > 0; stretches where both
# densities vanish are simply absent.


def _segments(m: PiecewiseDensityMarket):
    segs = []
    for i in range(m.n_intervals):
        if m.mu[i] > 0 or m.nu[i] > 0:
            segs.append((m.breakpoints[i], m.breakpoints[i + 1], m.mu[i], m.nu[i]))
    return _merge_segments(segs)


def _merge_segments(segs):
    out = []
    for seg in segs:
        if out and out[-1][1] == seg[0] and out[-1][2:] == seg[2:]:
            out[-1] = (out[-1][0], seg[1], seg[2], seg[3])
        else:
            out.append(seg)
    return out


def _segments_to_market(segs) -> PiecewiseDensityMarket:
    if not segs:
        raise ValidationError("empty market")
    points = []
    f = []
    g = []
    cursor = segs[0][0]
    points.append(cursor)
    for lo, hi, df, dg in segs:
        if lo > cursor:
            f.append(Fraction(0))
            g.append(Fraction(0))
            points.append(lo)
        f.append(df)
        g.append(dg)
        points.append(hi)
        cursor = hi
    return PiecewiseDensityMarket(
        breakpoints=tuple(points), mu=tuple(f), nu=tuple(g)
    )


def _clip(segs, lo: Fraction, hi: Fraction):
    """Segments restricted to [lo, hi]."""
    out = []
    for a, b, f, g in segs:
        a2, b2 = max(a, lo), min(b, hi)
        if a2 < b2:
            out.append((a2, b2, f, g))
    return out


def _clip_out(segs, lo: Fraction, hi: Fraction):
    """Segments with [lo, hi] removed."""
    out = []
    for a, b, f, g in segs:
        if b <= lo or a >= hi:
            out.append((a, b, f, g))
            continue
        if a < lo:
            out.append((a, lo, f, g))
        if hi < b:
            out.append((hi, b, f, g))
    return out


def _side_mass(segs, side: int) -> Fraction:
    return sum(((s[2 + side]) * (s[1] - s[0]) for s in segs), Fraction(0))


# ---------------------------------------------------------------------------
# signed decomposition


def _blocks(segs):
    """Group segments into maximal same-sign runs (zero-sign segments are
    absorbed into the preceding run, or the following one at the start)."""
    runs = []
    pending = []  # zero-sign segments waiting for a home
    for seg in segs:
        s = (seg[2] > seg[3]) - (seg[2] < seg[3])
        if s == 0:
            pending.append(seg)
            continue
        if runs and runs[-1][0] == s:
            runs[-1][1].extend(pending)
            runs[-1][1].append(seg)
        else:
            runs.append([s, [seg]])
        pending = []
    return [(sgn, members) for sgn, members in runs]


def sign_changes(m: PiecewiseDensityMarket) -> SignedDecomposition:
    """Minimal alternating decomposition of mu - nu.

    Returns the maximal blocks on which the signed difference keeps one
    sign (zero-density stretches merged into their neighbors) and the
    number K of alternations; K = 0 means the difference never changes
    sign (in particular mu = nu gives no blocks at all).
    """
    runs = _blocks(_segments(m))
    blocks = tuple(
        (members[0][0], members[-1][1], sgn) for sgn, members in runs
    )
    return SignedDecomposition(blocks=blocks, k=max(0, len(blocks) - 1))


def split_diagonal(
    m: PiecewiseDensityMarket,
) -> tuple[tuple[DiagonalSegment, ...], PiecewiseDensityMarket | None]:
    """Hahn-style split into the common part and a disjoint residual.

    The common density min(f, g) is matched in place (the diagonal);
    subtracting it from both sides leaves mutually singular residuals.
    Returns (diagonal segments, residual market or None when mu = nu).
    """
    diag = []
    residual = []
    for lo, hi, f, g in _segments(m):
        d = min(f, g)
        if d > 0:
            diag.append(DiagonalSegment(lo=lo, hi=hi, density=d))
        if f - d > 0 or g - d > 0:
            residual.append((lo, hi, f - d, g - d))
    merged = []
    for seg in diag:
        if merged and merged[-1].hi == seg.lo and merged[-1].density == seg.density:
            merged[-1] = DiagonalSegment(merged[-1].lo, seg.hi, seg.density)
        else:
            merged.append(seg)
    res = _segments_to_market(residual) if residual else None
    return tuple(merged), res


# ---------------------------------------------------------------------------
# the pinch search
#
# A block is summarized by its one-sided segments [(lo, hi, dens)] (the
# residual is disjoint, so inside one block only one side is populated).


class _Block:
    __slots__ = ("sign", "segs", "cum", "total", "lo", "hi")

    def __init__(self, sign, members):
        self.sign = sign
        self.segs = [
            (lo, hi, f if sign > 0 else g) for lo, hi, f, g in members
        ]
        self.cum = [Fraction(0)]
        for lo, hi, d in self.segs:
            self.cum.append(self.cum[-1] + d * (hi - lo))
        self.total = self.cum[-1]
        self.lo = self.segs[0][0]
        self.hi = self.segs[-1][1]

    def head_mass(self, x: Fraction) -> Fraction:
        """Mass of the block in (-inf, x]."""
        acc = Fraction(0)
        for (lo, hi, d), c in zip(self.segs, self.cum):
            if x >= hi:
                acc = c + d * (hi - lo)
            elif x > lo:
                return c + d * (x - lo)
            else:
                break
        return acc

    def head_preimage(self, h: Fraction) -> tuple[Fraction, Fraction]:
        """Interval of positions whose head mass equals h (within the block)."""
        if h <= 0:
            return (self.lo, self.lo)
        for i, (lo, hi, d) in enumerate(self.segs):
            c0, c1 = self.cum[i], self.cum[i + 1]
            if h < c1:
                if h > c0:
                    x = lo + (h - c0) / d
                    return (x, x)
                # h == c0: flat spot between segment i-1 and i
                left = self.segs[i - 1][1] if i > 0 else self.lo
                return (left, lo)
        if h == self.total:
            return (self.hi, self.hi)
        raise SolverError("mass target outside block range")

    def boundary_masses(self):
        return list(self.cum)


def _pinch_block(a: _Block, b: _Block, c: _Block, ops: list):
    """Solve for (alpha-, alpha, alpha+) pinching interior block b.

    rho([alpha-, alpha]) = rho([alpha, alpha+]) = 0 with equal widths:
    writing t for the head mass of b at alpha, the mass conditions say the
    tail of a from alpha- and the head of c up to alpha+ both mirror t, and
    the width gap e(alpha) = 2 alpha - alpha- - alpha+ is strictly
    increasing, so the scan below walks its breakpoints in order and roots
    exactly one affine stretch.  Returns (alpha-, alpha, alpha+) or None.
    """
    t_lo = max(Fraction(0), b.total - c.total)
    t_hi = min(a.total, b.total)
    if t_lo > t_hi:
        return None

    # Candidate t levels where any of the three piecewise maps bends.
    levels = set(b.boundary_masses())
    levels.update(a.total - m for m in a.boundary_masses())
    levels.update(b.total - m for m in c.boundary_masses())
    levels = sorted(t for t in levels if t_lo <= t <= t_hi)
    if not levels or levels[0] != t_lo:
        levels.insert(0, t_lo)
    if levels[-1] != t_hi:
        levels.append(t_hi)

    events = []
    for t in levels:
        alo, ahi = b.head_preimage(t)
        events.append((alo, t))
        if ahi != alo:
            events.append((ahi, t))
    events.sort()

    prev = None  # (alpha, entering value of e on the right)
    for alpha, t in events:
        ops.append(1)
        pre_a = a.head_preimage(a.total - t)
        pre_c = c.head_preimage(b.total - t)
        e_min = 2 * alpha - pre_a[1] - pre_c[1]
        e_max = 2 * alpha - pre_a[0] - pre_c[0]
        if e_min <= 0 <= e_max:
            # Tightest pinch on flats: push alpha- as far right as allowed.
            am = min(pre_a[1], 2 * alpha - pre_c[0])
            ap = 2 * alpha - am
            return am, alpha, ap
        if prev is not None and prev[1] < 0 < e_min:
            # Root strictly inside the previous affine stretch.
            alpha_p, e_p = prev
            slope = (e_min - e_p) / (alpha - alpha_p)
            root = alpha_p - e_p / slope
            t_root = b.head_mass(root)
            am = a.head_preimage(a.total - t_root)[0]
            ap = c.head_preimage(b.total - t_root)[0]
            return am, root, ap
        prev = (alpha, e_max)
    return None


def _anti_pieces(segs, ops: list) -> list[AffinePiece]:
    """Anti-assortative pieces F_mu(x) = total - F_nu(y) for a segment list."""
    mu = [(lo, hi, f) for lo, hi, f, _ in segs if f > 0]
    nu = [(lo, hi, g) for lo, hi, _, g in segs if g > 0]
    if _side_mass(segs, 0) != _side_mass(segs, 1):
        raise SolverError("anti-assortative base needs balanced sides")
    pieces = []
    j = len(nu) - 1
    y_cursor = nu[j][1] if nu else None
    for lo, hi, f in mu:
        x = lo
        remaining = f * (hi - lo)
        while remaining > 0:
            ops.append(1)
            ylo, _, g = nu[j]
            avail = g * (y_cursor - ylo)
            if avail <= 0:
                j -= 1
                y_cursor = nu[j][1]
                continue
            step = min(remaining, avail)
            x_hi = x + step / f
            slope = -f / g
            pieces.append(
                AffinePiece(
                    lo=x, hi=x_hi, slope=slope,
                    intercept=y_cursor - slope * x, density=f,
                )
            )
            y_cursor = y_cursor - step / g
            x = x_hi
            remaining -= step
    return pieces


def _assort_pieces(segs, ops: list) -> list[AffinePiece]:
    """Assortative pieces F_mu(x) = F_nu(y) for a segment list."""
    mu = [(lo, hi, f) for lo, hi, f, _ in segs if f > 0]
    nu = [(lo, hi, g) for lo, hi, _, g in segs if g > 0]
    pieces = []
    j = 0
    y_cursor = nu[j][0] if nu else None
    for lo, hi, f in mu:
        x = lo
        remaining = f * (hi - lo)
        while remaining > 0:
            ops.append(1)
            _, yhi, g = nu[j]
            avail = g * (yhi - y_cursor)
            if avail <= 0:
                j += 1
                y_cursor = nu[j][0]
                continue
            step = min(remaining, avail)
            x_hi = x + step / f
            slope = f / g
            pieces.append(
                AffinePiece(
                    lo=x, hi=x_hi, slope=slope,
                    intercept=y_cursor - slope * x, density=f,
                )
            )
            y_cursor = y_cursor + step / g
            x = x_hi
            remaining -= step
    return pieces


# ---------------------------------------------------------------------------
# public operations


def extract_independent_pair(m: PiecewiseDensityMarket):
    """One pinch extraction from a disjoint market with K >= 2.

    Returns (sub1, sub2, residual, step) where sub1/sub2 are the two
    anti-diagonal submarkets cut at [alpha-, alpha] and [alpha, alpha+]
    (either may be None when the pinch lands on a block edge), residual is
    the remaining market (None when empty), and step records the pinch
    location, half-width delta, and scan operation count.  The residual
    always has at least one sign change fewer.
    """
    segs = _segments(m)
    if any(f > 0 and g > 0 for _, _, f, g in segs):
        raise ValidationError("market must be disjoint (split the diagonal first)")
    sub1, sub2, residual, step, _ = _extract_once(segs)
    to_market = lambda s: _segments_to_market(s) if s else None
    return to_market(sub1), to_market(sub2), to_market(residual), step


def _extract_once(segs):
    runs = _blocks(segs)
    k = len(runs) - 1
    if k < 2:
        raise ValidationError("need at least two sign changes to extract")
    blocks = [_Block(sgn, members) for sgn, members in runs]
    ops: list = []
    best = None
    for idx in range(1, len(blocks) - 1):
        sol = _pinch_block(blocks[idx - 1], blocks[idx], blocks[idx + 1], ops)
        if sol is None:
            continue
        am, alpha, ap = sol
        delta = alpha - am
        if best is None or delta < best[0]:
            best = (delta, idx, am, alpha, ap)
    if best is None:
        raise SolverError("no pinch admits a solution; inconsistent residual")
    delta, _, am, alpha, ap = best
    sub1 = _clip(segs, am, alpha)
    sub2 = _clip(segs, alpha, ap)
    residual = _clip_out(segs, am, ap)
    step = ExtractionStep(
        kind="extract", lo=am, hi=ap, delta=delta, ops=len(ops)
    )
    new_runs = _blocks(residual)
    if residual and len(new_runs) - 1 > k - 1:
        raise SolverError("extraction failed to reduce sign changes")
    return sub1, sub2, residual, step, k


def anti_assortative(m: PiecewiseDensityMarket) -> LineMatching:
    """Anti-assortative benchmark: F_mu(x) = total - F_nu(y).

    Matches the lowest mu-quantile to the highest nu-quantile; on
    anti-diagonal disjoint markets this is the unique stable matching.
    """
    ops: list = []
    pieces = _anti_pieces(_segments(m), ops)
    step = ExtractionStep(kind="base", ops=len(ops))
    return LineMatching(diagonal=(), pieces=tuple(pieces), provenance=(step,))


def assortative_matching(m: PiecewiseDensityMarket) -> LineMatching:
    """Assortative benchmark: F_mu(x) = F_nu(y) (quantile coupling).

    Welfare-maximal for -|x - y| utilities, but generally far from stable.
    """
    ops: list = []
    pieces = _assort_pieces(_segments(m), ops)
    step = ExtractionStep(kind="base", ops=len(ops))
    return LineMatching(diagonal=(), pieces=tuple(pieces), provenance=(step,))


def stable_line_matching(m: PiecewiseDensityMarket) -> LineMatching:
    """Stable matching of a piecewise-constant line market, exactly.

    Splits off the diagonal, repeatedly extracts the smallest independent
    pinch while the residual has two or more sign changes (leftmost pinch
    on ties), and closes with the anti-assortative benchmark on the final
    anti-diagonal residual.  Every source point ends up with at most two
    targets: its own location and one Monge image.
    """
    diag, residual = split_diagonal(m)
    steps = [
        ExtractionStep(
            kind="diagonal",
            ops=m.n_intervals,
        )
    ]
    pieces: list[AffinePiece] = []
    segs = _segments(residual) if residual is not None else []
    while segs:
        runs = _blocks(segs)
        if len(runs) - 1 < 2:
            break
        sub1, sub2, segs, step, _ = _extract_once(segs)
        ops: list = []
        for sub in (sub1, sub2):
            if sub:
                pieces.extend(_anti_pieces(sub, ops))
        steps.append(
            ExtractionStep(
                kind=step.kind, lo=step.lo, hi=step.hi, delta=step.delta,
                ops=step.ops + len(ops),
            )
        )
    if segs:
        ops = []
        pieces.extend(_anti_pieces(segs, ops))
        steps.append(ExtractionStep(kind="base", ops=len(ops)))
    pieces.sort(key=lambda p: p.lo)
    return LineMatching(
        diagonal=diag, pieces=tuple(pieces), provenance=tuple(steps)
    )


def eval_match_map(lm: LineMatching, x) -> list[tuple[Fraction, Fraction]]:
    """Targets of a source point x with their mass shares.

    Returns [(target, share)] summing to 1: the diagonal keeps share
    d / (d + r) at x itself (d the diagonal density, r the Monge-piece
    density), the Monge image takes the rest.  Raises if x lies outside
    the matched support.
    """
    x = as_fraction(x)
    d = Fraction(0)
    for seg in lm.diagonal:
        last = seg is lm.diagonal[-1]
        if seg.lo <= x < seg.hi or (last and x == seg.hi):
            d = seg.density
            break
    piece = None
    for p in lm.pieces:
        if p.lo <= x < p.hi:
            piece = p
            break
    if piece is None:
        # Right endpoint of a maximal run of pieces is matched by closure.
        ends = [p for p in lm.pieces if p.hi == x]
        starts = [p for p in lm.pieces if p.lo == x]
        if ends and not starts:
            piece = ends[0]
    if piece is None and d == 0:
        raise ValidationError(f"{float(x)} is outside the matched support")
    if piece is None:
        return [(x, Fraction(1))]
    r = piece.density
    y = piece(x)
    if d == 0:
        return [(y, Fraction(1))]
    return [(x, d / (d + r)), (y, r / (d + r))]


def discretize_matching(
    lm: LineMatching, cells_per_piece: int
) -> tuple[DiscreteMarket, Coupling]:
    """Midpoint discretization of a line matching into a finite coupling.

    Each diagonal segment and each Monge piece contributes
    ``cells_per_piece`` cells; a cell of width w at midpoint x carries mass
    density * w from x to its matched image.  The returned coupling lives
    on the induced discrete market (atoms deduplicated in first-seen
    order) and is the bridge from exact line matchings to the coupling
    audits.
    """
    if cells_per_piece < 1:
        raise ValidationError("cells_per_piece must be >= 1")
    triples: list[tuple[Fraction, Fraction, Fraction]] = []
    for seg in lm.diagonal:
        w = (seg.hi - seg.lo) / cells_per_piece
        for c in range(cells_per_piece):
            mid = seg.lo + w * c + w / 2
            triples.append((mid, mid, seg.density * w))
    for p in lm.pieces:
        w = (p.hi - p.lo) / cells_per_piece
        for c in range(cells_per_piece):
            mid = p.lo + w * c + w / 2
            triples.append((mid, p(mid), p.density * w))

    # Key on the float image: the market constructor merges coincident
    # atoms by float coordinate, and indices must line up with it.
    xs: dict[float, int] = {}
    ys: dict[float, int] = {}
    for x, y, _ in triples:
        xs.setdefault(float(x), len(xs))
        ys.setdefault(float(y), len(ys))
    x_masses = [Fraction(0)] * len(xs)
    y_masses = [Fraction(0)] * len(ys)
    entries = []
    for x, y, mass in triples:
        i, j = xs[float(x)], ys[float(y)]
        x_masses[i] += mass
        y_masses[j] += mass
        entries.append((i, j, mass))
    market = discrete_market(
        UtilitySpec.neg_distance(p=2.0),
        x_masses,
        y_masses,
        x_atoms=[[float(v)] for v in xs],
        y_atoms=[[float(v)] for v in ys],
    )
    return market, coupling(market, entries)
