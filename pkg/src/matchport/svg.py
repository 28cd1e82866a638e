"""Deterministic SVG portraits of matchings.

Line matchings draw in the arc style: density rectangles for the two
sides sit above (source) and below (target) the number line, and each
Monge piece is sampled at a fixed number of points, every sample
becoming one half-circle arc from x to its image.  The diagonal part is
a thick band on the axis.  Couplings over one-dimensional point markets
use the same arc style; other discrete couplings fall back to a
bipartite ribbon diagram.  All coordinates are printed with a fixed
%.6f format and nothing depends on dict order or randomness, so equal
inputs give byte-equal files.
"""

from __future__ import annotations

from fractions import Fraction

__all__ = ["render_line_matching", "render_coupling"]

_AXIS = "#44403c"
_ARC = "#0f766e"
_DIAG = "#d97706"
_MU = "#1d4ed8"
_NU = "#b91c1c"
_PAD = 48.0
_RECT = 40.0  # tallest density rectangle, px


def _f(v) -> str:
    return f"{float(v):.6f}"


def _header(width: float, height: float) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" '
        f'height="{_f(height)}" viewBox="0 0 {_f(width)} {_f(height)}">',
        f'<rect width="{_f(width)}" height="{_f(height)}" fill="#ffffff"/>',
    ]


def _half_circle(x1: float, x2: float, axis_y: float) -> str:
    lo, hi = (x1, x2) if x1 <= x2 else (x2, x1)
    r = (hi - lo) / 2.0
    return (
        f'<path d="M {_f(lo)} {_f(axis_y)} A {_f(r)} {_f(r)} 0 0 1 '
        f'{_f(hi)} {_f(axis_y)}" fill="none" stroke="{_ARC}" '
        f'stroke-width="1.2" opacity="0.85"/>'
    )


def render_line_matching(
    lm, width: float = 720.0, height: float = 460.0, arcs_per_piece: int = 5
) -> str:
    """SVG for a line matching: density rectangles plus sampled arcs.

    The source side's density is drawn above the axis, the target side's
    below (the target density of a piece with slope p is density/|p|).
    The default height leaves room for the widest possible half circle,
    which spans the full drawable width.
    """
    los = [p.lo for p in lm.pieces] + [d.lo for d in lm.diagonal]
    his = [p.hi for p in lm.pieces] + [d.hi for d in lm.diagonal]
    for p in lm.pieces:
        a, b = p.target_interval()
        los.append(a)
        his.append(b)
    if not los:
        return "\n".join(_header(width, height) + ["</svg>"]) + "\n"
    lo, hi = min(los), max(his)
    span = hi - lo
    if span == 0:
        span = Fraction(1)

    def X(v) -> float:
        return _PAD + float((v - lo) / span) * (width - 2 * _PAD)

    axis_y = height - 96.0
    # side densities implied by the matching: source rectangles above the
    # axis, image rectangles below
    rects: list[tuple[float, float, float, bool]] = []
    for d in lm.diagonal:
        rects.append((X(d.lo), X(d.hi), float(d.density), True))
        rects.append((X(d.lo), X(d.hi), float(d.density), False))
    for p in lm.pieces:
        a, b = p.target_interval()
        rects.append((X(p.lo), X(p.hi), float(p.density), True))
        rects.append((X(a), X(b), float(p.density / abs(p.slope)), False))
    peak = max(r[2] for r in rects)
    scale = _RECT / peak if peak > 0 else 0.0

    out = _header(width, height)
    for x1, x2, dens, above in sorted(rects):
        if x2 <= x1 or dens <= 0:
            continue
        h = dens * scale
        y = axis_y - h if above else axis_y
        fill = _MU if above else _NU
        out.append(
            f'<rect x="{_f(x1)}" y="{_f(y)}" width="{_f(x2 - x1)}" '
            f'height="{_f(h)}" fill="{fill}" opacity="0.18"/>'
        )
    out.append(
        f'<line x1="{_f(_PAD)}" y1="{_f(axis_y)}" x2="{_f(width - _PAD)}" '
        f'y2="{_f(axis_y)}" stroke="{_AXIS}" stroke-width="1.5"/>'
    )
    ticks = sorted({float(v) for v in (lo, hi)} | {float(p.lo) for p in lm.pieces})
    for t in ticks:
        tx = _PAD + (t - float(lo)) / float(span) * (width - 2 * _PAD)
        out.append(
            f'<line x1="{_f(tx)}" y1="{_f(axis_y - 4)}" x2="{_f(tx)}" '
            f'y2="{_f(axis_y + 4)}" stroke="{_AXIS}" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_f(tx)}" y="{_f(axis_y + 20)}" font-family="monospace" '
            f'font-size="11" text-anchor="middle" fill="{_AXIS}">{t:.6g}</text>'
        )
    for d in lm.diagonal:
        out.append(
            f'<line x1="{_f(X(d.lo))}" y1="{_f(axis_y)}" x2="{_f(X(d.hi))}" '
            f'y2="{_f(axis_y)}" stroke="{_DIAG}" stroke-width="6" '
            f'stroke-linecap="round" opacity="0.8"/>'
        )
    for p in lm.pieces:
        step = (p.hi - p.lo) / (arcs_per_piece + 1)
        for s in range(1, arcs_per_piece + 1):
            x = p.lo + step * s
            y = p(x)
            if x == y:
                continue
            out.append(_half_circle(X(x), X(y), axis_y))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_coupling(plan, width: float = 720.0, height: float = 460.0) -> str:
    """SVG for a discrete coupling.

    Point markets on the line get the arc portrait: both sides' atoms on
    one axis (masses as dot areas, source above, target below) and a
    half circle per support entry.  Markets without one-dimensional
    coordinates fall back to a two-row ribbon diagram with link width
    proportional to mass.
    """
    market = plan.market
    if market.x_atoms is not None and market.x_atoms.shape[1] == 1:
        return _render_coupling_arcs(plan, width, height)
    return _render_coupling_ribbon(plan, width, height)


def _render_coupling_arcs(plan, width: float, height: float) -> str:
    market = plan.market
    xs = [float(v) for v in market.x_atoms[:, 0]]
    ys = [float(v) for v in market.y_atoms[:, 0]]
    lo, hi = min(xs + ys), max(xs + ys)
    span = hi - lo or 1.0

    def X(v: float) -> float:
        return _PAD + (v - lo) / span * (width - 2 * _PAD)

    axis_y = height - 96.0
    out = _header(width, height)
    out.append(
        f'<line x1="{_f(_PAD)}" y1="{_f(axis_y)}" x2="{_f(width - _PAD)}" '
        f'y2="{_f(axis_y)}" stroke="{_AXIS}" stroke-width="1.5"/>'
    )
    for t in (lo, hi):
        tx = X(t)
        out.append(
            f'<line x1="{_f(tx)}" y1="{_f(axis_y - 4)}" x2="{_f(tx)}" '
            f'y2="{_f(axis_y + 4)}" stroke="{_AXIS}" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_f(tx)}" y="{_f(axis_y + 20)}" font-family="monospace" '
            f'font-size="11" text-anchor="middle" fill="{_AXIS}">{t:.6g}</text>'
        )
    for i, j, m in plan.entries:
        x1, x2 = X(xs[i]), X(ys[j])
        if x1 == x2:
            continue
        out.append(_half_circle(x1, x2, axis_y))
    peak = max(float(v) for v in list(market.x_masses) + list(market.y_masses))
    for i, x in enumerate(xs):
        r = 2.0 + 4.0 * float(market.x_masses[i]) / peak
        out.append(
            f'<circle cx="{_f(X(x))}" cy="{_f(axis_y - 8)}" r="{_f(r)}" '
            f'fill="{_MU}" opacity="0.8"/>'
        )
    for j, y in enumerate(ys):
        r = 2.0 + 4.0 * float(market.y_masses[j]) / peak
        out.append(
            f'<circle cx="{_f(X(y))}" cy="{_f(axis_y + 8)}" r="{_f(r)}" '
            f'fill="{_NU}" opacity="0.8"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _render_coupling_ribbon(plan, width: float, height: float) -> str:
    market = plan.market
    nx, ny = market.n_x, market.n_y
    top, bottom = 64.0, height - 64.0

    def px(i: int, n: int) -> float:
        if n == 1:
            return width / 2.0
        return _PAD + i * (width - 2 * _PAD) / (n - 1)

    total = plan.total_mass
    out = _header(width, height)
    for i, j, m in plan.entries:
        w = 0.75 + 6.0 * float(m) / total
        out.append(
            f'<line x1="{_f(px(i, nx))}" y1="{_f(top)}" x2="{_f(px(j, ny))}" '
            f'y2="{_f(bottom)}" stroke="{_ARC}" stroke-width="{_f(w)}" '
            f'opacity="0.7"/>'
        )
    xl = market.x_labels or tuple(f"x{i}" for i in range(nx))
    yl = market.y_labels or tuple(f"y{j}" for j in range(ny))
    for i in range(nx):
        out.append(
            f'<circle cx="{_f(px(i, nx))}" cy="{_f(top)}" r="4" fill="{_MU}"/>'
        )
        out.append(
            f'<text x="{_f(px(i, nx))}" y="{_f(top - 12)}" font-family="monospace" '
            f'font-size="11" text-anchor="middle" fill="{_AXIS}">{xl[i]}</text>'
        )
    for j in range(ny):
        out.append(
            f'<circle cx="{_f(px(j, ny))}" cy="{_f(bottom)}" r="4" fill="{_NU}"/>'
        )
        out.append(
            f'<text x="{_f(px(j, ny))}" y="{_f(bottom + 20)}" font-family="monospace" '
            f'font-size="11" text-anchor="middle" fill="{_AXIS}">{yl[j]}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
