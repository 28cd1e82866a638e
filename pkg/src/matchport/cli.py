"""Command-line front end.

Three subcommands cover the workflows:

``matchport solve market.mm``
    solve one market (transport, line construction, or the enumeration
    oracles) with optional audits and an SVG portrait;
``matchport sweep market.mm --alphas -5,0,5``
    solve across a list of alphas with the audit battery per solve;
``matchport potential prefs.mm``
    test ordinal rankings for strict cycles and print the aligned
    utility when one exists.

Exit codes: 0 on success, 2 for invalid inputs or arguments, 3 when a
requested audit fails its bound (a strict preference cycle counts), 4
when the solver gives up.  Results go to stdout as text, or as JSON with
--json, and to a report file with --out; MATCHPORT_THREADS caps sweep
parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from ._common import MatchportError, SolverError, ValidationError, frac_format
from .files import load_market
from .markets import DiscreteMarket, PiecewiseDensityMarket
from .multiway import KMarket
from .ordinal import PreferenceProfile

AUDIT_CHOICES = ("stability", "egalitarian", "welfare", "nocrossing", "all")


def _fmt(v) -> object:
    if isinstance(v, Fraction):
        return frac_format(v)
    return v


def _emit(args, doc: dict, text_lines: list[str]) -> None:
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, default=_fmt)
            fh.write("\n")
    if args.json:
        json.dump(doc, sys.stdout, indent=2, default=_fmt)
        sys.stdout.write("\n")
    else:
        for line in text_lines:
            print(line)


def _requested(args, applicable: set[str]) -> set[str]:
    """Expand --audit flags; "all" means every audit this method supports."""
    sel = set(args.audit or ())
    if "all" in sel:
        return applicable
    extra = sel - applicable
    if extra:
        raise ValidationError(
            f"audit {sorted(extra)[0]!r} does not apply to this method"
        )
    return sel


def _bound_verdicts(plan, alpha: float, requested: set[str]) -> tuple[dict, bool]:
    """Run the requested coupling audits; returns (doc, all_passed)."""
    from .audit import audit_coupling, welfare_bound_check
    from .transport import theoretical_bounds

    tol = 1e-9
    rep = audit_coupling(plan, alpha=alpha)
    bounds = theoretical_bounds(alpha)
    doc: dict = {
        "stability_eps": rep.stability_eps,
        "welfare": rep.welfare,
        "egalitarian_eps": rep.egalitarian_eps,
        "bottleneck_opt": rep.egalitarian_opt,
    }
    ok = True
    if "stability" in requested and bounds.stability_eps is not None:
        passed = rep.stability_eps <= bounds.stability_eps + tol
        doc["stability_bound"] = bounds.stability_eps
        doc["stability_ok"] = passed
        ok = ok and passed
    if "egalitarian" in requested and bounds.egalitarian_eps is not None:
        passed = rep.egalitarian_eps <= bounds.egalitarian_eps + tol
        doc["egalitarian_bound"] = bounds.egalitarian_eps
        doc["egalitarian_ok"] = passed
        ok = ok and passed
    if "welfare" in requested and rep.welfare_check is not None:
        doc["welfare_bound"] = rep.welfare_check.lower_bound
        doc["welfare_shifted"] = rep.welfare_check.welfare_shifted
        doc["welfare_ok"] = rep.welfare_check.passed
        ok = ok and rep.welfare_check.passed
    return doc, ok


def _entry_doc(plan) -> list[list]:
    out = []
    for k, (i, j, m) in enumerate(plan.entries):
        mass = plan.exact_masses[k] if plan.exact_masses is not None else m
        out.append([i, j, _fmt(mass)])
    return out


def _cmd_solve_ot(args, market: DiscreteMarket) -> int:
    from .transport import CostSpec, solve_transport

    mode = "rational" if args.rational else "auto"
    rep = solve_transport(market, CostSpec.alpha_family(args.alpha), mode=mode)
    requested = _requested(args, {"stability", "egalitarian", "welfare"})
    audit_doc, ok = (
        _bound_verdicts(rep.coupling, args.alpha, requested)
        if requested
        else ({}, True)
    )
    doc = {
        "command": "solve",
        "method": "ot",
        "alpha": args.alpha,
        "mode": rep.mode,
        "objective": _fmt(rep.objective),
        "iterations": rep.iterations,
        "entries": _entry_doc(rep.coupling),
    }
    if audit_doc:
        doc["audits"] = audit_doc
    lines = [
        f"objective {rep.objective} at alpha={args.alpha:g} ({rep.mode} mode, "
        f"{rep.iterations} pivots)",
        f"support: {len(rep.coupling.entries)} pairs",
    ]
    for key, val in audit_doc.items():
        lines.append(f"  {key}: {val}")
    if args.svg:
        from .svg import render_coupling

        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(render_coupling(rep.coupling))
        lines.append(f"portrait written to {args.svg}")
    _emit(args, doc, lines)
    return 0 if ok else 3


def _cmd_solve_line(args, market: PiecewiseDensityMarket) -> int:
    from .audit import no_crossing_check
    from .line import discretize_matching, stable_line_matching

    lm = stable_line_matching(market)
    requested = _requested(
        args, {"stability", "egalitarian", "welfare", "nocrossing"}
    )
    doc = {
        "command": "solve",
        "method": "line",
        "diagonal": [
            {"lo": _fmt(d.lo), "hi": _fmt(d.hi), "density": _fmt(d.density)}
            for d in lm.diagonal
        ],
        "pieces": [
            {
                "lo": _fmt(p.lo),
                "hi": _fmt(p.hi),
                "slope": _fmt(p.slope),
                "intercept": _fmt(p.intercept),
                "density": _fmt(p.density),
            }
            for p in lm.pieces
        ],
        "extractions": [
            {"kind": s.kind, "delta": _fmt(s.delta), "ops": s.ops}
            for s in lm.provenance
        ],
    }
    lines = [
        f"stable matching: {len(lm.diagonal)} diagonal segments, "
        f"{len(lm.pieces)} affine pieces"
    ]
    for p in lm.pieces:
        lines.append(
            f"  [{p.lo}, {p.hi}): y = {p.slope} x + {p.intercept} (density {p.density})"
        )
    ok = True
    audits: dict = {}
    if "nocrossing" in requested:
        witness = no_crossing_check(lm)
        audits["nocrossing_ok"] = witness is None
        if witness is not None:
            audits["nocrossing_witness"] = [
                [float(a), float(b)] for a, b in witness
            ]
            ok = False
    grid_audits = requested & {"stability", "egalitarian", "welfare"}
    if grid_audits:
        _, plan = discretize_matching(lm, args.cells)
        sub, _ok = _bound_verdicts(plan, 0.0, set())
        tol = 1e-9
        if "stability" in grid_audits:
            audits["stability_eps"] = sub["stability_eps"]
            audits["stability_ok"] = sub["stability_eps"] <= tol
            ok = ok and audits["stability_ok"]
        if "egalitarian" in grid_audits:
            audits["egalitarian_eps"] = sub["egalitarian_eps"]
        if "welfare" in grid_audits:
            audits["welfare"] = sub["welfare"]
        audits["cells_per_piece"] = args.cells
    if audits:
        doc["audits"] = audits
        for key, val in audits.items():
            lines.append(f"  {key}: {val}")
    if args.svg:
        from .svg import render_line_matching

        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(render_line_matching(lm))
        lines.append(f"portrait written to {args.svg}")
    _emit(args, doc, lines)
    return 0 if ok else 3


def _cmd_solve_oracle(args, market: DiscreteMarket) -> int:
    from .audit import brute_force_oracle

    rep = brute_force_oracle(market)
    if args.method == "greedy":
        doc = {
            "command": "solve",
            "method": "greedy",
            "matching": list(rep.greedy),
            "welfare": rep.greedy_welfare,
        }
        lines = [f"greedy matching {list(rep.greedy)} with welfare {rep.greedy_welfare:g}"]
    else:
        doc = {
            "command": "solve",
            "method": "bruteforce",
            "stable": [list(p) for p in rep.stable],
            "welfare_opt": rep.welfare_opt,
            "welfare_argmax": list(rep.welfare_argmax),
            "bottleneck_opt": rep.bottleneck_opt,
            "bottleneck_argmax": list(rep.bottleneck_argmax),
        }
        lines = [
            f"{len(rep.stable)} stable matchings; welfare optimum {rep.welfare_opt:g}, "
            f"bottleneck optimum {rep.bottleneck_opt:g}",
        ]
    _emit(args, doc, lines)
    return 0


def _cmd_solve_k(args, market: KMarket) -> int:
    from .multiway import k_audits, solve_k_transport
    from .transport import CostSpec

    rep = solve_k_transport(market, CostSpec.alpha_family(args.alpha))
    requested = _requested(args, {"stability", "egalitarian", "welfare"})
    doc = {
        "command": "solve",
        "method": "kmarginal",
        "alpha": args.alpha,
        "objective": rep.objective,
        "entries": [list(idx) + [m] for idx, m in rep.coupling.entries],
    }
    lines = [
        f"objective {rep.objective:g} at alpha={args.alpha:g} "
        f"({len(rep.coupling.entries)} support cells)"
    ]
    ok = True
    if requested:
        aud = k_audits(rep.coupling, alpha=args.alpha)
        tol = 1e-9
        audits: dict = {
            "stability_eps": aud.stability_eps,
            "welfare": aud.welfare,
            "egalitarian_eps": aud.egalitarian_eps,
            "bottleneck_opt": aud.bottleneck_opt,
        }
        if "stability" in requested and aud.bounds and aud.bounds.stability_eps is not None:
            audits["stability_bound"] = aud.bounds.stability_eps
            audits["stability_ok"] = aud.stability_eps <= aud.bounds.stability_eps + tol
            ok = ok and audits["stability_ok"]
        if "egalitarian" in requested:
            audits["egalitarian_limit"] = aud.egalitarian_limit
            audits["egalitarian_ok"] = aud.egalitarian_ok
            ok = ok and aud.egalitarian_ok
        if "welfare" in requested and aud.welfare_ok is not None:
            audits["welfare_lower_bound"] = aud.welfare_lower_bound
            audits["welfare_ok"] = aud.welfare_ok
            ok = ok and aud.welfare_ok
        doc["audits"] = audits
        for key, val in audits.items():
            lines.append(f"  {key}: {val}")
    _emit(args, doc, lines)
    return 0 if ok else 3


def cmd_solve(args) -> int:
    market = load_market(args.market)
    method = args.method
    if method is None:
        if isinstance(market, DiscreteMarket):
            method = "ot"
        elif isinstance(market, PiecewiseDensityMarket):
            method = "line"
        elif isinstance(market, KMarket):
            method = "kmarginal"
        else:
            raise ValidationError(
                "preference profiles are handled by the potential subcommand"
            )
    if method == "ot":
        if not isinstance(market, DiscreteMarket):
            raise ValidationError("the ot method needs a discrete market")
        return _cmd_solve_ot(args, market)
    if method == "line":
        if not isinstance(market, PiecewiseDensityMarket):
            raise ValidationError("the line method needs a piecewise_line market")
        return _cmd_solve_line(args, market)
    if method in ("greedy", "bruteforce"):
        if not isinstance(market, DiscreteMarket):
            raise ValidationError(f"the {method} method needs a discrete market")
        return _cmd_solve_oracle(args, market)
    if method == "kmarginal":
        if not isinstance(market, KMarket):
            raise ValidationError("the kmarginal method needs a k_discrete market")
        return _cmd_solve_k(args, market)
    raise ValidationError(f"unknown method {method!r}")


def cmd_sweep(args) -> int:
    from .transport import alpha_sweep

    market = load_market(args.market)
    if not isinstance(market, DiscreteMarket):
        raise ValidationError("sweep works on discrete markets")
    try:
        alphas = [float(tok) for tok in args.alphas.split(",") if tok.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --alphas list: {exc}") from exc
    if not alphas:
        raise ValidationError("--alphas needs at least one value")
    records = alpha_sweep(market, alphas, audit=not args.no_audit)
    rows = []
    lines = []
    failed = False
    for rec in records:
        row: dict = {"alpha": rec["alpha"], "error": rec["error"]}
        if rec["error"] is not None:
            failed = True
            lines.append(f"alpha={rec['alpha']:+g}: ERROR {rec['error']}")
        else:
            rep = rec["report"]
            row["objective"] = _fmt(rep.objective)
            row["support"] = len(rep.coupling.entries)
            b = rec["bounds"]
            row["stability_bound"] = b.stability_eps
            row["egalitarian_bound"] = b.egalitarian_eps
            if rec["audit"] is not None:
                row["stability_eps"] = rec["audit"].stability_eps
                row["welfare"] = rec["audit"].welfare
                row["egalitarian_eps"] = rec["audit"].egalitarian_eps
            if b.stability_eps is not None:
                bound = f"stability<={b.stability_eps:.6g}"
            elif b.egalitarian_eps is not None:
                bound = f"egalitarian<={b.egalitarian_eps:.6g}"
            else:
                bound = "exact"
            lines.append(
                f"alpha={rec['alpha']:+g}: objective {rep.objective:.6g}, "
                f"support {len(rep.coupling.entries)}, bound {bound}"
            )
        rows.append(row)
    _emit(args, {"command": "sweep", "records": rows}, lines)
    return 4 if failed else 0


def cmd_potential(args) -> int:
    from .ordinal import build_potential, check_acyclicity

    profile = load_market(args.market)
    if not isinstance(profile, PreferenceProfile):
        raise ValidationError("potential works on preference_profile files")
    chk = check_acyclicity(profile)
    if not chk.acyclic:
        doc = {
            "command": "potential",
            "acyclic": False,
            "witness": [list(z) for z in chk.witness],
        }
        cyc = " -> ".join(f"(x{i}, y{j})" for i, j in chk.witness)
        _emit(args, doc, [f"strict cycle found: {cyc}"])
        return 3
    pot = build_potential(profile)
    doc = {
        "command": "potential",
        "acyclic": True,
        "values": [[frac_format(q) for q in row] for row in pot.exact],
        "float_exact": pot.float_exact,
    }
    lines = ["acyclic; aligned utility (rows are x, columns y):"]
    for row in pot.exact:
        lines.append("  " + "  ".join(frac_format(q) for q in row))
    _emit(args, doc, lines)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matchport",
        description="stable, welfare-optimal, and egalitarian matchings "
        "through a one-parameter transport family",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one market file")
    solve.add_argument("market", help="path to a matchport/1 .mm file")
    solve.add_argument("--alpha", type=float, default=0.0,
                       help="cost parameter (0 maximizes welfare)")
    solve.add_argument("--method",
                       choices=("ot", "line", "greedy", "bruteforce", "kmarginal"),
                       default=None,
                       help="solver (default picks by market kind)")
    solve.add_argument("--rational", action="store_true",
                       help="exact arithmetic (linear cost, exact masses)")
    solve.add_argument("--cells", type=int, default=100,
                       help="cells per piece when auditing a line matching")
    solve.add_argument("--svg", metavar="PATH",
                       help="write an SVG portrait of the solution")
    solve.add_argument("--audit", action="append", choices=AUDIT_CHOICES,
                       help="check this family of guarantees (repeatable)")
    solve.add_argument("--out", metavar="PATH",
                       help="write the full JSON report to this file")
    solve.add_argument("--json", action="store_true", help="JSON output")
    solve.set_defaults(func=cmd_solve)

    sweep = sub.add_parser("sweep", help="solve across several alphas")
    sweep.add_argument("market")
    sweep.add_argument("--alphas", required=True,
                       help="comma-separated alpha values")
    sweep.add_argument("--no-audit", action="store_true",
                       help="skip the per-solve audit battery")
    sweep.add_argument("--out", metavar="PATH",
                       help="write the full JSON report to this file")
    sweep.add_argument("--json", action="store_true", help="JSON output")
    sweep.set_defaults(func=cmd_sweep)

    pot = sub.add_parser("potential",
                         help="aligned cardinal utility from rankings")
    pot.add_argument("market")
    pot.add_argument("--out", metavar="PATH",
                     help="write the full JSON report to this file")
    pot.add_argument("--json", action="store_true", help="JSON output")
    pot.set_defaults(func=cmd_potential)

    return parser


def _glue_alpha_lists(argv: list[str]) -> list[str]:
    # argparse reads "--alphas -5,0,5" as a missing value followed by an
    # unknown option; fold the list into --alphas=... so negative leading
    # entries survive.
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--alphas" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--alphas={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    argv = _glue_alpha_lists(list(sys.argv[1:] if argv is None else argv))
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 4
    except MatchportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
