"""Command-line front end: scenarios in, solved tables and bundles out.

Commands
--------
validate    parse a scenario and print/record its validation findings
clear       solve the spot market in one mode and emit the result tables
incentives  optimal clearing plus taxes, subsidies, profits and scheme checks
invest      optimal / strategic / aligned (per-producer best-response) capacity
example     run the bundled single-bus example end to end and diff it against
            its embedded reference values
report      re-render the CSV/series outputs from a stored bundle.json

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 solver failure,
4 reference-value mismatch. Every command writes its results to files; stdout
is a human-readable digest only. The default output directory is
$GRIDMARKET_OUT (falling back to ./results), overridden per run by --out.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .incentives import build_incentive_report, scheme_checks
from .investment import (InvestmentResult, optimal_investment,
                         strategic_investment, subsidy_best_response)
from .model import ScenarioCase
from .scenario import (ResultBundle, ScenarioError, build_analytical_example,
                       build_rts24_case, bundled_scenario_path, emit_results,
                       load_bundle, load_scenario, save_bundle)
from .spot import clear_market

OUT_ENV = "GRIDMARKET_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through exit code 1, not 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="gridmarket",
        description="Electricity spot-market clearing, incentive design and "
                    "capacity-investment analysis on scenario files.",
        epilog=f"The default output directory is ${OUT_ENV} when set, else "
               "./results; --out overrides both.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR",
                        help=f"output directory (default: ${OUT_ENV} or ./results)")
    common.add_argument("--gamma", type=float, metavar="G",
                        help="override the scenario's demand-dual bound "
                             "parameter gamma")
    common.add_argument("--seed", type=int, metavar="N",
                        help="producer-assignment seed for the built-in "
                             "'rts24' scenario name (default 0)")
    common.add_argument("--segments", type=int, metavar="N",
                        help="override the per-curve segment count used when "
                             "piecewise-linearizing quadratic utilities")
    common.add_argument("--tolerance", type=float, metavar="TOL",
                        help="override the feasibility/optimality tolerance")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("scenario",
                      help="scenario file path, or a bundled name "
                           "(analytical_example, rts24)")

    sub.add_parser("validate", parents=[scen, common],
                   help="check a scenario and report violations")
    p_clear = sub.add_parser("clear", parents=[scen, common],
                             help="solve the spot market and emit tables")
    p_clear.add_argument("--mode", required=True,
                         choices=["competitive", "optimal"],
                         help="competitive ignores the externality; optimal "
                              "charges it")
    sub.add_parser("incentives", parents=[scen, common],
                   help="optimal clearing plus taxes, subsidies, profits "
                        "and scheme checks")
    p_inv = sub.add_parser("invest", parents=[scen, common],
                           help="solve a capacity-investment model")
    p_inv.add_argument("--mode", required=True,
                       choices=["optimal", "strategic", "aligned"],
                       help="welfare-optimal, strategic best-response "
                            "equilibrium, or per-producer best response under "
                            "the subsidy scheme (aligned)")
    sub.add_parser("example", parents=[common],
                   help="run the bundled single-bus example end to end and "
                        "diff against embedded reference values")
    p_rep = sub.add_parser("report", parents=[common],
                           help="re-render tables from a stored bundle.json")
    p_rep.add_argument("bundle", help="bundle.json path, or a directory "
                                      "containing one")
    return parser


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or "results"
    return Path(out)


def _resolve_case(args) -> ScenarioCase:
    name = args.scenario
    path = Path(name)
    if path.exists():
        case = load_scenario(path)
    elif name == "analytical_example":
        case = build_analytical_example()
    elif name == "rts24":
        case = build_rts24_case(seed=args.seed if args.seed is not None else 0)
    else:
        try:
            case = load_scenario(bundled_scenario_path(name))
        except ScenarioError:
            raise UsageError(f"scenario {name!r} is neither a file nor a "
                             "bundled name (analytical_example, rts24)")
    settings = case.settings
    if args.gamma is not None:
        settings = replace(settings, gamma=args.gamma)
    if args.segments is not None:
        if args.segments < 1:
            raise UsageError("--segments must be a positive integer")
        settings = replace(settings, segments=args.segments)
    if args.tolerance is not None:
        if args.tolerance <= 0:
            raise UsageError("--tolerance must be positive")
        settings = replace(settings, feasibility_tol=args.tolerance,
                           gap_tol=args.tolerance)
    if settings is not case.settings:
        case = replace(case, settings=settings)
    return case


def _overrides_metadata(args) -> dict:
    keys = ("gamma", "seed", "segments", "tolerance")
    return {k: getattr(args, k) for k in keys
            if getattr(args, k, None) is not None}


def _emit(bundle: ResultBundle, out: Path) -> list[str]:
    written = emit_results(bundle, out)
    written.append(save_bundle(bundle, out / "bundle.json"))
    return written


def _print_dispatch(case, dispatch) -> None:
    for t in case.grid.intervals():
        w = dispatch.welfare[t]
        price = max(dispatch.prices[t].values())
        print(f"  t={t}: generation {dispatch.total(t):.2f} MW, "
              f"price up to {price:.2f}, social welfare "
              f"{w['social_welfare']:.2f}")
    print(f"horizon social welfare: {dispatch.horizon_welfare():.2f}")


def _cmd_validate(args) -> int:
    # loading already validates (scenario expansion raises on any violation),
    # so this command's job is to surface the findings and record them
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    try:
        case = _resolve_case(args)
    except ScenarioError as exc:
        (out / "validation.txt").write_text(f"{exc}\n")
        print(exc, file=sys.stderr)
        return 2
    (out / "validation.txt").write_text("ok\n")
    print(f"{case.name}: ok ({len(case.generators)} generators, "
          f"{len(case.demands)} demands, {len(case.topology.buses)} buses, "
          f"{case.grid.horizon_length} intervals)")
    return 0


def _cmd_clear(args) -> int:
    case = _resolve_case(args)
    dispatch = clear_market(case, args.mode)
    bundle = ResultBundle(case=case, dispatches={args.mode: dispatch},
                          metadata={"command": "clear", "mode": args.mode,
                                    "overrides": _overrides_metadata(args)})
    out = _out_dir(args)
    written = _emit(bundle, out)
    print(f"cleared {case.name} ({args.mode}):")
    _print_dispatch(case, dispatch)
    print(f"wrote {len(written)} files under {out}")
    return 0


def _cmd_incentives(args) -> int:
    case = _resolve_case(args)
    dispatch = clear_market(case, "optimal")
    report = build_incentive_report(case, dispatch)
    checks = scheme_checks(case, dispatch, report)
    bundle = ResultBundle(case=case, dispatches={"optimal": dispatch},
                          incentives=report, checks=checks,
                          metadata={"command": "incentives",
                                    "overrides": _overrides_metadata(args)})
    out = _out_dir(args)
    written = _emit(bundle, out)
    print(f"incentives for {case.name} (optimal clearing):")
    for p in report.producers:
        tax = sum(v for (t, i), v in report.tax.items() if i == p)
        chi = sum(v for (t, i), v in report.subsidy.items() if i == p)
        print(f"  {p}: horizon tax {tax:.2f}, subsidy {chi:.2f}, "
              f"full-scheme profit {report.horizon_profit(p):.2f}")
    rational = all(checks.individually_rational.values())
    print(f"individually rational for all producers: {rational}")
    print(f"price-independence residual: "
          f"{checks.price_independence_residual:.2e}")
    print(f"wrote {len(written)} files under {out}")
    return 0


def _aligned_sweep(case: ScenarioCase) -> dict[str, InvestmentResult]:
    """Best response per producer under the subsidy, against the optimal
    reference trajectory (each producer deviates alone)."""
    reference = optimal_investment(case).increments
    results: dict[str, InvestmentResult] = {}
    for producer in case.producers:
        if any(g.investment_cap > 1e-12
               for g in case.producer_generators(producer)):
            results[f"aligned:{producer}"] = subsidy_best_response(
                case, producer, include_subsidy=True, reference=reference)
    return results


def _cmd_invest(args) -> int:
    case = _resolve_case(args)
    if args.mode == "optimal":
        investments = {"optimal": optimal_investment(case)}
    elif args.mode == "strategic":
        investments = {"strategic": strategic_investment(case)}
    else:
        investments = _aligned_sweep(case)
        if not investments:
            print(f"{case.name}: no producer has investable capacity")
    bundle = ResultBundle(case=case, investments=investments,
                          metadata={"command": "invest", "mode": args.mode,
                                    "overrides": _overrides_metadata(args)})
    out = _out_dir(args)
    written = _emit(bundle, out)
    for model, res in investments.items():
        nonzero = {g: round(dk, 4) for g, dk in res.increments.items()
                   if dk > 1e-9}
        print(f"{model}: increments {nonzero or '{}'} "
              f"(system investment cost {res.investment_cost:.2f}, "
              f"horizon welfare {res.horizon_welfare:.2f})")
    print(f"wrote {len(written)} files under {out}")
    return 0


def _cmd_report(args) -> int:
    path = Path(args.bundle)
    if path.is_dir():
        path = path / "bundle.json"
    if not path.is_file():
        raise UsageError(f"no bundle at {path}")
    bundle = load_bundle(path)
    out = _out_dir(args)
    written = emit_results(bundle, out)
    print(f"re-rendered {bundle.case.name}: {len(written)} files under {out}")
    return 0


# ---------------------------------------------------------------------------
# `example`: end-to-end run of the bundled single-bus case, diffed against
# embedded reference values

# spot rows per (mode, t): unit outputs, uniform price, emissions, social
# welfare, and (optimal mode only) producer 1's pollution charge
_SPOT_EXPECT = {
    ("optimal", 1): ((0.0, 2.0), 4.0, 0.0, 2.0, 0.0),
    ("optimal", 2): ((3.0, 3.0), 6.0, 12.0, 24.0, 12.0),
    ("optimal", 3): ((4.0, 3.0), 13.0, 16.0, 79.5, 16.0),
    ("competitive", 1): ((4.0, 0.0), 2.0, 16.0, -8.0, None),
    ("competitive", 2): ((4.0, 3.0), 5.0, 16.0, 23.5, None),
    ("competitive", 3): ((4.0, 3.0), 13.0, 16.0, 79.5, None),
}
# post-investment optimal rows (producer 2 built out to 5 units)
_POST_EXPECT = {
    2: ((1.0, 5.0), 6.0, 4.0, 28.0),
    3: ((4.0, 5.0), 11.0, 16.0, 95.5),
}
_POST_SUBSIDY_P2 = (2.0, 12.5, 12.5)
# producer 2's taxed horizon profit follows the closed form 14k - k^2 in its
# capacity k; the quantity that is stable across degenerate price choices is
# this horizon total, not any particular per-interval split of it
_Y2_BASE = 33.0   # k = 3
_Y2_POST = 45.0   # k = 5


def _cmd_example(args) -> int:
    case = build_analytical_example()
    checks: list[tuple[str, float, float, float]] = []

    opt = clear_market(case, "optimal")
    comp = clear_market(case, "competitive")
    report = build_incentive_report(case, opt)
    schemechecks = scheme_checks(case, opt, report)
    for (mode, t), (q, price, emissions, sw, tax1) in _SPOT_EXPECT.items():
        d = opt if mode == "optimal" else comp
        checks.append((f"{mode} t={t} q(g1)", d.generation[t]["g1"], q[0], 1e-6))
        checks.append((f"{mode} t={t} q(g2)", d.generation[t]["g2"], q[1], 1e-6))
        checks.append((f"{mode} t={t} price", d.prices[t]["b1"], price, 1e-6))
        checks.append((f"{mode} t={t} emissions",
                       d.welfare[t]["pollution"], emissions, 1e-6))
        checks.append((f"{mode} t={t} social welfare",
                       d.welfare[t]["social_welfare"], sw, 1e-6))
        if tax1 is not None:
            checks.append((f"optimal t={t} tax(p1)",
                           report.tax[(t, "p1")], tax1, 1e-6))
    checks.append(("base taxed horizon profit p2 (14k-k^2 at k=3)",
                   report.horizon_profit("p2", "taxed"), _Y2_BASE, 1e-6))

    inv_opt = optimal_investment(case)
    inv_str = strategic_investment(case)
    checks.append(("optimal increment g2",
                   inv_opt.increments.get("g2", 0.0), 2.0, 1e-6))
    checks.append(("strategic increment g2",
                   inv_str.increments.get("g2", 0.0), 0.0, 1e-6))
    checks.append(("strategic multiplier g2",
                   inv_str.multipliers.get("g2", 0.0), -1.0, 1e-6))

    post_case = case.with_increments(inv_opt.increments)
    post = clear_market(post_case, "optimal")
    post_report = build_incentive_report(post_case, post)
    for t, (q, price, tax1, sw) in _POST_EXPECT.items():
        checks.append((f"post t={t} q(g1)", post.generation[t]["g1"], q[0], 1e-6))
        checks.append((f"post t={t} q(g2)", post.generation[t]["g2"], q[1], 1e-6))
        checks.append((f"post t={t} price", post.prices[t]["b1"], price, 1e-6))
        checks.append((f"post t={t} tax(p1)",
                       post_report.tax[(t, "p1")], tax1, 1e-6))
        checks.append((f"post t={t} social welfare",
                       post.welfare[t]["social_welfare"], sw, 1e-6))
    for t, chi in enumerate(_POST_SUBSIDY_P2, start=1):
        checks.append((f"post t={t} subsidy(p2)",
                       post_report.subsidy[(t, "p2")], chi, 1e-6))
    checks.append(("post taxed horizon profit p2 (14k-k^2 at k=5)",
                   post_report.horizon_profit("p2", "taxed"), _Y2_POST, 1e-6))

    br_sub = subsidy_best_response(case, "p2", include_subsidy=True,
                                   reference=inv_opt.increments)
    br_nosub = subsidy_best_response(case, "p2", include_subsidy=False,
                                     reference=inv_str.increments)
    checks.append(("subsidized best-response increment g2",
                   br_sub.increments.get("g2", 0.0), 2.0, 0.1))
    checks.append(("unsubsidized best-response increment g2",
                   br_nosub.increments.get("g2", 0.0), 0.0, 0.1))

    lines = []
    failures = 0
    for label, got, want, tol in checks:
        ok = abs(got - want) <= tol
        failures += 0 if ok else 1
        lines.append(f"{'ok      ' if ok else 'MISMATCH'} {label}: "
                     f"got {got!r}, reference {want!r}, tolerance {tol:g}")

    bundle = ResultBundle(
        case=case, dispatches={"optimal": opt, "competitive": comp},
        incentives=report, checks=schemechecks,
        investments={"optimal": inv_opt, "strategic": inv_str,
                     "aligned:p2": br_sub},
        metadata={"command": "example",
                  "reference_checks": len(checks),
                  "reference_mismatches": failures})
    out = _out_dir(args)
    written = _emit(bundle, out)
    header = (
        "# Reference diff for the bundled single-bus example.\n"
        "# Producer 2's profit under the tax is checked as a horizon total\n"
        "# against its closed form 14k - k^2 (33 at k=3, 45 at k=5): the\n"
        "# per-interval split of that total depends on which of the\n"
        "# degenerate clearing prices is selected and is not a stable\n"
        "# reference quantity.\n")
    (out / "golden_diff.txt").write_text(header + "\n".join(lines) + "\n")
    print(f"example run: {len(checks)} reference checks, "
          f"{failures} mismatch(es)")
    print("note: producer 2 profit is checked as a horizon total against "
          "14k - k^2; per-interval splits are degenerate-price-dependent")
    if failures:
        for line in lines:
            if line.startswith("MISMATCH"):
                print(f"  {line}")
        print(f"wrote {len(written) + 1} files under {out}")
        return 4
    print("all golden values matched")
    print(f"wrote {len(written) + 1} files under {out}")
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "clear": _cmd_clear,
    "incentives": _cmd_incentives,
    "invest": _cmd_invest,
    "example": _cmd_example,
    "report": _cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ScenarioError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
