"""Capacity-investment solvers: welfare-optimal, strategic, and subsidy-aligned.

Optimal investment maximizes horizon social welfare minus investment cost, with
the demand side constrained to clear at an equilibrium (embedded
complementarity block in the MILP strategy). Strategic investment iterates
leader best responses per investing generator — each maximizing its owner's
taxed portfolio profit — anticipating the market's re-clearing, with the taxed
market as the playing field.
``subsidy_best_response`` evaluates one producer's deviation profit with
rivals' schedules frozen at a reference equilibrium, which is the testable form
of the tax-plus-subsidy alignment claim.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import itertools
import math
import warnings

from .model import ScenarioCase, curve_value, damage_value
from .solver import MixedIntegerProgram, solve_lp, solve_milp, LinearProgram, INF
from .spot import (
    DispatchResult, clear_market, evaluate_welfare, demand_equilibrium_block,
    _gen_segments, _gen_capacity, _linear_damage_slope, _exact_path_ok,
    _generator_pollution, _demand_segments,
)
from .incentives import pigouvian_tax, surplus_subsidy, producer_profit

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class InvestmentResult:
    """Chosen increments, induced dispatch, and horizon accounting."""

    objective: str  # "optimal" | "strategic" | "best_response"
    increments: dict[str, float]
    multipliers: dict[str, float]  # d(objective)/dΔk at the solution, per generator
    dispatch: DispatchResult
    horizon_welfare: float  # sum_t SW_t - total investment cost
    investment_cost: float
    producer_profit: dict[str, float]  # taxed horizon profit net of own investment
    diagnostics: dict = field(default_factory=dict)


def _investing(case: ScenarioCase):
    return [g for g in case.generators if g.investment_cap > 1e-12]


def _require_no_ramp_coupling(case: ScenarioCase) -> None:
    if any(g.ramp_limit is not None and g.ramp_limit < 1.0 for g in case.generators):
        raise ValueError("investment solvers assume no binding ramp coupling "
                         "(every ramp_limit is None or 1.0)")


def _investment_cost(case: ScenarioCase, increments: dict[str, float]) -> float:
    return sum(case.generator(g).investment_cost_rate * dk
               for g, dk in increments.items() if dk > 0)


def _welfare_at(case: ScenarioCase, increments: dict[str, float],
                backend: str = "auto") -> tuple[DispatchResult, float]:
    dispatch = clear_market(case, "optimal", increments, backend=backend)
    sw = dispatch.horizon_welfare() - _investment_cost(case, increments)
    return dispatch, sw


def _result_from_increments(case: ScenarioCase, objective: str,
                            increments: dict[str, float],
                            multipliers: dict[str, float],
                            backend: str, diagnostics: dict) -> InvestmentResult:
    increments = {g: (0.0 if dk < 1e-9 else float(dk)) for g, dk in increments.items()}
    dispatch, welfare = _welfare_at(case, increments, backend)
    inv_cost = _investment_cost(case, increments)
    taxed = producer_profit(case, dispatch, regime="taxed")
    prof: dict[str, float] = {}
    for i in case.producers:
        own_inv = sum(case.generator(g).investment_cost_rate * dk
                      for g, dk in increments.items()
                      if case.generator(g).producer == i)
        prof[i] = sum(v for (t, p), v in taxed.items() if p == i) - own_inv
    return InvestmentResult(objective=objective, increments=increments,
                            multipliers=multipliers, dispatch=dispatch,
                            horizon_welfare=welfare, investment_cost=inv_cost,
                            producer_profit=prof, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# one-dimensional maximization helpers (grid bracket + golden section)


def _golden_max(f, lo: float, hi: float, iters: int = 80) -> tuple[float, float]:
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    x = x1 if f1 >= f2 else x2
    return x, max(f1, f2)


def _maximize_1d(f, lo: float, hi: float, coarse: int = 9,
                 golden_iters: int = 60) -> tuple[float, float]:
    """Coarse grid to bracket, then golden section inside the best bracket."""
    if hi <= lo + 1e-12:
        return lo, f(lo)
    xs = [lo + (hi - lo) * i / (coarse - 1) for i in range(coarse)]
    vals = [f(x) for x in xs]
    k = max(range(coarse), key=lambda i: (vals[i], -i))  # ties toward smaller x
    a = xs[max(0, k - 1)]
    b = xs[min(coarse - 1, k + 1)]
    x, v = _golden_max(f, a, b, golden_iters)
    # the bracket endpoints are candidates too (corner solutions)
    for cand, cv in ((xs[k], vals[k]), (lo, vals[0]), (hi, vals[-1])):
        if cv > v + 1e-12 or (abs(cv - v) <= 1e-12 and cand < x):
            x, v = cand, cv
    return x, v


def _right_derivative(f, x: float, h: float) -> float:
    """Second-order one-sided difference (exact for quadratics)."""
    return (4.0 * f(x + h) - 3.0 * f(x) - f(x + 2.0 * h)) / (2.0 * h)


def _left_derivative(f, x: float, h: float) -> float:
    return -(4.0 * f(x - h) - 3.0 * f(x) - f(x - 2.0 * h)) / (2.0 * h)


# ---------------------------------------------------------------------------
# optimal (welfare-maximizing) investment


def _build_welfare_program(case: ScenarioCase, with_block: bool,
                           gamma: float | None = None):
    """Horizon welfare program with Δk first-stage variables.

    with_block=True appends the demand-equilibrium complementarity block per
    interval (the MILP form); with_block=False keeps the pure welfare LP, whose
    optimum coincides because the block is redundant under a welfare-maximizing
    objective.
    """
    if any(dm.is_quadratic() for dm in case.demands):
        raise ValueError("the milp/lp investment strategies need PWL utilities; "
                         "use the exact strategy or convert via pwl_from_quadratic")
    prog: LinearProgram | MixedIntegerProgram
    prog = MixedIntegerProgram(sense="max") if with_block else LinearProgram(sense="max")
    slope_uniform = _linear_damage_slope(case)
    full_inc = {g.id: g.investment_cap for g in _investing(case)}
    for g in _investing(case):
        prog.add_variable(f"dk[{g.id}]", 0.0, g.investment_cap,
                          objective=-g.investment_cost_rate)
    for t in case.grid.intervals():
        gen_terms: dict[str, list[tuple[str, float]]] = {}
        pol_terms: dict[str, list[tuple[str, float]]] = {}
        for g in case.generators:
            segs = _gen_segments(g, t, full_inc, None)
            row: dict[str, float] = {}
            for s, (width, cost, rate) in enumerate(segs):
                vid = f"q[{g.id}][{s}][{t}]"
                obj = -cost
                if slope_uniform is not None:
                    obj -= slope_uniform * rate
                elif rate:
                    pol_terms.setdefault(g.bus, []).append((vid, rate))
                prog.add_variable(vid, 0.0, width, objective=obj)
                row[vid] = 1.0
                gen_terms.setdefault(g.bus, []).append((vid, 1.0))
            if not segs:
                continue
            avail = g.availability_at(t)
            if g.investment_cap > 1e-12:
                row[f"dk[{g.id}]"] = -avail
            prog.add_constraint(f"cap[{g.id}][{t}]", row, "<=", avail * g.capacity)
        if slope_uniform is None:
            for bus, curve in case.externality.damage_curves.items():
                terms = pol_terms.get(bus, [])
                if not terms:
                    continue
                row = {v: c for v, c in terms}
                for k, (lo, hi, s) in enumerate(zip(curve.breakpoints,
                                                    curve.breakpoints[1:], curve.slopes)):
                    vid = f"w[{bus}][{k}][{t}]"
                    prog.add_variable(vid, 0.0, hi - lo, objective=-s)
                    row[vid] = -1.0
                vid = f"w[{bus}][ext][{t}]"
                prog.add_variable(vid, 0.0, INF, objective=-curve.slopes[-1])
                row[vid] = -1.0
                prog.add_constraint(f"pol[{bus}][{t}]", row, "=", 0.0)
        if with_block:
            info = demand_equilibrium_block(prog, case, t, gen_terms, gamma=gamma)
            for v in info.demand_vars:
                prog.objective[v] = info.segment_slopes[v]
        else:
            # plain demand side: same segments and network rows, no duals
            H = case.topology.effective_ptdf()
            balance: dict[str, float] = {}
            cons_terms: dict[str, list[tuple[str, float]]] = {}
            for dm in case.demands:
                for s, (width, slope) in enumerate(_demand_segments(dm, t)):
                    vid = f"d[{dm.id}][{s}][{t}]"
                    prog.add_variable(vid, 0.0, width, objective=slope)
                    balance[vid] = 1.0
                    cons_terms.setdefault(dm.bus, []).append((vid, 1.0))
            for bus, terms in gen_terms.items():
                for vid, coef in terms:
                    balance[vid] = balance.get(vid, 0.0) - coef
            prog.add_constraint(f"bal[{t}]", balance, "=", 0.0)
            for l_idx, line in enumerate(case.topology.lines):
                coefs: dict[str, float] = {}
                for b_idx, bus in enumerate(case.topology.buses):
                    h = H[l_idx, b_idx]
                    if abs(h) < 1e-13:
                        continue
                    for vid, coef in gen_terms.get(bus, []):
                        coefs[vid] = coefs.get(vid, 0.0) + h * coef
                    for vid, coef in cons_terms.get(bus, []):
                        coefs[vid] = coefs.get(vid, 0.0) - h * coef
                prog.add_constraint(f"fmax[{l_idx}][{t}]", coefs, "<=", line.rating)
                prog.add_constraint(f"fmin[{l_idx}][{t}]", coefs, ">=", -line.rating)
    return prog


def _optimal_exact(case: ScenarioCase, backend: str) -> tuple[dict[str, float], dict]:
    """Cyclic coordinate ascent with golden sections on exact clears."""
    gens = _investing(case)
    best: dict[str, float] = {g.id: 0.0 for g in gens}

    def total(inc: dict[str, float]) -> float:
        return _welfare_at(case, inc, backend)[1]

    # multi-start: zero vector and coarse-grid argmax
    starts = [dict(best)]
    steps = {g.id: g.investment_cap / 6.0 for g in gens}
    if len(gens) <= 3 and all(s > 0 for s in steps.values()):
        grid_best, grid_val = dict(best), total(best)
        axes = [[i * steps[g.id] for i in range(7)] for g in gens]
        for combo in itertools.product(*axes):
            inc = {g.id: v for g, v in zip(gens, combo)}
            v = total(inc)
            if v > grid_val + 1e-12:
                grid_best, grid_val = inc, v
        starts.append(grid_best)
    best_val = -INF
    chosen = dict(best)
    for start in starts:
        cur = dict(start)
        cur_val = total(cur)
        for _round in range(12):
            moved = False
            for g in gens:
                def f(x, gid=g.id):
                    trial = dict(cur)
                    trial[gid] = x
                    return total(trial)
                x, v = _maximize_1d(f, 0.0, g.investment_cap, coarse=13, golden_iters=70)
                if v > cur_val + 1e-10:
                    cur[g.id] = x
                    cur_val = v
                    moved = True
            if not moved:
                break
        if cur_val > best_val:
            best_val, chosen = cur_val, cur
    return chosen, {"strategy": "exact", "welfare": best_val}


def optimal_investment(case: ScenarioCase, strategy: str = "auto",
                       backend: str = "auto",
                       gamma: float | None = None,
                       multipliers: bool = True) -> InvestmentResult:
    """Welfare-maximizing capacity increments over the horizon.

    Strategies: "milp" embeds the demand-equilibrium complementarity block per
    interval (the faithful single-level reformulation); "lp" solves the
    equivalent welfare LP (the block is redundant when the objective already
    maximizes welfare — see the decisions ledger); "exact" runs coordinate
    ascent with closed-form clears (single-bus quadratic cases); "auto" picks
    exact where available, else milp for small problems, else lp.
    """
    _require_no_ramp_coupling(case)
    gens = _investing(case)
    if not gens:
        dispatch, welfare = _welfare_at(case, {}, backend)
        return InvestmentResult("optimal", {}, {}, dispatch, welfare, 0.0,
                                {i: 0.0 for i in case.producers},
                                {"strategy": "none"})
    if strategy == "auto":
        if _exact_path_ok(case):
            strategy = "exact"
        else:
            if any(dm.is_quadratic() for dm in case.demands):
                raise ValueError("no investment strategy fits: quadratic utilities "
                                 "outside the single-bus exact path; convert to PWL")
            n_bin = sum(
                2 * sum(len(_demand_segments(dm, t)) for dm in case.demands)
                + 2 * len(case.topology.lines)
                for t in case.grid.intervals())
            strategy = "milp" if n_bin <= 160 else "lp"
    if strategy == "exact":
        increments, diag = _optimal_exact(case, backend)
    elif strategy in ("milp", "lp"):
        prog = _build_welfare_program(case, with_block=(strategy == "milp"),
                                      gamma=gamma)
        if strategy == "milp":
            rep = solve_milp(prog, backend=backend)
        else:
            rep = solve_lp(prog, backend=backend)
        if rep.status != "optimal":
            raise RuntimeError(f"optimal investment {strategy} solve: {rep.status}")
        increments = {g.id: min(g.investment_cap, max(0.0, rep.x[f"dk[{g.id}]"]))
                      for g in gens}
        diag = {"strategy": strategy, "nodes": rep.nodes,
                "kkt_residual": rep.feasibility_residual,
                "solver_objective": rep.objective}
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    mult = _welfare_multipliers(case, increments, backend) if multipliers else {}
    return _result_from_increments(case, "optimal", increments, mult, backend, diag)


def _welfare_multipliers(case: ScenarioCase, increments: dict[str, float],
                         backend: str) -> dict[str, float]:
    """d(welfare)/dΔk at the solution (one-sided at the bounds)."""
    out: dict[str, float] = {}
    for g in _investing(case):
        def f(x, gid=g.id):
            trial = dict(increments)
            trial[gid] = x
            return _welfare_at(case, trial, backend)[1]
        x = increments.get(g.id, 0.0)
        h = min(g.investment_cap / 2.5, max(1e-4, g.investment_cap * 1e-3))
        if x <= h:
            out[g.id] = _right_derivative(f, x, h)
        elif x >= g.investment_cap - h:
            out[g.id] = _left_derivative(f, x, h)
        else:
            out[g.id] = (f(x + h) - f(x - h)) / (2.0 * h)
    return out


# ---------------------------------------------------------------------------
# strategic (profit-maximizing) investment


def _taxed_producer_profit(case: ScenarioCase, dispatch: DispatchResult,
                           producer: str) -> float:
    """Horizon revenue minus cost minus the producer's marginal damage charge.

    The damage charge removes the producer's whole pollution at a bus at once,
    matching the pigouvian tax definition (splitting it per unit would
    undercount on convex damage curves).
    """
    total = 0.0
    for t in sorted(dispatch.generation):
        pol_mine: dict[str, float] = {}
        for g in case.producer_generators(producer):
            q = dispatch.generation[t][g.id]
            price = dispatch.prices[t][g.bus]
            cost = curve_value(g.cost_curve, min(q, g.cost_curve.domain_max))
            if q > g.cost_curve.domain_max:
                cost += g.cost_curve.slopes[-1] * (q - g.cost_curve.domain_max)
            total += price * q - cost
            pol = _generator_pollution(g, q)
            if pol:
                pol_mine[g.bus] = pol_mine.get(g.bus, 0.0) + pol
        for bus, x_mine in pol_mine.items():
            x_bus = sum(_generator_pollution(og, dispatch.generation[t][og.id])
                        for og in case.generators if og.bus == bus)
            total -= (damage_value(case, bus, x_bus)
                      - damage_value(case, bus, x_bus - x_mine))
    return total


def strategic_investment(case: ScenarioCase, backend: str = "auto",
                         coarse: int = 7, golden_iters: int = 28,
                         max_rounds: int = 10,
                         multipliers: bool = True,
                         multi_start: bool = True,
                         start: dict[str, float] | None = None,
                         relaxation: float = 1.0,
                         move_tol: float | None = None) -> InvestmentResult:
    """Iterated leader best responses per investing generator on the taxed market.

    Each generator's increment is chosen in turn to maximize its owner's taxed
    portfolio profit net of the unit's investment cost, anticipating the full
    market re-clearing (rivals' increments held fixed). Fixed points from
    multiple starts are compared with the competitive-welfare expression
    (utility minus generation cost minus investment cost); ties within 1e-6
    are reported, not silently resolved.
    ``multi_start=False`` drops the all-caps start (each start costs a full
    best-response sweep, and on large cases the zero start alone is usual).
    ``start`` adds a custom starting profile (e.g. the welfare-optimal
    increments). ``relaxation`` < 1 damps each move toward the best response;
    identical units at one bus otherwise chase each other's rents in circles.
    ``move_tol`` is the capacity step below which a unit counts as settled
    (default: 1e-6 undamped, 0.05 damped); coarser line searches need a
    matching coarser tolerance or units dither forever.
    """
    _require_no_ramp_coupling(case)
    gens = _investing(case)
    if not gens:
        dispatch, welfare = _welfare_at(case, {}, backend)
        return InvestmentResult("strategic", {}, {}, dispatch, welfare, 0.0,
                                {i: 0.0 for i in case.producers}, {"strategy": "none"})
    cache: dict[tuple, DispatchResult] = {}

    def cleared(inc: dict[str, float]) -> DispatchResult:
        key = tuple(round(inc.get(g.id, 0.0), 7) for g in gens)
        if key not in cache:
            cache[key] = clear_market(case, "optimal", dict(inc), backend=backend)
        return cache[key]

    def leader_value(inc: dict[str, float], gen_id: str) -> float:
        # the unit's owner is the actor: its whole portfolio gains or loses
        # when this unit's capacity moves prices (rivals' increments fixed;
        # the owner's other investment costs are constants and drop out)
        dispatch = cleared(inc)
        g = case.generator(gen_id)
        return (_taxed_producer_profit(case, dispatch, g.producer)
                - g.investment_cost_rate * inc.get(gen_id, 0.0))

    def competitive_value(inc: dict[str, float]) -> float:
        dispatch = cleared(inc)
        w = sum(dispatch.welfare[t]["utility"] - dispatch.welfare[t]["cost"]
                for t in dispatch.welfare)
        return w - _investment_cost(case, inc)

    # candidate filter: a generator whose price-taking scarcity rents at the
    # zero-investment clear fall short of its cost rate never invests as a
    # leader either (the leader's marginal profit is weakly smaller)
    base = cleared({g.id: 0.0 for g in gens})
    active = []
    for g in gens:
        rents = sum(base.capacity_rents[t].get(g.id, 0.0) * g.availability_at(t)
                    for t in base.capacity_rents)
        if rents > g.investment_cost_rate - 1e-9:
            active.append(g)

    fixed_points: list[tuple[dict[str, float], float]] = []
    if start is not None:
        starts = [{g.id: min(float(start.get(g.id, 0.0)), g.investment_cap)
                   for g in gens}]
    else:
        starts = [{g.id: 0.0 for g in gens}]
    if active and multi_start:
        starts.append({g.id: (g.investment_cap if g in active else 0.0) for g in gens})
    if move_tol is None:
        move_tol = 1e-6 if relaxation >= 1.0 else 0.05
    rounds_used = []
    for s0 in starts:
        cur = dict(s0)
        for _round in range(max_rounds):
            moved = False
            for g in active:
                def f(x, gid=g.id):
                    trial = dict(cur)
                    trial[gid] = x
                    return leader_value(trial, gid)
                x0, cap = cur[g.id], g.investment_cap
                # skip the line search when x0 already looks locally optimal
                # (after the first rounds most units sit still; the full
                # search costs an order of magnitude more clears than this)
                h = max(min(0.25, 0.5 * cap), 1e-4 * cap)
                f0 = f(x0)
                if x0 <= 1e-9:
                    settled = f(min(h, cap)) <= f0 + 1e-9
                elif x0 >= cap - 1e-9:
                    settled = f(max(cap - h, 0.0)) <= f0 + 1e-9
                else:
                    settled = (f(min(x0 + h, cap)) <= f0 + 1e-9
                               and f(max(x0 - h, 0.0)) <= f0 + 1e-9)
                if settled:
                    continue
                x, v = _maximize_1d(f, 0.0, cap,
                                    coarse=coarse, golden_iters=golden_iters)
                if abs(x - x0) > move_tol and v > f0 + 1e-9:
                    cur[g.id] += relaxation * (x - x0)
                    moved = True
            if not moved:
                rounds_used.append(_round + 1)
                break
        else:
            rounds_used.append(max_rounds)
            warnings.warn("strategic best-response iteration hit the round limit "
                          "without converging")
        cur = {g: (0.0 if v < 1e-9 else v) for g, v in cur.items()}
        if not any(abs(cur[k] - fp[k]) > 1e-6 for fp, _ in fixed_points for k in cur):
            fixed_points.append((cur, competitive_value(cur)))

    fixed_points.sort(key=lambda p: -p[1])
    chosen, chosen_val = fixed_points[0]
    ties = [fp for fp, v in fixed_points[1:] if abs(v - chosen_val) <= 1e-6
            and any(abs(fp[k] - chosen[k]) > 1e-4 for k in fp)]
    if ties:
        warnings.warn(f"strategic investment: {len(ties)} equilibrium candidate(s) "
                      "tie with the selected solution within 1e-6")

    taus: dict[str, float] = {}
    if multipliers:
        for g in gens:
            def f(x, gid=g.id):
                trial = dict(chosen)
                trial[gid] = x
                return leader_value(trial, gid)
            x = chosen[g.id]
            h = min(0.05, max(1e-4, g.investment_cap * 1e-2))
            if g.investment_cap <= 2 * h:
                taus[g.id] = 0.0
            elif x <= h:
                taus[g.id] = _right_derivative(f, 0.0, h)
            elif x >= g.investment_cap - h:
                taus[g.id] = _left_derivative(f, g.investment_cap, h)
            else:
                taus[g.id] = (f(x + h) - f(x - h)) / (2.0 * h)

    diag = {"strategy": "best_response", "clears": len(cache),
            "candidates": [g.id for g in active],
            "ties": len(ties), "starts": len(starts), "rounds": rounds_used}
    return _result_from_increments(case, "strategic", chosen, taus,
                                   backend, diag)


# ---------------------------------------------------------------------------
# subsidy-aligned best response and the brute-force oracle


def subsidy_best_response(case: ScenarioCase, producer: str,
                          include_subsidy: bool = True,
                          grid_step: float = 0.1, refine: bool = True,
                          reference: dict[str, float] | None = None,
                          backend: str = "auto") -> InvestmentResult:
    """One producer's best capacity increment under the incentive scheme.

    Deviation profits are evaluated against a market where rival generators'
    schedules stay frozen at a reference equilibrium trajectory (a Nash
    deviation): with the subsidy the reference is the welfare-optimal
    investment solution, without it the strategic one. Each candidate increment
    is priced by a full pinned re-clear plus tax/subsidy evaluation, and the
    search walks a grid of the given step (plus golden refinement inside the
    best bracket).
    """
    _require_no_ramp_coupling(case)
    own = [g for g in case.producer_generators(producer) if g.investment_cap > 1e-12]
    if not own:
        dispatch, welfare = _welfare_at(case, {}, backend)
        return InvestmentResult("best_response", {}, {}, dispatch, welfare, 0.0,
                                {i: 0.0 for i in case.producers},
                                {"producer": producer, "note": "no investing generators"})
    if reference is None:
        if include_subsidy:
            reference = optimal_investment(case, backend=backend).increments
        else:
            reference = strategic_investment(case, backend=backend).increments
    ref_dispatch = clear_market(case, "optimal", reference, backend=backend)
    rivals = [g for g in case.generators if g.producer != producer]
    pins = {t: {g.id: ref_dispatch.generation[t][g.id] for g in rivals}
            for t in ref_dispatch.generation}
    rival_inc = {g.id: dk for g, dk in
                 ((case.generator(k), v) for k, v in reference.items())
                 if g.producer != producer and dk > 0}

    evaluations: list[tuple[dict[str, float], float]] = []

    def profit(own_inc: dict[str, float]) -> float:
        inc = dict(rival_inc)
        inc.update(own_inc)
        dispatch = clear_market(case, "optimal", inc, backend=backend, pinned=pins)
        tax = pigouvian_tax(case, dispatch)
        total = 0.0
        prices = dispatch.prices
        for t in sorted(dispatch.generation):
            rev = sum(prices[t][g.bus] * dispatch.generation[t][g.id] for g in own)
            cost = sum(curve_value(g.cost_curve,
                                   min(dispatch.generation[t][g.id],
                                       g.cost_curve.domain_max)) for g in own)
            total += rev - cost - tax[(t, producer)]
        if include_subsidy:
            chi = surplus_subsidy(case, dispatch, backend=backend)[0]
            total += sum(chi[(t, producer)] for t in sorted(dispatch.generation))
        total -= sum(g.investment_cost_rate * own_inc.get(g.id, 0.0) for g in own)
        evaluations.append((dict(own_inc), total))
        return total

    cur = {g.id: 0.0 for g in own}
    cur_val = profit(cur)
    for _round in range(8):
        moved = False
        for g in own:
            best_x, best_v = cur[g.id], cur_val
            n_steps = int(math.floor(g.investment_cap / grid_step + 1e-9))
            for i in range(n_steps + 1):
                x = min(g.investment_cap, i * grid_step)
                if abs(x - cur[g.id]) < 1e-12:
                    continue
                trial = dict(cur)
                trial[g.id] = x
                v = profit(trial)
                if v > best_v + 1e-9:
                    best_x, best_v = x, v
            if refine and best_v > -INF:
                lo = max(0.0, best_x - grid_step)
                hi = min(g.investment_cap, best_x + grid_step)
                def f(x, gid=g.id):
                    trial = dict(cur)
                    trial[gid] = x
                    return profit(trial)
                gx, gv = _golden_max(f, lo, hi, 40)
                if gv > best_v + 1e-9:
                    best_x, best_v = gx, gv
            if abs(best_x - cur[g.id]) > 1e-9:
                cur[g.id] = best_x
                cur_val = best_v
                moved = True
        if not moved:
            break
    cur = {g: (0.0 if v < 1e-9 else v) for g, v in cur.items()}
    diag = {"producer": producer, "include_subsidy": include_subsidy,
            "reference": dict(reference), "evaluations": len(evaluations),
            "profit": cur_val,
            "sweep": sorted({(round(next(iter(e[0].values())), 6), round(e[1], 9))
                             for e in evaluations})
            if len(own) == 1 else None}
    merged = dict(rival_inc)
    merged.update(cur)
    result = _result_from_increments(case, "best_response", merged, {}, backend, diag)
    result.increments = cur  # report the producer's own choice, not rivals' reference
    return result


def investment_grid_oracle(case: ScenarioCase, grid_step: float = 0.5,
                           backend: str = "auto") -> dict:
    """Brute-force welfare maximization over a Δk grid (ground truth for tests).

    Limited to three investing generators; ties break toward smaller increments
    because the grid is walked in lexicographically increasing order and only
    strict improvements replace the incumbent.
    """
    _require_no_ramp_coupling(case)
    gens = _investing(case)
    if len(gens) > 3:
        raise ValueError("grid oracle supports at most 3 investing generators")
    axes = []
    for g in gens:
        n = int(math.floor(g.investment_cap / grid_step + 1e-9))
        axes.append([min(g.investment_cap, i * grid_step) for i in range(n + 1)])
    best_inc: dict[str, float] = {g.id: 0.0 for g in gens}
    best_val = -INF
    count = 0
    for combo in itertools.product(*axes) if axes else [()]:
        inc = {g.id: v for g, v in zip(gens, combo)}
        _, val = _welfare_at(case, inc, backend)
        count += 1
        if val > best_val + 1e-12:
            best_val, best_inc = val, inc
    return {"increments": best_inc, "welfare": best_val, "evaluations": count}
