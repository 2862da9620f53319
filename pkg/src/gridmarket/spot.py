"""Spot-market clearing: competitive and externality-aware dispatch with prices.

Two clearing paths share one result type. Single-bus cases with one exact
quadratic demand clear in closed form (merit-order intersection); everything
else builds per-interval LPs (or one ramp-coupled LP) over PWL curves. The
demand-side equilibrium can also be emitted as a big-M complementarity block
for embedding into investment MILPs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    PiecewiseLinearCurve, QuadraticUtility, ScenarioCase, GeneratorSpec,
    DemandSpec, curve_value, curve_marginal, damage_value, validate_case,
)
from .solver import (
    LinearProgram, MixedIntegerProgram, SolveReport, solve_lp, INF,
    scipy_available, _AUTO_SIZE_LIMIT,
)

_LINE_RELAX_PENALTY = 1e7  # $/MW for counterfactual line-limit relaxation


@dataclass
class DispatchResult:
    """Per-interval dispatch, flows, prices, duals and welfare decomposition."""

    mode: str
    increments: dict[str, float]
    generation: dict[int, dict[str, float]]
    consumption: dict[int, dict[str, float]]
    flows: dict[int, dict[int, float]]
    prices: dict[int, dict[str, float]]
    lambdas: dict[int, float]
    line_duals: dict[int, dict[int, tuple[float, float]]]  # (mu_min <= 0, mu_max >= 0)
    capacity_rents: dict[int, dict[str, float]]  # scarcity rent per generator, >= 0
    welfare: dict[int, dict[str, float]]
    diagnostics: dict = field(default_factory=dict)

    def total(self, t: int) -> float:
        return sum(self.generation[t].values())

    def horizon_welfare(self) -> float:
        return sum(w["social_welfare"] for w in self.welfare.values())

    def producer_generation(self, case: ScenarioCase, producer: str, t: int) -> float:
        return sum(self.generation[t][g.id] for g in case.producer_generators(producer))


# ---------------------------------------------------------------------------
# effective curves and capacities


def _demand_segments(dm: DemandSpec, t: int) -> list[tuple[float, float]]:
    """(width, slope) per segment, clipped at min(max consumption, curve domain)."""
    curve = dm.curve_at(t)
    cap = min(dm.max_consumption[t - 1], curve.domain_max)
    out = []
    pos = 0.0
    for lo, hi, s in zip(curve.breakpoints, curve.breakpoints[1:], curve.slopes):
        if pos >= cap:
            break
        width = min(hi, cap) - lo
        if width <= 0:
            break
        out.append((width, s))
        pos = min(hi, cap)
    return out


def _gen_capacity(g: GeneratorSpec, t: int, increments: dict[str, float]) -> float:
    return g.availability_at(t) * (g.capacity + increments.get(g.id, 0.0))


def _gen_segments(g: GeneratorSpec, t: int, increments: dict[str, float],
                  externality_slope: float | None) -> list[tuple[float, float, float]]:
    """(width, marginal cost, pollution rate) per cost segment, capped at capacity.

    With an externality slope (optimal mode, linear damage handled in the merit
    path), the marginal cost includes slope * rate.
    """
    cap = _gen_capacity(g, t, increments)
    rates = g.pollution_rates()
    out = []
    pos = 0.0
    curve = g.cost_curve
    for (lo, hi, s), rate in zip(
            zip(curve.breakpoints, curve.breakpoints[1:], curve.slopes), rates):
        if pos >= cap:
            break
        width = min(hi, cap) - lo
        if width <= 0:
            break
        cost = s + (externality_slope or 0.0) * rate
        out.append((width, cost, float(rate)))
        pos = min(hi, cap)
    return out


def _linear_damage_slope(case: ScenarioCase) -> float | None:
    """The single damage slope if every declared damage curve is linear and equal."""
    slopes = set()
    for curve in case.externality.damage_curves.values():
        if len(curve.slopes) != 1:
            return None
        slopes.add(curve.slopes[0])
    if not slopes:
        return 0.0
    if len(slopes) > 1:
        return None
    return slopes.pop()


def _exact_path_ok(case: ScenarioCase) -> bool:
    if len(case.topology.buses) != 1 or case.topology.lines:
        return False
    if len(case.demands) != 1 or not case.demands[0].is_quadratic():
        return False
    if _linear_damage_slope(case) is None:
        return False
    if any(g.ramp_limit is not None and g.ramp_limit < 1.0 for g in case.generators):
        return False
    return True


def _check_priced_marginals_monotone(case: ScenarioCase) -> None:
    """Damage pricing must keep each generator's marginal cost nondecreasing.

    cost slope + sigma * rate must be nondecreasing across segments for every
    damage slope sigma the curve can take, otherwise segment dispatch order is
    no longer a valid decomposition of the cost curve. Scalar pollution rates
    always pass.
    """
    for g in case.generators:
        curve = case.externality.curve_for(g.bus)
        if curve is None:
            continue
        rates = g.pollution_rates()
        slopes = g.cost_curve.slopes
        for sigma in {curve.slopes[0], curve.slopes[-1]}:
            eff = [b + sigma * r for b, r in zip(slopes, rates)]
            if any(b < a - 1e-12 for a, b in zip(eff, eff[1:])):
                raise ValueError(
                    f"generator {g.id}: per-segment pollution rates disorder the "
                    "damage-priced marginal costs; refine the cost curve")


# ---------------------------------------------------------------------------
# exact merit-order path (single bus, one quadratic demand)


def _clear_exact(case: ScenarioCase, mode: str, increments: dict[str, float],
                 pinned: dict[int, dict[str, float]] | None) -> DispatchResult:
    dm = case.demands[0]
    quad: QuadraticUtility = dm.utility  # type: ignore[assignment]
    slope = _linear_damage_slope(case) or 0.0
    bus = case.topology.buses[0]
    ext = slope if mode == "optimal" else None
    gen, cons, prices, lambdas, rents, welfare = {}, {}, {}, {}, {}, {}
    for t in case.grid.intervals():
        pins = (pinned or {}).get(t, {})
        c, a = quad.c[t - 1], quad.a
        cap_total = min(dm.max_consumption[t - 1], INF)
        q_by_gen = {g.id: 0.0 for g in case.generators}
        total = 0.0
        # pinned generators dispatch unconditionally
        for gid, val in pins.items():
            q_by_gen[gid] = val
            total += val
        gen_order = {g.id: i for i, g in enumerate(case.generators)}
        merit: list[tuple[float, float, str]] = []  # (cost, width, gen id)
        for g in case.generators:
            if g.id in pins:
                continue
            for width, cost, _rate in _gen_segments(g, t, increments, ext):
                merit.append((cost, width, g.id))
        merit.sort(key=lambda item: (item[0], gen_order[item[2]]))
        for cost, width, gid in merit:
            if total >= cap_total - 1e-15:
                break
            if a > 0:
                want = (c - cost) / (2.0 * a) - total
            else:
                want = INF if c > cost else 0.0
            take = max(0.0, min(width, want, cap_total - total))
            if take <= 1e-15:
                # convex effective costs: later segments cannot be cheaper
                continue
            q_by_gen[gid] += take
            total += take
        price = max(0.0, c - 2.0 * a * total)
        gen[t] = q_by_gen
        cons[t] = {dm.id: total}
        prices[t] = {bus: price}
        lambdas[t] = price
        rent_t = {}
        for g in case.generators:
            segs = _gen_segments(g, t, increments, ext)
            capacity = _gen_capacity(g, t, increments)
            if segs and q_by_gen[g.id] >= capacity - 1e-9 and capacity > 0:
                rent_t[g.id] = max(0.0, price - segs[-1][1])
            else:
                rent_t[g.id] = 0.0
        rents[t] = rent_t
    result = DispatchResult(
        mode=mode, increments=dict(increments), generation=gen, consumption=cons,
        flows={t: {} for t in gen}, prices=prices, lambdas=lambdas,
        line_duals={t: {} for t in gen}, capacity_rents=rents, welfare={},
        diagnostics={"path": "exact", "max_duality_gap": 0.0})
    result.welfare = evaluate_welfare(case, result)
    return result


# ---------------------------------------------------------------------------
# LP path


def _interval_lp(case: ScenarioCase, t: int, increments: dict[str, float],
                 mode: str, pinned: dict[str, float] | None = None,
                 fixed_generation: dict[str, float] | None = None,
                 relax_lines: bool = False) -> LinearProgram:
    """Market LP for one interval (or the demand-side LP when generation is fixed).

    With ``fixed_generation`` (bus -> MW) the generation side collapses to
    constants and only consumption is optimized — that is the aggregate-utility
    problem. ``relax_lines`` adds penalized slack to the line limits.
    """
    lp = LinearProgram(sense="max")
    topo = case.topology
    H = topo.effective_ptdf()
    slope_uniform = _linear_damage_slope(case)
    gen_bus_terms: dict[str, list[tuple[str, float]]] = {b: [] for b in topo.buses}
    pol_terms: dict[str, list[tuple[str, float]]] = {b: [] for b in topo.buses}
    balance: dict[str, float] = {}

    if fixed_generation is None:
        for g in case.generators:
            segs = _gen_segments(g, t, increments, None)
            for s, (width, cost, rate) in enumerate(segs):
                vid = f"q[{g.id}][{s}][{t}]"
                obj = -cost
                if mode == "optimal":
                    if slope_uniform is not None:
                        obj -= slope_uniform * rate
                    # general convex damage handled by bus damage variables below
                lp.add_variable(vid, 0.0, width, objective=obj)
                balance[vid] = -1.0
                gen_bus_terms[g.bus].append((vid, 1.0))
                if rate and mode == "optimal" and slope_uniform is None:
                    pol_terms[g.bus].append((vid, rate))
            cap = _gen_capacity(g, t, increments)
            if segs:
                lp.add_constraint(f"cap[{g.id}][{t}]",
                                  {f"q[{g.id}][{s}][{t}]": 1.0 for s in range(len(segs))},
                                  "<=", cap)
            if pinned and g.id in pinned:
                coefs = {f"q[{g.id}][{s}][{t}]": 1.0 for s in range(len(segs))}
                if not coefs:
                    if pinned[g.id] > 1e-9:
                        raise ValueError(f"cannot pin {g.id} to {pinned[g.id]} MW at t={t}")
                else:
                    lp.add_constraint(f"pin[{g.id}][{t}]", coefs, "=", pinned[g.id])

    for dm in case.demands:
        if dm.is_quadratic():
            raise ValueError(
                f"demand {dm.id}: exact quadratic utilities require the single-bus "
                "closed-form path; supply PWL curves for network clearing")
        for s, (width, slope) in enumerate(_demand_segments(dm, t)):
            vid = f"d[{dm.id}][{s}][{t}]"
            lp.add_variable(vid, 0.0, width, objective=slope)
            balance[vid] = 1.0
            gen_bus_terms[dm.bus].append((vid, -1.0))

    # convex multi-segment damage: epigraph segments priced into the objective
    if mode == "optimal" and slope_uniform is None and fixed_generation is None:
        for bus, curve in case.externality.damage_curves.items():
            terms = pol_terms.get(bus, [])
            if not terms:
                continue
            row = {v: c for v, c in terms}
            for k, (lo, hi, s) in enumerate(zip(curve.breakpoints, curve.breakpoints[1:],
                                                curve.slopes)):
                vid = f"w[{bus}][{k}][{t}]"
                lp.add_variable(vid, 0.0, hi - lo, objective=-s)
                row[vid] = -1.0
            vid = f"w[{bus}][ext][{t}]"  # extrapolation keeps the last marginal rate
            lp.add_variable(vid, 0.0, INF, objective=-curve.slopes[-1])
            row[vid] = -1.0
            lp.add_constraint(f"pol[{bus}][{t}]", row, "=", 0.0)

    rhs_balance = 0.0
    if fixed_generation is not None:
        rhs_balance = sum(fixed_generation.values())
    lp.add_constraint(f"bal[{t}]", balance, "=", rhs_balance)

    for l_idx, line in enumerate(topo.lines):
        coefs: dict[str, float] = {}
        const = 0.0
        for b_idx, bus in enumerate(topo.buses):
            h = H[l_idx, b_idx]
            if abs(h) < 1e-13:
                continue
            for vid, sign in gen_bus_terms[bus]:
                coefs[vid] = coefs.get(vid, 0.0) + h * sign
            if fixed_generation is not None:
                const += h * fixed_generation.get(bus, 0.0)
        if relax_lines:
            sid = f"lslack[{l_idx}][{t}]"
            lp.add_variable(sid, 0.0, INF, objective=-_LINE_RELAX_PENALTY)
            up = dict(coefs); up[sid] = -1.0
            dn = dict(coefs); dn[sid] = 1.0
            lp.add_constraint(f"fmax[{l_idx}][{t}]", up, "<=", line.rating - const)
            lp.add_constraint(f"fmin[{l_idx}][{t}]", dn, ">=", -line.rating - const)
        else:
            lp.add_constraint(f"fmax[{l_idx}][{t}]", coefs, "<=", line.rating - const)
            lp.add_constraint(f"fmin[{l_idx}][{t}]", coefs, ">=", -line.rating - const)
    return lp


def _clear_lp(case: ScenarioCase, mode: str, increments: dict[str, float],
              pinned: dict[int, dict[str, float]] | None,
              backend: str) -> DispatchResult:
    topo = case.topology
    H = topo.effective_ptdf()
    coupled = any(g.ramp_limit is not None and g.ramp_limit < 1.0
                  for g in case.generators)
    T = case.grid.horizon_length
    reports: dict[int, SolveReport] = {}
    if not coupled:
        parts = {t: _interval_lp(case, t, increments, mode, (pinned or {}).get(t))
                 for t in case.grid.intervals()}
        # the intervals are independent, but one stacked solve amortizes the
        # scipy call overhead; small cases stay on per-interval simplex solves
        stack = (len(parts) > 1 and backend != "simplex" and scipy_available()
                 and (backend == "scipy"
                      or sum(p.n_cons for p in parts.values()) > _AUTO_SIZE_LIMIT))
        if stack:
            lp = LinearProgram(sense="max")
            for part in parts.values():
                lp.var_ids.extend(part.var_ids)
                lp.lower.extend(part.lower)
                lp.upper.extend(part.upper)
                lp.objective.update(part.objective)
                lp.con_ids.extend(part.con_ids)
                lp.con_coefs.extend(part.con_coefs)
                lp.con_relations.extend(part.con_relations)
                lp.con_rhs.extend(part.con_rhs)
            rep = solve_lp(lp, backend="scipy")
            if rep.status != "optimal":
                raise RuntimeError(f"market clearing {rep.status}")
            reports = {t: rep for t in parts}
        else:
            for t, lp in parts.items():
                rep = solve_lp(lp, backend=backend)
                if rep.status != "optimal":
                    raise RuntimeError(f"market clearing {rep.status} at t={t}")
                reports[t] = rep
    else:
        lp = LinearProgram(sense="max")
        for t in case.grid.intervals():
            part = _interval_lp(case, t, increments, mode, (pinned or {}).get(t))
            for v, lo, up in zip(part.var_ids, part.lower, part.upper):
                lp.add_variable(v, lo, up, part.objective[v])
            for cid, coefs, rel, rhs in zip(part.con_ids, part.con_coefs,
                                            part.con_relations, part.con_rhs):
                lp.add_constraint(cid, coefs, rel, rhs)
        for g in case.generators:
            R = g.ramp_limit
            if R is None or R >= 1.0:
                continue
            for t in range(2, T + 1):
                k_now = _gen_capacity(g, t, increments)
                k_prev = _gen_capacity(g, t - 1, increments)
                if k_now <= 0 or k_prev <= 0:
                    continue
                coefs: dict[str, float] = {}
                for s in range(len(_gen_segments(g, t, increments, None))):
                    coefs[f"q[{g.id}][{s}][{t}]"] = 1.0 / k_now
                for s in range(len(_gen_segments(g, t - 1, increments, None))):
                    coefs[f"q[{g.id}][{s}][{t-1}]"] = -1.0 / k_prev
                lp.add_constraint(f"rampup[{g.id}][{t}]", coefs, "<=", R)
                lp.add_constraint(f"rampdn[{g.id}][{t}]", coefs, ">=", -R)
        rep = solve_lp(lp, backend=backend)
        if rep.status != "optimal":
            raise RuntimeError(f"market clearing {rep.status}")
        reports = {t: rep for t in case.grid.intervals()}

    gen, cons, flows, prices, lambdas, ldu, rents = {}, {}, {}, {}, {}, {}, {}
    max_gap = 0.0
    for t in case.grid.intervals():
        rep = reports[t]
        max_gap = max(max_gap, rep.duality_gap or 0.0)
        gen[t] = {}
        for g in case.generators:
            segs = _gen_segments(g, t, increments, None)
            gen[t][g.id] = sum(rep.x.get(f"q[{g.id}][{s}][{t}]", 0.0)
                               for s in range(len(segs)))
        cons[t] = {}
        for dm in case.demands:
            segs = _demand_segments(dm, t)
            cons[t][dm.id] = sum(rep.x.get(f"d[{dm.id}][{s}][{t}]", 0.0)
                                 for s in range(len(segs)))
        net = np.zeros(len(topo.buses))
        for g in case.generators:
            net[topo.bus_index(g.bus)] += gen[t][g.id]
        for dm in case.demands:
            net[topo.bus_index(dm.bus)] -= cons[t][dm.id]
        flows[t] = {l: float(H[l] @ net) for l in range(len(topo.lines))}
        lam = rep.duals.get(f"bal[{t}]", 0.0)
        lambdas[t] = lam
        ldu[t] = {}
        for l in range(len(topo.lines)):
            mu_max = rep.duals.get(f"fmax[{l}][{t}]", 0.0)
            mu_min = rep.duals.get(f"fmin[{l}][{t}]", 0.0)
            ldu[t][l] = (mu_min, mu_max)
        prices[t] = {}
        for b_idx, bus in enumerate(topo.buses):
            adj = sum(H[l, b_idx] * (ldu[t][l][0] + ldu[t][l][1])
                      for l in range(len(topo.lines)))
            prices[t][bus] = lam - adj
        rents[t] = {}
        for g in case.generators:
            mu = max(0.0, rep.duals.get(f"cap[{g.id}][{t}]", 0.0))
            segs = _gen_segments(g, t, increments, None)
            cap = _gen_capacity(g, t, increments)
            # the cost-curve truncation at capacity makes the last segment bound
            # redundant with the capacity row, so a basis may park part (or all)
            # of a saturated unit's rent on that bound's reduced cost; fold it
            # back in so the reported rent does not depend on the basis chosen
            if segs and cap > 1e-12 and gen[t][g.id] >= cap - 1e-7:
                z = rep.reduced_costs.get(f"q[{g.id}][{len(segs) - 1}][{t}]", 0.0)
                mu += max(0.0, z)
            rents[t][g.id] = mu
    result = DispatchResult(
        mode=mode, increments=dict(increments), generation=gen, consumption=cons,
        flows=flows, prices=prices, lambdas=lambdas, line_duals=ldu,
        capacity_rents=rents, welfare={},
        diagnostics={"path": "lp", "max_duality_gap": max_gap,
                     "backend": next(iter(reports.values())).backend})
    result.welfare = evaluate_welfare(case, result)
    return result


def clear_market(case: ScenarioCase, mode: str = "competitive",
                 capacity_increment: dict[str, float] | None = None,
                 backend: str = "auto",
                 pinned: dict[int, dict[str, float]] | None = None) -> DispatchResult:
    """Clear the spot market over the whole horizon.

    ``mode`` is "competitive" (externality ignored in the objective) or
    "optimal" (externality priced in). ``capacity_increment`` adds MW to named
    generators, bounded by each generator's investment cap. ``pinned`` fixes
    named generators' output per interval (used for best-response evaluations).
    """
    if mode not in ("competitive", "optimal"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "optimal":
        _check_priced_marginals_monotone(case)
    increments = dict(capacity_increment or {})
    for gid, dk in increments.items():
        g = case.generator(gid)
        if dk < -1e-12 or dk > g.investment_cap + 1e-9:
            raise ValueError(
                f"increment {dk} for {gid} outside [0, {g.investment_cap}]")
    if _exact_path_ok(case):
        return _clear_exact(case, mode, increments, pinned)
    return _clear_lp(case, mode, increments, pinned, backend)


# ---------------------------------------------------------------------------
# prices, utility, welfare


def nodal_prices(report: SolveReport, topology) -> dict[int, dict[str, float]]:
    """Recover per-(interval, bus) prices from a solve report's duals.

    price_n = lambda_t - sum_l H[l, n] * (mu_min_l + mu_max_l); with no congested
    lines every bus price equals lambda_t.
    """
    if report.duals is None:
        raise ValueError("report carries no dual values (run an LP solve or fix_and_price)")
    H = topology.effective_ptdf()
    ts = sorted({int(cid[4:-1]) for cid in report.duals if cid.startswith("bal[")})
    out: dict[int, dict[str, float]] = {}
    for t in ts:
        lam = report.duals[f"bal[{t}]"]
        out[t] = {}
        for b_idx, bus in enumerate(topology.buses):
            adj = 0.0
            for l in range(len(topology.lines)):
                mu_max = report.duals.get(f"fmax[{l}][{t}]", 0.0)
                mu_min = report.duals.get(f"fmin[{l}][{t}]", 0.0)
                adj += H[l, b_idx] * (mu_min + mu_max)
            out[t][bus] = lam - adj
    return out


@dataclass
class AggregateUtility:
    value: float
    consumption: dict[str, float]
    prices: dict[str, float]
    relaxed_lines: bool = False


def aggregate_utility(case: ScenarioCase, t: int,
                      generation_by_bus: dict[str, float],
                      backend: str = "auto") -> AggregateUtility:
    """Max total utility of consuming exactly the supplied generation.

    Consumption is re-optimized against demand bounds, balance and line limits;
    if line limits alone make the balance infeasible they are relaxed with a
    large penalty and the result is flagged.
    """
    for bus, val in generation_by_bus.items():
        if val < -1e-9:
            raise ValueError(f"negative generation at {bus}")
    total = sum(generation_by_bus.values())
    if _exact_path_ok(case):
        dm = case.demands[0]
        quad: QuadraticUtility = dm.utility  # type: ignore[assignment]
        cap = dm.max_consumption[t - 1]
        if total > cap + 1e-9:
            raise ValueError(
                f"supplied generation {total} exceeds demand capacity {cap} at t={t}")
        price = max(0.0, quad.marginal(t, total))
        return AggregateUtility(value=quad.value(t, total),
                                consumption={dm.id: total},
                                prices={case.topology.buses[0]: price})
    cap_total = sum(sum(w for w, _ in _demand_segments(dm, t)) for dm in case.demands)
    if total > cap_total + 1e-9:
        raise ValueError(
            f"supplied generation {total} exceeds demand capacity {cap_total} at t={t}")
    lp = _interval_lp(case, t, {}, "competitive", fixed_generation=generation_by_bus)
    rep = solve_lp(lp, backend=backend)
    relaxed = False
    if rep.status != "optimal":
        relaxed = True
        lp = _interval_lp(case, t, {}, "competitive",
                          fixed_generation=generation_by_bus, relax_lines=True)
        rep = solve_lp(lp, backend=backend)
        if rep.status != "optimal":
            raise RuntimeError(f"aggregate utility LP {rep.status} at t={t}")
    prices = nodal_prices(rep, case.topology)[t]
    consumption = {}
    for dm in case.demands:
        segs = _demand_segments(dm, t)
        consumption[dm.id] = sum(rep.x.get(f"d[{dm.id}][{s}][{t}]", 0.0)
                                 for s in range(len(segs)))
    value = sum(_utility_value(dm, t, consumption[dm.id]) for dm in case.demands)
    return AggregateUtility(value=value, consumption=consumption, prices=prices,
                            relaxed_lines=relaxed)


def _utility_value(dm: DemandSpec, t: int, d: float) -> float:
    if dm.is_quadratic():
        return dm.utility.value(t, d)  # type: ignore[union-attr]
    return curve_value(dm.curve_at(t), min(d, dm.curve_at(t).domain_max))


def _generator_pollution(g: GeneratorSpec, q: float) -> float:
    """Pollution of generating q, filling cost segments in order."""
    rates = g.pollution_rates()
    curve = g.cost_curve
    total = 0.0
    remaining = q
    for (lo, hi), rate in zip(zip(curve.breakpoints, curve.breakpoints[1:]), rates):
        if remaining <= 0:
            break
        take = min(remaining, hi - lo)
        total += rate * take
        remaining -= take
    if remaining > 1e-9:
        total += rates[-1] * remaining  # beyond the declared domain: last rate
    return total


def evaluate_welfare(case: ScenarioCase, dispatch: DispatchResult) -> dict[int, dict[str, float]]:
    """Utility, generation cost, total pollution, damage and SW per interval.

    Damage is always included in SW, regardless of which mode produced the
    dispatch (competitive welfare is reported net of damage).
    """
    out: dict[int, dict[str, float]] = {}
    for t in sorted(dispatch.generation):
        utility = sum(_utility_value(dm, t, dispatch.consumption[t][dm.id])
                      for dm in case.demands)
        cost = 0.0
        pollution_by_bus: dict[str, float] = {}
        for g in case.generators:
            q = dispatch.generation[t][g.id]
            if q > g.cost_curve.domain_max + 1e-9:
                cost += curve_value(g.cost_curve, g.cost_curve.domain_max) + \
                    g.cost_curve.slopes[-1] * (q - g.cost_curve.domain_max)
            else:
                cost += curve_value(g.cost_curve, q)
            pol = _generator_pollution(g, q)
            if pol:
                pollution_by_bus[g.bus] = pollution_by_bus.get(g.bus, 0.0) + pol
        damage = sum(damage_value(case, bus, x) for bus, x in pollution_by_bus.items())
        out[t] = {"utility": utility, "cost": cost,
                  "pollution": sum(pollution_by_bus.values()), "damage": damage,
                  "social_welfare": utility - cost - damage}
    return out


def single_bus_affine_clearing(merit: list[tuple[float, float]], c: float,
                               a: float = 0.5,
                               max_consumption: float = INF) -> dict:
    """Closed-form merit-order intersection against marginal utility c - 2a*d.

    ``merit`` is a list of (marginal cost, capacity) supply steps. Returns the
    per-step dispatch, the clearing price and the surplus w.r.t. the given
    costs. This is the hand-derivable oracle for single-bus cases.
    """
    order = sorted(range(len(merit)), key=lambda i: (merit[i][0], i))
    q = [0.0] * len(merit)
    total = 0.0
    for i in order:
        cost, cap = merit[i]
        if total >= max_consumption - 1e-15:
            break
        if a > 0:
            want = (c - cost) / (2.0 * a) - total
        else:
            want = INF if c > cost else 0.0
        take = max(0.0, min(cap, want, max_consumption - total))
        if take <= 0:
            continue
        q[i] = take
        total += take
    price = max(0.0, c - 2.0 * a * total)
    utility = c * total - a * total * total
    cost_total = sum(merit[i][0] * q[i] for i in range(len(merit)))
    return {"dispatch": q, "total": total, "price": price,
            "welfare": utility - cost_total}


# ---------------------------------------------------------------------------
# demand-side equilibrium as a big-M complementarity block


@dataclass
class BlockInfo:
    """Bookkeeping for one embedded demand-equilibrium block."""

    t: int
    lambda_var: str
    demand_vars: list[str]
    segment_slopes: dict[str, float]
    binaries: list[str]


def demand_equilibrium_block(mip: MixedIntegerProgram, case: ScenarioCase, t: int,
                             generation: dict[str, list[tuple[str, float]]] | dict[str, float],
                             gamma: float | None = None) -> BlockInfo:
    """Emit primal + dual + linearized complementarity for the demand-side LP.

    ``generation`` maps bus -> MW (fixed) or bus -> [(var id, coef)] (variable
    generation owned by the surrounding MILP). Any feasible point of the block
    is a primal-dual optimal pair of the demand LP given that generation, so the
    consumption variables inside a larger MILP always price at a demand
    equilibrium.
    """
    gamma = case.settings.gamma if gamma is None else gamma
    if not gamma > 1.0:
        raise ValueError("big-M factor gamma must exceed 1")
    topo = case.topology
    H = topo.effective_ptdf()
    n_lines = len(topo.lines)
    fixed = not generation or not isinstance(next(iter(generation.values())), list)

    seg_meta: list[tuple[str, int, float, float, str]] = []  # (demand, seg, width, slope, bus)
    for dm in case.demands:
        for s, (width, slope) in enumerate(_demand_segments(dm, t)):
            seg_meta.append((dm.id, s, width, slope, dm.bus))
    if not seg_meta:
        raise ValueError(f"no consumable demand at t={t}")
    b_max = max(m[3] for m in seg_meta)
    M_dual = gamma * b_max
    h_nonzero = np.abs(H[np.abs(H) > 1e-9]) if n_lines else np.array([])
    net_factor = max(1.0, 1.0 / float(h_nonzero.min())) if h_nonzero.size else 1.0
    M_line = gamma * b_max * net_factor

    lam = f"blk_lam[{t}]"
    mip.add_variable(lam, -M_dual, M_dual)

    balance: dict[str, float] = {}
    bus_cons_terms: dict[str, list[tuple[str, float]]] = {b: [] for b in topo.buses}
    info = BlockInfo(t=t, lambda_var=lam, demand_vars=[], segment_slopes={}, binaries=[])

    for dm_id, s, width, slope, bus in seg_meta:
        d = f"blk_d[{dm_id}][{s}][{t}]"
        mip.add_variable(d, 0.0, width)
        balance[d] = 1.0
        bus_cons_terms[bus].append((d, 1.0))
        info.demand_vars.append(d)
        info.segment_slopes[d] = slope

    line_mu: list[tuple[str, str]] = []
    for l in range(n_lines):
        mu_min = f"blk_muLmin[{l}][{t}]"
        mu_max = f"blk_muLmax[{l}][{t}]"
        mip.add_variable(mu_min, -M_line, 0.0)
        mip.add_variable(mu_max, 0.0, M_line)
        line_mu.append((mu_min, mu_max))

    # primal: balance and line limits
    gen_const = 0.0
    if fixed:
        gen_const = sum(float(v) for v in generation.values())
    else:
        for bus, terms in generation.items():
            for vid, coef in terms:
                balance[vid] = balance.get(vid, 0.0) - coef
    mip.add_constraint(f"blk_bal[{t}]", balance, "=", gen_const)

    for l in range(n_lines):
        coefs: dict[str, float] = {}
        const = 0.0
        for b_idx, bus in enumerate(topo.buses):
            h = H[l, b_idx]
            if abs(h) < 1e-13:
                continue
            for vid, coef in bus_cons_terms[bus]:
                coefs[vid] = coefs.get(vid, 0.0) - h * coef
            if fixed:
                const += h * float(generation.get(bus, 0.0))
            else:
                for vid, coef in generation.get(bus, []):
                    coefs[vid] = coefs.get(vid, 0.0) + h * coef
        F = topo.lines[l].rating
        mip.add_constraint(f"blk_fmax[{l}][{t}]", coefs, "<=", F - const)
        mip.add_constraint(f"blk_fmin[{l}][{t}]", coefs, ">=", -F - const)

    # dual feasibility per demand segment:
    #   muDmin + muDmax + lambda - sum_l H[l, bus] (muLmin + muLmax) = b
    M_seg = M_dual + M_line * max(1, n_lines)
    for dm_id, s, width, slope, bus in seg_meta:
        d = f"blk_d[{dm_id}][{s}][{t}]"
        mu_min = f"blk_muDmin[{dm_id}][{s}][{t}]"
        mu_max = f"blk_muDmax[{dm_id}][{s}][{t}]"
        mip.add_variable(mu_min, -M_seg, 0.0)
        mip.add_variable(mu_max, 0.0, M_seg)
        row = {mu_min: 1.0, mu_max: 1.0, lam: 1.0}
        b_idx = topo.bus_index(bus)
        for l in range(n_lines):
            h = H[l, b_idx]
            if abs(h) < 1e-13:
                continue
            row[line_mu[l][0]] = row.get(line_mu[l][0], 0.0) - h
            row[line_mu[l][1]] = row.get(line_mu[l][1], 0.0) - h
        mip.add_constraint(f"blk_dual[{dm_id}][{s}][{t}]", row, "=", slope)

        # complementarity, linearized with binaries
        z_min = f"blk_zDmin[{dm_id}][{s}][{t}]"
        z_max = f"blk_zDmax[{dm_id}][{s}][{t}]"
        mip.add_binary(z_min)
        mip.add_binary(z_max)
        info.binaries += [z_min, z_max]
        big_w = gamma * width
        # z_min = 1 when the lower bound is slack: d <= gamma w z, -muDmin <= M (1 - z)
        mip.add_constraint(f"blk_c1[{dm_id}][{s}][{t}]", {d: 1.0, z_min: -big_w}, "<=", 0.0)
        mip.add_constraint(f"blk_c2[{dm_id}][{s}][{t}]",
                           {mu_min: -1.0, z_min: M_seg}, "<=", M_seg)
        # z_max = 1 when the upper bound binds: w - d <= gamma w (1 - z), muDmax <= M z
        mip.add_constraint(f"blk_c3[{dm_id}][{s}][{t}]",
                           {d: 1.0, z_max: -big_w}, ">=", width - big_w)
        mip.add_constraint(f"blk_c4[{dm_id}][{s}][{t}]",
                           {mu_max: 1.0, z_max: -M_seg}, "<=", 0.0)
    for l in range(n_lines):
        F = topo.lines[l].rating
        z_lmin = f"blk_zLmin[{l}][{t}]"
        z_lmax = f"blk_zLmax[{l}][{t}]"
        mip.add_binary(z_lmin)
        mip.add_binary(z_lmax)
        info.binaries += [z_lmin, z_lmax]
        flow_coefs: dict[str, float] = {}
        const = 0.0
        for b_idx, bus in enumerate(topo.buses):
            h = H[l, b_idx]
            if abs(h) < 1e-13:
                continue
            for vid, coef in bus_cons_terms[bus]:
                flow_coefs[vid] = flow_coefs.get(vid, 0.0) - h * coef
            if fixed:
                const += h * float(generation.get(bus, 0.0))
            else:
                for vid, coef in generation.get(bus, []):
                    flow_coefs[vid] = flow_coefs.get(vid, 0.0) + h * coef
        # slack of flow <= F is F - flow <= (gamma+1) F (1 - z_lmax)
        up = dict(flow_coefs)
        up[z_lmax] = -(gamma + 1.0) * F
        mip.add_constraint(f"blk_c5[{l}][{t}]", up, ">=",
                           F - (gamma + 1.0) * F - const)
        mip.add_constraint(f"blk_c6[{l}][{t}]",
                           {line_mu[l][1]: 1.0, z_lmax: -M_line}, "<=", 0.0)
        dn = dict(flow_coefs)
        dn[z_lmin] = (gamma + 1.0) * F
        mip.add_constraint(f"blk_c7[{l}][{t}]", dn, "<=",
                           -F + (gamma + 1.0) * F - const)
        mip.add_constraint(f"blk_c8[{l}][{t}]",
                           {line_mu[l][0]: -1.0, z_lmin: -M_line}, "<=", 0.0)
    return info
