"""Pigouvian taxes, consumer-surplus subsidies, and producer profit accounting.

The tax charges each producer its marginal contribution to externality damage;
the subsidy pays each producer its marginal contribution to consumer surplus
net of revenue. Under the combined scheme a producer's profit equals
U(q) - U(q - q_i) - C_i - tax_i regardless of the price path, which is what
``scheme_checks`` verifies numerically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .model import ScenarioCase, curve_value, damage_value
from .spot import DispatchResult, aggregate_utility, _generator_pollution

_REGIMES = ("competitive", "taxed", "full_scheme")


@dataclass
class IncentiveReport:
    """Per-(interval, producer) incentive and profit tables.

    ``fixed_fee`` holds the constant (tax, subsidy) parts per producer; the
    per-interval columns are the variable parts only. ``net_transfer`` is the
    regulator's per-interval balance sum_i (subsidy - tax).
    """

    producers: tuple[str, ...]
    tax: dict[tuple[int, str], float]
    subsidy: dict[tuple[int, str], float]
    revenue: dict[tuple[int, str], float]
    cost: dict[tuple[int, str], float]
    profit_competitive: dict[tuple[int, str], float]
    profit_taxed: dict[tuple[int, str], float]
    profit_full_scheme: dict[tuple[int, str], float]
    net_transfer: dict[int, float]
    fixed_fee: dict[str, tuple[float, float]] = field(default_factory=dict)
    counterfactual_relaxed: list[tuple[int, str]] = field(default_factory=list)
    # re-optimized aggregate utility of the full dispatch per interval, and of
    # the dispatch with one producer's output removed; chi is their difference
    # minus revenue, and scheme_checks reuses them instead of re-solving
    aggregate_utility_value: dict[int, float] = field(default_factory=dict)
    counterfactual_utility: dict[tuple[int, str], float] = field(default_factory=dict)

    def horizon_profit(self, producer: str, regime: str = "full_scheme") -> float:
        table = {"competitive": self.profit_competitive,
                 "taxed": self.profit_taxed,
                 "full_scheme": self.profit_full_scheme}[regime]
        return sum(v for (t, i), v in table.items() if i == producer)


def _producer_pollution_by_bus(case: ScenarioCase, dispatch: DispatchResult,
                               t: int, producer: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for g in case.producer_generators(producer):
        pol = _generator_pollution(g, dispatch.generation[t][g.id])
        if pol:
            out[g.bus] = out.get(g.bus, 0.0) + pol
    return out


def _total_pollution_by_bus(case: ScenarioCase, dispatch: DispatchResult,
                            t: int) -> dict[str, float]:
    out: dict[str, float] = {}
    for g in case.generators:
        pol = _generator_pollution(g, dispatch.generation[t][g.id])
        if pol:
            out[g.bus] = out.get(g.bus, 0.0) + pol
    return out


def pigouvian_tax(case: ScenarioCase, dispatch: DispatchResult) -> dict[tuple[int, str], float]:
    """Tax per (interval, producer): damage with the producer's pollution minus
    damage without it, summed over buses."""
    out: dict[tuple[int, str], float] = {}
    for t in sorted(dispatch.generation):
        total = _total_pollution_by_bus(case, dispatch, t)
        for i in case.producers:
            mine = _producer_pollution_by_bus(case, dispatch, t, i)
            tax = 0.0
            for bus, x_i in mine.items():
                x = total.get(bus, 0.0)
                tax += damage_value(case, bus, x) - damage_value(case, bus, x - x_i)
            out[(t, i)] = tax
    return out


def _generation_by_bus(case: ScenarioCase, dispatch: DispatchResult, t: int,
                       exclude_producer: str | None = None) -> dict[str, float]:
    out = {b: 0.0 for b in case.topology.buses}
    for g in case.generators:
        if exclude_producer is not None and g.producer == exclude_producer:
            continue
        out[g.bus] += dispatch.generation[t][g.id]
    return out


def surplus_subsidy(case: ScenarioCase, dispatch: DispatchResult,
                    prices: dict[int, dict[str, float]] | None = None,
                    backend: str = "auto",
                    ) -> tuple[dict[tuple[int, str], float], list[tuple[int, str]],
                               dict[int, float], dict[tuple[int, str], float]]:
    """Subsidy per (interval, producer) plus counterfactual bookkeeping.

    chi = [U(total generation) - U(generation minus the producer's output)]
    minus the producer's revenue at the given prices. Consumption is
    re-optimized in the counterfactual; other producers' outputs are not.
    Returns (chi, relaxed counterfactuals, full per-interval aggregate utility,
    per-(interval, producer) counterfactual utility).
    """
    prices = dispatch.prices if prices is None else prices
    out: dict[tuple[int, str], float] = {}
    relaxed: list[tuple[int, str]] = []
    full_u: dict[int, float] = {}
    counter_u: dict[tuple[int, str], float] = {}
    for t in sorted(dispatch.generation):
        full = aggregate_utility(case, t, _generation_by_bus(case, dispatch, t),
                                 backend=backend)
        full_u[t] = full.value
        if full.relaxed_lines:
            relaxed.append((t, "*"))
        for i in case.producers:
            q_i = dispatch.producer_generation(case, i, t)
            if q_i <= 1e-12:
                out[(t, i)] = 0.0
                counter_u[(t, i)] = full.value
                continue
            counter = aggregate_utility(
                case, t, _generation_by_bus(case, dispatch, t, exclude_producer=i),
                backend=backend)
            if counter.relaxed_lines:
                relaxed.append((t, i))
            counter_u[(t, i)] = counter.value
            revenue = sum(prices[t][g.bus] * dispatch.generation[t][g.id]
                          for g in case.producer_generators(i))
            out[(t, i)] = full.value - counter.value - revenue
    return out, relaxed, full_u, counter_u


def _producer_cost(case: ScenarioCase, dispatch: DispatchResult, t: int,
                   producer: str) -> float:
    cost = 0.0
    for g in case.producer_generators(producer):
        q = dispatch.generation[t][g.id]
        curve = g.cost_curve
        if q > curve.domain_max:
            cost += curve_value(curve, curve.domain_max) + \
                curve.slopes[-1] * (q - curve.domain_max)
        else:
            cost += curve_value(curve, q)
    return cost


def producer_profit(case: ScenarioCase, dispatch: DispatchResult,
                    prices: dict[int, dict[str, float]] | None = None,
                    regime: str = "competitive",
                    backend: str = "auto") -> dict[tuple[int, str], float]:
    """Profit per (interval, producer) under one regime.

    competitive = revenue - cost; taxed adds -tax; full_scheme adds +subsidy.
    """
    if regime not in _REGIMES:
        raise ValueError(f"unknown regime {regime!r}, expected one of {_REGIMES}")
    prices = dispatch.prices if prices is None else prices
    tax = pigouvian_tax(case, dispatch) if regime in ("taxed", "full_scheme") else {}
    chi = (surplus_subsidy(case, dispatch, prices, backend=backend)[0]
           if regime == "full_scheme" else {})
    out: dict[tuple[int, str], float] = {}
    for t in sorted(dispatch.generation):
        for i in case.producers:
            revenue = sum(prices[t][g.bus] * dispatch.generation[t][g.id]
                          for g in case.producer_generators(i))
            profit = revenue - _producer_cost(case, dispatch, t, i)
            if regime in ("taxed", "full_scheme"):
                profit -= tax[(t, i)]
            if regime == "full_scheme":
                profit += chi[(t, i)]
            out[(t, i)] = profit
    return out


def build_incentive_report(case: ScenarioCase, dispatch: DispatchResult,
                           fixed_fees: dict[str, tuple[float, float]] | None = None,
                           backend: str = "auto") -> IncentiveReport:
    """Assemble the full incentive table for one dispatch.

    ``fixed_fees`` maps producer -> (constant tax part, constant subsidy part);
    both default to 0, which already satisfies the participation condition.
    The per-interval profit columns exclude the constants.
    """
    prices = dispatch.prices
    tax = pigouvian_tax(case, dispatch)
    chi, relaxed, full_u, counter_u = surplus_subsidy(case, dispatch, prices,
                                                      backend=backend)
    revenue, cost = {}, {}
    p_comp, p_tax, p_full = {}, {}, {}
    net: dict[int, float] = {}
    for t in sorted(dispatch.generation):
        net[t] = 0.0
        for i in case.producers:
            rev = sum(prices[t][g.bus] * dispatch.generation[t][g.id]
                      for g in case.producer_generators(i))
            c = _producer_cost(case, dispatch, t, i)
            revenue[(t, i)] = rev
            cost[(t, i)] = c
            p_comp[(t, i)] = rev - c
            p_tax[(t, i)] = rev - c - tax[(t, i)]
            p_full[(t, i)] = rev - c - tax[(t, i)] + chi[(t, i)]
            net[t] += chi[(t, i)] - tax[(t, i)]
    return IncentiveReport(
        producers=tuple(case.producers), tax=tax, subsidy=chi, revenue=revenue,
        cost=cost, profit_competitive=p_comp, profit_taxed=p_tax,
        profit_full_scheme=p_full, net_transfer=net,
        fixed_fee=dict(fixed_fees or {i: (0.0, 0.0) for i in case.producers}),
        counterfactual_relaxed=relaxed,
        aggregate_utility_value=full_u, counterfactual_utility=counter_u)


@dataclass
class SchemeChecks:
    individually_rational: dict[str, bool]
    budget_balance: dict[int, float]
    price_independence_residual: float


def scheme_checks(case: ScenarioCase, dispatch: DispatchResult,
                  report: IncentiveReport, backend: str = "auto") -> SchemeChecks:
    """Participation, regulator balance, and the price-independence identity.

    The price-independence residual compares the accounting profit
    (revenue - cost - tax + subsidy) against the direct expression
    U(q) - U(q - q_i) - cost - tax, which uses no prices. The two agree up to
    the gap between the market's realized utility and the re-optimized
    aggregate utility, so the residual doubles as an optimality check of the
    dispatch itself. Counterfactual utilities carried on the report are
    reused; a hand-built report without them triggers fresh solves.
    """
    residual = 0.0
    for t in sorted(dispatch.generation):
        realized_u = dispatch.welfare[t]["utility"]
        for i in case.producers:
            q_i = dispatch.producer_generation(case, i, t)
            if q_i <= 1e-12:
                continue
            counter_val = report.counterfactual_utility.get((t, i))
            if counter_val is None:
                counter_val = aggregate_utility(
                    case, t,
                    _generation_by_bus(case, dispatch, t, exclude_producer=i),
                    backend=backend).value
            direct = realized_u - counter_val - report.cost[(t, i)] - report.tax[(t, i)]
            residual = max(residual, abs(report.profit_full_scheme[(t, i)] - direct))
    rational = {}
    for i in case.producers:
        phi0, chi0 = report.fixed_fee.get(i, (0.0, 0.0))
        rational[i] = bool(report.horizon_profit(i, "full_scheme") + chi0 - phi0 >= -1e-9)
    return SchemeChecks(individually_rational=rational,
                        budget_balance={t: float(v) for t, v in report.net_transfer.items()},
                        price_independence_residual=float(residual))
