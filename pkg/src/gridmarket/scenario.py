"""Scenario files, bundled case builders and result serialization.

The scenario format is a structured YAML document, schema ``gridmarket-scenario-v1``.
Top-level keys::

    schema: gridmarket-scenario-v1    # required, exactly this string
    name: <case name>                 # optional, default "case"
    horizon: <int>                    # number of dispatch intervals T
    settings:                         # optional SolverSettings overrides
      gamma, feasibility_tol, integrality_tol, gap_tol, segments
    topology:
      buses: [b1, ...]
      slack: b1                       # optional, default first bus
      lines:                          # optional
        - {from: b1, to: b2, rating: 122.5, reactance: 0.0139}
      ptdf: [[...], ...]              # optional explicit matrix, row per line
    producers: [p1, ...]
    technologies:                     # optional per-technology defaults
      coal: {pollution_rate: 90.0}
    generators:
      - id, bus, producer, capacity   # required
        technology: coal              # optional, default "custom"
        cost: <curve>                 # see curve forms below
        pollution_rate: 4.0           # optional scalar or per-segment list,
                                      # default from the technology block
        availability: [1.0, ...]      # optional per-interval factors
        ramp_limit: 1.0               # optional
        investment: {rate: 9.0, cap: 6.0}   # optional
    demands:
      - id, bus                       # required
        max_consumption: [6.0, ...]   # per-interval list, or
        max_consumption: {base: 108.0, growth_pct: 2.5}
        utility:
          quadratic: {c: <scalar or per-interval list>, a: 0.5,
                      growth_pct: 4.0}      # growth only with scalar c
          segments: 10                # optional: convert to PWL per interval
        # or:  utility: {pwl: [<curve>, ...]}   one curve per interval
    externality:                      # optional damage curves, all convex
      default: <curve>                # applied to every bus
      b3: <curve>                     # explicit bus entries override default

Curve forms: ``{slope: s, domain: d}`` (one linear segment through the origin),
``{breakpoints: [...], slopes: [...], curvature: ...}`` (explicit), and for
generator costs also ``{quadratic: {b: ..., e: ...}, segments: n, domain: d}``
meaning marginal cost b + 2·e·q sampled into n secant segments (domain defaults
to capacity plus investment cap).

Growth rules expand at load time, so a loaded case always carries explicit
per-interval values; ``save_scenario`` writes that expanded form and
``load_scenario(save_scenario(case))`` reproduces the case exactly.
"""
from __future__ import annotations

import json
import random
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import yaml

from .model import (
    TimeGrid, LineSpec, NetworkTopology, PiecewiseLinearCurve, QuadraticUtility,
    GeneratorSpec, DemandSpec, ExternalitySpec, SolverSettings, ScenarioCase,
    pwl_from_quadratic, validate_case,
)
from .spot import DispatchResult
from .incentives import IncentiveReport, SchemeChecks
from .investment import InvestmentResult

SCHEMA_V1 = "gridmarket-scenario-v1"
_RTS_SCHEMA = "gridmarket-rts24-base-v1"


class ScenarioError(ValueError):
    """Base class for scenario file problems."""


class ScenarioFormatError(ScenarioError):
    """The document cannot be parsed or does not follow the v1 schema."""


class ScenarioValidationError(ScenarioError):
    """The document parses but describes an inconsistent case."""


# ---------------------------------------------------------------------------
# document access helpers (all errors carry a dotted path into the document)


_MISSING = object()


def _fail(path: str, msg: str):
    raise ScenarioFormatError(f"{path}: {msg}")


def _as_map(v, path: str) -> dict:
    if not isinstance(v, dict):
        _fail(path, f"expected a mapping, got {type(v).__name__}")
    return v


def _as_list(v, path: str) -> list:
    if not isinstance(v, list):
        _fail(path, f"expected a list, got {type(v).__name__}")
    return v


def _as_num(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {v!r}")
    return float(v)


def _as_int(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(path, f"expected an integer, got {v!r}")
    return v


def _as_str(v, path: str) -> str:
    if not isinstance(v, str):
        _fail(path, f"expected a string, got {v!r}")
    return v


def _get(m: dict, key: str, path: str, default=_MISSING):
    if key in m:
        return m[key]
    if default is _MISSING:
        _fail(path, f"missing required key {key!r}")
    return default


def _check_keys(m: dict, allowed: tuple, path: str):
    extra = sorted(set(m) - set(allowed))
    if extra:
        _fail(path, f"unknown key(s) {extra}; allowed: {sorted(allowed)}")


def _num_list(v, path: str) -> tuple[float, ...]:
    return tuple(_as_num(x, f"{path}[{i}]") for i, x in enumerate(_as_list(v, path)))


def _curve_from_doc(doc, path: str, curvature: str) -> PiecewiseLinearCurve:
    m = _as_map(doc, path)
    try:
        if "slope" in m:
            _check_keys(m, ("slope", "domain", "curvature"), path)
            return PiecewiseLinearCurve(
                (0.0, _as_num(_get(m, "domain", path), f"{path}.domain")),
                (_as_num(m["slope"], f"{path}.slope"),),
                _as_str(m.get("curvature", curvature), f"{path}.curvature"))
        if "breakpoints" in m:
            _check_keys(m, ("breakpoints", "slopes", "curvature"), path)
            return PiecewiseLinearCurve(
                _num_list(_get(m, "breakpoints", path), f"{path}.breakpoints"),
                _num_list(_get(m, "slopes", path), f"{path}.slopes"),
                _as_str(m.get("curvature", curvature), f"{path}.curvature"))
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        _fail(path, str(exc))
    _fail(path, "curve needs slope/domain or breakpoints/slopes")


def _growth_series(base: float, growth_pct: float, T: int) -> tuple[float, ...]:
    factor = 1.0 + growth_pct / 100.0
    return tuple(base * factor ** t for t in range(T))


# ---------------------------------------------------------------------------
# document -> case


def _expand_topology(doc, path: str) -> NetworkTopology:
    m = _as_map(doc, path)
    _check_keys(m, ("buses", "lines", "slack", "ptdf"), path)
    buses = tuple(_as_str(b, f"{path}.buses[{i}]")
                  for i, b in enumerate(_as_list(_get(m, "buses", path), f"{path}.buses")))
    lines = []
    for i, ln in enumerate(m.get("lines") or []):
        lp = f"{path}.lines[{i}]"
        lm = _as_map(ln, lp)
        _check_keys(lm, ("from", "to", "rating", "reactance"), lp)
        reactance = lm.get("reactance")
        lines.append(LineSpec(
            from_bus=_as_str(_get(lm, "from", lp), f"{lp}.from"),
            to_bus=_as_str(_get(lm, "to", lp), f"{lp}.to"),
            rating=_as_num(_get(lm, "rating", lp), f"{lp}.rating"),
            reactance=None if reactance is None else _as_num(reactance, f"{lp}.reactance")))
    ptdf = None
    if m.get("ptdf") is not None:
        ptdf = tuple(_num_list(row, f"{path}.ptdf[{i}]")
                     for i, row in enumerate(_as_list(m["ptdf"], f"{path}.ptdf")))
    slack = m.get("slack")
    if slack is not None:
        slack = _as_str(slack, f"{path}.slack")
    return NetworkTopology(buses=buses, lines=tuple(lines), ptdf=ptdf, slack=slack)


def _expand_generator(doc, path: str, T: int, tech_defaults: dict,
                      default_segments: int) -> GeneratorSpec:
    m = _as_map(doc, path)
    _check_keys(m, ("id", "bus", "producer", "technology", "capacity", "cost",
                    "pollution_rate", "availability", "ramp_limit", "investment"), path)
    gid = _as_str(_get(m, "id", path), f"{path}.id")
    capacity = _as_num(_get(m, "capacity", path), f"{path}.capacity")
    technology = _as_str(m.get("technology", "custom"), f"{path}.technology")

    inv_rate, inv_cap = 0.0, 0.0
    if "investment" in m:
        ip = f"{path}.investment"
        im = _as_map(m["investment"], ip)
        _check_keys(im, ("rate", "cap"), ip)
        inv_rate = _as_num(im.get("rate", 0.0), f"{ip}.rate")
        inv_cap = _as_num(im.get("cap", 0.0), f"{ip}.cap")

    cost_doc = _as_map(_get(m, "cost", path), f"{path}.cost")
    if "quadratic" in cost_doc:
        cp = f"{path}.cost"
        _check_keys(cost_doc, ("quadratic", "segments", "domain"), cp)
        qm = _as_map(cost_doc["quadratic"], f"{cp}.quadratic")
        _check_keys(qm, ("b", "e"), f"{cp}.quadratic")
        b = _as_num(_get(qm, "b", f"{cp}.quadratic"), f"{cp}.quadratic.b")
        e = _as_num(qm.get("e", 0.0), f"{cp}.quadratic.e")
        segments = _as_int(cost_doc.get("segments", default_segments), f"{cp}.segments")
        domain = _as_num(cost_doc.get("domain", capacity + inv_cap), f"{cp}.domain")
        try:
            cost_curve = pwl_from_quadratic(b, e, domain, segments,
                                            "convex-nondecreasing")
        except ValueError as exc:
            _fail(cp, str(exc))
    else:
        cost_curve = _curve_from_doc(cost_doc, f"{path}.cost", "convex-nondecreasing")

    pollution = m.get("pollution_rate")
    if pollution is None:
        pollution = tech_defaults.get(technology, {}).get("pollution_rate", 0.0)
    if isinstance(pollution, list):
        pollution = _num_list(pollution, f"{path}.pollution_rate")
    else:
        pollution = _as_num(pollution, f"{path}.pollution_rate")

    availability = m.get("availability")
    if availability is not None:
        availability = _num_list(availability, f"{path}.availability")
    ramp = m.get("ramp_limit")
    if ramp is not None:
        ramp = _as_num(ramp, f"{path}.ramp_limit")

    return GeneratorSpec(
        id=gid, bus=_as_str(_get(m, "bus", path), f"{path}.bus"),
        producer=_as_str(_get(m, "producer", path), f"{path}.producer"),
        cost_curve=cost_curve, capacity=capacity, technology=technology,
        pollution_rate=pollution, availability=availability, ramp_limit=ramp,
        investment_cost_rate=inv_rate, investment_cap=inv_cap)


def _expand_demand(doc, path: str, T: int, default_segments: int) -> DemandSpec:
    m = _as_map(doc, path)
    _check_keys(m, ("id", "bus", "max_consumption", "utility"), path)
    did = _as_str(_get(m, "id", path), f"{path}.id")

    mc = _get(m, "max_consumption", path)
    if isinstance(mc, dict):
        mp = f"{path}.max_consumption"
        _check_keys(mc, ("base", "growth_pct"), mp)
        max_consumption = _growth_series(
            _as_num(_get(mc, "base", mp), f"{mp}.base"),
            _as_num(mc.get("growth_pct", 0.0), f"{mp}.growth_pct"), T)
    else:
        max_consumption = _num_list(mc, f"{path}.max_consumption")

    um = _as_map(_get(m, "utility", path), f"{path}.utility")
    up = f"{path}.utility"
    if "quadratic" in um:
        _check_keys(um, ("quadratic", "segments"), up)
        qm = _as_map(um["quadratic"], f"{up}.quadratic")
        _check_keys(qm, ("c", "a", "growth_pct"), f"{up}.quadratic")
        a = _as_num(qm.get("a", 0.5), f"{up}.quadratic.a")
        c_raw = _get(qm, "c", f"{up}.quadratic")
        if isinstance(c_raw, list):
            if "growth_pct" in qm:
                _fail(f"{up}.quadratic", "growth_pct only applies to a scalar c")
            c = _num_list(c_raw, f"{up}.quadratic.c")
        else:
            c = _growth_series(_as_num(c_raw, f"{up}.quadratic.c"),
                               _as_num(qm.get("growth_pct", 0.0),
                                       f"{up}.quadratic.growth_pct"), T)
        if "segments" in um:
            segments = _as_int(um["segments"], f"{up}.segments")
            curves = []
            for t in range(T):
                domain = max_consumption[t] if max_consumption[t] > 0 else 1.0
                try:
                    curves.append(pwl_from_quadratic(c[t], a, domain, segments,
                                                     "concave-nondecreasing"))
                except ValueError as exc:
                    _fail(f"{up} (interval {t + 1})", str(exc))
            utility = tuple(curves)
        else:
            utility = QuadraticUtility(c=c, a=a)
    elif "pwl" in um:
        _check_keys(um, ("pwl",), up)
        lst = _as_list(um["pwl"], f"{up}.pwl")
        if len(lst) != T:
            _fail(f"{up}.pwl", f"needs one curve per interval ({T}), got {len(lst)}")
        utility = tuple(_curve_from_doc(x, f"{up}.pwl[{i}]", "concave-nondecreasing")
                        for i, x in enumerate(lst))
    else:
        _fail(up, "utility needs a quadratic or pwl block")

    return DemandSpec(id=did, bus=_as_str(_get(m, "bus", path), f"{path}.bus"),
                      utility=utility, max_consumption=max_consumption)


def _expand_document(doc: dict, source: str) -> ScenarioCase:
    m = _as_map(doc, source)
    _check_keys(m, ("schema", "name", "horizon", "settings", "topology",
                    "producers", "technologies", "generators", "demands",
                    "externality"), source)
    schema = _get(m, "schema", source)
    if schema != SCHEMA_V1:
        _fail(f"{source}.schema", f"unrecognized schema {schema!r} "
                                  f"(expected {SCHEMA_V1!r})")
    T = _as_int(_get(m, "horizon", source), f"{source}.horizon")
    name = _as_str(m.get("name", "case"), f"{source}.name")

    settings_doc = _as_map(m.get("settings") or {}, f"{source}.settings")
    fields = ("gamma", "feasibility_tol", "integrality_tol", "gap_tol", "segments")
    _check_keys(settings_doc, fields, f"{source}.settings")
    overrides = {}
    for key in fields:
        if key in settings_doc:
            conv = _as_int if key == "segments" else _as_num
            overrides[key] = conv(settings_doc[key], f"{source}.settings.{key}")
    settings = SolverSettings(**overrides)

    topology = _expand_topology(_get(m, "topology", source), f"{source}.topology")
    producers = tuple(
        _as_str(p, f"{source}.producers[{i}]")
        for i, p in enumerate(_as_list(_get(m, "producers", source),
                                       f"{source}.producers")))

    tech_defaults = {}
    for tech, block in (_as_map(m.get("technologies") or {},
                                f"{source}.technologies")).items():
        tp = f"{source}.technologies.{tech}"
        bm = _as_map(block, tp)
        _check_keys(bm, ("pollution_rate",), tp)
        tech_defaults[tech] = {
            "pollution_rate": _as_num(bm.get("pollution_rate", 0.0),
                                      f"{tp}.pollution_rate")}

    generators = tuple(
        _expand_generator(g, f"{source}.generators[{i}]", T, tech_defaults,
                          settings.segments)
        for i, g in enumerate(_as_list(_get(m, "generators", source),
                                       f"{source}.generators")))
    demands = tuple(
        _expand_demand(d, f"{source}.demands[{i}]", T, settings.segments)
        for i, d in enumerate(_as_list(_get(m, "demands", source),
                                       f"{source}.demands")))

    ext_doc = _as_map(m.get("externality") or {}, f"{source}.externality")
    curves: dict[str, PiecewiseLinearCurve] = {}
    default_curve = None
    for bus, cd in ext_doc.items():
        curve = _curve_from_doc(cd, f"{source}.externality.{bus}",
                                "convex-nondecreasing")
        if bus == "default":
            default_curve = curve
        else:
            curves[bus] = curve
    if default_curve is not None:
        for bus in topology.buses:
            curves.setdefault(bus, default_curve)

    case = ScenarioCase(topology=topology, producers=producers,
                        generators=generators, demands=demands,
                        externality=ExternalitySpec(curves), grid=TimeGrid(T),
                        settings=settings, name=name)
    problems = validate_case(case)
    if problems:
        raise ScenarioValidationError(
            f"{source}: invalid case:\n  " + "\n  ".join(problems))
    return case


def load_scenario(path) -> ScenarioCase:
    """Parse, expand and validate a v1 scenario file."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ScenarioFormatError(f"{where}: {exc}") from None
    return _expand_document(doc, str(path))


# ---------------------------------------------------------------------------
# case -> document (expanded form)


def _curve_doc(curve: PiecewiseLinearCurve) -> dict:
    return {"breakpoints": [float(b) for b in curve.breakpoints],
            "slopes": [float(s) for s in curve.slopes],
            "curvature": curve.curvature}


def case_to_document(case: ScenarioCase) -> dict:
    """Expanded v1 document for a case: all growth applied, all curves explicit."""
    s = case.settings
    topo: dict = {"buses": list(case.topology.buses)}
    if case.topology.slack is not None:
        topo["slack"] = case.topology.slack
    if case.topology.lines:
        topo["lines"] = [
            {"from": ln.from_bus, "to": ln.to_bus, "rating": float(ln.rating),
             **({} if ln.reactance is None else {"reactance": float(ln.reactance)})}
            for ln in case.topology.lines]
    if case.topology.ptdf is not None:
        topo["ptdf"] = [[float(v) for v in row] for row in case.topology.ptdf]

    generators = []
    for g in case.generators:
        gd: dict = {"id": g.id, "bus": g.bus, "producer": g.producer,
                    "technology": g.technology, "capacity": float(g.capacity),
                    "cost": _curve_doc(g.cost_curve)}
        if isinstance(g.pollution_rate, (int, float)):
            gd["pollution_rate"] = float(g.pollution_rate)
        else:
            gd["pollution_rate"] = [float(r) for r in g.pollution_rate]
        if g.availability is not None:
            gd["availability"] = [float(a) for a in g.availability]
        if g.ramp_limit is not None:
            gd["ramp_limit"] = float(g.ramp_limit)
        if g.investment_cost_rate or g.investment_cap:
            gd["investment"] = {"rate": float(g.investment_cost_rate),
                                "cap": float(g.investment_cap)}
        generators.append(gd)

    demands = []
    for dm in case.demands:
        if dm.is_quadratic():
            utility = {"quadratic": {"c": [float(c) for c in dm.utility.c],
                                     "a": float(dm.utility.a)}}
        else:
            utility = {"pwl": [_curve_doc(cv) for cv in dm.utility]}
        demands.append({"id": dm.id, "bus": dm.bus,
                        "max_consumption": [float(v) for v in dm.max_consumption],
                        "utility": utility})

    return {
        "schema": SCHEMA_V1,
        "name": case.name,
        "horizon": case.grid.horizon_length,
        "settings": {"gamma": float(s.gamma),
                     "feasibility_tol": float(s.feasibility_tol),
                     "integrality_tol": float(s.integrality_tol),
                     "gap_tol": float(s.gap_tol), "segments": int(s.segments)},
        "topology": topo,
        "producers": list(case.producers),
        "generators": generators,
        "demands": demands,
        "externality": {bus: _curve_doc(cv) for bus, cv in
                        sorted(case.externality.damage_curves.items())},
    }


def save_scenario(case: ScenarioCase, path) -> str:
    """Write the expanded document; load_scenario reads it back to an equal case."""
    text = yaml.safe_dump(case_to_document(case), sort_keys=False, width=96)
    Path(path).write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# bundled cases


def bundled_scenario_path(name: str) -> Path:
    """Filesystem path of a scenario file shipped with the package.

    Bundled names: ``analytical_example`` and ``rts24`` (the 24-bus case at
    its default producer assignment, fully expanded).
    """
    fname = name if name.endswith((".yaml", ".yml")) else f"{name}.yaml"
    p = resources.files("gridmarket").joinpath(f"data/{fname}")
    if not p.is_file():
        raise ScenarioFormatError(f"no bundled scenario named {name!r}")
    return Path(str(p))


def build_analytical_example() -> ScenarioCase:
    """Single-bus, two-producer, three-interval case with quadratic utilities.

    Producer 1 runs the cheap polluting unit (marginal cost 2, pollution rate 4),
    producer 2 the cleaner expensive one (marginal cost 4, no pollution); damage
    is linear with slope 1 and each unit can add up to 6 MW at 9 $/MW.
    """
    g1 = GeneratorSpec(
        id="g1", bus="b1", producer="p1",
        cost_curve=PiecewiseLinearCurve((0.0, 10.0), (2.0,)),
        capacity=4.0, pollution_rate=4.0,
        investment_cost_rate=9.0, investment_cap=6.0)
    g2 = GeneratorSpec(
        id="g2", bus="b1", producer="p2",
        cost_curve=PiecewiseLinearCurve((0.0, 9.0), (4.0,)),
        capacity=3.0, pollution_rate=0.0,
        investment_cost_rate=9.0, investment_cap=6.0)
    demand = DemandSpec(
        id="d1", bus="b1",
        utility=QuadraticUtility(c=(6.0, 12.0, 20.0), a=0.5),
        max_consumption=(6.0, 12.0, 20.0))
    return ScenarioCase(
        topology=NetworkTopology(buses=("b1",)),
        producers=("p1", "p2"),
        generators=(g1, g2),
        demands=(demand,),
        externality=ExternalitySpec({"b1": PiecewiseLinearCurve((0.0, 60.0), (1.0,))}),
        grid=TimeGrid(3),
        name="analytical-example")


def _rts_base() -> dict:
    text = resources.files("gridmarket").joinpath("data/rts24_system.yaml").read_text()
    doc = yaml.safe_load(text)
    if doc.get("schema") != _RTS_SCHEMA:
        raise ScenarioFormatError(f"rts24_system.yaml: unexpected schema "
                                  f"{doc.get('schema')!r}")
    return doc


def _assign_producers(capacities: list[float], producer_ids: tuple[str, ...],
                      lo: float, hi: float, seed: int) -> list[str] | None:
    """Largest-first balancing assignment with a seeded choice among the three
    least-loaded producers still able to take the unit; None when the share
    band cannot be met."""
    rng = random.Random(seed)
    order = sorted(range(len(capacities)), key=lambda i: (-capacities[i], i))
    totals = {p: 0.0 for p in producer_ids}
    out: list[str | None] = [None] * len(capacities)
    for i in order:
        eligible = [p for p in producer_ids if totals[p] + capacities[i] <= hi + 1e-9]
        if not eligible:
            return None
        eligible.sort(key=lambda p: (totals[p], p))
        pick = rng.choice(eligible[:3])
        out[i] = pick
        totals[pick] += capacities[i]
    if any(v < lo - 1e-9 for v in totals.values()):
        return None
    return out  # type: ignore[return-value]


def _rts24_document(seed: int) -> dict:
    base = _rts_base()
    cal = base["calibration"]
    n_bus = base["buses"]
    buses = [f"b{i}" for i in range(1, n_bus + 1)]
    producers = [f"p{i}" for i in range(1, cal["producer_count"] + 1)]

    units = []  # (bus, capacity, technology)
    for bus, mw, tech, count in base["units"]:
        units.extend((bus, float(mw), tech) for _ in range(count))
    total_capacity = sum(u[1] for u in units)
    lo = cal["share_bounds_pct"][0] / 100.0 * total_capacity
    hi = cal["share_bounds_pct"][1] / 100.0 * total_capacity

    assignment = None
    for attempt in range(seed, seed + 50):
        assignment = _assign_producers([u[1] for u in units], tuple(producers),
                                       lo, hi, attempt)
        if assignment is not None:
            if attempt != seed:
                warnings.warn(f"rts24: producer shares infeasible for seed {seed}; "
                              f"assigned with seed {attempt}")
            break
    if assignment is None:
        raise ScenarioValidationError(
            f"rts24: no feasible producer assignment near seed {seed}")

    tech_params = base["technologies"]
    rise = cal["cost_marginal_rise_pct"] / 100.0
    cap_fraction = cal["investment_cap_fraction"]
    generators = []
    for idx, ((bus, mw, tech), producer) in enumerate(zip(units, assignment), 1):
        b = float(tech_params[tech]["cost"])
        # marginal cost rises by `rise` across the installed capacity
        e = 0.5 * rise * b / mw
        generators.append({
            "id": f"g{idx:02d}", "bus": f"b{bus}", "producer": producer,
            "technology": tech, "capacity": mw,
            "cost": {"quadratic": {"b": b, "e": e}, "segments": cal["segments"],
                     "domain": mw * (1.0 + cap_fraction)},
            "investment": {"rate": float(cal["investment_cost_rate"]),
                           "cap": mw * cap_fraction},
        })

    drop = cal["utility_marginal_drop"]
    demands = []
    for bus, load in sorted(base["peak_load_mw"].items()):
        demands.append({
            "id": f"d{bus}", "bus": f"b{bus}",
            "max_consumption": {"base": float(load),
                                "growth_pct": cal["demand_growth_pct"]},
            # base marginal (utility_base_marginal) sits above the costliest
            # marginal cost plus externality charge so the first interval
            # clears at full load; see data/rts24_system.yaml
            "utility": {"quadratic": {"c": float(cal["utility_base_marginal"]),
                                      "a": 0.5 * drop / float(load),
                                      "growth_pct": cal["utility_growth_pct"]},
                        "segments": cal["segments"]},
        })

    factor = cal["line_rating_factor"]
    lines = [{"from": f"b{f}", "to": f"b{t}", "rating": factor * float(r),
              "reactance": float(x)}
             for f, t, x, r in base["lines"]]

    return {
        "schema": SCHEMA_V1,
        "name": f"rts24-seed{seed}",
        "horizon": cal["horizon"],
        "settings": {"gamma": float(cal["gamma"]), "segments": cal["segments"]},
        "topology": {"buses": buses, "lines": lines},
        "producers": producers,
        "technologies": {tech: {"pollution_rate": float(p["pollution_rate"])}
                         for tech, p in tech_params.items()},
        "generators": generators,
        "demands": demands,
        "externality": {"default": {"slope": float(cal["damage_slope"]),
                                    "domain": float(cal["damage_domain"])}},
    }


def build_rts24_case(seed: int = 0) -> ScenarioCase:
    """IEEE 24-bus variant: 33 units, 38 lines at 70% rating, 10 producers.

    Deterministic in `seed`, which drives only the producer-to-unit assignment
    (shares kept between 6% and 14% of total capacity; infeasible seeds fall
    forward to the next feasible one with a warning).
    """
    return _expand_document(_rts24_document(seed), f"<rts24 seed {seed}>")


# ---------------------------------------------------------------------------
# result serialization


@dataclass
class ResultBundle:
    """Everything one run produced, ready for serialization."""

    case: ScenarioCase
    dispatches: dict[str, DispatchResult] = field(default_factory=dict)
    incentives: IncentiveReport | None = None
    checks: SchemeChecks | None = None
    investments: dict[str, InvestmentResult] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)


BUNDLE_SCHEMA = "gridmarket-bundle-v1"


def _dispatch_doc(d: DispatchResult) -> dict:
    return {
        "mode": d.mode,
        "increments": d.increments,
        "generation": {str(t): v for t, v in d.generation.items()},
        "consumption": {str(t): v for t, v in d.consumption.items()},
        "flows": {str(t): {str(l): f for l, f in v.items()}
                  for t, v in d.flows.items()},
        "prices": {str(t): v for t, v in d.prices.items()},
        "lambdas": {str(t): v for t, v in d.lambdas.items()},
        "line_duals": {str(t): {str(l): list(md) for l, md in v.items()}
                       for t, v in d.line_duals.items()},
        "capacity_rents": {str(t): v for t, v in d.capacity_rents.items()},
        "welfare": {str(t): v for t, v in d.welfare.items()},
        "diagnostics": d.diagnostics,
    }


def _dispatch_from_doc(doc: dict) -> DispatchResult:
    return DispatchResult(
        mode=doc["mode"],
        increments=dict(doc["increments"]),
        generation={int(t): v for t, v in doc["generation"].items()},
        consumption={int(t): v for t, v in doc["consumption"].items()},
        flows={int(t): {int(l): f for l, f in v.items()}
               for t, v in doc["flows"].items()},
        prices={int(t): v for t, v in doc["prices"].items()},
        lambdas={int(t): v for t, v in doc["lambdas"].items()},
        line_duals={int(t): {int(l): (md[0], md[1]) for l, md in v.items()}
                    for t, v in doc["line_duals"].items()},
        capacity_rents={int(t): v for t, v in doc["capacity_rents"].items()},
        welfare={int(t): v for t, v in doc["welfare"].items()},
        diagnostics=doc.get("diagnostics", {}),
    )


def _tp_doc(table: dict[tuple[int, str], float]) -> dict:
    return {f"{t}:{p}": v for (t, p), v in table.items()}


def _tp_from_doc(doc: dict) -> dict[tuple[int, str], float]:
    out = {}
    for key, v in doc.items():
        t, p = key.split(":", 1)
        out[(int(t), p)] = v
    return out


def save_bundle(bundle: ResultBundle, path) -> str:
    """Full-fidelity JSON of a bundle; load_bundle restores equal objects."""
    rep = bundle.incentives
    doc = {
        "schema": BUNDLE_SCHEMA,
        "case": case_to_document(bundle.case),
        "dispatches": {m: _dispatch_doc(d) for m, d in bundle.dispatches.items()},
        "incentives": None if rep is None else {
            "producers": list(rep.producers),
            "tax": _tp_doc(rep.tax), "subsidy": _tp_doc(rep.subsidy),
            "revenue": _tp_doc(rep.revenue), "cost": _tp_doc(rep.cost),
            "profit_competitive": _tp_doc(rep.profit_competitive),
            "profit_taxed": _tp_doc(rep.profit_taxed),
            "profit_full_scheme": _tp_doc(rep.profit_full_scheme),
            "net_transfer": {str(t): v for t, v in rep.net_transfer.items()},
            "fixed_fee": {p: list(v) for p, v in rep.fixed_fee.items()},
            "counterfactual_relaxed": [list(k) for k in rep.counterfactual_relaxed],
            "aggregate_utility_value": {str(t): v for t, v in
                                        rep.aggregate_utility_value.items()},
            "counterfactual_utility": _tp_doc(rep.counterfactual_utility),
        },
        "checks": None if bundle.checks is None else {
            "individually_rational": bundle.checks.individually_rational,
            "budget_balance": {str(t): v for t, v in
                               bundle.checks.budget_balance.items()},
            "price_independence_residual":
                bundle.checks.price_independence_residual,
        },
        "investments": {
            model: {
                "objective": res.objective,
                "increments": res.increments,
                "multipliers": res.multipliers,
                "dispatch": _dispatch_doc(res.dispatch),
                "horizon_welfare": res.horizon_welfare,
                "investment_cost": res.investment_cost,
                "producer_profit": res.producer_profit,
                "diagnostics": res.diagnostics,
            } for model, res in bundle.investments.items()},
        "metadata": bundle.metadata,
    }
    p = Path(path)
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return str(p)


def load_bundle(path) -> ResultBundle:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != BUNDLE_SCHEMA:
        raise ScenarioFormatError(f"{path}: unexpected bundle schema "
                                  f"{doc.get('schema')!r}")
    inc = doc.get("incentives")
    chk = doc.get("checks")
    return ResultBundle(
        case=_expand_document(doc["case"], f"{path}#case"),
        dispatches={m: _dispatch_from_doc(d)
                    for m, d in doc["dispatches"].items()},
        incentives=None if inc is None else IncentiveReport(
            producers=tuple(inc["producers"]),
            tax=_tp_from_doc(inc["tax"]), subsidy=_tp_from_doc(inc["subsidy"]),
            revenue=_tp_from_doc(inc["revenue"]), cost=_tp_from_doc(inc["cost"]),
            profit_competitive=_tp_from_doc(inc["profit_competitive"]),
            profit_taxed=_tp_from_doc(inc["profit_taxed"]),
            profit_full_scheme=_tp_from_doc(inc["profit_full_scheme"]),
            net_transfer={int(t): v for t, v in inc["net_transfer"].items()},
            fixed_fee={p: (v[0], v[1]) for p, v in inc["fixed_fee"].items()},
            counterfactual_relaxed=[(int(t), p) for t, p in
                                    inc["counterfactual_relaxed"]],
            aggregate_utility_value={int(t): v for t, v in
                                     inc["aggregate_utility_value"].items()},
            counterfactual_utility=_tp_from_doc(inc["counterfactual_utility"]),
        ),
        checks=None if chk is None else SchemeChecks(
            individually_rational=chk["individually_rational"],
            budget_balance={int(t): v for t, v in chk["budget_balance"].items()},
            price_independence_residual=chk["price_independence_residual"],
        ),
        investments={
            model: InvestmentResult(
                objective=r["objective"], increments=r["increments"],
                multipliers=r["multipliers"],
                dispatch=_dispatch_from_doc(r["dispatch"]),
                horizon_welfare=r["horizon_welfare"],
                investment_cost=r["investment_cost"],
                producer_profit=r["producer_profit"],
                diagnostics=r.get("diagnostics", {}),
            ) for model, r in doc["investments"].items()},
        metadata=doc.get("metadata", {}),
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def _average_price(case: ScenarioCase, dispatch: DispatchResult, t: int) -> float:
    """Consumption-weighted nodal price (simple mean when nothing consumes)."""
    prices = dispatch.prices[t]
    load = {bus: 0.0 for bus in case.topology.buses}
    for dm in case.demands:
        load[dm.bus] += dispatch.consumption[t].get(dm.id, 0.0)
    total = sum(load.values())
    if total <= 0:
        return sum(prices.values()) / len(prices)
    return sum(prices[bus] * load[bus] for bus in prices) / total


def _write_csv(path: Path, header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    lines += [",".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def _write_series(path: Path, points: list[tuple[int, float]]) -> str:
    path.write_text("".join(f"{t} {_fmt(v)}\n" for t, v in points))
    return str(path)


def emit_results(bundle: ResultBundle, out_dir) -> list[str]:
    """Write CSV tables, a JSON summary and x-y series files; returns the paths.

    Every CSV is always written (header-only when there is nothing to report).
    Column orders are fixed. Floats are written with repr so files round-trip
    to the in-memory values exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series_dir = out / "series"
    series_dir.mkdir(exist_ok=True)
    case = bundle.case
    intervals = list(case.grid.intervals())
    written: list[str] = []

    spot_rows, gen_rows, cons_rows, price_rows, flow_rows = [], [], [], [], []
    for mode, disp in bundle.dispatches.items():
        for t in intervals:
            w = disp.welfare[t]
            spot_rows.append([
                mode, t, _fmt(_average_price(case, disp, t)),
                _fmt(disp.total(t)), _fmt(sum(disp.consumption[t].values())),
                _fmt(w["utility"]), _fmt(w["cost"]), _fmt(w["pollution"]),
                _fmt(w["damage"]), _fmt(w["social_welfare"])])
            for g in case.generators:
                gen_rows.append([mode, t, g.id, g.bus, g.producer,
                                 _fmt(disp.generation[t][g.id])])
            for dm in case.demands:
                cons_rows.append([mode, t, dm.id, dm.bus,
                                  _fmt(disp.consumption[t][dm.id])])
            for bus in case.topology.buses:
                price_rows.append([mode, t, bus, _fmt(disp.prices[t][bus])])
            for l, ln in enumerate(case.topology.lines):
                flow_rows.append([mode, t, f"l{l + 1}", ln.from_bus, ln.to_bus,
                                  _fmt(disp.flows[t][l]), _fmt(ln.rating)])

    written.append(_write_csv(
        out / "spot.csv",
        ["mode", "t", "price", "generation", "consumption", "utility", "cost",
         "pollution", "damage", "social_welfare"], spot_rows))
    written.append(_write_csv(
        out / "dispatch.csv",
        ["mode", "t", "generator", "bus", "producer", "generation"], gen_rows))
    written.append(_write_csv(
        out / "consumption.csv",
        ["mode", "t", "demand", "bus", "consumption"], cons_rows))
    written.append(_write_csv(
        out / "prices.csv", ["mode", "t", "bus", "price"], price_rows))
    written.append(_write_csv(
        out / "flows.csv",
        ["mode", "t", "line", "from_bus", "to_bus", "flow", "rating"], flow_rows))

    inc_rows = []
    rep = bundle.incentives
    if rep is not None:
        for t in intervals:
            for p in rep.producers:
                key = (t, p)
                inc_rows.append([
                    t, p, _fmt(rep.tax[key]), _fmt(rep.subsidy[key]),
                    _fmt(rep.revenue[key]), _fmt(rep.cost[key]),
                    _fmt(rep.profit_competitive[key]), _fmt(rep.profit_taxed[key]),
                    _fmt(rep.profit_full_scheme[key])])
    written.append(_write_csv(
        out / "incentives.csv",
        ["t", "producer", "tax", "subsidy", "revenue", "cost",
         "profit_competitive", "profit_taxed", "profit_full_scheme"], inc_rows))

    inv_rows = []
    for model, res in bundle.investments.items():
        for g in case.generators:
            if g.investment_cap <= 0 and g.id not in res.increments:
                continue
            inv_rows.append([model, g.id, g.producer,
                             _fmt(res.increments.get(g.id, 0.0)),
                             _fmt(res.multipliers[g.id])
                             if g.id in res.multipliers else ""])
    written.append(_write_csv(
        out / "investment.csv",
        ["model", "generator", "producer", "increment", "multiplier"], inv_rows))

    # machine-readable summary; "created" is the only field allowed to change
    # between identical re-runs
    summary = {
        "schema": SCHEMA_V1,
        "name": case.name,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "horizon": case.grid.horizon_length,
        "modes": {
            mode: {
                "horizon_social_welfare": disp.horizon_welfare(),
                "total_generation": sum(disp.total(t) for t in intervals),
                "average_price": {
                    str(t): _average_price(case, disp, t) for t in intervals},
            }
            for mode, disp in bundle.dispatches.items()},
        "metadata": bundle.metadata,
    }
    if rep is not None:
        summary["incentives"] = {
            "horizon_tax": {p: sum(rep.tax[(t, p)] for t in intervals)
                            for p in rep.producers},
            "horizon_subsidy": {p: sum(rep.subsidy[(t, p)] for t in intervals)
                                for p in rep.producers},
            "horizon_profit_full_scheme": {
                p: rep.horizon_profit(p) for p in rep.producers},
            "net_transfer": {str(t): rep.net_transfer[t] for t in intervals},
        }
    if bundle.checks is not None:
        summary["checks"] = {
            "individually_rational": bundle.checks.individually_rational,
            "budget_balance": {str(t): v for t, v in
                               bundle.checks.budget_balance.items()},
            "price_independence_residual":
                bundle.checks.price_independence_residual,
        }
    if bundle.investments:
        summary["investments"] = {
            model: {
                "increments": res.increments,
                "multipliers": res.multipliers,
                "horizon_welfare": res.horizon_welfare,
                "investment_cost": res.investment_cost,
                "producer_profit": res.producer_profit,
            }
            for model, res in bundle.investments.items()}
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(str(path))

    for mode, disp in bundle.dispatches.items():
        written.append(_write_series(
            series_dir / f"avg_price_{mode}.xy",
            [(t, _average_price(case, disp, t)) for t in intervals]))
        written.append(_write_series(
            series_dir / f"social_welfare_{mode}.xy",
            [(t, disp.welfare[t]["social_welfare"]) for t in intervals]))
    if rep is not None:
        for p in rep.producers:
            written.append(_write_series(
                series_dir / f"tax_{p}.xy",
                [(t, rep.tax[(t, p)]) for t in intervals]))
            written.append(_write_series(
                series_dir / f"subsidy_{p}.xy",
                [(t, rep.subsidy[(t, p)]) for t in intervals]))
            written.append(_write_series(
                series_dir / f"profit_{p}.xy",
                [(t, rep.profit_full_scheme[(t, p)]) for t in intervals]))
    return written
