"""Domain types for market cases: network, curves, generators, demands, validation.

Conventions used across the package: one-hour dispatch intervals indexed
t = 1..T, quantities in MW (= MWh per interval), money in $. Line flows follow
the generation-positive convention flow = H @ (generation - consumption) per bus.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np

TECHNOLOGIES = ("renewable", "hydro", "nuclear", "coal", "fuel-oil", "gas", "custom")


@dataclass(frozen=True)
class TimeGrid:
    """Dispatch horizon: intervals are the consecutive integers 1..horizon_length."""

    horizon_length: int

    def intervals(self) -> range:
        return range(1, self.horizon_length + 1)


@dataclass(frozen=True)
class LineSpec:
    """One transmission line; reactance optional when an explicit PTDF is supplied."""

    from_bus: str
    to_bus: str
    rating: float  # MW, symmetric limit on |flow|
    reactance: float | None = None  # per-unit


@dataclass(frozen=True)
class NetworkTopology:
    """Buses, lines and (optionally) an explicit PTDF matrix.

    ``ptdf`` has one row per line and one column per bus; when omitted it is
    computed from reactances with ``compute_ptdf``. ``slack`` names the
    reference bus for that computation and defaults to the first bus.
    """

    buses: tuple[str, ...]
    lines: tuple[LineSpec, ...] = ()
    ptdf: tuple[tuple[float, ...], ...] | None = None
    slack: str | None = None

    def bus_index(self, bus: str) -> int:
        return self.buses.index(bus)

    def effective_ptdf(self) -> np.ndarray:
        """Explicit PTDF if given, else computed from reactances (explicit wins)."""
        if self.ptdf is not None:
            return np.asarray(self.ptdf, dtype=float)
        if not self.lines:
            return np.zeros((0, len(self.buses)))
        return compute_ptdf(self, self.slack or self.buses[0])


@dataclass(frozen=True)
class PiecewiseLinearCurve:
    """Piecewise-linear curve through the origin.

    ``breakpoints`` are the segment endpoints starting at 0; ``slopes[i]`` is the
    marginal value on (breakpoints[i], breakpoints[i+1]]. Convex curves must have
    nondecreasing slopes, concave curves nonincreasing; slopes are nonnegative in
    both cases (costs, damages and utilities are all nondecreasing).
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    curvature: str = "convex-nondecreasing"  # or "concave-nondecreasing"

    def __post_init__(self):
        if len(self.breakpoints) != len(self.slopes) + 1:
            raise ValueError("need exactly one more breakpoint than slopes")
        if self.breakpoints[0] != 0.0:
            raise ValueError("curve must start at quantity 0")
        if any(b >= c for b, c in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if self.curvature not in ("convex-nondecreasing", "concave-nondecreasing"):
            raise ValueError(f"unknown curvature {self.curvature!r}")
        slopes = self.slopes
        if any(s < 0 for s in slopes):
            raise ValueError("slopes must be nonnegative")
        if self.curvature == "convex-nondecreasing":
            if any(a > b + 1e-12 for a, b in zip(slopes, slopes[1:])):
                raise ValueError("convex curve needs nondecreasing slopes")
        else:
            if any(a < b - 1e-12 for a, b in zip(slopes, slopes[1:])):
                raise ValueError("concave curve needs nonincreasing slopes")

    @property
    def domain_max(self) -> float:
        return self.breakpoints[-1]

    def segment_widths(self) -> np.ndarray:
        bp = np.asarray(self.breakpoints)
        return np.diff(bp)


@dataclass(frozen=True)
class QuadraticUtility:
    """Exact quadratic utility c·d − a·d² per interval (marginal c − 2a·d).

    Kept exact for single-bus analytical work; general network clearing consumes
    the PWL form only.
    """

    c: tuple[float, ...]  # one intercept per interval, $/MWh
    a: float = 0.5

    def value(self, t: int, d: float) -> float:
        return self.c[t - 1] * d - self.a * d * d

    def marginal(self, t: int, d: float) -> float:
        return self.c[t - 1] - 2.0 * self.a * d


@dataclass(frozen=True)
class GeneratorSpec:
    """One generation unit owned by a producer.

    ``pollution_rate`` gives emissions per MWh on each cost segment (a scalar is
    broadcast); ``availability`` scales capacity per interval; ``ramp_limit``
    bounds the change of the capacity-relative output r = q / (A·k) between
    consecutive intervals.
    """

    id: str
    bus: str
    producer: str
    cost_curve: PiecewiseLinearCurve
    capacity: float
    technology: str = "custom"
    pollution_rate: tuple[float, ...] | float = 0.0
    availability: tuple[float, ...] | None = None  # per interval, defaults to 1
    ramp_limit: float | None = None
    investment_cost_rate: float = 0.0
    investment_cap: float = 0.0

    def pollution_rates(self) -> np.ndarray:
        n = len(self.cost_curve.slopes)
        if isinstance(self.pollution_rate, (int, float)):
            return np.full(n, float(self.pollution_rate))
        return np.asarray(self.pollution_rate, dtype=float)

    def availability_at(self, t: int) -> float:
        if self.availability is None:
            return 1.0
        return self.availability[t - 1]


@dataclass(frozen=True)
class DemandSpec:
    """One demand: per-interval utility (PWL curves or exact quadratic) and max draw."""

    id: str
    bus: str
    utility: tuple[PiecewiseLinearCurve, ...] | QuadraticUtility
    max_consumption: tuple[float, ...]  # D_t per interval, MW

    def is_quadratic(self) -> bool:
        return isinstance(self.utility, QuadraticUtility)

    def curve_at(self, t: int) -> PiecewiseLinearCurve:
        if self.is_quadratic():
            raise TypeError(f"demand {self.id} uses an exact quadratic utility")
        return self.utility[t - 1]


@dataclass(frozen=True)
class ExternalitySpec:
    """Per-bus convex damage curve over total bus pollution; missing buses → no damage."""

    damage_curves: dict[str, PiecewiseLinearCurve] = field(default_factory=dict)

    def curve_for(self, bus: str) -> PiecewiseLinearCurve | None:
        return self.damage_curves.get(bus)


@dataclass(frozen=True)
class SolverSettings:
    """Shared numerical settings, echoed into solve reports."""

    gamma: float = 2.0  # big-M factor, must exceed 1
    feasibility_tol: float = 1e-7
    integrality_tol: float = 1e-6
    gap_tol: float = 1e-6  # relative duality / MILP gap
    segments: int = 10  # default PWL segment count for quadratic conversion


@dataclass(frozen=True)
class ScenarioCase:
    """Full market description consumed by the clearing and investment solvers."""

    topology: NetworkTopology
    producers: tuple[str, ...]
    generators: tuple[GeneratorSpec, ...]
    demands: tuple[DemandSpec, ...]
    externality: ExternalitySpec
    grid: TimeGrid
    settings: SolverSettings = SolverSettings()
    name: str = "case"

    def generator(self, gen_id: str) -> GeneratorSpec:
        for g in self.generators:
            if g.id == gen_id:
                return g
        raise KeyError(gen_id)

    def producer_generators(self, producer: str) -> tuple[GeneratorSpec, ...]:
        return tuple(g for g in self.generators if g.producer == producer)

    def with_increments(self, increments: dict[str, float]) -> ScenarioCase:
        """Copy of the case with capacity increments folded into K (caps reduced)."""
        gens = []
        for g in self.generators:
            dk = float(increments.get(g.id, 0.0))
            if dk:
                gens.append(replace(g, capacity=g.capacity + dk,
                                    investment_cap=max(0.0, g.investment_cap - dk)))
            else:
                gens.append(g)
        return replace(self, generators=tuple(gens))


# ---------------------------------------------------------------------------
# curve operations


def curve_value(curve: PiecewiseLinearCurve, x: float) -> float:
    """Integral of the slopes up to x; x must lie within the curve domain."""
    bp = curve.breakpoints
    if x < -1e-12 or x > bp[-1] + 1e-9:
        raise ValueError(f"x={x} outside curve domain [0, {bp[-1]}]")
    x = min(max(x, 0.0), bp[-1])
    total = 0.0
    for lo, hi, s in zip(bp, bp[1:], curve.slopes):
        if x <= lo:
            break
        total += s * (min(x, hi) - lo)
    return total


def curve_marginal(curve: PiecewiseLinearCurve, x: float) -> float:
    """Right-hand derivative at x (the slope of the segment to the right of a kink)."""
    bp = curve.breakpoints
    if x < -1e-12 or x > bp[-1] + 1e-9:
        raise ValueError(f"x={x} outside curve domain [0, {bp[-1]}]")
    for lo, hi, s in zip(bp, bp[1:], curve.slopes):
        if lo <= x < hi:
            return s
    return curve.slopes[-1]  # x at the upper end of the domain


def pwl_from_quadratic(c: float, a: float, domain_max: float, n_segments: int,
                       curvature: str = "concave-nondecreasing") -> PiecewiseLinearCurve:
    """Secant-slope PWL of c·x − a·x² (concave) or c·x + a·x² (convex) on [0, domain_max].

    Segment slope over [x0, x1] is the secant slope of the quadratic, so the curve
    value is exact at every breakpoint.
    """
    if n_segments < 1:
        raise ValueError("need at least one segment")
    if domain_max <= 0:
        raise ValueError("domain_max must be positive")
    bp = np.linspace(0.0, domain_max, n_segments + 1)
    sign = -1.0 if curvature == "concave-nondecreasing" else 1.0
    quad = lambda x: c * x + sign * a * x * x
    slopes = np.diff([quad(x) for x in bp]) / np.diff(bp)
    if np.any(slopes < -1e-12):
        raise ValueError("quadratic is not nondecreasing on the requested domain")
    return PiecewiseLinearCurve(tuple(bp), tuple(np.maximum(slopes, 0.0)),
                                curvature=curvature)


# ---------------------------------------------------------------------------
# PTDF


def compute_ptdf(topology: NetworkTopology, slack: str) -> np.ndarray:
    """DC power-transfer distribution factors: flow = H @ injection for balanced p.

    Built from line reactances: H = diag(1/x) A B⁻¹ on the non-slack buses, with a
    zero column for the slack bus. Raises on missing reactances or a disconnected
    network.
    """
    buses = topology.buses
    lines = topology.lines
    n, m = len(buses), len(lines)
    if slack not in buses:
        raise ValueError(f"slack bus {slack!r} not declared")
    for ln in lines:
        if ln.reactance is None or ln.reactance <= 0:
            raise ValueError(f"line {ln.from_bus}-{ln.to_bus} needs a positive reactance")
    idx = {b: i for i, b in enumerate(buses)}
    A = np.zeros((m, n))  # incidence, +1 at from bus, -1 at to bus
    for k, ln in enumerate(lines):
        A[k, idx[ln.from_bus]] = 1.0
        A[k, idx[ln.to_bus]] = -1.0
    suscept = np.array([1.0 / ln.reactance for ln in lines])
    B = A.T @ np.diag(suscept) @ A  # bus susceptance matrix
    keep = [i for i in range(n) if i != idx[slack]]
    B_red = B[np.ix_(keep, keep)]
    # a singular reduced matrix means some bus has no path to the slack
    try:
        B_inv = np.linalg.inv(B_red)
    except np.linalg.LinAlgError:
        raise ValueError("network is disconnected") from None
    if np.linalg.cond(B_red) > 1e12:
        raise ValueError("network is disconnected")
    H = np.zeros((m, n))
    H[:, keep] = np.diag(suscept) @ A[:, keep] @ B_inv
    return H


# ---------------------------------------------------------------------------
# validation


def validate_case(case: ScenarioCase) -> list[str]:
    """Collect every invariant violation (empty list means the case is well formed).

    Never raises on syntactically well-formed input: violations are data.
    """
    problems: list[str] = []
    topo = case.topology
    T = case.grid.horizon_length
    if T < 1:
        problems.append("grid: horizon must be at least 1 interval")
    if len(set(topo.buses)) != len(topo.buses):
        problems.append("topology: duplicate bus ids")
    for ln in topo.lines:
        for end in (ln.from_bus, ln.to_bus):
            if end not in topo.buses:
                problems.append(f"line {ln.from_bus}-{ln.to_bus}: unknown bus {end!r}")
        if ln.rating <= 0:
            problems.append(f"line {ln.from_bus}-{ln.to_bus}: rating must be positive")
    if topo.slack is not None and topo.slack not in topo.buses:
        problems.append(f"topology: unknown slack bus {topo.slack!r}")
    if topo.ptdf is not None:
        Hm = np.asarray(topo.ptdf, dtype=float)
        if Hm.shape != (len(topo.lines), len(topo.buses)):
            problems.append(
                f"topology: ptdf shape {Hm.shape} != (lines, buses) "
                f"({len(topo.lines)}, {len(topo.buses)})")
        elif not np.all(np.isfinite(Hm)):
            problems.append("topology: ptdf has non-finite entries")
    if not case.generators:
        problems.append("case: needs at least one generator")
    if not case.demands:
        problems.append("case: needs at least one demand")
    seen_ids: set[str] = set()
    for g in case.generators:
        if g.id in seen_ids:
            problems.append(f"generator {g.id}: duplicate id")
        seen_ids.add(g.id)
        if g.bus not in topo.buses:
            problems.append(f"generator {g.id}: unknown bus {g.bus!r}")
        if g.producer not in case.producers:
            problems.append(f"generator {g.id}: undeclared producer {g.producer!r}")
        if g.technology not in TECHNOLOGIES:
            problems.append(f"generator {g.id}: unknown technology {g.technology!r}")
        if g.capacity < 0:
            problems.append(f"generator {g.id}: capacity must be nonnegative")
        if g.cost_curve.curvature != "convex-nondecreasing":
            problems.append(f"generator {g.id}: cost curve must be convex")
        if np.any(g.pollution_rates() < 0):
            problems.append(f"generator {g.id}: pollution rate must be nonnegative")
        if g.availability is not None:
            if len(g.availability) != T:
                problems.append(f"generator {g.id}: availability needs {T} entries")
            elif any(not (0.0 <= a <= 1.0) for a in g.availability):
                problems.append(f"generator {g.id}: availability outside [0, 1]")
        if g.ramp_limit is not None and not (0.0 < g.ramp_limit <= 1.0):
            problems.append(f"generator {g.id}: ramp limit must lie in (0, 1]")
        if g.investment_cost_rate < 0:
            problems.append(f"generator {g.id}: investment cost rate must be nonnegative")
        if g.investment_cap < 0:
            problems.append(f"generator {g.id}: investment cap must be nonnegative")
    for d in case.demands:
        if d.id in seen_ids:
            problems.append(f"demand {d.id}: duplicate id")
        seen_ids.add(d.id)
        if d.bus not in topo.buses:
            problems.append(f"demand {d.id}: unknown bus {d.bus!r}")
        if len(d.max_consumption) != T:
            problems.append(f"demand {d.id}: max consumption needs {T} entries")
        if any(v < 0 for v in d.max_consumption):
            problems.append(f"demand {d.id}: max consumption must be nonnegative")
        if d.is_quadratic():
            if len(d.utility.c) != T:
                problems.append(f"demand {d.id}: quadratic utility needs {T} intercepts")
        else:
            if len(d.utility) != T:
                problems.append(f"demand {d.id}: needs one utility curve per interval")
            for t, curve in enumerate(d.utility, start=1):
                if curve.curvature != "concave-nondecreasing":
                    problems.append(f"demand {d.id}: utility at t={t} must be concave")
    for bus, curve in case.externality.damage_curves.items():
        if bus not in topo.buses:
            problems.append(f"externality: unknown bus {bus!r}")
        if curve.curvature != "convex-nondecreasing":
            problems.append(f"externality at {bus}: damage curve must be convex")
    if not (case.settings.gamma > 1.0):
        problems.append("settings: big-M factor gamma must exceed 1")
    return problems


def damage_value(case: ScenarioCase, bus: str, pollution: float) -> float:
    """Damage at a bus for a given total pollution (0 when no curve is declared)."""
    curve = case.externality.curve_for(bus)
    if curve is None or pollution <= 0:
        return 0.0
    if pollution > curve.domain_max:
        # extrapolate with the last slope: damages keep their marginal rate
        extra = pollution - curve.domain_max
        return curve_value(curve, curve.domain_max) + curve.slopes[-1] * extra
    return curve_value(curve, pollution)
