"""Self-contained LP/MILP solving with dual recovery.

The built-in engine is a dense bounded-variable two-phase simplex (Bland's rule,
so runs are deterministic) plus a best-first branch-and-bound for binaries.
``scipy.optimize.linprog`` (HiGHS) can be selected as an alternative LP backend
for large instances; results are reported through the same ``SolveReport`` either
way, including a verified duality gap.

Dual convention: a constraint's dual value is the derivative of the optimal
objective with respect to that constraint's right-hand side, in the problem's own
sense. For a maximization, duals of ``<=`` rows are nonnegative and duals of
``>=`` rows are nonpositive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import heapq
import math

import numpy as np

try:
    from scipy.optimize import linprog as _scipy_linprog
    from scipy import sparse as _scipy_sparse
except ImportError:  # pragma: no cover - scipy is a declared dependency
    _scipy_linprog = None
    _scipy_sparse = None


def scipy_available() -> bool:
    return _scipy_linprog is not None

INF = math.inf

FEASIBILITY_TOL = 1e-7
INTEGRALITY_TOL = 1e-6
GAP_TOL = 1e-6  # relative duality / branch-and-bound gap
_PIVOT_TOL = 1e-9
_RC_TOL = 1e-9


@dataclass
class LinearProgram:
    """max/min c'x subject to linear constraints and variable bounds."""

    sense: str = "max"  # "max" or "min"
    var_ids: list[str] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    con_ids: list[str] = field(default_factory=list)
    con_coefs: list[dict[str, float]] = field(default_factory=list)
    con_relations: list[str] = field(default_factory=list)  # "<=", ">=", "="
    con_rhs: list[float] = field(default_factory=list)

    def add_variable(self, var_id: str, lower: float = 0.0, upper: float = INF,
                     objective: float = 0.0) -> str:
        if var_id in self.objective:
            raise ValueError(f"duplicate variable {var_id!r}")
        self.var_ids.append(var_id)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.objective[var_id] = float(objective)
        return var_id

    def add_constraint(self, con_id: str, coefs: dict[str, float], relation: str,
                       rhs: float) -> str:
        if relation not in ("<=", ">=", "="):
            raise ValueError(f"bad relation {relation!r}")
        for v in coefs:
            if v not in self.objective:
                raise ValueError(f"constraint {con_id!r} references unknown variable {v!r}")
        self.con_ids.append(con_id)
        self.con_coefs.append(dict(coefs))
        self.con_relations.append(relation)
        self.con_rhs.append(float(rhs))
        return con_id

    @property
    def n_vars(self) -> int:
        return len(self.var_ids)

    @property
    def n_cons(self) -> int:
        return len(self.con_ids)

    def dense(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(c, A, rhs, lower, upper) with rows/columns in declaration order."""
        index = {v: j for j, v in enumerate(self.var_ids)}
        c = np.array([self.objective[v] for v in self.var_ids], dtype=float)
        A = np.zeros((self.n_cons, self.n_vars))
        for i, coefs in enumerate(self.con_coefs):
            for v, a in coefs.items():
                A[i, index[v]] = a
        return (c, A, np.array(self.con_rhs, dtype=float),
                np.array(self.lower, dtype=float), np.array(self.upper, dtype=float))


@dataclass
class MixedIntegerProgram(LinearProgram):
    """LinearProgram plus binary flags; binaries must have bounds within [0, 1]."""

    binaries: set[str] = field(default_factory=set)

    def add_binary(self, var_id: str, objective: float = 0.0) -> str:
        self.add_variable(var_id, 0.0, 1.0, objective)
        self.binaries.add(var_id)
        return var_id

    def relaxation(self) -> LinearProgram:
        lp = LinearProgram(sense=self.sense)
        lp.var_ids = list(self.var_ids)
        lp.lower = list(self.lower)
        lp.upper = list(self.upper)
        lp.objective = dict(self.objective)
        lp.con_ids = list(self.con_ids)
        lp.con_coefs = [dict(c) for c in self.con_coefs]
        lp.con_relations = list(self.con_relations)
        lp.con_rhs = list(self.con_rhs)
        return lp


@dataclass
class SolveReport:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float | None = None
    x: dict[str, float] = field(default_factory=dict)
    duals: dict[str, float] | None = None
    reduced_costs: dict[str, float] | None = None
    duality_gap: float | None = None
    feasibility_residual: float | None = None
    iterations: int = 0
    backend: str = "simplex"
    # branch-and-bound extras
    best_bound: float | None = None
    nodes: int = 0
    message: str = ""


# ---------------------------------------------------------------------------
# built-in bounded-variable simplex


class _Simplex:
    """Two-phase primal simplex on max c'x, A x = b, 0 <= x <= u (dense)."""

    def __init__(self, c: np.ndarray, A: np.ndarray, b: np.ndarray, u: np.ndarray):
        self.c = c
        self.A = A
        self.b = b
        self.u = u
        self.m, self.n = A.shape
        self.iterations = 0

    def solve(self, max_iter: int = 200000) -> tuple[str, np.ndarray | None, np.ndarray | None, np.ndarray | None]:
        """Returns (status, x, y, z): primal values, row duals, reduced costs."""
        m, n = self.m, self.n
        A, b, u = self.A, self.b, self.u
        # phase 1: artificials with +1 on rows whose rhs is nonnegative (rows are
        # pre-scaled by the caller so b >= 0)
        art = np.arange(n, n + m)
        A1 = np.hstack([A, np.eye(m)])
        u1 = np.concatenate([u, np.full(m, INF)])
        c1 = np.concatenate([np.zeros(n), -np.ones(m)])
        basis = art.copy()
        at_upper = np.zeros(n + m, dtype=bool)
        status, x1 = self._iterate(c1, A1, b, u1, basis, at_upper, max_iter)
        if status != "optimal":
            return "infeasible", None, None, None
        if float(c1 @ x1) < -1e-6:
            return "infeasible", None, None, None
        # phase 2: freeze artificials at zero (bounds [0,0]) and optimize the
        # real objective; leftover degenerate basic artificials stay harmless
        u1[n:] = 0.0
        x1[n:] = np.minimum(x1[n:], 0.0)
        c2 = np.concatenate([self.c, np.zeros(m)])
        status, x2 = self._iterate(c2, A1, b, u1, basis, at_upper, max_iter,
                                   warm_x=x1)
        if status != "optimal":
            return status, None, None, None
        # duals from the final basis
        Binv = np.linalg.inv(A1[:, basis])
        y = c2[basis] @ Binv
        z = c2 - y @ A1
        return "optimal", x2[:n], y, z[:n]

    def _iterate(self, c, A, b, u, basis, at_upper, max_iter, warm_x=None):
        m, n = A.shape[0], A.shape[1]
        Binv = np.linalg.inv(A[:, basis])
        if warm_x is not None:
            x = warm_x.copy()
        else:
            x = np.zeros(n)
            x[at_upper] = u[at_upper]
            x[basis] = Binv @ (b - A[:, ~self._basic_mask(n, basis)] @ x[~self._basic_mask(n, basis)])
        pivots = 0
        for _ in range(max_iter):
            self.iterations += 1
            y = c[basis] @ Binv
            z = c - y @ A
            basic_mask = self._basic_mask(n, basis)
            # entering: Bland — smallest index with a strictly improving move
            enter = -1
            direction = 0.0
            for j in range(n):
                if basic_mask[j] or u[j] <= 0.0:  # fixed variables never enter
                    continue
                if not at_upper[j] and z[j] > _RC_TOL:
                    enter, direction = j, +1.0
                    break
                if at_upper[j] and z[j] < -_RC_TOL:
                    enter, direction = j, -1.0
                    break
            if enter < 0:
                return "optimal", x
            d = Binv @ A[:, enter]  # basic response per unit of entering move
            # ratio test: basic variables must stay within [0, u_basic]; the
            # entering variable may at most traverse its own bound range
            theta = u[enter] if np.isfinite(u[enter]) else INF
            leave_pos = -1
            for i in range(m):
                delta = direction * d[i]
                if delta > _PIVOT_TOL:  # basic value decreases toward 0
                    ratio = x[basis[i]] / delta
                elif delta < -_PIVOT_TOL and np.isfinite(u[basis[i]]):
                    ratio = (u[basis[i]] - x[basis[i]]) / (-delta)
                else:
                    continue
                if ratio < theta - 1e-12 or (
                        ratio < theta + 1e-12 and
                        (leave_pos < 0 or basis[i] < basis[leave_pos])):
                    theta = max(ratio, 0.0)
                    leave_pos = i
            if not np.isfinite(theta):
                return "unbounded", x
            # apply the move
            x[enter] += direction * theta
            x[basis] -= direction * theta * d
            x[basis] = np.clip(x[basis], 0.0, np.where(np.isfinite(u[basis]), u[basis], INF))
            if leave_pos < 0:
                # bound flip: entering variable crossed to its other bound
                at_upper[enter] = not at_upper[enter]
                continue
            leave = basis[leave_pos]
            # leaving variable settles at the bound it hit
            hit_upper = direction * d[leave_pos] < 0
            at_upper[leave] = bool(hit_upper)
            x[leave] = u[leave] if hit_upper else 0.0
            at_upper[enter] = False
            basis[leave_pos] = enter
            # dense basis-inverse update (product form), with periodic
            # refactorization to bound numerical drift
            pivots += 1
            piv = d[leave_pos]
            if abs(piv) < _PIVOT_TOL or pivots % 128 == 0:
                Binv = np.linalg.inv(A[:, basis])
            else:
                E = np.eye(m)
                E[:, leave_pos] = -d / piv
                E[leave_pos, leave_pos] = 1.0 / piv
                Binv = E @ Binv
        raise RuntimeError("simplex iteration limit exceeded")

    @staticmethod
    def _basic_mask(n, basis):
        mask = np.zeros(n, dtype=bool)
        mask[basis] = True
        return mask


def _standardize(lp: LinearProgram):
    """Rewrite as max c'x', A x' = b (b >= 0), 0 <= x' <= u.

    Finite lower bounds are shifted out; variables with an infinite lower bound
    are split into a difference of two nonnegative parts. Returns the pieces
    needed to map the solution and duals back.
    """
    c, A, b, lo, up = lp.dense()
    if lp.sense == "min":
        c = -c
    n = lp.n_vars
    shift = np.zeros(n)
    split_cols: list[int] = []
    for j in range(n):
        if np.isfinite(lo[j]):
            shift[j] = lo[j]
        else:
            split_cols.append(j)
    b = b - A @ shift
    u = np.where(np.isfinite(up), up - shift, INF)
    const = float(c @ shift)
    if split_cols:
        # x_j = x_j_plus - x_j_minus, both >= 0
        A_extra = -A[:, split_cols]
        c_extra = -c[split_cols]
        A = np.hstack([A, A_extra])
        c = np.concatenate([c, c_extra])
        u = np.concatenate([u, np.full(len(split_cols), INF)])
    # slacks for inequality rows; pre-scale rows so rhs >= 0 for phase 1
    m = lp.n_cons
    row_sign = np.ones(m)
    slack_cols = []
    for i, rel in enumerate(lp.con_relations):
        if rel == "<=":
            slack_cols.append((i, +1.0))
        elif rel == ">=":
            slack_cols.append((i, -1.0))
    if slack_cols:
        S = np.zeros((m, len(slack_cols)))
        for k, (i, sgn) in enumerate(slack_cols):
            S[i, k] = sgn
        A = np.hstack([A, S])
        c = np.concatenate([c, np.zeros(len(slack_cols))])
        u = np.concatenate([u, np.full(len(slack_cols), INF)])
    for i in range(m):
        if b[i] < 0:
            A[i, :] *= -1.0
            b[i] *= -1.0
            row_sign[i] = -1.0
    return c, A, b, u, shift, split_cols, row_sign, const


def _solve_lp_simplex(lp: LinearProgram) -> SolveReport:
    if lp.n_vars == 0:
        return SolveReport(status="optimal", objective=0.0, x={}, duals={}, backend="simplex",
                           duality_gap=0.0, feasibility_residual=0.0)
    c, A, b, u, shift, split_cols, row_sign, const = _standardize(lp)
    engine = _Simplex(c, A, b, u)
    status, xs, y, z = engine.solve()
    if status != "optimal":
        return SolveReport(status=status, backend="simplex", iterations=engine.iterations)
    n = lp.n_vars
    x = xs[:n].copy()
    for k, j in enumerate(split_cols):
        x[j] -= xs[n + k]
    x = x + shift
    # duals back to the original rows and sense
    y_orig = y * row_sign
    if lp.sense == "min":
        y_orig = -y_orig
    # objective and duality gap (on the internal max form)
    obj_internal = float(c @ xs) + const
    # dual objective: y'b + sum over finite-upper nonbasic-at-upper reduced costs;
    # computed generically as y'b + sum_j max(z_j, 0) * u_j over finite u
    zfull = c - y @ A
    finite_u = np.isfinite(u)
    dual_internal = float(y @ b) + float(np.sum(np.maximum(zfull[finite_u], 0.0) * u[finite_u])) + const
    gap = abs(obj_internal - dual_internal) / (1.0 + abs(obj_internal))
    objective = obj_internal if lp.sense == "max" else -obj_internal
    # feasibility residual on the original rows
    c0, A0, b0, lo0, up0 = lp.dense()
    resid = 0.0
    Ax = A0 @ x
    for i, rel in enumerate(lp.con_relations):
        if rel == "<=":
            resid = max(resid, Ax[i] - b0[i])
        elif rel == ">=":
            resid = max(resid, b0[i] - Ax[i])
        else:
            resid = max(resid, abs(Ax[i] - b0[i]))
    resid = max(resid, float(np.max(lo0 - x, initial=0.0)),
                float(np.max((x - up0)[np.isfinite(up0)], initial=0.0)))
    rc = z[:n] if lp.sense == "max" else -z[:n]
    return SolveReport(
        status="optimal", objective=objective,
        x={v: float(val) for v, val in zip(lp.var_ids, x)},
        duals={cid: float(val) for cid, val in zip(lp.con_ids, y_orig)},
        reduced_costs={v: float(val) for v, val in zip(lp.var_ids, rc)},
        duality_gap=float(gap), feasibility_residual=float(resid),
        iterations=engine.iterations, backend="simplex")


# ---------------------------------------------------------------------------
# scipy backend


def _solve_lp_scipy(lp: LinearProgram) -> SolveReport:
    if _scipy_linprog is None:
        raise RuntimeError("scipy backend requested but scipy is not installed")
    # assemble sparse: market LPs stacked over a horizon are block-diagonal and
    # a dense copy would dominate both memory and solve time; network LPs carry
    # dense PTDF rows, so the triplet arrays are built without a Python-level
    # append per nonzero
    index = {v: j for j, v in enumerate(lp.var_ids)}
    nnz = sum(len(coefs) for coefs in lp.con_coefs)
    rows = np.repeat(np.arange(lp.n_cons), [len(coefs) for coefs in lp.con_coefs])
    cols = np.fromiter((index[v] for coefs in lp.con_coefs for v in coefs),
                       dtype=np.int64, count=nnz)
    data = np.fromiter((a for coefs in lp.con_coefs for a in coefs.values()),
                       dtype=np.float64, count=nnz)
    A = _scipy_sparse.csr_matrix((data, (rows, cols)),
                                 shape=(lp.n_cons, lp.n_vars))
    c = np.array([lp.objective[v] for v in lp.var_ids], dtype=float)
    b = np.array(lp.con_rhs, dtype=float)
    lo = np.array(lp.lower, dtype=float)
    up = np.array(lp.upper, dtype=float)
    sign = -1.0 if lp.sense == "max" else 1.0  # linprog minimizes
    ub_rows = [i for i, r in enumerate(lp.con_relations) if r == "<="]
    ge_rows = [i for i, r in enumerate(lp.con_relations) if r == ">="]
    eq_rows = [i for i, r in enumerate(lp.con_relations) if r == "="]
    blocks = []
    if ub_rows:
        blocks.append(A[ub_rows])
    if ge_rows:
        blocks.append(-A[ge_rows])
    A_ub = _scipy_sparse.vstack(blocks, format="csr") if blocks else None
    b_ub = np.concatenate([b[ub_rows], -b[ge_rows]]) if (ub_rows or ge_rows) else None
    A_eq = A[eq_rows] if eq_rows else None
    b_eq = b[eq_rows] if eq_rows else None
    bounds = [(l if np.isfinite(l) else None, v if np.isfinite(v) else None)
              for l, v in zip(lo, up)]
    res = _scipy_linprog(sign * c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                         bounds=bounds, method="highs",
                         # measured ~2x slower with presolve across the sizes
                         # produced here (dense PTDF rows give it little to do)
                         options={"presolve": False})
    if res.status == 2:
        return SolveReport(status="infeasible", backend="scipy")
    if res.status == 3:
        return SolveReport(status="unbounded", backend="scipy")
    if not res.success:  # pragma: no cover - defensive
        return SolveReport(status="infeasible", backend="scipy", message=res.message)
    x = res.x
    objective = float(c @ x)
    # linprog marginals are d(min sign*c'x)/d(rhs as passed); our convention is
    # d(obj in the problem's own sense)/d(declared rhs), so scale by `sign` and
    # flip once more for ">=" rows (passed negated)
    duals = np.zeros(lp.n_cons)
    if A_ub is not None:
        mu = res.ineqlin.marginals
        for k, i in enumerate(ub_rows):
            duals[i] = sign * mu[k]
        off = len(ub_rows)
        for k, i in enumerate(ge_rows):
            duals[i] = -sign * mu[off + k]
    if A_eq is not None:
        lam = res.eqlin.marginals
        for k, i in enumerate(eq_rows):
            duals[i] = sign * lam[k]
    # duality gap from reduced costs: z = c - y'A, with bound multipliers picking
    # up the slack at finite bounds (max: upper bounds absorb z>0, lower z<0)
    zred = c - A.T.dot(duals)
    dual_obj = float(duals @ b)
    fin_up = np.isfinite(up)
    fin_lo = np.isfinite(lo)
    if lp.sense == "max":
        dual_obj += float(np.sum(np.maximum(zred[fin_up], 0.0) * up[fin_up]))
        dual_obj += float(np.sum(np.minimum(zred[fin_lo], 0.0) * lo[fin_lo]))
    else:
        dual_obj += float(np.sum(np.minimum(zred[fin_up], 0.0) * up[fin_up]))
        dual_obj += float(np.sum(np.maximum(zred[fin_lo], 0.0) * lo[fin_lo]))
    gap = abs(objective - dual_obj) / (1.0 + abs(objective))
    Ax = A @ x
    viol = Ax - b
    rel_arr = np.array(lp.con_relations)
    resid = 0.0
    if ub_rows:
        resid = max(resid, float(np.max(viol[rel_arr == "<="])))
    if ge_rows:
        resid = max(resid, float(np.max(-viol[rel_arr == ">="])))
    if eq_rows:
        resid = max(resid, float(np.max(np.abs(viol[rel_arr == "="]))))
    return SolveReport(
        status="optimal", objective=objective,
        x={v: float(val) for v, val in zip(lp.var_ids, x)},
        duals={cid: float(val) for cid, val in zip(lp.con_ids, duals)},
        reduced_costs={v: float(val) for v, val in zip(lp.var_ids, zred)},
        duality_gap=float(gap), feasibility_residual=float(max(resid, 0.0)),
        iterations=int(res.nit), backend="scipy")


_AUTO_SIZE_LIMIT = 260  # rows beyond which auto prefers the scipy backend

# callables fed every report solve_lp returns (branch-and-bound node LPs
# included); tests hook in here to audit duality gaps across whole runs
solve_observers: list = []


def solve_lp(lp: LinearProgram, backend: str = "auto") -> SolveReport:
    """Solve an LP with duals. ``backend``: "simplex", "scipy" or "auto"."""
    if backend == "simplex":
        report = _solve_lp_simplex(lp)
    elif backend == "scipy":
        report = _solve_lp_scipy(lp)
    elif backend == "auto":
        big = lp.n_cons > _AUTO_SIZE_LIMIT or lp.n_vars > 4 * _AUTO_SIZE_LIMIT
        if big and _scipy_linprog is not None:
            report = _solve_lp_scipy(lp)
        else:
            report = _solve_lp_simplex(lp)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    for observer in solve_observers:
        observer(report)
    return report


# ---------------------------------------------------------------------------
# branch and bound


def solve_milp(mip: MixedIntegerProgram, backend: str = "auto",
               max_nodes: int = 200000) -> SolveReport:
    """Best-first branch and bound over the binary variables (exact at desk scale).

    Nodes are explored in order of their LP relaxation bound, so the first
    integral node whose bound meets the remaining tree bound is provably optimal
    within the absolute/relative gap tolerance.
    """
    sense = 1.0 if mip.sense == "max" else -1.0
    binaries = sorted(mip.binaries, key=mip.var_ids.index)
    if backend == "auto" and _scipy_linprog is not None and len(binaries) > 24:
        # node relaxations dominate runtime; hand bigger trees to the fast backend
        backend = "scipy"

    def relax_with(fixes: dict[str, float]) -> LinearProgram:
        lp = mip.relaxation()
        for v, val in fixes.items():
            j = lp.var_ids.index(v)
            lp.lower[j] = val
            lp.upper[j] = val
        return lp

    root = solve_lp(relax_with({}), backend=backend)
    nodes_seen = 1
    if root.status != "optimal":
        return SolveReport(status=root.status, backend=root.backend, nodes=nodes_seen)
    best: SolveReport | None = None
    counter = 0
    # heap keyed on -sense*bound so the most promising node pops first; among
    # equal bounds prefer the deepest node (dive to an incumbent instead of
    # sweeping a flat-bound frontier breadth-first)
    heap: list[tuple[float, int, int, dict[str, float], SolveReport]] = []
    heapq.heappush(heap, (-sense * root.objective, 0, counter, {}, root))
    while heap:
        neg_bound, _, _, fixes, rep = heapq.heappop(heap)
        bound = -neg_bound * sense
        if best is not None:
            if sense * bound <= sense * best.objective + max(GAP_TOL, GAP_TOL * abs(best.objective)):
                break  # best-first: remaining tree cannot improve
        frac_var = None
        for v in binaries:
            val = rep.x[v]
            if min(val, 1.0 - val) > INTEGRALITY_TOL and v not in fixes:
                frac_var = v
                break
        if frac_var is None:
            if best is None or sense * rep.objective > sense * best.objective + 1e-12:
                best = rep
            continue
        for val in (0.0, 1.0):
            child_fixes = dict(fixes)
            child_fixes[frac_var] = val
            child = solve_lp(relax_with(child_fixes), backend=backend)
            nodes_seen += 1
            if nodes_seen > max_nodes:
                raise RuntimeError("branch-and-bound node limit exceeded")
            if child.status != "optimal":
                continue
            if best is not None and sense * child.objective <= sense * best.objective + 1e-12:
                continue
            counter += 1
            heapq.heappush(heap, (-sense * child.objective, -len(child_fixes),
                                  counter, child_fixes, child))
    if best is None:
        return SolveReport(status="infeasible", backend=root.backend, nodes=nodes_seen)
    remaining = max((-h[0] * sense for h in heap), default=best.objective)
    best_bound = remaining if sense * remaining > sense * best.objective else best.objective
    out = SolveReport(status="optimal", objective=best.objective,
                      x=dict(best.x), duals=None, backend=best.backend,
                      feasibility_residual=best.feasibility_residual,
                      best_bound=float(best_bound), nodes=nodes_seen)
    # snap binaries
    for v in binaries:
        out.x[v] = round(out.x[v])
    return out


def fix_and_price(mip: MixedIntegerProgram, report: SolveReport,
                  backend: str = "auto") -> SolveReport:
    """Fix the binaries at their solved values and re-solve the LP for duals."""
    if report.status != "optimal":
        raise ValueError("fix_and_price needs an optimal MILP report")
    lp = mip.relaxation()
    for v in mip.binaries:
        val = round(report.x[v])
        j = lp.var_ids.index(v)
        lp.lower[j] = val
        lp.upper[j] = val
    fixed = solve_lp(lp, backend=backend)
    if fixed.status != "optimal":
        fixed.message = ("restricted LP infeasible after fixing binaries; "
                         "tolerance inconsistency between MILP and LP solves")
    return fixed


# ---------------------------------------------------------------------------
# plain-text export (CPLEX LP interchange format)


def to_lp_text(lp: LinearProgram) -> str:
    """Render the problem in CPLEX LP format for cross-checking with other solvers."""

    def term(coef: float, var: str) -> str:
        return f"{'+' if coef >= 0 else '-'} {abs(coef):.12g} {var}"

    lines = ["Maximize" if lp.sense == "max" else "Minimize"]
    obj_terms = " ".join(term(lp.objective[v], v) for v in lp.var_ids
                         if lp.objective[v] != 0.0) or "0 " + (lp.var_ids[0] if lp.var_ids else "x")
    lines.append(f" obj: {obj_terms}")
    lines.append("Subject To")
    rel_map = {"<=": "<=", ">=": ">=", "=": "="}
    for cid, coefs, rel, rhs in zip(lp.con_ids, lp.con_coefs, lp.con_relations, lp.con_rhs):
        body = " ".join(term(a, v) for v, a in coefs.items() if a != 0.0) or "0 " + lp.var_ids[0]
        lines.append(f" {cid}: {body} {rel_map[rel]} {rhs:.12g}")
    lines.append("Bounds")
    for v, lo, up in zip(lp.var_ids, lp.lower, lp.upper):
        lo_s = "-inf" if not np.isfinite(lo) else f"{lo:.12g}"
        up_s = "+inf" if not np.isfinite(up) else f"{up:.12g}"
        lines.append(f" {lo_s} <= {v} <= {up_s}")
    binaries = getattr(lp, "binaries", None)
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(sorted(binaries, key=lp.var_ids.index)))
    lines.append("End")
    return "\n".join(lines) + "\n"
