"""Backend-neutral convex subproblem representation and solver bridge.

One SCA iteration is captured as a :class:`ConvexSubproblem`: registered
variables, affine constraints, quadratic (second-order-cone) constraints,
geometric-mean hypographs, and exponential epigraphs, with a linear
objective. The builder never names a solver; :func:`solve` canonicalizes to
the standard conic form ``A x + s = b, s in K`` and dispatches to any backend
that supports linear, second-order, and exponential cones (Clarabel and SCS
are wired in). Every "optimal" return is re-checked by an independent
constraint-violation walker.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

RECHECK_TOL = 1e-6

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_NUMERICAL = "numerical-failure"


class ConicError(Exception):
    pass


class BackendUnavailableError(ConicError):
    """Requested solver backend is not importable: configuration error."""


class LinExpr:
    """Sparse affine expression: sum of coef * scalar-variable plus constant."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict | None = None, const: float = 0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def constant(cls, value: float) -> "LinExpr":
        return cls(const=value)

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def __iadd__(self, other):
        if isinstance(other, LinExpr):
            for k, v in other.terms.items():
                self.terms[k] = self.terms.get(k, 0.0) + v
            self.const += other.const
        else:
            self.const += float(other)
        return self

    def __add__(self, other):
        out = self.copy()
        out += other
        return out

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, LinExpr) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        s = float(scalar)
        return LinExpr({k: v * s for k, v in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[k] for k, v in self.terms.items())


class VarRef:
    """Handle to a registered variable block."""

    __slots__ = ("name", "offset", "length")

    def __init__(self, name: str, offset: int, length: int):
        self.name = name
        self.offset = offset
        self.length = length

    def __len__(self):
        return self.length

    def __getitem__(self, i: int) -> LinExpr:
        if not 0 <= i < self.length:
            raise IndexError(f"{self.name}[{i}] out of range")
        return LinExpr({self.offset + i: 1.0})

    def dot(self, coefs) -> LinExpr:
        """Inner product with a dense coefficient vector (zeros dropped)."""
        coefs = np.asarray(coefs, dtype=float)
        if coefs.shape != (self.length,):
            raise ConicError(f"coefficient vector for {self.name} has wrong length")
        return LinExpr({self.offset + i: c for i, c in enumerate(coefs) if c != 0.0})

    def sum(self) -> LinExpr:
        return LinExpr({self.offset + i: 1.0 for i in range(self.length)})


@dataclass
class SolverSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    solve_time_s: float
    backend: str
    max_violation: float | None = None

    def values(self, ref: VarRef) -> np.ndarray:
        if self.x is None:
            raise ConicError("no primal point available")
        return self.x[ref.offset:ref.offset + ref.length].copy()


@dataclass
class SolveOptions:
    backend: str = "clarabel"
    verbose: bool = False
    max_iter: int = 200_000
    eps: float = 1e-9            # SCS accuracy
    clarabel_tol: float = 1e-9   # keeps the independent recheck under 1e-6
    fallback: str | None = None  # second backend tried when the first fails
    recheck: bool = True


class ConvexSubproblem:
    """Container for one convex program; immutable once solved."""

    def __init__(self):
        self.n_vars = 0
        self._vars: list[tuple[str, int, int, float | None, float | None]] = []
        self._by_name: dict[str, VarRef] = {}
        self._affine: list[tuple[LinExpr, str, float]] = []
        self._soc: list[tuple[list[LinExpr], LinExpr, LinExpr]] = []
        self._geomean: list[tuple[LinExpr, LinExpr, LinExpr]] = []
        self._exp: list[tuple[LinExpr, LinExpr]] = []
        self._objective: LinExpr = LinExpr()
        self._sense: str = "max"

    # -- construction ------------------------------------------------------

    def add_variable(self, name: str, length: int = 1, lb=None, ub=None) -> VarRef:
        if name in self._by_name:
            raise ConicError(f"variable {name!r} already registered")
        if length < 0:
            raise ConicError("variable length must be nonnegative")
        ref = VarRef(name, self.n_vars, length)
        self._vars.append((name, self.n_vars, length,
                           None if lb is None else float(lb),
                           None if ub is None else float(ub)))
        self._by_name[name] = ref
        self.n_vars += length
        return ref

    def variable(self, name: str) -> VarRef:
        try:
            return self._by_name[name]
        except KeyError:
            raise ConicError(f"unknown variable {name!r}") from None

    def _validate(self, *exprs: LinExpr):
        for e in exprs:
            if not isinstance(e, LinExpr):
                raise ConicError(f"expected LinExpr, got {type(e).__name__}")
            for k in e.terms:
                if not 0 <= k < self.n_vars:
                    raise ConicError(f"expression references unknown variable index {k}")

    def add_affine(self, expr: LinExpr, sense: str, rhs: float = 0.0):
        """expr <= rhs, expr >= rhs, or expr == rhs."""
        if sense not in ("<=", ">=", "=="):
            raise ConicError(f"bad sense {sense!r}")
        self._validate(expr)
        self._affine.append((expr.copy(), sense, float(rhs)))

    def add_soc_quadratic(self, quad_exprs, bound: LinExpr, bound2: LinExpr | None = None):
        """sum_i quad_i^2 <= bound * bound2 (bound2 defaults to the constant 1)."""
        quad_exprs = [q.copy() for q in quad_exprs]
        if bound2 is None:
            bound2 = LinExpr.constant(1.0)
        self._validate(*quad_exprs, bound, bound2)
        self._soc.append((quad_exprs, bound.copy(), bound2.copy()))

    def add_geomean_hypograph(self, s_expr: LinExpr, u_expr: LinExpr, v_expr: LinExpr):
        """s <= sqrt(u * v) with u, v >= 0."""
        self._validate(s_expr, u_expr, v_expr)
        self._geomean.append((s_expr.copy(), u_expr.copy(), v_expr.copy()))

    def add_exp_epigraph(self, x_expr: LinExpr, z_expr: LinExpr):
        """exp(x) <= z."""
        self._validate(x_expr, z_expr)
        self._exp.append((x_expr.copy(), z_expr.copy()))

    def set_objective(self, expr: LinExpr, sense: str = "max"):
        if sense not in ("max", "min"):
            raise ConicError(f"bad objective sense {sense!r}")
        self._validate(expr)
        self._objective = expr.copy()
        self._sense = sense

    # -- canonical conic form ----------------------------------------------

    def _canonical(self):
        """Rows of A x + s = b with s in (zero x nonneg x soc... x exp...)."""
        rows_a: list[tuple[int, dict]] = []   # (row, terms)
        rows_b: list[float] = []
        n_row = 0

        def emit(expr: LinExpr, b_const: float, sign: float):
            """Append row s = b - A x representing slack = b_const + sign*expr."""
            nonlocal n_row
            rows_a.append((n_row, {k: -sign * v for k, v in expr.terms.items()}))
            rows_b.append(b_const + sign * expr.const)
            n_row += 1

        # zero cone: equalities
        for expr, sense, rhs in self._affine:
            if sense == "==":
                emit(expr, -rhs, 1.0)          # s = expr - rhs = 0
        n_zero = n_row
        # nonneg cone: bounds then inequalities
        for name, off, length, lb, ub in self._vars:
            for i in range(length):
                if lb is not None:
                    emit(LinExpr({off + i: 1.0}), -lb, 1.0)     # x - lb >= 0
                if ub is not None:
                    emit(LinExpr({off + i: 1.0}), ub, -1.0)     # ub - x >= 0
        for expr, sense, rhs in self._affine:
            if sense == "<=":
                emit(expr, rhs, -1.0)          # rhs - expr >= 0
            elif sense == ">=":
                emit(expr, -rhs, 1.0)          # expr - rhs >= 0
        n_nonneg = n_row - n_zero
        # second-order cones (rotated constraints embedded as plain SOC)
        soc_dims = []
        for quad, g, h in self._soc:
            emit(g + h, 0.0, 1.0)
            for q in quad:
                emit(q * 2.0, 0.0, 1.0)
            emit(g - h, 0.0, 1.0)
            soc_dims.append(len(quad) + 2)
        for s_e, u, v in self._geomean:
            emit(u + v, 0.0, 1.0)
            emit(s_e * 2.0, 0.0, 1.0)
            emit(u - v, 0.0, 1.0)
            soc_dims.append(3)
        # exponential cones
        for x_e, z_e in self._exp:
            emit(x_e, 0.0, 1.0)
            emit(LinExpr.constant(1.0), 1.0, 0.0)
            emit(z_e, 0.0, 1.0)
        n_exp = len(self._exp)

        data, idx_i, idx_j = [], [], []
        for r, terms in rows_a:
            for j, v in terms.items():
                if v != 0.0:
                    idx_i.append(r)
                    idx_j.append(j)
                    data.append(v)
        a_mat = sp.csc_matrix((data, (idx_i, idx_j)), shape=(n_row, self.n_vars))
        b_vec = np.asarray(rows_b, dtype=float)
        q_vec = np.zeros(self.n_vars)
        sign = -1.0 if self._sense == "max" else 1.0
        for k, v in self._objective.terms.items():
            q_vec[k] = sign * v
        return a_mat, b_vec, q_vec, n_zero, n_nonneg, soc_dims, n_exp

    # -- independent feasibility check --------------------------------------

    def check_solution(self, x: np.ndarray) -> float:
        """Max scaled violation over every recorded constraint at the point x."""
        worst = 0.0

        def viol(raw: float, scale: float) -> float:
            return max(0.0, raw) / max(1.0, abs(scale))

        for name, off, length, lb, ub in self._vars:
            seg = x[off:off + length]
            if lb is not None and length:
                worst = max(worst, viol(lb - seg.min(), lb))
            if ub is not None and length:
                worst = max(worst, viol(seg.max() - ub, ub))
        for expr, sense, rhs in self._affine:
            v = expr.value(x)
            if sense == "<=":
                worst = max(worst, viol(v - rhs, rhs))
            elif sense == ">=":
                worst = max(worst, viol(rhs - v, rhs))
            else:
                worst = max(worst, viol(abs(v - rhs), rhs))
        for quad, g, h in self._soc:
            gv, hv = g.value(x), h.value(x)
            worst = max(worst, viol(-gv, gv), viol(-hv, hv))
            lhs = sum(q.value(x) ** 2 for q in quad)
            worst = max(worst, viol(lhs - gv * hv, max(abs(lhs), abs(gv * hv))))
        for s_e, u, v_e in self._geomean:
            uv, vv = u.value(x), v_e.value(x)
            worst = max(worst, viol(-uv, uv), viol(-vv, vv))
            sv = s_e.value(x)
            worst = max(worst, viol(sv ** 2 - uv * vv, max(sv ** 2, abs(uv * vv)))
                        if sv > 0 else 0.0)
        for x_e, z_e in self._exp:
            xv, zv = x_e.value(x), z_e.value(x)
            worst = max(worst, viol(np.exp(xv) - zv, max(np.exp(xv), abs(zv))))
        return worst

    def objective_value(self, x: np.ndarray) -> float:
        return self._objective.value(x)

    # -- serialization -------------------------------------------------------

    @staticmethod
    def _expr_out(e: LinExpr):
        return {"t": [[int(k), float(v)] for k, v in sorted(e.terms.items())],
                "c": e.const}

    @staticmethod
    def _expr_in(d) -> LinExpr:
        return LinExpr({int(k): float(v) for k, v in d["t"]}, d["c"])

    def dump_text(self, path: str):
        """Self-describing dump, one variable/constraint per line."""
        with open(path, "w") as fh:
            for name, off, length, lb, ub in self._vars:
                fh.write(json.dumps({"kind": "var", "name": name, "length": length,
                                     "lb": lb, "ub": ub}) + "\n")
            for expr, sense, rhs in self._affine:
                fh.write(json.dumps({"kind": "affine", "sense": sense, "rhs": rhs,
                                     "expr": self._expr_out(expr)}) + "\n")
            for quad, g, h in self._soc:
                fh.write(json.dumps({"kind": "soc", "quad": [self._expr_out(q) for q in quad],
                                     "g": self._expr_out(g), "h": self._expr_out(h)}) + "\n")
            for s_e, u, v in self._geomean:
                fh.write(json.dumps({"kind": "geomean", "s": self._expr_out(s_e),
                                     "u": self._expr_out(u), "v": self._expr_out(v)}) + "\n")
            for x_e, z_e in self._exp:
                fh.write(json.dumps({"kind": "exp", "x": self._expr_out(x_e),
                                     "z": self._expr_out(z_e)}) + "\n")
            fh.write(json.dumps({"kind": "objective", "sense": self._sense,
                                 "expr": self._expr_out(self._objective)}) + "\n")

    @classmethod
    def load_text(cls, path: str) -> "ConvexSubproblem":
        p = cls()
        with open(path) as fh:
            for line in fh:
                d = json.loads(line)
                kind = d["kind"]
                if kind == "var":
                    p.add_variable(d["name"], d["length"], d["lb"], d["ub"])
                elif kind == "affine":
                    p.add_affine(cls._expr_in(d["expr"]), d["sense"], d["rhs"])
                elif kind == "soc":
                    p.add_soc_quadratic([cls._expr_in(q) for q in d["quad"]],
                                        cls._expr_in(d["g"]), cls._expr_in(d["h"]))
                elif kind == "geomean":
                    p.add_geomean_hypograph(cls._expr_in(d["s"]), cls._expr_in(d["u"]),
                                            cls._expr_in(d["v"]))
                elif kind == "exp":
                    p.add_exp_epigraph(cls._expr_in(d["x"]), cls._expr_in(d["z"]))
                elif kind == "objective":
                    p.set_objective(cls._expr_in(d["expr"]), d["sense"])
        return p


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

def _solve_clarabel(prob, a_mat, b_vec, q_vec, n_zero, n_nonneg, soc_dims, n_exp, opts):
    try:
        import clarabel
    except ImportError as exc:
        raise BackendUnavailableError("clarabel not installed") from exc
    cones = []
    if n_zero:
        cones.append(clarabel.ZeroConeT(n_zero))
    if n_nonneg:
        cones.append(clarabel.NonnegativeConeT(n_nonneg))
    cones.extend(clarabel.SecondOrderConeT(d) for d in soc_dims)
    cones.extend(clarabel.ExponentialConeT() for _ in range(n_exp))
    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.max_iter = min(opts.max_iter, 10_000)
    settings.tol_feas = opts.clarabel_tol
    settings.tol_gap_abs = opts.clarabel_tol
    settings.tol_gap_rel = opts.clarabel_tol
    p_mat = sp.csc_matrix((prob.n_vars, prob.n_vars))
    solver = clarabel.DefaultSolver(p_mat, q_vec, a_mat, b_vec, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if status in ("SolverStatus.Solved", "Solved") or "AlmostSolved" in status:
        return STATUS_OPTIMAL, np.asarray(sol.x)
    if "PrimalInfeasible" in status:
        return STATUS_INFEASIBLE, None
    if "DualInfeasible" in status:
        return STATUS_UNBOUNDED, None
    if "InsufficientProgress" in status or "MaxIterations" in status:
        # hand back the last iterate only when it stalled close to optimal
        # (moderate duality gap); the independent recheck still gates it, and
        # callers see the non-optimal status
        gap = abs(sol.obj_val - sol.obj_val_dual) / max(1.0, abs(sol.obj_val))
        if np.isfinite(gap) and gap <= 1e-2:
            return STATUS_NUMERICAL, np.asarray(sol.x)
    return STATUS_NUMERICAL, None


def _solve_scs(prob, a_mat, b_vec, q_vec, n_zero, n_nonneg, soc_dims, n_exp, opts):
    try:
        import scs
    except ImportError as exc:
        raise BackendUnavailableError("scs not installed") from exc
    cone = {}
    if n_zero:
        cone["z"] = n_zero
    if n_nonneg:
        cone["l"] = n_nonneg
    if soc_dims:
        cone["q"] = soc_dims
    if n_exp:
        cone["ep"] = n_exp
    data = {"A": a_mat, "b": b_vec, "c": q_vec}
    solver = scs.SCS(data, cone, verbose=opts.verbose, eps_abs=opts.eps,
                     eps_rel=opts.eps, max_iters=opts.max_iter)
    out = solver.solve()
    status = out["info"]["status"].lower()
    if "solved" in status and "inaccurate" not in status:
        return STATUS_OPTIMAL, np.asarray(out["x"])
    if "infeasible" in status:
        return STATUS_INFEASIBLE, None
    if "unbounded" in status:
        return STATUS_UNBOUNDED, None
    return STATUS_NUMERICAL, None


_BACKENDS = {"clarabel": _solve_clarabel, "scs": _solve_scs}


def solve(prob: ConvexSubproblem, opts: SolveOptions | None = None) -> SolverSolution:
    """Solve a subproblem, then independently re-check the returned point."""
    opts = opts or SolveOptions()
    if opts.backend not in _BACKENDS:
        raise BackendUnavailableError(f"unknown backend {opts.backend!r}")
    t0 = time.perf_counter()
    if prob.n_vars == 0:
        return SolverSolution(STATUS_OPTIMAL, np.zeros(0), prob._objective.const,
                              0.0, opts.backend, 0.0)
    canon = prob._canonical()
    status, x = _BACKENDS[opts.backend](prob, *canon, opts)
    if status == STATUS_NUMERICAL and opts.backend == "clarabel" and opts.clarabel_tol < 1e-8:
        # the tight tolerance can stall on hard geometries; the recheck below
        # still gates whatever the looser pass returns
        relaxed = SolveOptions(**{**opts.__dict__, "clarabel_tol": 1e-8})
        r_status, r_x = _BACKENDS["clarabel"](prob, *canon, relaxed)
        if r_status != STATUS_NUMERICAL or r_x is not None:
            status, x = r_status, r_x
    if (status == STATUS_NUMERICAL and x is None and opts.fallback
            and opts.fallback != opts.backend):
        fb = SolveOptions(**{**opts.__dict__, "backend": opts.fallback,
                             "fallback": None, "eps": max(opts.eps, 1e-7)})
        fb_status, fb_x = _BACKENDS[opts.fallback](prob, *canon, fb)
        if fb_x is not None or fb_status in (STATUS_INFEASIBLE, STATUS_UNBOUNDED):
            status, x = fb_status, fb_x
    elapsed = time.perf_counter() - t0
    if x is None:
        return SolverSolution(status, None, None, elapsed, opts.backend)
    violation = prob.check_solution(x) if opts.recheck else None
    if violation is not None and violation > RECHECK_TOL:
        return SolverSolution(STATUS_NUMERICAL, x, prob.objective_value(x),
                              elapsed, opts.backend, violation)
    return SolverSolution(STATUS_OPTIMAL, x, prob.objective_value(x),
                          elapsed, opts.backend, violation)
