"""Baseline schemes and the tiny-instance exhaustive mode-search oracle.

B1: random AP modes, equal power split, closed-form evaluation only.
B2: random AP modes, power control through the same SCA machinery.
B3: orthogonal access; every AP serves both phases over split time, with the
    information side solved by SCA and the energy side a feasibility program.
The exhaustive search enumerates every admissible binary mode vector on small
instances and power-controls each one; it upper-bounds what the relaxed SCA
can achieve and anchors the optimality-gap acceptance test.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import metrics
from .conic import ConvexSubproblem, LinExpr, SolveOptions, solve
from .metrics import EhParams, ModeAndPower
from .network import ChannelStats, SystemParams
from .sca import PROBLEM_KINDS, ScaOptions, ScaResult, run_sca

_TINY = 1e-12


def random_mode_vector(params: SystemParams, seed: int) -> np.ndarray:
    """Fair-coin AP modes; degenerate draws that starve one user class are
    redrawn."""
    rng = np.random.default_rng(seed)
    while True:
        a = rng.integers(0, 2, size=params.M).astype(float)
        if params.K_d and a.sum() == 0:
            continue
        if params.L and a.sum() == params.M:
            continue
        return a


def _closed_form_record(kind: str, mp: ModeAndPower, stats: ChannelStats,
                        params: SystemParams, s_min: float, gamma_w,
                        iterations: int = 0, status: str = "closed-form",
                        elapsed: float = 0.0) -> ScaResult:
    """Evaluate a fixed operating point and certify it against the targets."""
    eh = EhParams.from_params(params)
    out = metrics.evaluate(mp, stats, params)
    gamma_w = np.broadcast_to(np.asarray(gamma_w, dtype=float), (params.L,))
    feasible = True
    if params.K_d and s_min > 0:
        feasible &= bool(np.all(out.se >= s_min - 1e-6))
    if params.L and kind != "maxmin_he":
        req = np.array([metrics.required_input_energy(g, eh) for g in gamma_w])
        feasible &= bool(np.all(out.q_energy >= req * (1.0 - 1e-6)))
    return ScaResult(
        kind=kind, a=mp.a.copy(), eta_iu=mp.eta_iu.copy(), eta_eu=mp.eta_eu.copy(),
        se=out.se, q_energy=out.q_energy, he_nonlinear=np.asarray(out.he_nonlinear),
        sum_se=float(out.se.sum()) if feasible else 0.0,
        ee=out.ee_bit_per_joule if feasible else 0.0,
        p_total_w=out.p_total_w, feasible=feasible, status=status,
        obj_trace=[], iterations=iterations, solve_time_s=elapsed,
        binary_residual=0.0, monotone=True,
    )


def b1_random_equal(stats: ChannelStats, params: SystemParams, seed: int,
                    s_min: float = 0.0, gamma_w=0.0) -> ScaResult:
    """Benchmark 1: random modes, full power, equal per-user split."""
    t0 = time.perf_counter()
    a = random_mode_vector(params, seed)
    eta_iu = np.tile(a[:, None] / max(params.K_d, 1), (1, params.K_d))
    eta_eu = np.tile((1.0 - a)[:, None] / max(params.L, 1), (1, params.L))
    mp = ModeAndPower(a=a, eta_iu=eta_iu, eta_eu=eta_eu)
    return _closed_form_record("sum_se", mp, stats, params, s_min, gamma_w,
                               elapsed=time.perf_counter() - t0)


def b2_random_power_control(stats: ChannelStats, params: SystemParams, objective: str,
                            seed: int, s_min: float = 0.0, gamma_w=0.0,
                            options: ScaOptions | None = None) -> ScaResult:
    """Benchmark 2: random modes frozen, powers optimized by the same SCA."""
    a = random_mode_vector(params, seed)
    return run_sca(objective, stats, params, s_min, gamma_w, options, a_fixed=a)


def exhaustive_mode_search(stats: ChannelStats, params: SystemParams, objective: str,
                           s_min: float = 0.0, gamma_w=0.0,
                           options: ScaOptions | None = None) -> ScaResult:
    """Global reference: enumerate every admissible binary mode vector.

    Hard-capped at M <= 10 (2^M power-control solves). Returns the best
    feasible record, or an infeasible-as-zero record if none qualifies.
    """
    if params.M > 10:
        raise ValueError("exhaustive search capped at M <= 10")
    if objective not in PROBLEM_KINDS:
        raise ValueError(f"unknown objective {objective!r}")
    best = None
    for code in range(2 ** params.M):
        a = np.array([(code >> m) & 1 for m in range(params.M)], dtype=float)
        if params.K_d and a.sum() == 0:
            continue
        if params.L and a.sum() == params.M:
            continue
        res = run_sca(objective, stats, params, s_min, gamma_w, options, a_fixed=a)
        if not res.feasible:
            continue
        if best is None or res.objective_metric() > best.objective_metric():
            best = res
    if best is None:
        from .sca import _infeasible_result
        return _infeasible_result(objective, stats, params, options or ScaOptions(),
                                  time.perf_counter())
    return best


# ---------------------------------------------------------------------------
# Benchmark 3: orthogonal multiple access
# ---------------------------------------------------------------------------

@dataclass
class _B3Data:
    stats: ChannelStats
    params: SystemParams
    eh: EhParams
    s_min: float
    gamma_w: np.ndarray
    q_target: np.ndarray     # required Q^S3 normalized by half-block scale
    t_min: float             # 2^(2 s_min / prelog) - 1
    sqrt_gamma: np.ndarray
    c_own3: np.ndarray       # rho * ((N+1) gamma_eu + nu_eu)
    c_cross3: np.ndarray     # rho * beta_eu
    nu_t: np.ndarray         # rho * nu_iu


def _b3_prepare(stats, params, s_min, gamma_w) -> _B3Data:
    eh = EhParams.from_params(params)
    gamma_w = np.broadcast_to(np.asarray(gamma_w, dtype=float), (params.L,)).copy() \
        if params.L else np.zeros(0)
    scale = 0.5 * (params.tau_c - params.tau) * stats.sigma2_w
    q_target = np.array([metrics.required_input_energy(g, eh) / scale for g in gamma_w])
    return _B3Data(
        stats=stats, params=params, eh=eh, s_min=float(s_min), gamma_w=gamma_w,
        q_target=q_target,
        t_min=2.0 ** (2.0 * float(s_min) / params.prelog) - 1.0 if s_min > 0 else 0.0,
        sqrt_gamma=np.sqrt(stats.gamma_iu),
        c_own3=stats.rho * ((params.N + 1) * stats.gamma_eu + stats.nu_eu),
        c_cross3=stats.rho * stats.beta_eu,
        nu_t=stats.rho * stats.nu_iu,
    )


class _B3Blocks:
    def __init__(self, prob, data: _B3Data, with_i: bool, with_e: bool, with_s: bool):
        p = data.params
        self.prob, self.data = prob, data
        self.ei = prob.add_variable("eta_iu", p.M * p.K_d, lb=0.0) if with_i else None
        self.ee = prob.add_variable("eta_eu", p.M * p.L, lb=0.0) if with_e else None
        self.s_ref = prob.add_variable("s", p.M * p.K_d, lb=0.0) if with_s else None
        if with_i:
            for m in range(p.M):
                self.prob.add_affine(self.ei_tot(m), "<=", 1.0)
        if with_e and p.L:
            for m in range(p.M):
                self.prob.add_affine(self.ee_tot(m), "<=", 1.0)
        if with_s:
            for m in range(p.M):
                for k in range(p.K_d):
                    prob.add_geomean_hypograph(self.s_at(m, k), LinExpr.constant(1.0),
                                               self.ei_at(m, k))

    def ei_at(self, m, k):
        return self.ei[m * self.data.params.K_d + k]

    def ei_tot(self, m):
        k_d = self.data.params.K_d
        return LinExpr({self.ei.offset + m * k_d + k: 1.0 for k in range(k_d)})

    def ee_at(self, m, l):
        return self.ee[m * self.data.params.L + l]

    def ee_tot(self, m):
        l_eu = self.data.params.L
        return LinExpr({self.ee.offset + m * l_eu + j: 1.0 for j in range(l_eu)})

    def q_expr(self, l) -> LinExpr:
        """Normalized Q^S3: rho * sum_m [own coeff * eta_ml + cross] + 1."""
        d = self.data
        expr = LinExpr.constant(1.0)
        for m in range(d.params.M):
            expr += self.ee_at(m, l) * (d.c_own3[m, l] - d.c_cross3[m, l])
            expr += self.ee_tot(m) * d.c_cross3[m, l]
        return expr

    def interference_expr(self, k) -> LinExpr:
        d = self.data
        expr = LinExpr.constant(1.0)
        for m in range(d.params.M):
            expr += self.ei_tot(m) * d.nu_t[m, k]
        return expr

    def gain_over_t(self, k, t_expr, eta0, t0):
        """rho (N-K_d) * surrogate of (sum sqrt(gamma eta))^2 / t; returns
        (expression, value at the linearization point)."""
        d = self.data
        p0 = float(np.sum(d.sqrt_gamma[:, k] * np.sqrt(np.maximum(eta0[:, k], 0.0))))
        t0 = max(float(t0), _TINY)
        q0 = p0 / t0
        coef = d.stats.rho * (d.params.N - d.params.K_d)
        expr = t_expr * (-coef * q0 * q0)
        for m in range(d.params.M):
            expr += self.s_at(m, k) * (2.0 * coef * q0 * d.sqrt_gamma[m, k])
        return expr, coef * p0 * p0 / t0

    def gain_fixed_target(self, k, eta0):
        """Linearized coherent gain against the fixed SINR floor; returns
        (expression, value at the linearization point)."""
        d = self.data
        p0 = float(np.sum(d.sqrt_gamma[:, k] * np.sqrt(np.maximum(eta0[:, k], 0.0))))
        coef = d.stats.rho * (d.params.N - d.params.K_d) / d.t_min
        expr = LinExpr.constant(-coef * p0 * p0)
        for m in range(d.params.M):
            expr += self.s_at(m, k) * (2.0 * coef * p0 * d.sqrt_gamma[m, k])
        return expr, coef * p0 * p0

    def s_at(self, m, k):
        return self.s_ref[m * self.data.params.K_d + k]


def _b3_xi_epigraph(prob, data: _B3Data, x_expr, x0, tau_expr):
    from .sca import _exp_epigraph_at
    eh = data.eh
    scale = 0.5 * (data.params.tau_c - data.params.tau) * data.stats.sigma2_w
    w = x_expr * (1.0 / x0) + tau_expr * (-eh.xi * scale)
    w += LinExpr.constant(eh.xi * eh.chi + math.log(x0 / eh.phi) - 1.0)
    _exp_epigraph_at(prob, w, LinExpr.constant(1.0) - x_expr * (1.0 / eh.phi),
                     1.0 - x0 / eh.phi)


def _b3_energy_power(data: _B3Data, backend: str):
    """P7-1b style feasibility for the energy phase; returns eta_eu or None."""
    p = data.params
    if p.L == 0:
        return np.zeros((p.M, 0))
    prob = ConvexSubproblem()
    bl = _B3Blocks(prob, data, with_i=False, with_e=True, with_s=False)
    for l in range(p.L):
        prob.add_affine(bl.q_expr(l), ">=", data.q_target[l])
    prob.set_objective(LinExpr.constant(0.0), "max")
    sol = solve(prob, SolveOptions(backend=backend, fallback="scs"))
    if sol.status != "optimal":
        return None
    return np.maximum(sol.values(bl.ee).reshape(p.M, p.L), 0.0)


def _b3_zero(kind, params, t_start) -> ScaResult:
    return ScaResult(
        kind=kind, a=np.ones(params.M), eta_iu=np.zeros((params.M, params.K_d)),
        eta_eu=np.zeros((params.M, params.L)), se=np.zeros(params.K_d),
        q_energy=np.zeros(params.L), he_nonlinear=np.zeros(params.L),
        sum_se=0.0, ee=0.0, p_total_w=0.0, feasible=False, status="infeasible",
        obj_trace=[], iterations=0, solve_time_s=time.perf_counter() - t_start,
        binary_residual=0.0, monotone=True,
    )


def _b3_finish(kind, data: _B3Data, eta_iu, eta_eu, status, trace, iterations,
               t_start, monotone=True) -> ScaResult:
    p = data.params
    se, q, ee = metrics.benchmark3_metrics(eta_iu, eta_eu, data.stats, p)
    eh = data.eh
    he = np.asarray(metrics.nonlinear_he(q, eh)) if p.L else np.zeros(0)
    feasible = status in ("converged", "max-iter")
    if p.K_d and data.s_min > 0:
        feasible &= bool(np.all(se >= data.s_min - 1e-6))
    if p.L and kind != "maxmin_he":
        scale = 0.5 * (p.tau_c - p.tau) * data.stats.sigma2_w
        feasible &= bool(np.all(q >= data.q_target * scale * (1.0 - 1e-6)))
    tx = (p.rho_tilde_w / p.pa_efficiency) * eta_iu.sum()
    p_total = (tx + p.M * p.p_fixed_ap_w + p.K_d * p.p_user_circuit_w
               + p.bandwidth_hz * p.p_traffic_w_per_bps * float(se.sum()) * p.M)
    return ScaResult(
        kind=kind, a=np.ones(p.M), eta_iu=eta_iu, eta_eu=eta_eu, se=se,
        q_energy=q, he_nonlinear=he,
        sum_se=float(se.sum()) if feasible else 0.0,
        ee=ee if feasible else 0.0, p_total_w=p_total,
        feasible=feasible, status=status, obj_trace=trace, iterations=iterations,
        solve_time_s=time.perf_counter() - t_start, binary_residual=0.0,
        monotone=monotone,
    )


def b3_orthogonal(stats: ChannelStats, params: SystemParams, objective: str,
                  s_min: float = 0.0, gamma_w=0.0,
                  options: ScaOptions | None = None) -> ScaResult:
    """Benchmark 3 for any of the four objectives."""
    if objective not in PROBLEM_KINDS:
        raise ValueError(f"unknown objective {objective!r}")
    options = options or ScaOptions()
    t_start = time.perf_counter()
    try:
        data = _b3_prepare(stats, params, s_min, gamma_w)
    except metrics.EhDomainError:
        return _b3_zero(objective, params, t_start)
    p = params
    eta_i0 = np.full((p.M, p.K_d), 0.9 / max(p.K_d, 1))
    if objective == "sum_se":
        eta_eu = _b3_energy_power(data, options.backend)
        if eta_eu is None:
            return _b3_zero(objective, p, t_start)
        return _b3_sum_se(data, eta_i0, eta_eu, options, t_start)
    if objective == "ee":
        return _b3_ee(data, eta_i0, options, t_start)
    return _b3_he(objective, data, eta_i0, options, t_start)


def _b3_iterate(step, state0, tol, max_iter, maximize, backend):
    """Generic SCA loop for the orthogonal-access subproblems."""
    state = state0
    prev = None
    best = None
    stall = 0
    trace = []
    monotone = True
    for it in range(max_iter):
        built = step(state)
        prob, extract = built[0], built[1]
        obj_scale = built[2] if len(built) > 2 else 1.0
        sol = solve(prob, SolveOptions(backend=backend, fallback="scs"))
        usable = sol.status == "optimal" or (
            sol.x is not None and sol.max_violation is not None
            and sol.max_violation <= 1e-4)
        if not usable:
            return (state, trace, "infeasible" if it == 0 else "max-iter",
                    it, monotone)
        state = extract(sol)
        obj = sol.objective * obj_scale
        trace.append(obj)
        if prev is not None:
            worsened = (prev - obj) if maximize else (obj - prev)
            if worsened > 1e-7 * max(1.0, abs(prev)):
                monotone = False
            improved = (obj - best) if maximize else (best - obj)
            if improved > tol * max(abs(best), _TINY):
                best = obj
                stall = 0
            else:
                stall += 1
            if abs(obj - prev) <= tol * max(abs(prev), _TINY) or stall >= 8:
                return state, trace, "converged", it + 1, monotone
        else:
            best = obj
        prev = obj
    return state, trace, "max-iter", max_iter, monotone


def _b3_sum_se(data: _B3Data, eta_i0, eta_eu, options, t_start) -> ScaResult:
    p = data.params
    mp0 = metrics.sinr_orthogonal(eta_i0, data.stats, p)
    state0 = {"eta": eta_i0, "t": np.maximum(mp0, _TINY)}

    def step(state):
        prob = ConvexSubproblem()
        bl = _B3Blocks(prob, data, with_i=True, with_e=False, with_s=True)
        t_sc = np.maximum(np.maximum(np.asarray(state["t"], dtype=float), data.t_min), 1.0)
        t_ref = prob.add_variable("t", p.K_d, lb=0.0)
        t_exprs = [t_ref[k] * t_sc[k] for k in range(p.K_d)]
        if data.t_min > 0:
            for k in range(p.K_d):
                prob.add_affine(t_ref[k], ">=", data.t_min / t_sc[k])
        for k in range(p.K_d):
            gain, level = bl.gain_over_t(k, t_exprs[k], state["eta"], state["t"][k])
            prob.add_affine((gain - bl.interference_expr(k)) * (1.0 / max(1.0, level)),
                            ">=", 0.0)
        from .sca import _geomean_tower
        norms = 1.0 + np.maximum(np.asarray(state["t"], dtype=float), _TINY)
        obj_scale = float(np.exp(np.mean(np.log(norms))))
        obj = _geomean_tower(prob, [LinExpr.constant(1.0) + t_exprs[k]
                                    for k in range(p.K_d)], "obj", norms=norms)
        prob.set_objective(obj, "max")

        def extract(sol):
            return {"eta": np.maximum(sol.values(bl.ei).reshape(p.M, p.K_d), 0.0),
                    "t": np.maximum(sol.values(t_ref) * t_sc, _TINY)}
        return prob, extract, obj_scale

    state, trace, status, its, mono = _b3_iterate(
        step, state0, options.tol, options.max_iter, True, options.backend)
    if status == "infeasible":
        return _b3_zero("sum_se", p, t_start)
    return _b3_finish("sum_se", data, state["eta"], eta_eu, status, trace, its,
                      t_start, mono)


def _b3_ee(data: _B3Data, eta_i0, options, t_start) -> ScaResult:
    p = data.params
    sinr0 = metrics.sinr_orthogonal(eta_i0, data.stats, p)
    se0 = 0.5 * metrics.se_per_iu(sinr0, p.tau, p.tau_c)
    state0 = {"eta": eta_i0, "t": np.maximum(sinr0, _TINY),
              "v": np.maximum(se0, max(data.s_min, _TINY))}
    tx_coef = p.rho_tilde_w / p.pa_efficiency
    k_s3 = p.M * p.p_fixed_ap_w + p.K_d * p.p_user_circuit_w
    kappa = 2.0 * math.log(2.0) / p.prelog

    def step(state):
        prob = ConvexSubproblem()
        bl = _B3Blocks(prob, data, with_i=True, with_e=p.L > 0, with_s=True)
        t_ref = prob.add_variable("t", p.K_d, lb=0.0)
        v_ref = prob.add_variable("v", p.K_d, lb=max(data.s_min, _TINY))
        theta = prob.add_variable("theta", 1)
        from .sca import _exp_epigraph_at
        t_sc = np.maximum(np.asarray(state["t"], dtype=float), 1.0)
        t_exprs = [t_ref[k] * t_sc[k] for k in range(p.K_d)]
        for k in range(p.K_d):
            gain, level = bl.gain_over_t(k, t_exprs[k], state["eta"], state["t"][k])
            prob.add_affine((gain - bl.interference_expr(k)) * (1.0 / max(1.0, level)),
                            ">=", 0.0)
            _exp_epigraph_at(prob, v_ref[k] * kappa, LinExpr.constant(1.0) + t_exprs[k],
                             1.0 + float(state["t"][k]))
        for l in range(p.L):
            prob.add_affine(bl.q_expr(l), ">=", data.q_target[l])
        sum_v = LinExpr({v_ref.offset + k: 1.0 for k in range(p.K_d)})
        _exp_epigraph_at(prob, theta[0], sum_v, float(np.sum(state["v"])))
        g1_0 = tx_coef * float(state["eta"].sum()) + k_s3
        g1 = LinExpr.constant(k_s3)
        for m in range(p.M):
            g1 += bl.ei_tot(m) * tx_coef
        prob.set_objective(g1 * (1.0 / g1_0) - theta[0], "min")

        def extract(sol):
            return {"eta": np.maximum(sol.values(bl.ei).reshape(p.M, p.K_d), 0.0),
                    "eta_e": np.maximum(sol.values(bl.ee).reshape(p.M, p.L), 0.0)
                    if p.L else np.zeros((p.M, 0)),
                    "t": np.maximum(sol.values(t_ref) * t_sc, _TINY),
                    "v": np.maximum(sol.values(v_ref), _TINY)}
        return prob, extract

    state, trace, status, its, mono = _b3_iterate(
        step, state0, options.tol, options.max_iter, False, options.backend)
    if status == "infeasible":
        return _b3_zero("ee", p, t_start)
    return _b3_finish("ee", data, state["eta"], state.get("eta_e", np.zeros((p.M, p.L))),
                      status, trace, its, t_start, mono)


def _b3_he(objective: str, data: _B3Data, eta_i0, options, t_start) -> ScaResult:
    """Sum-HE / max-min HE analogues on the orthogonal-access closed forms."""
    p = data.params
    eh = data.eh
    maxmin = objective == "maxmin_he"
    with_se = data.s_min > 0 and p.K_d > 0
    eta_e0 = np.full((p.M, p.L), 0.9 / max(p.L, 1))
    q0 = metrics.q_orthogonal(eta_e0, data.stats, p)
    phi0 = np.clip(np.asarray(metrics.nonlinear_he(q0, eh)),
                   1e-9 * eh.phi, (1 - 1e-9) * eh.phi)
    state0 = {"eta": eta_i0, "eta_e": eta_e0,
              "e": phi0 if not maxmin else np.full(1, phi0.min())}
    omega = eh.omega

    uj = 1e6   # harvested-energy variables carried in microjoules

    def step(state):
        prob = ConvexSubproblem()
        bl = _B3Blocks(prob, data, with_i=with_se, with_e=True, with_s=with_se)
        n_e = 1 if maxmin else p.L
        e_ref = prob.add_variable("e", n_e, lb=0.0, ub=eh.phi * uj)
        tau_ref = prob.add_variable("tau_xi", n_e)
        for j in range(n_e):
            x_expr = (e_ref[j] * ((1.0 - omega) / uj)
                      + LinExpr.constant(eh.phi * omega))
            x0 = (1.0 - omega) * float(state["e"][j]) + eh.phi * omega
            _b3_xi_epigraph(prob, data, x_expr, x0, tau_ref[j])
            if not maxmin:
                prob.add_affine(e_ref[j], ">=", data.gamma_w[j] * uj)
        for l in range(p.L):
            prob.add_affine(bl.q_expr(l) - tau_ref[0 if maxmin else l] * 1.0, ">=", 0.0)
        if with_se:
            for k in range(p.K_d):
                gain, level = bl.gain_fixed_target(k, state["eta"])
                prob.add_affine((gain - bl.interference_expr(k)) * (1.0 / max(1.0, level)),
                                ">=", 0.0)
        obj = LinExpr({e_ref.offset + j: 1.0 for j in range(n_e)})
        prob.set_objective(obj, "max")

        def extract(sol):
            out = {"eta_e": np.maximum(sol.values(bl.ee).reshape(p.M, p.L), 0.0),
                   "e": np.clip(sol.values(e_ref) / uj, 1e-9 * eh.phi,
                                (1 - 1e-6) * eh.phi)}
            out["eta"] = (np.maximum(sol.values(bl.ei).reshape(p.M, p.K_d), 0.0)
                          if with_se else state["eta"])
            return out
        return prob, extract

    state, trace, status, its, mono = _b3_iterate(
        step, state0, options.tol, options.max_iter, True, options.backend)
    if status == "infeasible":
        return _b3_zero(objective, p, t_start)
    eta_iu = state["eta"] if with_se else np.zeros((p.M, p.K_d))
    return _b3_finish(objective, data, eta_iu, state["eta_e"], status, trace, its,
                      t_start, mono)
