"""Scenario sweeps, Monte-Carlo aggregation, and the oracle validation report.

One sweep = one output directory holding a deterministic results CSV, a
sidecar timings CSV (wall-clock is intentionally kept out of the results so
repeated runs are byte-identical), a summary text file, and a config
snapshot. Infeasible realizations stay in the CSV as zero rows with a
feasibility flag, never silently dropped.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .benchmarks import b1_random_equal, b2_random_power_control, b3_orthogonal
from .config import Scenario, Targets, save_scenario
from .network import SystemParams, channel_stats, generate_layout
from .oracle import empirical_input_energy, empirical_sinr
from .sca import PROBLEM_KINDS, ScaOptions, ScaResult, run_sca

CSV_SCHEMA_VERSION = 1
RESULT_COLUMNS = [
    "schema", "scheme", "objective", "sweep_parameter", "sweep_value", "seed",
    "params_hash", "feasible", "sum_se", "min_se", "ee", "sum_he_uj",
    "min_he_uj", "iterations",
]
SWEEP_PARAMETERS = ("se_min", "he_min", "users", "m_fixed_total", "m_fixed_n",
                    "power", "pilot_power")
SCHEMES = ("proposed", "b1", "b2", "b3")


@dataclass
class SweepSpec:
    scenario: Scenario
    parameter: str                    # one of SWEEP_PARAMETERS
    values: list
    objective: str = "sum_se"
    schemes: tuple = SCHEMES
    realizations: int = 200
    base_seed: int = 1
    out_dir: Path = Path("sweep_out")
    total_antennas: int | None = None   # fixed M*N budget for m_fixed_total
    options: ScaOptions = field(default_factory=ScaOptions)

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}")
        if self.objective not in PROBLEM_KINDS:
            raise ValueError(f"unknown objective {self.objective!r}")
        if not self.values:
            raise ValueError("sweep grid must be nonempty")
        if self.realizations < 1:
            raise ValueError("need at least one realization")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}")


@dataclass
class ResultRow:
    scheme: str
    objective: str
    sweep_parameter: str
    sweep_value: float
    seed: int
    params_hash: str
    feasible: bool
    sum_se: float
    min_se: float
    ee: float
    sum_he_uj: float
    min_he_uj: float
    iterations: int
    solve_time_s: float     # written to the timings sidecar only

    @classmethod
    def from_result(cls, res: ScaResult, scheme, spec, value, seed, phash):
        zero = not res.feasible
        return cls(
            scheme=scheme, objective=spec.objective, sweep_parameter=spec.parameter,
            sweep_value=value, seed=seed, params_hash=phash, feasible=res.feasible,
            sum_se=0.0 if zero else res.sum_se,
            min_se=0.0 if zero else res.min_se,
            ee=0.0 if zero else res.ee,
            sum_he_uj=0.0 if zero else res.sum_he * 1e6,
            min_he_uj=0.0 if zero else res.min_he * 1e6,
            iterations=res.iterations, solve_time_s=res.solve_time_s,
        )


def apply_sweep_value(scenario: Scenario, parameter: str, value,
                      total_antennas: int | None = None) -> Scenario:
    """Scenario for one grid point. Values carry the axis' natural unit:
    bit/s/Hz, microjoule, user count, AP count, or watt."""
    p, t = scenario.params, scenario.targets
    if parameter == "se_min":
        return Scenario(p, Targets(se_min=float(value), he_min_uj=t.he_min_uj))
    if parameter == "he_min":
        return Scenario(p, Targets(se_min=t.se_min, he_min_uj=float(value)))
    if parameter == "users":
        k = int(value)
        return Scenario(replace(p, K_d=k, L=k, tau=2 * k), t)
    if parameter == "m_fixed_total":
        m = int(value)
        budget = total_antennas or p.M * p.N
        if budget % m:
            raise ValueError(f"antenna budget {budget} not divisible by M={m}")
        return Scenario(replace(p, M=m, N=budget // m), t)
    if parameter == "m_fixed_n":
        return Scenario(replace(p, M=int(value)), t)
    if parameter == "power":
        return Scenario(replace(p, rho_tilde_w=float(value)), t)
    if parameter == "pilot_power":
        return Scenario(replace(p, rho_t_tilde_w=float(value)), t)
    raise ValueError(parameter)


def run_one(scheme: str, objective: str, stats, params: SystemParams, se_min: float,
            gamma_w: float, seed: int, options: ScaOptions) -> ScaResult:
    if scheme == "proposed":
        return run_sca(objective, stats, params, se_min, gamma_w, options)
    if scheme == "b1":
        return b1_random_equal(stats, params, seed, se_min, gamma_w)
    if scheme == "b2":
        return b2_random_power_control(stats, params, objective, seed, se_min,
                                       gamma_w, options)
    if scheme == "b3":
        return b3_orthogonal(stats, params, objective, se_min, gamma_w, options)
    raise ValueError(f"unknown scheme {scheme!r}")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def run_sweep(spec: SweepSpec) -> dict:
    """Execute the grid and write results.csv / timings.csv / summary.txt."""
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[ResultRow] = []
    for value in spec.values:
        scen = apply_sweep_value(spec.scenario, spec.parameter, value,
                                 spec.total_antennas)
        phash = scen.hash()
        for r in range(spec.realizations):
            seed = spec.base_seed + r
            layout = generate_layout(scen.params, seed)
            stats = channel_stats(layout, scen.params, seed)
            for scheme in spec.schemes:
                res = run_one(scheme, spec.objective, stats, scen.params,
                              scen.targets.se_min, scen.targets.gamma_w, seed,
                              spec.options)
                rows.append(ResultRow.from_result(res, scheme, spec, value, seed, phash))
    results_path = out / "results.csv"
    with open(results_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for row in rows:
            w.writerow([CSV_SCHEMA_VERSION, row.scheme, row.objective,
                        row.sweep_parameter, _fmt(row.sweep_value), row.seed,
                        row.params_hash, _fmt(row.feasible), _fmt(row.sum_se),
                        _fmt(row.min_se), _fmt(row.ee), _fmt(row.sum_he_uj),
                        _fmt(row.min_he_uj), row.iterations])
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "sweep_value", "seed", "solve_time_s"])
        for row in rows:
            w.writerow([row.scheme, _fmt(row.sweep_value), row.seed,
                        format(row.solve_time_s, ".6f")])
    save_scenario(spec.scenario, out / "config_snapshot.toml")
    summary = summarize(rows)
    (out / "summary.txt").write_text(summary)
    return {"results": results_path, "timings": out / "timings.csv",
            "summary": out / "summary.txt", "rows": rows}


def summarize(rows: list[ResultRow]) -> str:
    """Per-(scheme, value) means with infeasible rows counted as zeros."""
    keys = sorted({(r.scheme, r.sweep_value) for r in rows},
                  key=lambda kv: (kv[1], kv[0]))
    buf = io.StringIO()
    buf.write(f"{'scheme':10s} {'value':>10s} {'n':>4s} {'feas%':>6s} "
              f"{'sum_se':>10s} {'ee_Mb/J':>10s} {'sum_he_uJ':>10s}\n")
    for scheme, value in keys:
        grp = [r for r in rows if r.scheme == scheme and r.sweep_value == value]
        n = len(grp)
        feas = 100.0 * sum(r.feasible for r in grp) / n
        buf.write(f"{scheme:10s} {value:>10.4g} {n:>4d} {feas:>6.1f} "
                  f"{np.mean([r.sum_se for r in grp]):>10.3f} "
                  f"{np.mean([r.ee for r in grp]) / 1e6:>10.3f} "
                  f"{np.mean([r.sum_he_uj for r in grp]):>10.2f}\n")
    return buf.getvalue()


def validate_closed_forms(params: SystemParams, n_draws: int = 10_000, seed: int = 0,
                          out_path: str | Path | None = None,
                          operating_point: metrics.ModeAndPower | None = None) -> dict:
    """Closed form vs Monte-Carlo at a binary operating point (supplied or drawn)."""
    rng = np.random.default_rng(seed)
    layout = generate_layout(params, seed)
    stats = channel_stats(layout, params, seed)
    if operating_point is None:
        a = np.zeros(params.M)
        a[rng.permutation(params.M)[:max(1, params.M // 2)]] = 1.0
        if params.L and a.sum() == params.M:
            a[rng.integers(params.M)] = 0.0
        eta_iu = rng.uniform(0.2, 1.0, (params.M, params.K_d))
        eta_iu *= (a / np.maximum(eta_iu.sum(1), 1e-12))[:, None]
        eta_eu = rng.uniform(0.2, 1.0, (params.M, params.L))
        eta_eu *= ((1 - a) / np.maximum(eta_eu.sum(1), 1e-12))[:, None]
        operating_point = metrics.ModeAndPower(a=a, eta_iu=eta_iu, eta_eu=eta_eu)
    mp = operating_point
    sinr_cf = metrics.sinr_ppzf(mp, stats, params)
    q_cf = metrics.avg_input_energy(mp, stats, params)
    emp_s = empirical_sinr(mp, stats, params, n_draws, seed)
    emp_q = empirical_input_energy(mp, stats, params, n_draws, seed)
    report = {
        "sinr_closed": sinr_cf, "sinr_mc": emp_s["sinr"],
        "sinr_rel_err": np.abs(emp_s["sinr"] - sinr_cf) / sinr_cf,
        "sinr_rel_halfwidth": emp_s["sinr_rel_halfwidth"],
        "q_closed": q_cf, "q_mc": emp_q["mean_energy"],
        "q_rel_err": np.abs(emp_q["mean_energy"] - q_cf) / q_cf,
        "q_rel_halfwidth": emp_q["energy_halfwidth"] / q_cf,
        "mean_psi": emp_q["mean_psi"],
        "n_draws": n_draws, "seed": seed,
    }
    text = io.StringIO()
    text.write(f"closed-form vs Monte-Carlo ({n_draws} draws, seed {seed})\n\n")
    text.write("IU   SINR closed    SINR MC        rel.err   95% hw\n")
    for k in range(params.K_d):
        text.write(f"{k:3d}  {sinr_cf[k]:13.6g}  {emp_s['sinr'][k]:13.6g}  "
                   f"{report['sinr_rel_err'][k]:.4%}  {report['sinr_rel_halfwidth'][k]:.4%}\n")
    text.write("\nEU   Q closed (uJ)  Q MC (uJ)      rel.err   95% hw\n")
    for l in range(params.L):
        text.write(f"{l:3d}  {q_cf[l]*1e6:13.6g}  {emp_q['mean_energy'][l]*1e6:13.6g}  "
                   f"{report['q_rel_err'][l]:.4%}  {report['q_rel_halfwidth'][l]:.4%}\n")
    report["text"] = text.getvalue()
    if out_path is not None:
        Path(out_path).write_text(report["text"])
    return report
