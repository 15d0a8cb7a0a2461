"""Command-line entry points: sweep, validate, solve-one, complexity.

Exit codes: 0 success, 2 usage error (click's default), 3 solver backend
unavailable.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from .conic import BackendUnavailableError
from .config import Scenario, desk_scenario, load_scenario, paper_scenario
from .experiments import SweepSpec, run_sweep, validate_closed_forms
from .network import channel_stats, generate_layout
from .sca import PROBLEM_KINDS, ScaOptions, complexity_counts, run_sca

_KIND_CHOICES = click.Choice(list(PROBLEM_KINDS))


def _load(config: str | None, desk: bool) -> Scenario:
    if config:
        return load_scenario(config)
    return desk_scenario() if desk else paper_scenario()


@click.group()
def main():
    """Cell-free massive MIMO SWIPT: mode selection, power control, validation."""


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="TOML scenario file (defaults mirror the reference deployment).")
@click.option("--desk", is_flag=True, help="Use the dense desk-scale preset.")
@click.option("--parameter", default="se_min",
              type=click.Choice(["se_min", "he_min", "users", "m_fixed_total",
                                 "m_fixed_n", "power", "pilot_power"]))
@click.option("--values", required=True,
              help="Comma-separated grid, e.g. '2,4,6,8'.")
@click.option("--objective", default="sum_se", type=_KIND_CHOICES)
@click.option("--schemes", default="proposed,b1,b2,b3")
@click.option("--realizations", default=200, show_default=True)
@click.option("--base-seed", default=1, show_default=True)
@click.option("--total-antennas", default=None, type=int,
              help="Fixed M*N budget for m_fixed_total sweeps.")
@click.option("--out", "out_dir", default="sweep_out", show_default=True,
              type=click.Path(file_okay=False))
def sweep(config, desk, parameter, values, objective, schemes, realizations,
          base_seed, total_antennas, out_dir):
    """Run a scenario sweep and write CSV results."""
    scenario = _load(config, desk)
    try:
        grid = [float(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise click.UsageError(f"bad --values: {exc}") from exc
    spec = SweepSpec(
        scenario=scenario, parameter=parameter, values=grid, objective=objective,
        schemes=tuple(s.strip() for s in schemes.split(",") if s.strip()),
        realizations=realizations, base_seed=base_seed, out_dir=Path(out_dir),
        total_antennas=total_antennas,
        options=ScaOptions(penalty_c=scenario.params.penalty_c,
                           tol=scenario.params.sca_tol,
                           max_iter=scenario.params.sca_max_iter),
    )
    try:
        paths = run_sweep(spec)
    except BackendUnavailableError as exc:
        click.echo(f"solver backend error: {exc}", err=True)
        sys.exit(3)
    click.echo((paths["summary"]).read_text())
    click.echo(f"results: {paths['results']}")


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--desk", is_flag=True)
@click.option("--draws", default=10_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", default="validation_report.txt", show_default=True,
              type=click.Path(dir_okay=False))
def validate(config, desk, draws, seed, out_path):
    """Check the closed-form SINR/HE expressions against the Monte-Carlo oracle."""
    scenario = _load(config, desk)
    try:
        report = validate_closed_forms(scenario.params, draws, seed, out_path)
    except BackendUnavailableError as exc:
        click.echo(f"solver backend error: {exc}", err=True)
        sys.exit(3)
    click.echo(report["text"])
    click.echo(f"report written to {out_path}")


@main.command("solve-one")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--desk", is_flag=True)
@click.option("--kind", default="sum_se", type=_KIND_CHOICES)
@click.option("--se-min", default=None, type=float,
              help="Override per-IU SE requirement (bit/s/Hz).")
@click.option("--he-min-uj", default=None, type=float,
              help="Override per-EU harvested-energy requirement (microjoule).")
@click.option("--seed", default=0, show_default=True)
@click.option("--trace-csv", default=None, type=click.Path(dir_okay=False),
              help="Write the per-iteration objective trace.")
@click.option("--json-out", default=None, type=click.Path(dir_okay=False),
              help="Write the full result record as JSON.")
def solve_one(config, desk, kind, se_min, he_min_uj, seed, trace_csv, json_out):
    """Solve a single network realization and print the result record."""
    scenario = _load(config, desk)
    targets = scenario.targets
    se_req = targets.se_min if se_min is None else se_min
    gamma_w = targets.gamma_w if he_min_uj is None else he_min_uj * 1e-6
    params = scenario.params
    layout = generate_layout(params, seed)
    stats = channel_stats(layout, params, seed)
    options = ScaOptions(penalty_c=params.penalty_c, tol=params.sca_tol,
                         max_iter=params.sca_max_iter)
    try:
        res = run_sca(kind, stats, params, se_req, gamma_w, options)
    except BackendUnavailableError as exc:
        click.echo(f"solver backend error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"status      : {res.status} (feasible={res.feasible})")
    click.echo(f"iterations  : {res.iterations}")
    click.echo(f"modes (a)   : {''.join(str(int(x)) for x in res.a)}")
    click.echo(f"sum SE      : {res.sum_se:.4f} bit/s/Hz  (min {res.min_se:.4f})")
    click.echo(f"sum HE      : {res.sum_he * 1e6:.3f} uJ  (min {res.min_he * 1e6:.3f})")
    click.echo(f"EE          : {res.ee / 1e6:.3f} Mbit/Joule")
    click.echo(f"total power : {res.p_total_w:.3f} W")
    if trace_csv:
        with open(trace_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "iteration", "objective"])
            for i, obj in enumerate(res.obj_trace):
                w.writerow([kind, i, format(obj, ".12g")])
        click.echo(f"trace: {trace_csv}")
    if json_out:
        record = res.to_dict()
        record["scenario_hash"] = scenario.hash()
        record["seed"] = seed
        record["targets"] = {"se_min": se_req, "he_min_uj": gamma_w * 1e6}
        record["options"] = {"penalty_c": options.penalty_c, "tol": options.tol,
                             "max_iter": options.max_iter,
                             "backend": options.backend}
        Path(json_out).write_text(json.dumps(record, indent=1))
        click.echo(f"record: {json_out}")


@main.command()
@click.argument("kind")
@click.option("--M", "m", required=True, type=int)
@click.option("--K", "k", required=True, type=int)
@click.option("--L", "l", required=True, type=int)
def complexity(kind, m, k, l):
    """Per-iteration variable/constraint counts of the published model."""
    try:
        a_v, a_l, a_q = complexity_counts(kind, m, k, l)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    click.echo(f"A_v = {a_v}, A_l = {a_l}, A_q = {a_q}")


if __name__ == "__main__":
    main()
