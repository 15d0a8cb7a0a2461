"""Batch figure rendering from sweep result CSVs.

Consumes only the CSV files the simulator writes (results.csv rows with the
scheme / sweep_value / metric columns, and the per-iteration trace CSV), so
any CSV-capable tool could substitute. One figure kind per call; means are
taken over realizations with infeasible rows already recorded as zeros.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = (
    "convergence",
    "sum_se_vs_se_min",
    "sum_se_vs_users",
    "ee_vs_se_min",
    "ee_vs_users",
    "sum_he_vs_se_min",
    "sum_he_vs_m_fixed_total",
    "sum_he_vs_m_fixed_n",
)

# figure kind -> (metric column, expected sweep parameter, axis labels)
_KIND_TABLE = {
    "sum_se_vs_se_min": ("sum_se", "se_min",
                         "per-IU SE requirement (bit/s/Hz)", "average sum SE (bit/s/Hz)"),
    "sum_se_vs_users": ("sum_se", "users",
                        "number of IUs and EUs (K_d = L)", "average sum SE (bit/s/Hz)"),
    "ee_vs_se_min": ("ee", "se_min",
                     "per-IU SE requirement (bit/s/Hz)", "average EE (bit/Joule)"),
    "ee_vs_users": ("ee", "users",
                    "number of IUs and EUs (K_d = L)", "average EE (bit/Joule)"),
    "sum_he_vs_se_min": ("sum_he_uj", "se_min",
                         "per-IU SE requirement (bit/s/Hz)", "average sum HE (uJ)"),
    "sum_he_vs_m_fixed_total": ("sum_he_uj", "m_fixed_total",
                                "number of APs (fixed antenna budget)",
                                "average sum HE (uJ)"),
    "sum_he_vs_m_fixed_n": ("sum_he_uj", "m_fixed_n",
                            "number of APs (fixed antennas per AP)",
                            "average sum HE (uJ)"),
}

_STYLE = {"proposed": "o-", "b1": "s--", "b2": "^-.", "b3": "v:"}


class SchemaError(ValueError):
    """The CSV does not carry the columns the figure kind needs."""


@dataclass
class PlotSpec:
    inputs: list
    kind: str
    output: Path
    title: str | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        self.inputs = [Path(p) for p in (self.inputs if isinstance(self.inputs, (list, tuple))
                                         else [self.inputs])]
        self.output = Path(self.output)


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaError(f"{path} holds no data rows")
    return rows


def _require(rows: list[dict], columns) -> None:
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise SchemaError(f"missing columns {missing}")


def load_series(inputs, metric: str, parameter: str) -> dict:
    """scheme -> (values, mean metric) from one or more results CSVs."""
    rows = []
    for path in inputs:
        rows.extend(_read_csv(Path(path)))
    _require(rows, ["scheme", "sweep_parameter", "sweep_value", metric])
    rows = [r for r in rows if r["sweep_parameter"] == parameter]
    if not rows:
        raise SchemaError(f"no rows with sweep_parameter == {parameter!r}")
    series = {}
    schemes = sorted({r["scheme"] for r in rows})
    for scheme in schemes:
        grp = [r for r in rows if r["scheme"] == scheme]
        values = sorted({float(r["sweep_value"]) for r in grp})
        means = [float(np.mean([float(r[metric]) for r in grp
                                if float(r["sweep_value"]) == v])) for v in values]
        series[scheme] = (np.asarray(values), np.asarray(means))
    return series


def load_trace(inputs) -> dict:
    rows = []
    for path in inputs:
        rows.extend(_read_csv(Path(path)))
    _require(rows, ["label", "iteration", "objective"])
    out = {}
    for label in sorted({r["label"] for r in rows}):
        grp = sorted((int(r["iteration"]), float(r["objective"]))
                     for r in rows if r["label"] == label)
        out[label] = (np.array([g[0] for g in grp]), np.array([g[1] for g in grp]))
    return out


def render(spec: PlotSpec) -> Path:
    """Render one figure; raises SchemaError (writing nothing) on bad input."""
    if spec.kind == "convergence":
        data = load_trace(spec.inputs)
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, (it, obj) in data.items():
            ax.plot(it, obj, "o-", ms=3, label=label)
        ax.set_xlabel("iteration")
        ax.set_ylabel("objective")
    else:
        metric, parameter, xlabel, ylabel = _KIND_TABLE[spec.kind]
        data = load_series(spec.inputs, metric, parameter)
        fig, ax = plt.subplots(figsize=(6, 4))
        for scheme, (x, y) in data.items():
            ax.plot(x, y, _STYLE.get(scheme, "x-"), ms=4, label=scheme)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.4)
    ax.legend()
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output)
    plt.close(fig)
    return spec.output


def render_all(results_csv, out_dir, trace_csv=None) -> list[Path]:
    """Render every kind whose data is present in the inputs."""
    out_dir = Path(out_dir)
    written = []
    for kind in FIGURE_KINDS:
        inputs = [trace_csv] if kind == "convergence" else [results_csv]
        if kind == "convergence" and trace_csv is None:
            continue
        spec = PlotSpec(inputs=inputs, kind=kind, output=out_dir / f"{kind}.png")
        try:
            written.append(render(spec))
        except SchemaError:
            continue
    return written
