"""Scenario configuration: TOML in, SystemParams + targets out.

The default values mirror the reference urban deployment (1 km^2 wrapped
square, 1 W APs, 0.25 W pilots, 50 MHz, 9 dB noise figure, the logistic
harvester constants, and the fronthaul/circuit power figures). The desk
preset shrinks the layout to a dense 60 m hall so harvested-energy targets
in the tens of microjoules bind but stay reachable; see the README for the
scaling rationale.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from .network import SystemParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class Targets:
    se_min: float = 10.0        # per-IU SE requirement (bit/s/Hz)
    he_min_uj: float = 250.0    # per-EU harvested-energy requirement (microjoule)

    @property
    def gamma_w(self) -> float:
        return self.he_min_uj * 1e-6


@dataclass
class Scenario:
    params: SystemParams
    targets: Targets

    def hash(self) -> str:
        blob = repr(sorted(asdict(self.params).items())) + repr(asdict(self.targets))
        return hashlib.sha1(blob.encode()).hexdigest()[:10]


_SYSTEM_KEYS = {
    "m_aps": "M", "n_antennas": "N", "k_iu": "K_d", "l_eu": "L",
    "tau_c": "tau_c", "tau": "tau",
    "max_power_w": "rho_tilde_w", "pilot_power_w": "rho_t_tilde_w",
    "bandwidth_hz": "bandwidth_hz", "noise_figure_db": "noise_figure_db",
    "area_m": "area_m",
}
_HARVESTER_KEYS = {"xi": "eh_xi", "chi": "eh_chi", "phi": "eh_phi"}
_POWER_KEYS = {
    "fronthaul_fixed_w": "p_fronthaul_fixed_w",
    "antenna_circuit_w": "p_antenna_circuit_w",
    "traffic_w_per_bps": "p_traffic_w_per_bps",
    "pa_efficiency": "pa_efficiency",
    "user_circuit_w": "p_user_circuit_w",
}
_SOLVER_KEYS = {"penalty": "penalty_c", "tolerance": "sca_tol",
                "max_iterations": "sca_max_iter"}


def paper_scenario() -> Scenario:
    """Reference-deployment defaults (1 km^2, M=40, 250 uJ targets)."""
    return Scenario(params=SystemParams(), targets=Targets())


def desk_scenario() -> Scenario:
    """Laptop-sized dense deployment used by the test and sweep defaults."""
    params = SystemParams(M=20, N=12, K_d=3, L=3, tau=6, area_m=60.0)
    return Scenario(params=params, targets=Targets(se_min=10.0, he_min_uj=50.0))


def load_scenario(path: str | Path) -> Scenario:
    """Read a TOML scenario file; missing keys fall back to the defaults."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    kwargs = {}
    for section, mapping in (("system", _SYSTEM_KEYS), ("harvester", _HARVESTER_KEYS),
                             ("power_model", _POWER_KEYS), ("solver", _SOLVER_KEYS)):
        for key, value in doc.get(section, {}).items():
            if key not in mapping:
                raise ValueError(f"unknown key {key!r} in [{section}] of {path}")
            kwargs[mapping[key]] = value
    tgt = doc.get("targets", {})
    unknown = set(tgt) - {"se_min_bit_s_hz", "he_min_uj"}
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)} in [targets] of {path}")
    targets = Targets(se_min=float(tgt.get("se_min_bit_s_hz", 10.0)),
                      he_min_uj=float(tgt.get("he_min_uj", 250.0)))
    return Scenario(params=SystemParams(**kwargs), targets=targets)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace('"', '\\"') + '"'


def save_scenario(scenario: Scenario, path: str | Path):
    """Write the scenario back out (used for sweep provenance snapshots)."""
    p = scenario.params
    sections = {
        "system": {k: getattr(p, v) for k, v in _SYSTEM_KEYS.items()},
        "harvester": {k: getattr(p, v) for k, v in _HARVESTER_KEYS.items()},
        "power_model": {k: getattr(p, v) for k, v in _POWER_KEYS.items()},
        "solver": {k: getattr(p, v) for k, v in _SOLVER_KEYS.items()},
        "targets": {"se_min_bit_s_hz": scenario.targets.se_min,
                    "he_min_uj": scenario.targets.he_min_uj},
    }
    lines = []
    for name, body in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_toml_value(v)}" for k, v in body.items())
        lines.append("")
    Path(path).write_text("\n".join(lines))
