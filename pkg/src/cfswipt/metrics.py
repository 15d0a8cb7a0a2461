"""Closed-form SE, harvested-energy, power and EE expressions.

These are the statistical (large-scale) formulas for the protective
partial-zero-forcing scheme: PZF precoding at information APs, projected MRT
at energy APs. The Monte-Carlo oracle in :mod:`cfswipt.oracle` validates every
term here against channel-realization-level simulation.

Note on the coherent harvested-energy term: the exact second moment of the
own-EU projected-MRT link is (N - K_d + 1)*gamma + (beta - gamma) per unit
transmit weight; the (beta - gamma) estimation-error leakage is kept so the
closed form is the exact mean of the simulated input energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import ChannelStats, SystemParams


class EhDomainError(ValueError):
    """Requested harvester output is outside (0, phi): target unreachable."""


@dataclass(frozen=True)
class EhParams:
    """Logistic (sigmoidal) nonlinear energy-harvesting circuit."""

    xi: float    # slope
    chi: float   # midpoint
    phi: float   # saturation output

    @property
    def omega(self) -> float:
        """Zero-input offset 1 / (1 + exp(xi*chi))."""
        return 1.0 / (1.0 + math.exp(self.xi * self.chi))

    @classmethod
    def from_params(cls, params: SystemParams) -> "EhParams":
        return cls(xi=params.eh_xi, chi=params.eh_chi, phi=params.eh_phi)


@dataclass
class ModeAndPower:
    """AP mode vector a (relaxed in [0,1] or binary) and power coefficients."""

    a: np.ndarray        # (M,)
    eta_iu: np.ndarray   # (M, K_d), nonnegative
    eta_eu: np.ndarray   # (M, L), nonnegative

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.eta_iu = np.asarray(self.eta_iu, dtype=float)
        self.eta_eu = np.asarray(self.eta_eu, dtype=float)
        if self.eta_iu.ndim != 2 or self.eta_eu.ndim != 2:
            raise ValueError("eta matrices must be 2-D (M x users)")
        if self.a.shape[0] != self.eta_iu.shape[0] or self.a.shape[0] != self.eta_eu.shape[0]:
            raise ValueError("a and eta row counts disagree")
        if np.any(self.a < -1e-12) or np.any(self.a > 1 + 1e-12):
            raise ValueError("mode vector entries must lie in [0, 1]")
        if np.any(self.eta_iu < 0) or np.any(self.eta_eu < 0):
            raise ValueError("power coefficients must be nonnegative")


@dataclass(frozen=True)
class PerUserMetrics:
    """Everything the experiment layer reports for one (a, eta) operating point."""

    sinr: np.ndarray          # (K_d,)
    se: np.ndarray            # (K_d,) bit/s/Hz
    q_energy: np.ndarray      # (L,) average harvester input
    he_nonlinear: np.ndarray  # (L,) nonlinear harvested output
    p_total_w: float
    ee_bit_per_joule: float


def _fsum_rows(x: np.ndarray) -> np.ndarray:
    """Compensated column sums over the AP axis (axis 0)."""
    return np.array([math.fsum(col) for col in np.asarray(x, dtype=float).T])


def own_energy_coeff(stats: ChannelStats, params: SystemParams) -> np.ndarray:
    """Per-(AP, EU) coherent coefficient (N-K_d+1)*gamma + (beta-gamma)."""
    return (params.N - params.K_d + 1) * stats.gamma_eu + stats.nu_eu


def sinr_ppzf(mp: ModeAndPower, stats: ChannelStats, params: SystemParams) -> np.ndarray:
    """Effective downlink SINR of each IU under PZF/PMRT operation."""
    a = mp.a
    num_root = _fsum_rows(np.sqrt(a[:, None] * mp.eta_iu * stats.gamma_iu))
    numerator = stats.rho * (params.N - params.K_d) * num_root ** 2
    # per-AP interference load: I-power when a=1, E-power when a=0
    load = a * mp.eta_iu.sum(axis=1) + (1.0 - a) * mp.eta_eu.sum(axis=1)
    denominator = stats.rho * _fsum_rows(load[:, None] * stats.nu_iu) + 1.0
    return numerator / denominator


def se_per_iu(sinr: np.ndarray, tau: int, tau_c: int) -> np.ndarray:
    """Achievable SE (bit/s/Hz) with the training prelog (1 - tau/tau_c)."""
    return (1.0 - tau / tau_c) * np.log2(1.0 + np.asarray(sinr, dtype=float))


def avg_input_energy(mp: ModeAndPower, stats: ChannelStats, params: SystemParams) -> np.ndarray:
    """Average harvester input per EU over one data phase.

    Q_l = (tau_c - tau) * sigma_n^2 * (rho * [coherent + cross-EU leakage +
    I-AP leakage] + 1); the noise term keeps Q_l > 0 even with all power off.
    """
    e_weight = (1.0 - mp.a)[:, None] * mp.eta_eu            # (M, L)
    own = _fsum_rows(e_weight * own_energy_coeff(stats, params))
    eta_e_tot = e_weight.sum(axis=1)                        # (M,)
    cross = _fsum_rows((eta_e_tot[:, None] - e_weight) * stats.beta_eu)
    iu_leak = _fsum_rows((mp.a * mp.eta_iu.sum(axis=1))[:, None] * stats.beta_eu)
    scale = (params.tau_c - params.tau) * stats.sigma2_w
    return scale * (stats.rho * (own + cross + iu_leak) + 1.0)


def logistic_psi(energy, eh: EhParams):
    """Raw logistic harvester response phi / (1 + exp(-xi (E - chi)))."""
    e = np.asarray(energy, dtype=float)
    out = eh.phi / (1.0 + np.exp(-eh.xi * (e - eh.chi)))
    return out if out.ndim else float(out)


def nonlinear_he(energy, eh: EhParams):
    """Harvested output with the zero-input response removed."""
    omega = eh.omega
    out = (np.asarray(logistic_psi(energy, eh)) - eh.phi * omega) / (1.0 - omega)
    return out if out.ndim else float(out)


def inverse_psi(psi_value: float, eh: EhParams) -> float:
    """Input energy needed for a raw logistic output; domain (0, phi)."""
    if psi_value <= 0.0 or psi_value >= eh.phi:
        raise EhDomainError(
            f"logistic output {psi_value!r} outside (0, {eh.phi}): unreachable target")
    return eh.chi - math.log((eh.phi - psi_value) / psi_value) / eh.xi


def required_input_energy(gamma_target: float, eh: EhParams) -> float:
    """Harvester input needed to deliver a nonlinear-HE target.

    Maps the target through Gamma~ = (1-Omega)*Gamma + phi*Omega and inverts
    the logistic. A zero target needs zero input by construction.
    """
    if gamma_target < 0:
        raise EhDomainError("harvested-energy target must be nonnegative")
    if gamma_target == 0:
        return 0.0
    gamma_tilde = (1.0 - eh.omega) * gamma_target + eh.phi * eh.omega
    return inverse_psi(gamma_tilde, eh)


def convex_upper_bound_xi(x, x_ref: float, eh: EhParams):
    """Tangent-style convex upper bound of the inverse logistic around x_ref."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(x >= eh.phi):
        raise EhDomainError("argument outside (0, phi)")
    if x_ref <= 0 or x_ref >= eh.phi:
        raise EhDomainError("reference point outside (0, phi)")
    out = eh.chi - (np.log((eh.phi - x) / x_ref) - (x - x_ref) / x_ref) / eh.xi
    return out if out.ndim else float(out)


def total_power(mp: ModeAndPower, se: np.ndarray, params: SystemParams) -> float:
    """Consumed network power: user circuits plus per-I-AP transmit, traffic
    and fixed costs."""
    k_d = se.shape[0]
    tx = (params.rho_tilde_w / params.pa_efficiency) * mp.eta_iu.sum(axis=1)
    traffic = params.bandwidth_hz * params.p_traffic_w_per_bps * math.fsum(se)
    per_ap = mp.a * (tx + traffic + params.p_fixed_ap_w)
    return k_d * params.p_user_circuit_w + math.fsum(per_ap)


def energy_efficiency(mp: ModeAndPower, stats: ChannelStats, params: SystemParams) -> float:
    """Sum throughput (bit/s) per consumed watt."""
    se = se_per_iu(sinr_ppzf(mp, stats, params), params.tau, params.tau_c)
    return params.bandwidth_hz * math.fsum(se) / total_power(mp, se, params)


def evaluate(mp: ModeAndPower, stats: ChannelStats, params: SystemParams) -> PerUserMetrics:
    """All closed-form metrics for one operating point."""
    eh = EhParams.from_params(params)
    sinr = sinr_ppzf(mp, stats, params)
    se = se_per_iu(sinr, params.tau, params.tau_c)
    q = avg_input_energy(mp, stats, params)
    p_tot = total_power(mp, se, params)
    return PerUserMetrics(
        sinr=sinr, se=se, q_energy=q,
        he_nonlinear=np.asarray(nonlinear_he(q, eh)),
        p_total_w=p_tot,
        ee_bit_per_joule=params.bandwidth_hz * math.fsum(se) / p_tot,
    )


# ---------------------------------------------------------------------------
# Benchmark 3: orthogonal information/energy phases, all APs in both
# ---------------------------------------------------------------------------

def sinr_orthogonal(eta_iu: np.ndarray, stats: ChannelStats, params: SystemParams) -> np.ndarray:
    """IU SINR when every AP runs PZF in a dedicated information phase."""
    eta_iu = np.asarray(eta_iu, dtype=float)
    num_root = _fsum_rows(np.sqrt(eta_iu * stats.gamma_iu))
    numerator = stats.rho * (params.N - params.K_d) * num_root ** 2
    denominator = stats.rho * _fsum_rows(eta_iu.sum(axis=1)[:, None] * stats.nu_iu) + 1.0
    return numerator / denominator


def q_orthogonal(eta_eu: np.ndarray, stats: ChannelStats, params: SystemParams) -> np.ndarray:
    """Average harvester input when all APs run plain MRT for half the block."""
    eta_eu = np.asarray(eta_eu, dtype=float)
    own_coeff = (params.N + 1) * stats.gamma_eu + stats.nu_eu
    own = _fsum_rows(eta_eu * own_coeff)
    cross = _fsum_rows((eta_eu.sum(axis=1)[:, None] - eta_eu) * stats.beta_eu)
    scale = 0.5 * (params.tau_c - params.tau) * stats.sigma2_w
    return scale * (stats.rho * (own + cross) + 1.0)


def benchmark3_metrics(eta_iu: np.ndarray, eta_eu: np.ndarray, stats: ChannelStats,
                       params: SystemParams):
    """(SE, Q, EE) for the orthogonal-access scheme; prelog is halved."""
    sinr = sinr_orthogonal(eta_iu, stats, params)
    se = 0.5 * se_per_iu(sinr, params.tau, params.tau_c)
    q = q_orthogonal(eta_eu, stats, params)
    tx = (params.rho_tilde_w / params.pa_efficiency) * np.asarray(eta_iu).sum(axis=1)
    traffic = params.bandwidth_hz * params.p_traffic_w_per_bps * math.fsum(se)
    p_total = (math.fsum(tx + traffic + params.p_fixed_ap_w)
               + params.K_d * params.p_user_circuit_w)
    ee = params.bandwidth_hz * math.fsum(se) / p_total
    return se, q, ee
