"""Network geometry, large-scale fading, and channel-estimation statistics.

Everything downstream (closed forms, Monte-Carlo oracle, optimizers) consumes
only the objects produced here: a :class:`NetworkRealization` (positions) and
a :class:`ChannelStats` (large-scale coefficients, estimation variances,
normalized SNRs). All quantities are kept in linear scale; dB appears only at
I/O boundaries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

BOLTZMANN_J_PER_K = 1.381e-23
NOISE_TEMPERATURE_K = 290.0

# Urban micro path-loss: beta[dB] = -30.5 - 36.7 log10(d / 1 m) + shadowing
PATHLOSS_INTERCEPT_DB = -30.5
PATHLOSS_SLOPE_DB = 36.7
SHADOWING_STD_DB = 4.0
SHADOWING_DECORR_M = 9.0
# Near-field clamp: path loss model blows up below ~1 m
MIN_DISTANCE_M = 1.0


@dataclass(frozen=True)
class SystemParams:
    """Scenario constants for one network configuration.

    Power-model values default to the standard fronthaul/circuit figures
    (fixed fronthaul 0.825 W, 0.2 W per antenna chain, 0.25 W per Gbit/s of
    fronthaul traffic, 40% PA efficiency, 0.1 W user circuit).
    """

    M: int = 40                      # access points
    N: int = 12                      # antennas per AP
    K_d: int = 5                     # information users
    L: int = 5                       # energy users
    tau_c: int = 200                 # coherence block length (symbols)
    tau: int = 10                    # pilot length (symbols)
    rho_tilde_w: float = 1.0         # max AP transmit power (W)
    rho_t_tilde_w: float = 0.25      # pilot power (W)
    bandwidth_hz: float = 50e6
    noise_figure_db: float = 9.0
    area_m: float = 1000.0           # square side, wrapped around
    # Nonlinear energy-harvesting circuit
    eh_xi: float = 15e3              # logistic slope (1/W-equivalent)
    eh_chi: float = 0.22e-3          # logistic midpoint (W-equivalent)
    eh_phi: float = 0.39e-3          # saturation level (W-equivalent)
    # Power-consumption model
    p_fronthaul_fixed_w: float = 0.825   # fixed fronthaul draw per active AP
    p_antenna_circuit_w: float = 0.2     # per-antenna circuit draw
    p_traffic_w_per_bps: float = 0.25e-9 # fronthaul traffic cost (W per bit/s)
    pa_efficiency: float = 0.4
    p_user_circuit_w: float = 0.1
    # Solver knobs
    penalty_c: float = 1500.0
    sca_tol: float = 1e-5
    sca_max_iter: int = 200

    def __post_init__(self):
        if self.N <= self.K_d:
            raise ValueError(f"need N > K_d for zero-forcing (got N={self.N}, K_d={self.K_d})")
        if self.tau < self.K_d + self.L:
            raise ValueError(f"pilot length tau={self.tau} < K_d + L = {self.K_d + self.L}")
        if self.tau >= self.tau_c:
            raise ValueError(f"tau={self.tau} must be < tau_c={self.tau_c}")
        for name in ("rho_tilde_w", "rho_t_tilde_w", "bandwidth_hz", "area_m",
                     "eh_xi", "eh_chi", "eh_phi"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.pa_efficiency <= 1.0):
            raise ValueError("pa_efficiency must be in (0, 1]")

    @property
    def prelog(self) -> float:
        return 1.0 - self.tau / self.tau_c

    @property
    def sigma2_w(self) -> float:
        return noise_power(self.bandwidth_hz, self.noise_figure_db)

    @property
    def p_fixed_ap_w(self) -> float:
        """Fixed per-AP cost: antenna circuits plus fixed fronthaul."""
        return self.N * self.p_antenna_circuit_w + self.p_fronthaul_fixed_w


@dataclass(frozen=True)
class NetworkRealization:
    """AP/user positions (m) inside the wrapped square, plus the seed used."""

    ap_pos: np.ndarray   # (M, 2)
    iu_pos: np.ndarray   # (K_d, 2)
    eu_pos: np.ndarray   # (L, 2)
    area_m: float
    seed: int


@dataclass(frozen=True)
class ChannelStats:
    """Large-scale coefficients and MMSE estimation variances (linear scale)."""

    beta_iu: np.ndarray    # (M, K_d)
    beta_eu: np.ndarray    # (M, L)
    gamma_iu: np.ndarray   # (M, K_d)
    gamma_eu: np.ndarray   # (M, L)
    sigma2_w: float        # noise power (W)
    rho: float             # normalized DL SNR  rho_tilde / sigma2
    rho_t: float           # normalized pilot SNR

    @property
    def nu_iu(self) -> np.ndarray:
        return self.beta_iu - self.gamma_iu

    @property
    def nu_eu(self) -> np.ndarray:
        return self.beta_eu - self.gamma_eu


def noise_power(bandwidth_hz: float, noise_figure_db: float) -> float:
    """Thermal noise power k_B * T_0 * B * F in watts."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return (BOLTZMANN_J_PER_K * NOISE_TEMPERATURE_K * bandwidth_hz
            * 10.0 ** (noise_figure_db / 10.0))


def generate_layout(params: SystemParams, seed: int) -> NetworkRealization:
    """Drop M APs, K_d IUs and L EUs uniformly in the wrapped square."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, params.area_m, size=(params.M + params.K_d + params.L, 2))
    m, k = params.M, params.K_d
    return NetworkRealization(ap_pos=pts[:m], iu_pos=pts[m:m + k],
                              eu_pos=pts[m + k:], area_m=params.area_m, seed=seed)


def wrap_around_distance(p, q, area_m: float) -> float:
    """Torus distance: minimum over the 9 wrap-around copies of q."""
    d = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
    d = np.minimum(d, area_m - d)
    return float(np.hypot(d[..., 0], d[..., 1]))


def wrap_distance_matrix(a: np.ndarray, b: np.ndarray, area_m: float) -> np.ndarray:
    """Pairwise torus distances between point sets a (n,2) and b (m,2)."""
    d = np.abs(a[:, None, :] - b[None, :, :])
    d = np.minimum(d, area_m - d)
    return np.hypot(d[..., 0], d[..., 1])


def _shadowing_sqrt_cov(layout: NetworkRealization) -> np.ndarray:
    """Symmetric square root of the joint IU+EU shadowing covariance.

    Same-AP covariance between users k, k' is 4^2 * 2^(-delta_kk'/9 m); zero
    across APs, so one (K_d+L) x (K_d+L) factor serves every AP row.
    """
    users = np.vstack([layout.iu_pos, layout.eu_pos])
    delta = wrap_distance_matrix(users, users, layout.area_m)
    cov = SHADOWING_STD_DB ** 2 * 2.0 ** (-delta / SHADOWING_DECORR_M)
    w, v = np.linalg.eigh(cov)
    if w.min() < 0:
        log.warning("shadowing covariance indefinite (min eig %.3e); "
                    "regularizing with 1e-12 on the diagonal", w.min())
        w, v = np.linalg.eigh(cov + 1e-12 * np.eye(cov.shape[0]))
        if w.min() < 0:
            raise np.linalg.LinAlgError("shadowing covariance not PSD after regularization")
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.T


def draw_shadowing(layout: NetworkRealization, seed: int, n_draws: int = 1) -> np.ndarray:
    """Correlated shadow-fading draws in dB, shape (n_draws, M, K_d+L)."""
    sqrt_cov = _shadowing_sqrt_cov(layout)
    n_users = sqrt_cov.shape[0]
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(size=(n_draws, layout.ap_pos.shape[0], n_users))
    return z @ sqrt_cov.T


def large_scale_coefficients(layout: NetworkRealization, params: SystemParams,
                             seed: int, shadowing: bool = True):
    """Linear-scale beta matrices for IUs and EUs.

    Distances use the wrap-around metric and are clamped below at 1 m.
    """
    users = np.vstack([layout.iu_pos, layout.eu_pos])
    dist = wrap_distance_matrix(layout.ap_pos, users, layout.area_m)
    dist = np.maximum(dist, MIN_DISTANCE_M)
    beta_db = PATHLOSS_INTERCEPT_DB - PATHLOSS_SLOPE_DB * np.log10(dist)
    if shadowing:
        beta_db = beta_db + draw_shadowing(layout, seed)[0]
    beta = 10.0 ** (beta_db / 10.0)
    return beta[:, :params.K_d], beta[:, params.K_d:]


def estimation_variance(beta: np.ndarray, tau: int, rho_t: float) -> np.ndarray:
    """MMSE estimate variance gamma = tau*rho_t*beta^2 / (tau*rho_t*beta + 1)."""
    if tau * rho_t <= 0:
        raise ValueError("tau * rho_t must be positive")
    beta = np.asarray(beta, dtype=float)
    s = tau * rho_t * beta
    return np.where(beta > 0, s * beta / (s + 1.0), 0.0)


def channel_stats(layout: NetworkRealization, params: SystemParams, seed: int,
                  shadowing: bool = True) -> ChannelStats:
    """Bundle beta/gamma matrices and normalized SNRs for one realization."""
    beta_iu, beta_eu = large_scale_coefficients(layout, params, seed, shadowing=shadowing)
    sigma2 = params.sigma2_w
    rho = params.rho_tilde_w / sigma2
    rho_t = params.rho_t_tilde_w / sigma2
    return ChannelStats(
        beta_iu=beta_iu,
        beta_eu=beta_eu,
        gamma_iu=estimation_variance(beta_iu, params.tau, rho_t),
        gamma_eu=estimation_variance(beta_eu, params.tau, rho_t),
        sigma2_w=sigma2,
        rho=rho,
        rho_t=rho_t,
    )
