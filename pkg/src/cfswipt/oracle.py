"""Channel-realization-level simulator used as ground truth.

Builds actual PZF / projected-MRT precoders from sampled MMSE estimates and
empirically estimates every term of the SINR decomposition (desired signal,
beamforming uncertainty, inter-user and energy-user interference) and the
instantaneous harvester input energy. Estimates and errors are sampled
directly from their MMSE-derived Gaussian laws, which is statistically
identical to simulating the pilot phase and much cheaper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import EhParams, ModeAndPower, logistic_psi
from .network import ChannelStats, SystemParams

COND_LIMIT = 1e12
_CHUNK = 1024


@dataclass
class ChannelDraw:
    """Batched estimate/error vectors; arrays are (n_draws, N, users)."""

    ghat_iu: list   # per AP m: (n, N, K_d) complex
    gerr_iu: list
    ghat_eu: list   # per AP m: (n, N, L) complex
    gerr_eu: list


def _complex_gaussian(rng: np.random.Generator, var: np.ndarray, n: int, n_ant: int) -> np.ndarray:
    """(n, N, U) complex normal with per-user variance var (U,)."""
    u = var.shape[0]
    z = rng.standard_normal((n, n_ant, u)) + 1j * rng.standard_normal((n, n_ant, u))
    return z * np.sqrt(var / 2.0)


def draw_channels(stats: ChannelStats, params: SystemParams, seed: int,
                  n_draws: int = 1) -> ChannelDraw:
    """Sample estimates ghat ~ CN(0, gamma I) and errors ~ CN(0, (beta-gamma) I)."""
    rng = np.random.default_rng(seed)
    ghat_iu, gerr_iu, ghat_eu, gerr_eu = [], [], [], []
    for m in range(params.M):
        ghat_iu.append(_complex_gaussian(rng, stats.gamma_iu[m], n_draws, params.N))
        gerr_iu.append(_complex_gaussian(rng, stats.nu_iu[m], n_draws, params.N))
        ghat_eu.append(_complex_gaussian(rng, stats.gamma_eu[m], n_draws, params.N))
        gerr_eu.append(_complex_gaussian(rng, stats.nu_eu[m], n_draws, params.N))
    return ChannelDraw(ghat_iu, gerr_iu, ghat_eu, gerr_eu)


def build_pzf(ghat_i: np.ndarray, gamma_i: np.ndarray, n_minus_kd: int):
    """PZF precoders and the orthogonal-complement projector for one AP.

    Returns (w_pzf, b_proj, bad) where w_pzf is (..., N, K_d), b_proj is
    (..., N, N), and bad flags draws whose Gram condition number exceeds 1e12.
    """
    ghat_i = np.asarray(ghat_i)
    single = ghat_i.ndim == 2
    if single:
        ghat_i = ghat_i[None]
    n, n_ant, k_d = ghat_i.shape
    eye_n = np.eye(n_ant, dtype=complex)
    if k_d == 0:
        b = np.broadcast_to(eye_n, (n, n_ant, n_ant)).copy()
        w = np.zeros((n, n_ant, 0), dtype=complex)
        bad = np.zeros(n, dtype=bool)
        return (w[0], b[0], bad[0]) if single else (w, b, bad)
    gram = np.einsum("dnk,dnl->dkl", ghat_i.conj(), ghat_i)
    eig = np.linalg.eigvalsh(gram)
    bad = (eig[:, 0] <= 0) | (eig[:, -1] / np.maximum(eig[:, 0], 1e-300) > COND_LIMIT)
    gram_inv = np.linalg.inv(gram)
    w_raw = ghat_i @ gram_inv                          # (n, N, K_d)
    alpha = np.sqrt(n_minus_kd * np.asarray(gamma_i))
    w = w_raw * alpha
    b = eye_n - w_raw @ ghat_i.conj().transpose(0, 2, 1)
    return (w[0], b[0], bad[0]) if single else (w, b, bad)


def build_pmrt(ghat_e: np.ndarray, b_proj: np.ndarray, gamma_e: np.ndarray,
               n_minus_kd: int) -> np.ndarray:
    """Projected-MRT precoders: scaled projection of the EU estimates."""
    ghat_e = np.asarray(ghat_e)
    single = ghat_e.ndim == 2
    if single:
        ghat_e = ghat_e[None]
        b_proj = np.asarray(b_proj)[None]
    alpha = 1.0 / np.sqrt(n_minus_kd * np.asarray(gamma_e))
    w = (b_proj @ ghat_e) * alpha
    return w[0] if single else w


def _require_binary(mp: ModeAndPower) -> np.ndarray:
    a = np.asarray(mp.a)
    if not np.all((a == 0) | (a == 1)):
        raise ValueError("oracle requires a binary mode vector")
    return a.astype(int)


def _chunk_precoders(stats, params, mp, rng, n):
    """Draw one chunk and build per-AP precoders, resampling ill-conditioned draws."""
    a = np.asarray(mp.a).astype(int)
    w_pzf, w_pmrt, g_true_iu, g_true_eu, resampled = [], [], [], [], 0
    r = params.N - params.K_d
    for m in range(params.M):
        for _attempt in range(6):
            ghat_i = _complex_gaussian(rng, stats.gamma_iu[m], n, params.N)
            gerr_i = _complex_gaussian(rng, stats.nu_iu[m], n, params.N)
            ghat_e = _complex_gaussian(rng, stats.gamma_eu[m], n, params.N)
            gerr_e = _complex_gaussian(rng, stats.nu_eu[m], n, params.N)
            w_i, b_proj, bad = build_pzf(ghat_i, stats.gamma_iu[m], r)
            if not bad.any():
                break
            resampled += int(bad.sum())
        else:
            raise np.linalg.LinAlgError("persistent rank deficiency in PZF Gram matrix")
        w_e = build_pmrt(ghat_e, b_proj, stats.gamma_eu[m], r)
        w_pzf.append(w_i if a[m] else None)
        w_pmrt.append(None if a[m] else w_e)
        g_true_iu.append(ghat_i + gerr_i)
        g_true_eu.append(ghat_e + gerr_e)
    return w_pzf, w_pmrt, g_true_iu, g_true_eu, resampled


def empirical_sinr(mp: ModeAndPower, stats: ChannelStats, params: SystemParams,
                   n_draws: int = 10_000, seed: int = 0) -> dict:
    """Sample-average SINR decomposition per IU.

    Returns ds (desired-signal power), bu (beamforming-uncertainty power),
    iui, eui (interference powers), the composite sinr, and the resample count.
    """
    a = _require_binary(mp)
    rng = np.random.default_rng(seed)
    k_d, l_eu = params.K_d, params.L
    sum_s = np.zeros(k_d, dtype=complex)
    sum_abs_s2 = np.zeros(k_d)
    sum_abs_t2 = np.zeros((k_d, k_d))
    sum_abs_e2 = np.zeros((k_d, l_eu))
    sumsq = np.zeros(k_d)      # second moment of the per-draw effective-noise sample
    done, resampled = 0, 0
    wi_coef = np.sqrt(stats.rho * a[:, None] * mp.eta_iu)            # (M, K_d)
    we_coef = np.sqrt(stats.rho * (1 - a)[:, None] * mp.eta_eu)      # (M, L)
    while done < n_draws:
        n = min(_CHUNK, n_draws - done)
        w_pzf, w_pmrt, g_iu, _, rs = _chunk_precoders(stats, params, mp, rng, n)
        resampled += rs
        s = np.zeros((n, k_d), dtype=complex)
        t = np.zeros((n, k_d, k_d), dtype=complex)
        e = np.zeros((n, k_d, l_eu), dtype=complex)
        for m in range(params.M):
            if a[m]:
                cross = np.einsum("dnk,dnl->dkl", g_iu[m].conj(), w_pzf[m])
                t += cross * wi_coef[m]
                s += np.einsum("dnk,dnk->dk", g_iu[m].conj(), w_pzf[m]) * wi_coef[m]
            elif l_eu:
                e += np.einsum("dnk,dnl->dkl", g_iu[m].conj(), w_pmrt[m]) * we_coef[m]
        sum_s += s.sum(axis=0)
        sum_abs_s2 += (np.abs(s) ** 2).sum(axis=0)
        sum_abs_t2 += (np.abs(t) ** 2).sum(axis=0)
        sum_abs_e2 += (np.abs(e) ** 2).sum(axis=0)
        noise_sample = (np.abs(s) ** 2
                        + (np.abs(t) ** 2).sum(axis=2) - np.abs(np.einsum("dkk->dk", t)) ** 2
                        + (np.abs(e) ** 2).sum(axis=2))
        sumsq += (noise_sample ** 2).sum(axis=0)
        done += n
    mean_s = sum_s / n_draws
    ds = np.abs(mean_s) ** 2
    bu = sum_abs_s2 / n_draws - ds
    iui_full = sum_abs_t2 / n_draws
    iui = iui_full.sum(axis=1) - np.diag(iui_full)
    eui = sum_abs_e2.sum(axis=1) / n_draws
    denom = bu + iui + eui + 1.0
    noise_mean = sum_abs_s2 / n_draws + iui + eui
    noise_var = np.maximum(sumsq / n_draws - noise_mean ** 2, 0.0)
    denom_hw = 1.96 * np.sqrt(noise_var / n_draws)
    return {
        "ds": ds, "bu": bu, "iui": iui, "eui": eui,
        "sinr": ds / denom,
        "sinr_rel_halfwidth": denom_hw / denom,
        "resampled": resampled,
    }


def empirical_input_energy(mp: ModeAndPower, stats: ChannelStats, params: SystemParams,
                           n_draws: int = 10_000, seed: int = 0) -> dict:
    """Sample mean of the instantaneous harvester input and of its logistic
    response (the latter quantifies the Jensen gap of the mean-input shortcut)."""
    a = _require_binary(mp)
    rng = np.random.default_rng(seed)
    eh = EhParams.from_params(params)
    l_eu = params.L
    scale = (params.tau_c - params.tau) * stats.sigma2_w
    sum_e = np.zeros(l_eu)
    sum_e_sq = np.zeros(l_eu)
    sum_psi = np.zeros(l_eu)
    done, resampled = 0, 0
    while done < n_draws:
        n = min(_CHUNK, n_draws - done)
        w_pzf, w_pmrt, _, g_eu, rs = _chunk_precoders(stats, params, mp, rng, n)
        resampled += rs
        acc = np.zeros((n, l_eu))
        for m in range(params.M):
            if a[m]:
                gains = np.abs(np.einsum("dnl,dnk->dlk", g_eu[m].conj(), w_pzf[m])) ** 2
                acc += gains @ mp.eta_iu[m]
            elif l_eu:
                gains = np.abs(np.einsum("dnl,dnj->dlj", g_eu[m].conj(), w_pmrt[m])) ** 2
                acc += gains @ mp.eta_eu[m]
        energy = scale * (stats.rho * acc + 1.0)
        sum_e += energy.sum(axis=0)
        sum_e_sq += (energy ** 2).sum(axis=0)
        sum_psi += logistic_psi(energy, eh).sum(axis=0)
        done += n
    mean_e = sum_e / n_draws
    var_e = np.maximum(sum_e_sq / n_draws - mean_e ** 2, 0.0)
    return {
        "mean_energy": mean_e,
        "energy_halfwidth": 1.96 * np.sqrt(var_e / n_draws),
        "mean_psi": sum_psi / n_draws,
        "resampled": resampled,
    }


def empirical_ap_power(mp: ModeAndPower, stats: ChannelStats, params: SystemParams,
                       n_draws: int = 2_000, seed: int = 0) -> np.ndarray:
    """Symbol-averaged transmit power per AP (units of sigma_n^2), sample-averaged
    over channel draws; must respect the per-AP cap rho."""
    a = _require_binary(mp)
    rng = np.random.default_rng(seed)
    total = np.zeros(params.M)
    done = 0
    while done < n_draws:
        n = min(_CHUNK, n_draws - done)
        w_pzf, w_pmrt, _, _, _ = _chunk_precoders(stats, params, mp, rng, n)
        for m in range(params.M):
            w = w_pzf[m] if a[m] else w_pmrt[m]
            eta = mp.eta_iu[m] if a[m] else mp.eta_eu[m]
            if w is None or w.shape[-1] == 0:
                continue
            norms = (np.abs(w) ** 2).sum(axis=1)      # (n, users)
            total[m] += stats.rho * float((norms @ eta).sum())
        done += n
    return total / n_draws
