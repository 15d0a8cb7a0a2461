import numpy as np
import pytest

from cfswipt.metrics import ModeAndPower, avg_input_energy, logistic_psi, EhParams, sinr_ppzf
from cfswipt.network import SystemParams, channel_stats, generate_layout
from cfswipt.oracle import (
    build_pmrt,
    build_pzf,
    draw_channels,
    empirical_ap_power,
    empirical_input_energy,
    empirical_sinr,
)


def oracle_params(**kw):
    base = dict(M=4, N=12, K_d=3, L=2, tau=5, area_m=1000.0)
    base.update(kw)
    return SystemParams(**base)


@pytest.fixture(scope="module")
def oracle_stats():
    p = oracle_params()
    layout = generate_layout(p, seed=21)
    return p, channel_stats(layout, p, seed=121)


def random_feasible_point(params, seed, n_iap=None):
    rng = np.random.default_rng(seed)
    a = np.zeros(params.M)
    n_iap = n_iap if n_iap is not None else max(1, params.M // 2)
    a[rng.permutation(params.M)[:n_iap]] = 1.0
    eta_iu = rng.uniform(0.2, 1.0, (params.M, params.K_d))
    eta_iu *= (a / eta_iu.sum(1))[:, None] * rng.uniform(0.6, 1.0, (params.M, 1))
    eta_eu = rng.uniform(0.2, 1.0, (params.M, max(params.L, 1)))[:, :params.L]
    if params.L:
        eta_eu *= ((1 - a) / eta_eu.sum(1))[:, None] * rng.uniform(0.6, 1.0, (params.M, 1))
    return ModeAndPower(a=a, eta_iu=eta_iu, eta_eu=eta_eu)


class TestDrawChannels:
    def test_zero_variance_gives_zero_estimate(self, oracle_stats):
        p, stats = oracle_stats
        zeroed = np.zeros_like(stats.gamma_iu)
        from cfswipt.network import ChannelStats
        st0 = ChannelStats(beta_iu=stats.beta_iu, beta_eu=stats.beta_eu,
                           gamma_iu=zeroed, gamma_eu=stats.gamma_eu,
                           sigma2_w=stats.sigma2_w, rho=stats.rho, rho_t=stats.rho_t)
        draw = draw_channels(st0, p, seed=0, n_draws=8)
        assert all(np.all(g == 0) for g in draw.ghat_iu)

    def test_empirical_variance_matches_gamma(self, oracle_stats):
        p, stats = oracle_stats
        draw = draw_channels(stats, p, seed=1, n_draws=10_000)
        for m in range(p.M):
            var = np.mean(np.abs(draw.ghat_iu[m]) ** 2, axis=(0, 1))
            np.testing.assert_allclose(var, stats.gamma_iu[m], rtol=0.03)

    def test_estimate_error_independent(self, oracle_stats):
        p, stats = oracle_stats
        draw = draw_channels(stats, p, seed=2, n_draws=10_000)
        cross = np.mean(draw.ghat_iu[0] * np.conj(draw.gerr_iu[0]), axis=(0, 1))
        scale = np.sqrt(stats.gamma_iu[0] * np.maximum(stats.nu_iu[0], 1e-30))
        assert np.all(np.abs(cross) < 0.05 * scale + 1e-15)


class TestPrecoders:
    def test_projection_algebra(self, oracle_stats):
        p, stats = oracle_stats
        rng = np.random.default_rng(3)
        ghat = (rng.standard_normal((p.N, p.K_d)) + 1j * rng.standard_normal((p.N, p.K_d)))
        ghat *= np.sqrt(stats.gamma_iu[0] / 2)
        w, b, bad = build_pzf(ghat, stats.gamma_iu[0], p.N - p.K_d)
        assert not bad
        assert np.max(np.abs(b @ b - b)) < 1e-10
        assert np.max(np.abs(b - b.conj().T)) < 1e-10
        assert np.max(np.abs(ghat.conj().T @ b)) < 1e-10
        assert np.trace(b).real == pytest.approx(p.N - p.K_d, abs=1e-8)

    def test_zero_forcing_cross_terms(self, oracle_stats):
        p, stats = oracle_stats
        draw = draw_channels(stats, p, seed=4, n_draws=16)
        w, b, bad = build_pzf(draw.ghat_iu[0], stats.gamma_iu[0], p.N - p.K_d)
        cross = np.einsum("dnk,dnl->dkl", draw.ghat_iu[0].conj(), w)
        off_diag = cross - np.einsum("dkk,kl->dkl", cross, np.eye(p.K_d))
        assert np.max(np.abs(off_diag)) < 1e-10

    def test_aligned_single_user_direction(self):
        # K_d = 1 with the estimate along e1: the precoder points along e1
        ghat = np.zeros((8, 1), dtype=complex)
        ghat[0, 0] = 2.0 + 0j
        w, _, _ = build_pzf(ghat, np.array([1.0]), 7)
        direction = np.zeros(8)
        direction[0] = 1.0
        np.testing.assert_allclose(np.abs(w[:, 0]) / np.linalg.norm(w), direction,
                                   atol=1e-12)

    def test_pmrt_orthogonal_to_iu_estimates(self, oracle_stats):
        p, stats = oracle_stats
        draw = draw_channels(stats, p, seed=5, n_draws=16)
        _, b, _ = build_pzf(draw.ghat_iu[0], stats.gamma_iu[0], p.N - p.K_d)
        w_e = build_pmrt(draw.ghat_eu[0], b, stats.gamma_eu[0], p.N - p.K_d)
        leak = np.einsum("dnk,dnl->dkl", draw.ghat_iu[0].conj(), w_e)
        assert np.max(np.abs(leak)) < 1e-10

    def test_pmrt_reduces_to_mrt_without_ius(self):
        p = oracle_params(K_d=0, L=1, N=8, tau=1)
        layout = generate_layout(p, seed=6)
        stats = channel_stats(layout, p, seed=6)
        draw = draw_channels(stats, p, seed=6, n_draws=4)
        w, b, _ = build_pzf(draw.ghat_iu[0], np.zeros(0), p.N)
        np.testing.assert_allclose(b[0], np.eye(p.N), atol=1e-14)
        w_e = build_pmrt(draw.ghat_eu[0], b, stats.gamma_eu[0], p.N)
        expected = draw.ghat_eu[0] / np.sqrt(p.N * stats.gamma_eu[0])
        np.testing.assert_allclose(w_e, expected, atol=1e-12)

    def test_unit_average_norm(self, oracle_stats):
        p, stats = oracle_stats
        draw = draw_channels(stats, p, seed=7, n_draws=10_000)
        w, b, _ = build_pzf(draw.ghat_iu[1], stats.gamma_iu[1], p.N - p.K_d)
        norms = np.mean(np.abs(w) ** 2, axis=(0, 1)) * p.N
        np.testing.assert_allclose(norms, 1.0, rtol=0.01)
        w_e = build_pmrt(draw.ghat_eu[1], b, stats.gamma_eu[1], p.N - p.K_d)
        norms_e = np.mean(np.abs(w_e) ** 2, axis=(0, 1)) * p.N
        np.testing.assert_allclose(norms_e, 1.0, rtol=0.01)


class TestEmpiricalSinr:
    def test_requires_binary_modes(self, oracle_stats):
        p, stats = oracle_stats
        mp = random_feasible_point(p, 0)
        mp.a[0] = 0.5
        with pytest.raises(ValueError):
            empirical_sinr(mp, stats, p, n_draws=10, seed=0)

    def test_no_eus_no_eui(self):
        p = oracle_params(L=0, tau=3)
        layout = generate_layout(p, seed=8)
        stats = channel_stats(layout, p, seed=8)
        mp = random_feasible_point(p, 8)
        out = empirical_sinr(mp, stats, p, n_draws=500, seed=8)
        assert np.all(out["eui"] == 0.0)

    def test_perfect_csi_kills_bu_and_iui(self):
        p = oracle_params(M=3, area_m=100.0, rho_t_tilde_w=2.5e3)
        layout = generate_layout(p, seed=9)
        stats = channel_stats(layout, p, seed=9)
        mp = random_feasible_point(p, 9)
        out = empirical_sinr(mp, stats, p, n_draws=2000, seed=9)
        assert np.all(out["bu"] < 1e-3 * out["ds"])
        assert np.all(out["iui"] < 1e-3 * out["ds"])

    def test_matches_closed_form_sinr(self, oracle_stats):
        p, stats = oracle_stats
        mp = random_feasible_point(p, 10)
        out = empirical_sinr(mp, stats, p, n_draws=10_000, seed=10)
        closed = sinr_ppzf(mp, stats, p)
        np.testing.assert_allclose(out["sinr"], closed, rtol=0.02)

    def test_ds_term_matches_coherent_gain(self, oracle_stats):
        p, stats = oracle_stats
        mp = random_feasible_point(p, 11)
        out = empirical_sinr(mp, stats, p, n_draws=10_000, seed=11)
        expected = stats.rho * (p.N - p.K_d) * np.array(
            [np.sum(np.sqrt(mp.a * mp.eta_iu[:, k] * stats.gamma_iu[:, k])) ** 2
             for k in range(p.K_d)])
        np.testing.assert_allclose(out["ds"], expected, rtol=0.03)


class TestEmpiricalEnergy:
    def test_matches_exact_mean(self, oracle_stats):
        p, stats = oracle_stats
        mp = random_feasible_point(p, 12)
        out = empirical_input_energy(mp, stats, p, n_draws=10_000, seed=12)
        closed = avg_input_energy(mp, stats, p)
        np.testing.assert_allclose(out["mean_energy"], closed, rtol=0.02)

    def test_jensen_direction_below_midpoint(self, oracle_stats):
        # logistic response is convex below its midpoint, so the sample mean of
        # psi(E) sits above psi at the mean input when inputs stay sub-chi
        p, stats = oracle_stats
        mp = random_feasible_point(p, 13)
        closed = avg_input_energy(mp, stats, p)
        eh = EhParams.from_params(p)
        out = empirical_input_energy(mp, stats, p, n_draws=4000, seed=13)
        below = closed < 0.5 * eh.chi
        if below.any():
            psi_of_mean = np.asarray(logistic_psi(closed, eh))
            assert np.all(out["mean_psi"][below] >= psi_of_mean[below] * (1 - 1e-6))

    def test_error_shrinks_with_draws(self, oracle_stats):
        p, stats = oracle_stats
        mp = random_feasible_point(p, 14)
        closed = avg_input_energy(mp, stats, p)

        def err(n, seed):
            out = empirical_input_energy(mp, stats, p, n_draws=n, seed=seed)
            return np.max(np.abs(out["mean_energy"] - closed) / closed)
        coarse = np.median([err(500, s) for s in range(5)])
        fine = np.median([err(8000, s) for s in range(5)])
        # ~1/sqrt(n): 16x the draws should cut the error about 4x; allow slack
        assert fine < 0.6 * coarse


class TestApPowerConstraint:
    def test_sample_power_within_cap(self, oracle_stats):
        p, stats = oracle_stats
        rng = np.random.default_rng(15)
        a = np.zeros(p.M)
        a[:2] = 1.0
        eta_iu = np.zeros((p.M, p.K_d))
        eta_iu[:2] = 1.0 / p.K_d        # full power at the cap
        eta_eu = np.zeros((p.M, p.L))
        eta_eu[2:] = 1.0 / p.L
        mp = ModeAndPower(a=a, eta_iu=eta_iu, eta_eu=eta_eu)
        power = empirical_ap_power(mp, stats, p, n_draws=4000, seed=15)
        assert np.all(power <= stats.rho * 1.01)
        np.testing.assert_allclose(power, stats.rho, rtol=0.01)
