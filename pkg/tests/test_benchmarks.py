import numpy as np
import pytest

from cfswipt.benchmarks import (
    b1_random_equal,
    b2_random_power_control,
    b3_orthogonal,
    exhaustive_mode_search,
    random_mode_vector,
)
from cfswipt.metrics import ModeAndPower, avg_input_energy, benchmark3_metrics
from cfswipt.network import ChannelStats, SystemParams, channel_stats, generate_layout
from cfswipt.sca import ScaOptions, run_sca

from conftest import toy_stats


@pytest.fixture(scope="module")
def small_setup():
    p = SystemParams(M=8, N=12, K_d=2, L=2, tau=4, area_m=60.0)
    layout = generate_layout(p, seed=1)
    return p, channel_stats(layout, p, seed=501)


class TestRandomModes:
    def test_deterministic_per_seed(self, desk_params):
        assert np.array_equal(random_mode_vector(desk_params, 5),
                              random_mode_vector(desk_params, 5))

    def test_degenerate_draws_resampled(self):
        p = SystemParams(M=2, N=8, K_d=1, L=1, tau=2, area_m=60.0)
        for seed in range(200):
            a = random_mode_vector(p, seed)
            assert 0 < a.sum() < p.M


class TestB1:
    def test_all_information_aps_leaves_leakage_only_harvest(self):
        # with every AP in information mode the harvest has no coherent term
        p = SystemParams(M=3, N=8, K_d=2, L=1, tau=3, area_m=60.0)
        beta_e = np.array([[2e-9], [3e-9], [4e-9]])
        stats = toy_stats(np.full((3, 2), 1e-9), beta_e, sigma2=2e-12, rho=1e9)
        mp = ModeAndPower(a=np.ones(3), eta_iu=np.full((3, 2), 0.5),
                          eta_eu=np.zeros((3, 1)))
        q = avg_input_energy(mp, stats, p)
        expected = (p.tau_c - p.tau) * 2e-12 * (1e9 * float(beta_e.sum()) + 1.0)
        assert q[0] == pytest.approx(expected, rel=1e-12)

    def test_equal_split_at_full_power(self, small_setup):
        p, stats = small_setup
        res = b1_random_equal(stats, p, seed=3)
        i_aps = res.a == 1
        assert np.all(res.eta_iu[i_aps] == 1.0 / p.K_d)
        assert np.all(res.eta_eu[~i_aps] == 1.0 / p.L)
        assert res.iterations == 0

    def test_deterministic(self, small_setup):
        p, stats = small_setup
        r1 = b1_random_equal(stats, p, seed=9, s_min=2.0, gamma_w=5e-6)
        r2 = b1_random_equal(stats, p, seed=9, s_min=2.0, gamma_w=5e-6)
        assert np.array_equal(r1.a, r2.a) and r1.sum_se == r2.sum_se


class TestB2:
    def test_remark4_zeroing_exact(self, small_setup):
        p, stats = small_setup
        res = b2_random_power_control(stats, p, "sum_se", seed=4, s_min=2.0,
                                      gamma_w=5e-6)
        assert np.all(res.eta_iu[res.a == 0] == 0.0)
        assert np.all(res.eta_eu[res.a == 1] == 0.0)

    def test_matches_proposed_when_given_its_modes(self, small_setup):
        # power control at the proposed scheme's own mode split recovers its
        # objective (mode-optimality sanity)
        p, stats = small_setup
        prop = run_sca("sum_se", stats, p, s_min=3.0, gamma_w=10e-6)
        assert prop.feasible
        refit = run_sca("sum_se", stats, p, s_min=3.0, gamma_w=10e-6, a_fixed=prop.a)
        assert refit.sum_se == pytest.approx(prop.sum_se, rel=0.01)

    def test_supports_all_objectives(self, small_setup):
        p, stats = small_setup
        for kind in ("sum_se", "ee", "sum_he", "maxmin_he"):
            res = b2_random_power_control(stats, p, kind, seed=6, s_min=2.0,
                                          gamma_w=5e-6)
            assert res.status in ("converged", "max-iter", "infeasible", "degraded")


class TestB3:
    def test_prelog_exactly_half(self, small_setup):
        p, stats = small_setup
        res = b3_orthogonal(stats, p, "sum_se", s_min=1.0, gamma_w=2e-6)
        assert res.feasible
        se, _, _ = benchmark3_metrics(res.eta_iu, res.eta_eu, stats, p)
        np.testing.assert_allclose(res.se, se, rtol=1e-12)

    def test_without_eus_energy_program_is_vacuous(self):
        p = SystemParams(M=4, N=12, K_d=2, L=0, tau=2, area_m=60.0)
        layout = generate_layout(p, seed=2)
        stats = channel_stats(layout, p, seed=2)
        res = b3_orthogonal(stats, p, "sum_se", s_min=1.0, gamma_w=0.0)
        assert res.feasible and res.sum_se > 0

    def test_unreachable_energy_target_zeroed(self, small_setup):
        p, stats = small_setup
        res = b3_orthogonal(stats, p, "sum_se", s_min=1.0, gamma_w=0.39e-3)
        assert not res.feasible and res.sum_se == 0.0

    def test_he_objectives_run(self, small_setup):
        p, stats = small_setup
        for kind in ("sum_he", "maxmin_he"):
            res = b3_orthogonal(stats, p, kind, s_min=1.0, gamma_w=2e-6)
            assert res.feasible
            assert res.sum_he > 0


class TestExhaustive:
    def test_symmetric_two_ap_instance(self):
        p = SystemParams(M=2, N=8, K_d=1, L=1, tau=2, area_m=60.0)
        beta = 2e-9
        stats = toy_stats(np.full((2, 1), beta), np.full((2, 1), beta),
                          sigma2=1.6e-12, rho=6e11)
        r01 = run_sca("sum_se", stats, p, 0.0, 1e-7, a_fixed=np.array([1.0, 0.0]))
        r10 = run_sca("sum_se", stats, p, 0.0, 1e-7, a_fixed=np.array([0.0, 1.0]))
        assert r01.sum_se == pytest.approx(r10.sum_se, rel=0.01)

    def test_single_feasible_assignment_recovered(self):
        # AP0 is the only one that can reach the EU; AP1 must serve the IU
        p = SystemParams(M=2, N=8, K_d=1, L=1, tau=2, area_m=60.0)
        stats = toy_stats(np.array([[1e-9], [5e-8]]), np.array([[1.5e-7], [1e-13]]),
                          sigma2=1.6e-12, rho=6e11)
        res = exhaustive_mode_search(stats, p, "sum_se", s_min=2.0, gamma_w=30e-6)
        assert res.feasible
        np.testing.assert_array_equal(res.a, [0.0, 1.0])

    def test_cap_enforced(self, desk_params, desk_stats):
        with pytest.raises(ValueError, match="M <= 10"):
            exhaustive_mode_search(desk_stats, desk_params, "sum_se")

    def test_no_feasible_assignment_gives_zero_record(self):
        p = SystemParams(M=2, N=8, K_d=1, L=1, tau=2, area_m=60.0)
        stats = toy_stats(np.full((2, 1), 1e-13), np.full((2, 1), 1e-13),
                          sigma2=1.6e-12, rho=6e11)
        res = exhaustive_mode_search(stats, p, "sum_se", s_min=30.0, gamma_w=100e-6)
        assert not res.feasible and res.sum_se == 0.0


class TestOrdering:
    def test_proposed_not_below_benchmarks_on_matched_instances(self, small_setup):
        p, _ = small_setup
        sums = {"proposed": 0.0, "b2": 0.0, "b1": 0.0, "b3": 0.0}
        for seed in range(4):
            layout = generate_layout(p, seed=seed)
            stats = channel_stats(layout, p, seed=seed)
            s_min, gamma = 6.0, 20e-6
            sums["proposed"] += run_sca("sum_se", stats, p, s_min, gamma).sum_se
            sums["b2"] += b2_random_power_control(stats, p, "sum_se", seed, s_min,
                                                  gamma).sum_se
            sums["b1"] += b1_random_equal(stats, p, seed, s_min, gamma).sum_se
            sums["b3"] += b3_orthogonal(stats, p, "sum_se", s_min, gamma).sum_se
        assert sums["proposed"] >= sums["b2"] >= sums["b1"]
        assert sums["proposed"] > sums["b3"]


class TestB2UserScaling:
    def test_feasibility_degrades_with_more_users(self):
        # same AP field, binding SE floor: more IU/EU pairs fail more often
        base = dict(M=16, N=12, area_m=60.0)
        outcomes = {}
        for k in (2, 4):
            p = SystemParams(K_d=k, L=k, tau=2 * k, **base)
            feas = 0
            for seed in range(8):
                layout = generate_layout(p, seed=seed)
                stats = channel_stats(layout, p, seed=seed)
                feas += b2_random_power_control(stats, p, "sum_se", seed,
                                                s_min=13.0, gamma_w=30e-6).feasible
            outcomes[k] = feas
        assert outcomes[4] <= outcomes[2]
