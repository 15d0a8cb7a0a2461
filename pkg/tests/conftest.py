import numpy as np
import pytest

from cfswipt.network import ChannelStats, SystemParams, channel_stats, generate_layout


@pytest.fixture(scope="session")
def desk_params() -> SystemParams:
    """Dense 60 m layout where tens-of-uJ harvest targets bind but are reachable."""
    return SystemParams(M=20, N=12, K_d=3, L=3, tau=6, area_m=60.0)


@pytest.fixture(scope="session")
def desk_stats(desk_params):
    layout = generate_layout(desk_params, seed=3)
    return channel_stats(layout, desk_params, seed=103)


def toy_stats(beta_iu, beta_eu, gamma_iu=None, gamma_eu=None, sigma2=1e-12, rho=1e9,
              rho_t=1e9):
    """Hand-built ChannelStats for closed-form collapse tests."""
    beta_iu = np.atleast_2d(np.asarray(beta_iu, dtype=float))
    beta_eu = np.atleast_2d(np.asarray(beta_eu, dtype=float))
    return ChannelStats(
        beta_iu=beta_iu,
        beta_eu=beta_eu,
        gamma_iu=beta_iu.copy() if gamma_iu is None else np.atleast_2d(gamma_iu),
        gamma_eu=beta_eu.copy() if gamma_eu is None else np.atleast_2d(gamma_eu),
        sigma2_w=sigma2, rho=rho, rho_t=rho_t,
    )
