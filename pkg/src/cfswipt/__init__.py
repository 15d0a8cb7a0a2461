"""Cell-free massive MIMO SWIPT: simulation, closed forms, and SCA optimizers."""

from .network import (
    ChannelStats,
    NetworkRealization,
    SystemParams,
    channel_stats,
    estimation_variance,
    generate_layout,
    large_scale_coefficients,
    noise_power,
    wrap_around_distance,
)
from .metrics import (
    EhDomainError,
    EhParams,
    ModeAndPower,
    PerUserMetrics,
    avg_input_energy,
    benchmark3_metrics,
    convex_upper_bound_xi,
    energy_efficiency,
    evaluate,
    inverse_psi,
    logistic_psi,
    nonlinear_he,
    required_input_energy,
    se_per_iu,
    sinr_ppzf,
    total_power,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
