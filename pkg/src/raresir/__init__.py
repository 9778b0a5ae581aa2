"""Rare-event simulation of uplink disconnection in a single wireless cell."""

__version__ = "0.1.0"

from .ldp import (  # noqa: E402
    DiscreteMeasure,
    Exponential,
    Gaussian,
    RateFit,
    SweepPoint,
    exponential_rate,
    fit_rate_linear,
    gaussian_rate,
    iid_mean_tail,
    rate_curve,
    relative_entropy,
)
from .pathloss import analytic_pathloss, db_to_linear, linear_to_db  # noqa: E402
from .rare import (  # noqa: E402
    CampaignConfig,
    conditional_heatmap,
    estimate_mean,
    estimate_tail,
    pick_b,
    run_campaign,
    run_count_heuristic,
    run_sweep,
    track_extremes,
)
from .sampler import SeedSpec, UserSample, derive_stream, jitter_points, sample_counts  # noqa: E402
from .scenario import (  # noqa: E402
    Scenario,
    build_intensity,
    calibrated_tau,
    generate_synthetic,
    load_pathloss_grid,
    load_scenario,
)
from .sir import (  # noqa: E402
    ThresholdSpec,
    disconnected_count,
    evaluate_outcome,
    threshold_lambda,
    total_received,
)
