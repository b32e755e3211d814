"""Control importance distribution algorithm (CIDA) workbench.

Particle filtering, a barrier-function safety policy, randomized search over
control sequences with scenario-based safety certification, and the unicycle
obstacle-avoidance benchmark.
"""

from .core import (
    ChanceParams,
    ControlBounds,
    DiagGaussian,
    RngStream,
    hoeffding_min_samples,
    sample_diag_gaussian,
)
from .dynamics import StochasticModel, UnicycleParams, sinc_stable, unicycle_measure, unicycle_model, unicycle_step
from .engine import (
    CidaConfig,
    RolloutCandidate,
    StageCost,
    certainty_equivalence_sequence,
    cida_step,
    evaluate_candidate,
    sample_control_sequence,
    select_fallback,
)
from .particle_filter import ParticleSet, conditional_mean, measurement_weights, resample, time_update
from .safety import (
    CircularBarrier,
    HeadingTrackingPolicy,
    OrbitField,
    SafeSet,
    barrier_gradient,
    barrier_value,
    heading_tracking_policy,
    is_safe,
    qp_safety_filter,
    safe_heading,
    vector_field_heading,
)

__version__ = "0.1.0"
