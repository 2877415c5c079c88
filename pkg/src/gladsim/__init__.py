"""gladsim: closed-loop H2M/R latency and coordinated-learning testbed.

Subpackages map to the testbed's concerns:

* `traffic` - generalized Pareto inter-arrival streams (sample, fit, KS test)
* `pon` - XG-PON latency via discrete-event simulation and Kingman G/G/1
* `haptic` - synthetic sessions, touch classification, feedback forecasting
* `coordination` - global profile registry and cold/warm machine onboarding
* `experiments` - scenario runners and report export
* `config` / `cli` - scenario files and the `gladsim` command
"""

__version__ = "0.1.0"

from .coordination import (
    GlobalRegistry,
    LocalAiState,
    MatchingPolicy,
    OnboardResult,
    ProfileRecord,
    SavingsRecord,
    aggregate_global,
    descriptor_of,
    match_profile,
    onboard_machine,
    run_savings_sweep,
    training_time_saved,
    upload_profile,
)
from .errors import (
    ConfigError,
    DegenerateDataError,
    GladsimError,
    InsufficientDataError,
    NotReadyError,
    ParameterError,
    ResourceLimitError,
    SaturationError,
)
from .experiments import (
    GladParams,
    Report,
    ScenarioConfig,
    export_report,
    run_latency_sweep,
    run_onboarding_study,
)
from .haptic import (
    ControlSample,
    ForecasterState,
    HapticSample,
    ObjectKind,
    ObjectProfile,
    TouchClassifier,
    cumulative_accuracy,
    estimate_tau,
    forecast_feedback,
    forecaster_update,
    generate_session,
    label_touch,
    optimize_alpha,
    train_classifier,
)
from .pon import (
    LatencyRecord,
    LatencySummary,
    LoadPoint,
    PonConfig,
    kingman_wait,
    max_span_meeting_deadline,
    propagation_delay,
    round_trip_no_ai,
    round_trip_with_ai,
    simulate_pon,
    transmission_time,
)
from .traffic import (
    ArrivalStream,
    GpdParams,
    fit_gpd,
    generate_stream,
    gpd_cdf,
    gpd_mean,
    ks_test,
    sample_gpd,
)
