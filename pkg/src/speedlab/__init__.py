"""Two-phase prompt screening for policy-gradient training, verified exactly.

The package pairs closed-form estimator theory (leave-one-out advantages,
gradient SNR, screening weight functions) with enumeration oracles on a
tabular softmax policy, and wraps the screening scheduler in a
discrete-event latency simulator so throughput claims become reproducible
desk-scale measurements.
"""

from .engine import (
    EngineResult,
    InferenceRequest,
    ItemResult,
    LatencyModel,
    LatentRateEngine,
    RequestItem,
    SampleRecord,
    SoftmaxPolicyEngine,
)
from .estimators import (
    CurriculumShape,
    SNRReport,
    gradient_estimator_moments_exact,
    policy_gradient_estimate,
    rloo_advantages,
    screened_gradient_exact,
    screened_gradient_weight,
    screened_objective,
    snr_bound_sharp,
    snr_bound_simple,
    snr_exact,
    snr_monte_carlo,
)
from .metrics import ClockReport, MetricsRecord, clock_report, records_to_jsonl, time_to_target
from .policy import (
    LATENT_RESPONSE,
    PolicyParams,
    TaskInstance,
    logprob_grad,
    pass_rate_exact,
    pass_rate_grad_exact,
    policy_probs,
    sample_responses,
)
from .population import (
    PolicyPopulationSpec,
    PopulationSpec,
    logit_for_pass_rate,
    make_policy_population,
    make_population,
    mean_exact_pass_rate,
)
from .rng import make_rng, split
from .scheduler import (
    Budget,
    BufferEntry,
    Counters,
    CurriculumConfig,
    EpochLoader,
    LoopError,
    SchedulerState,
    ScreeningResult,
    assemble_inference_request,
    draw_training_batch,
    ingest_responses,
    run_loop,
    screen,
)
from .trainer import (
    ImprovementReport,
    NInitCell,
    QuadraticHarness,
    TrainConfig,
    TrainResult,
    improvement_bound_check,
    ninit_sweep,
    prompt_row_gradient,
    train_baseline,
    train_speed,
)

__version__ = "0.1.0"
