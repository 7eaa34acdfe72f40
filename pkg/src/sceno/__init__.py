"""Certified surrogate analysis of black-box scenario fitness functions.

The toolkit learns a ReLU-network surrogate of an expensive scenario
fitness function, certifies the surrogate/ground-truth distance with a
sampling guarantee, soundly verifies threshold properties of the surrogate,
and maps the parameter space into quantified safe/unsafe regions.
"""

__version__ = "0.1.0"

from .errors import (
    ContractViolation,
    EvaluationError,
    ProtocolError,
    ScenoError,
    TrainingDiverged,
)
from .explorer import GridSpec, Heatmap, cell_box, explore, safe_region, unsafe_indicator
from .mlp import (
    Dataset,
    Mlp,
    TrainConfig,
    forward,
    forward_batch,
    grad_input,
    load_mlp,
    mlp_init,
    pgd_extremes,
    save_mlp,
    train,
)
from .pac import (
    OutlierReport,
    PacCertificate,
    estimate_lambda,
    outlier_filter,
    required_samples,
)
from .pipeline import LearnConfig, LearnResult, VerifyConfig, learn_surrogate, verify_scenario
from .scenario import (
    BlackBox,
    MeasureTrace,
    ParamDef,
    ParamSpace,
    SafetySpec,
    fitness_of_trace,
    is_safe,
)
from .subproc import SubprocessBlackBox
from .testbeds import (
    BrakingScenarioParams,
    CrossingScenarioParams,
    EgoControllerStub,
    SimClock,
    analytic_min_gap,
    builtin_blackbox,
    simulate_braking,
    simulate_crossing,
)
from .verifier import (
    BabResult,
    BoundResult,
    Box,
    VerificationResult,
    bab_min,
    certify,
    interval_bounds,
    relaxation_bounds,
    unit_box,
)
