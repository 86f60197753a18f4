"""Time-delay likelihoods for paired light curves under a damped-random-walk GP."""

__version__ = "0.1.0"

from .gp import (
    LOGZERO,
    HyperParams,
    LightCurveFormatError,
    LightCurvePair,
    ObservationGrid,
    PredictiveDecomposition,
    build_joint_covariance,
    is_impossible,
    kernel_eval,
    log_likelihood,
    predictive_decomposition,
    read_light_curve,
    single_curve_log_likelihood,
    whiten,
    write_light_curve,
)
from .statespace import DelayLikelihood, JointLikelihood, ou_pair_loglik
from .synth import EnsembleSpec, make_rng, sample_ensemble, sample_pair, stream
