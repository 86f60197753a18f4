"""Global samplers: nested sampling, tempered SMC and a 1-D quadrature oracle."""

from .base import PriorBox, SamplerConfigError, WeightedSamples, merge_equal_weight
from .nested import NSConfig, nested_sampling, slice_step
from .quadrature import QuadratureError, grid_moments, posterior_quadrature
from .smc import SMCConfig, relative_ess, smc, systematic_resample

__all__ = [
    "PriorBox", "SamplerConfigError", "WeightedSamples", "merge_equal_weight",
    "NSConfig", "nested_sampling", "slice_step",
    "QuadratureError", "grid_moments", "posterior_quadrature",
    "SMCConfig", "relative_ess", "smc", "systematic_resample",
]
