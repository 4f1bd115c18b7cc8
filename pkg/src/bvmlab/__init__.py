"""Numerical laboratory for nonparametric Bernstein-von Mises phenomena under product priors."""

from .basis import BasisKind, BasisSpec, CoefficientField, index_set, synthesize
from .model import Observation, SignalKind, SignalSpec, make_signal, observe
from .norms import Flavor, NormSpec, h_delta_distance, norm
from .posterior import (
    CoordinatePosterior,
    GridOptions,
    PosteriorField,
    b_lk,
    contraction_risk,
    fit,
    posterior_mean,
    posterior_sample,
)
from .prior import (
    BaseDensity,
    Family,
    ProductPriorSpec,
    ScaleRule,
    check_condition,
    prior_sample,
    tail_mass,
    truncation_level,
)

__version__ = "0.1.0"
