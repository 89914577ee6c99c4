"""Filtering on matrix Lie groups in exponential coordinates.

Concentrated Gaussians on a group are propagated through their tangent-space
stochastic differential equation with an unscented transform and updated with
an unscented measurement step.
"""
from .cg import ConcentratedGaussian, OffsetGaussian, chi2, transport_law, whiten
from .errors import (CholeskyFail, CutLocus, NoConvergence, NotADerivation, NotInAlgebra, NotNormalCommuting,
                     PathEscape, Singular, SingularInnovation, StepReject, TagMismatch, TSFError)
from .groups import ROTBIAS_DP, ROTBIAS_SE3, S3, SE3, SE23, SO3, Quaternion, RotBias, group_by_name
from .measurement import MeasurementModel, magnetometer_h, ut_update
from .propagation import (Moments, SdeModel, ctut_propagate, ctut_step, ito_drift, map_propagate,
                          model_gyrobias_dp, model_gyrobias_se3, model_se3, model_se23, model_su2)

__version__ = "0.1.0"

__all__ = [
    "ConcentratedGaussian", "OffsetGaussian", "chi2", "transport_law", "whiten",
    "TSFError", "CholeskyFail", "CutLocus", "NoConvergence", "NotADerivation", "NotInAlgebra",
    "NotNormalCommuting", "PathEscape", "Singular", "SingularInnovation", "StepReject", "TagMismatch",
    "ROTBIAS_DP", "ROTBIAS_SE3", "S3", "SE3", "SE23", "SO3", "Quaternion", "RotBias", "group_by_name",
    "MeasurementModel", "magnetometer_h", "ut_update",
    "Moments", "SdeModel", "ctut_propagate", "ctut_step", "ito_drift", "map_propagate",
    "model_gyrobias_dp", "model_gyrobias_se3", "model_se3", "model_se23", "model_su2",
]
