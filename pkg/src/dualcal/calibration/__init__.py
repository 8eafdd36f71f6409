"""Constraint builders, distances, the calibration solver and closed forms."""

from .aux import (AuxSpec, build_aux, build_aux_case1, build_aux_case2, build_aux_case3,
                  build_aux_case4, build_aux_x_whole, build_aux_xa, build_aux_xa_zb,
                  build_group_poststrat, build_overlap_mean_constraint)
from .closed_form import greg_estimate, nab_calibrated, poststrat_closed_form, xa_combined_regression
from .distances import DISTANCE_NAMES, Distance, get_distance
from .restricted import calibrate_overlap_restricted
from .solver import CalibrationError, CalibrationResult, calibrate, regression_fit

__all__ = [
    "AuxSpec", "build_aux", "build_aux_case1", "build_aux_case2", "build_aux_case3",
    "build_aux_case4", "build_aux_x_whole", "build_aux_xa", "build_aux_xa_zb",
    "build_group_poststrat", "build_overlap_mean_constraint",
    "greg_estimate", "nab_calibrated", "poststrat_closed_form", "xa_combined_regression",
    "DISTANCE_NAMES", "Distance", "get_distance", "calibrate_overlap_restricted",
    "CalibrationError", "CalibrationResult", "calibrate", "regression_fit",
]
