"""Calibration estimators for dual-frame surveys."""

from .calibration import (AuxSpec, CalibrationError, CalibrationResult, build_aux, calibrate,
                          greg_estimate, nab_calibrated, poststrat_closed_form)
from .data import (DualFrameSample, FrameMeta, SampleValidationError, UnitRecord, load_meta,
                   load_sample, save_sample, validate_for_approach)
from .estimators import (WeightVector, base_weights, domain_size_estimates, estimate_eta,
                         hartley_weights, single_frame_weights, weighted_total)
from .estimator import Calibrator, DualFrameCalibration
from .variance import (FrameDesign, VarianceEstimate, confidence_interval, jackknife_variance,
                       linearization_variance)

__version__ = "0.1.0"
