"""Calibration with the common overlap-mean restriction."""

from __future__ import annotations

from ..data import DualFrameSample, FrameMeta
from .aux import build_aux_case1, build_aux_case3, build_overlap_mean_constraint
from .closed_form import poststrat_closed_form
from .solver import CalibrationResult, calibrate


def calibrate_overlap_restricted(sample: DualFrameSample, meta: FrameMeta, eta: float,
                                 variable: str, distance="kullback_leibler",
                                 x_vars=(), **solver_options) -> CalibrationResult:
    """Calibrate to the domain sizes (and frame totals of ``x_vars`` if given)
    while forcing the s_ab and s_ba means of ``variable`` to agree.

    Starts from the complete post-stratification weights rather than the
    Hartley weights.  With the Kullback-Leibler distance this reproduces the
    dual-frame pseudo-empirical-likelihood estimator, whose domain
    probabilities are anchored at the Hajek weights.
    """
    start = poststrat_closed_form(sample, meta, eta)
    if x_vars:
        x_vars = list(x_vars)
        spec = build_aux_case3(meta, eta, x_vars[0], x_vars[1] if len(x_vars) > 1 else None)
    else:
        spec = build_aux_case1(meta, eta)
    spec = build_overlap_mean_constraint(spec, eta, meta, variable)
    return calibrate(start, spec, distance, **solver_options)
