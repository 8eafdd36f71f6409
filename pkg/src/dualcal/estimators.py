"""Base design weights and non-calibrated dual-frame estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data import DualFrameSample, FrameMeta, SampleValidationError, require_valid
from .variance import FrameDesign, design_variance_ht


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Per-unit weights aligned with ``sample``.

    ``tag`` is ``"hartley"``, ``"single_frame"`` or ``"calibrated"``;
    ``eta`` is set for Hartley-based weights.
    """

    values: np.ndarray
    sample: DualFrameSample
    tag: str
    eta: float | None = None
    info: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if len(self.values) != len(self.sample):
            raise ValueError("weights and sample differ in length")

    def as_dict(self) -> dict[str, float]:
        return {str(i): float(w) for i, w in zip(self.sample.ids, self.values)}

    def __len__(self):
        return len(self.values)


def check_eta(eta) -> float:
    eta = float(eta)
    if not 0.0 <= eta <= 1.0 or math.isnan(eta):
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    return eta


def hartley_weights(sample: DualFrameSample, eta: float) -> WeightVector:
    """Hartley weights ``d°``: ``d_A`` on s_a, ``eta*d_A`` on s_ab,
    ``(1-eta)*d_B`` on s_ba, ``d_B`` on s_b."""
    eta = check_eta(eta)
    require_valid(sample, "dual")
    m = sample.masks
    d = np.zeros(len(sample))
    d[m["a"]] = sample.d_A[m["a"]]
    d[m["ab"]] = eta * sample.d_A[m["ab"]]
    d[m["ba"]] = (1.0 - eta) * sample.d_B[m["ba"]]
    d[m["b"]] = sample.d_B[m["b"]]
    return WeightVector(d, sample, "hartley", eta)


def multiplicity_weights(d_A, d_B) -> np.ndarray:
    """Overlap weight ``(1/d_A + 1/d_B)^-1``."""
    return 1.0 / (1.0 / np.asarray(d_A, dtype=float) + 1.0 / np.asarray(d_B, dtype=float))


def single_frame_weights(sample: DualFrameSample) -> WeightVector:
    """Single-frame weights ``d*``; overlap units need both design weights."""
    require_valid(sample, "single")
    m = sample.masks
    overlap = m["ab"] | m["ba"]
    d = np.where(m["a"], sample.d_A, sample.d_B)
    d[overlap] = multiplicity_weights(sample.d_A[overlap], sample.d_B[overlap])
    return WeightVector(d, sample, "single_frame")


def base_weights(sample: DualFrameSample, approach: str, eta: float | None = None) -> WeightVector:
    if approach == "dual":
        if eta is None:
            raise ValueError("dual-frame weights need eta")
        return hartley_weights(sample, eta)
    if approach == "single":
        return single_frame_weights(sample)
    raise ValueError(f"approach must be 'dual' or 'single', got {approach!r}")


def weighted_total(weights: WeightVector, variable) -> float:
    """``sum_k w_k y_k``; ``variable`` is a name in the sample or an array."""
    if isinstance(variable, str):
        values = weights.sample.variable(variable)
    else:
        values = np.asarray(variable, dtype=float)
    used = weights.values != 0
    if np.isnan(values[used]).any():
        name = variable if isinstance(variable, str) else "values"
        raise ValueError(f"{name} missing on a unit with nonzero weight")
    return float(np.dot(weights.values[used], values[used]))


@dataclass(frozen=True)
class DomainSizeEstimates:
    N_a: float
    N_ab: float
    N_ba: float
    N_b: float
    N_abS: float | None = None
    v_N_ab: float | None = None
    v_N_ba: float | None = None

    @property
    def N_A(self) -> float:
        """Frame-A Horvitz-Thompson size ``N_a + N_ab``."""
        return self.N_a + self.N_ab

    @property
    def N_B(self) -> float:
        return self.N_b + self.N_ba


def domain_size_estimates(sample: DualFrameSample,
                          designs: Mapping[str, FrameDesign] | None = None) -> DomainSizeEstimates:
    """Weighted domain counts; overlap variances when ``designs`` is given.

    ``N_abS`` (the single-frame overlap size) is filled only when every
    overlap unit carries both design weights.
    """
    m = sample.masks
    N_a = float(sample.d_A[m["a"]].sum())
    N_ab = float(sample.d_A[m["ab"]].sum())
    N_ba = float(sample.d_B[m["ba"]].sum())
    N_b = float(sample.d_B[m["b"]].sum())
    overlap = m["ab"] | m["ba"]
    N_abS = None
    if not (np.isnan(sample.d_A[overlap]).any() or np.isnan(sample.d_B[overlap]).any()):
        N_abS = float(multiplicity_weights(sample.d_A[overlap], sample.d_B[overlap]).sum())
    v_ab = v_ba = None
    if designs is not None:
        A = sample.in_sample_A
        B = sample.in_sample_B
        v_ab = design_variance_ht(m["ab"][A].astype(float), sample.d_A[A], designs["A"],
                                  None if sample.stratum_A is None else sample.stratum_A[A])
        v_ba = design_variance_ht(m["ba"][B].astype(float), sample.d_B[B], designs["B"],
                                  None if sample.stratum_B is None else sample.stratum_B[B])
    return DomainSizeEstimates(N_a, N_ab, N_ba, N_b, N_abS, v_ab, v_ba)


def estimate_eta(meta: FrameMeta, sizes: DomainSizeEstimates) -> float:
    """Variance-based choice of the Hartley mixing constant.

    ``eta = N_a N_B v(N_ba) / (N_b N_A v(N_ab) + N_a N_B v(N_ba))``.  When
    ``N_ab`` is unknown the domain shares ``N_a/N_A`` and ``N_b/N_B`` are
    replaced by their sample estimates.
    """
    if sizes.v_N_ab is None or sizes.v_N_ba is None:
        raise ValueError("eta estimation needs variance estimates of N_ab and N_ba")
    if meta.N_A is None or meta.N_B is None:
        raise ValueError("eta estimation needs N_A and N_B")
    if meta.N_ab is not None:
        share_a = meta.N_a / meta.N_A
        share_b = meta.N_b / meta.N_B
    else:
        share_a = sizes.N_a / sizes.N_A
        share_b = sizes.N_b / sizes.N_B
    num = share_a * sizes.v_N_ba
    den = share_b * sizes.v_N_ab + num
    if den == 0:
        raise ValueError("eta undefined: both overlap variance estimates are zero")
    return float(num / den)


def nab_pml_combination(sizes: DomainSizeEstimates) -> float:
    """``theta*N_ab + (1-theta)*N_ba`` with ``theta = v(N_ba)/(v(N_ab)+v(N_ba))``."""
    if sizes.v_N_ab is None or sizes.v_N_ba is None:
        raise ValueError("need variance estimates of N_ab and N_ba")
    den = sizes.v_N_ab + sizes.v_N_ba
    if den == 0:
        raise ValueError("theta undefined: both overlap variance estimates are zero")
    theta = sizes.v_N_ba / den
    return float(theta * sizes.N_ab + (1.0 - theta) * sizes.N_ba)


def sfrr_nab(sample: DualFrameSample, meta: FrameMeta, **solver_options) -> float:
    """Raking-ratio overlap size: sum over the overlap of single-frame weights
    calibrated by raking to the frame sizes ``N_A``, ``N_B``."""
    from .calibration import build_aux_case2, calibrate

    result = calibrate(single_frame_weights(sample), build_aux_case2(meta), "raking",
                       **solver_options)
    m = sample.masks
    return float(result.weights.values[m["ab"] | m["ba"]].sum())


def sfrr_quadratic_root(sample: DualFrameSample, meta: FrameMeta) -> float:
    """Smallest root of ``N_abS t^2 - (N_abS (N_A+N_B) + N_a N_b) t + N_abS N_A N_B``.

    This is the fixed point of raking the single-frame weights to the frame
    margins (``N_a``, ``N_b``, ``N_abS`` are single-frame weighted counts),
    used to cross-check :func:`sfrr_nab`.
    """
    sizes = domain_size_estimates(sample)
    if sizes.N_abS is None:
        raise SampleValidationError("overlap units need both design weights")
    a = sizes.N_abS
    b = -(sizes.N_abS * (meta.N_A + meta.N_B) + sizes.N_a * sizes.N_b)
    c = sizes.N_abS * meta.N_A * meta.N_B
    disc = math.sqrt(b * b - 4 * a * c)
    # numerically stable form of (-b - disc) / (2a)
    return (2 * c) / (-b + disc)
