"""Design variance, linearization and jackknife variance estimation.

Frames A and B are sampled independently, so every variance here is the sum
of a frame-A component and a frame-B component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy import stats

from .data import DualFrameSample

METHODS = ("linearization", "jackknife", "jackknife_fpc")


class VarianceError(ValueError):
    """Variance is undefined for the given sample/design (e.g. singleton stratum)."""


@dataclass(frozen=True)
class FrameDesign:
    """Sampling design of one frame.

    ``kind`` is ``"srswor"``, ``"stratified_srswor"`` or ``"unequal"``.
    Stratum population sizes are keyed by the stratum ids used in the sample.
    Unequal-probability designs take ``pi_k = 1/d_k`` and use the
    Hajek-Deville variance approximation.
    """

    kind: str = "srswor"
    N: float | None = None
    stratum_sizes: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.kind not in ("srswor", "stratified_srswor", "unequal"):
            raise ValueError(f"unknown design kind {self.kind!r}")

    @property
    def stratified(self) -> bool:
        return self.kind == "stratified_srswor"


def default_designs(sample: DualFrameSample) -> dict[str, FrameDesign]:
    """SRSWOR per frame, stratified when the sample carries stratum ids.

    Population sizes come from the sample metadata when known; stratum
    sizes are then estimated by summing design weights.
    """
    meta = sample.meta
    out = {}
    for frame, strata, N in (("A", sample.stratum_A, meta.N_A), ("B", sample.stratum_B, meta.N_B)):
        mask = sample.in_sample_A if frame == "A" else sample.in_sample_B
        if strata is not None and all(v is not None for v in strata[mask]):
            out[frame] = FrameDesign("stratified_srswor", N)
        else:
            out[frame] = FrameDesign("srswor", N)
    return out


def parse_designs(entries: Mapping[str, str], sample: DualFrameSample) -> dict[str, FrameDesign]:
    """Read ``design.<frame>`` and ``strata.<frame>.<id>`` entries of a key-value
    config, falling back to :func:`default_designs` for missing frames."""
    designs = default_designs(sample)
    for frame in ("A", "B"):
        kind = entries.get(f"design.{frame}")
        prefix = f"strata.{frame}."
        sizes = {k[len(prefix):]: float(v) for k, v in entries.items() if k.startswith(prefix)}
        if kind is None and not sizes:
            continue
        kind = kind or designs[frame].kind
        designs[frame] = FrameDesign(kind, designs[frame].N, sizes or None)
    return designs


def _srswor_variance(values, N):
    n = len(values)
    if n < 2:
        raise VarianceError("variance undefined with fewer than 2 sampled units")
    if n > N:
        raise VarianceError(f"sample size {n} exceeds population size {N}")
    s2 = float(np.var(values, ddof=1))
    return N * N * (1.0 - n / N) * s2 / n


def _hajek_deville(values, weights):
    n = len(values)
    if n < 2:
        raise VarianceError("variance undefined with fewer than 2 sampled units")
    pi = 1.0 / weights
    expanded = values * weights
    c = (1.0 - pi) * n / (n - 1)
    if c.sum() == 0:
        return 0.0
    centre = np.dot(c, expanded) / c.sum()
    return float(np.dot(c, (expanded - centre) ** 2))


def design_variance_ht(values, weights, design: FrameDesign, strata=None) -> float:
    """Estimated variance of the Horvitz-Thompson total ``sum(weights * values)``.

    Parameters
    ----------
    values : array_like
        Per-unit values for the units sampled from one frame.
    weights : array_like
        Design weights ``1/pi_k`` of those units.
    design : FrameDesign
    strata : array_like, optional
        Stratum ids, required for stratified designs.

    Raises
    ------
    VarianceError
        If a contributing stratum has fewer than two sampled units.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if design.kind == "unequal":
        return _hajek_deville(values, weights)
    if design.kind == "srswor":
        N = design.N if design.N is not None else float(weights.sum())
        return _srswor_variance(values, N)
    if strata is None:
        raise VarianceError("stratified design requires stratum ids")
    strata = np.asarray(strata, dtype=object)
    total = 0.0
    for h in _ordered_unique(strata):
        mask = strata == h
        if mask.sum() < 2:
            raise VarianceError(f"stratum {h!r} has fewer than 2 sampled units")
        if design.stratum_sizes is not None:
            try:
                N_h = design.stratum_sizes[h]
            except KeyError:
                raise VarianceError(f"no population size for stratum {h!r}") from None
        else:
            N_h = float(weights[mask].sum())
        total += _srswor_variance(values[mask], N_h)
    return total


def _ordered_unique(labels) -> list:
    seen = {}
    for v in labels:
        seen.setdefault(v, None)
    return sorted(seen, key=str)


def frame_variance(sample: DualFrameSample, contributions, designs: Mapping[str, FrameDesign]) -> tuple[float, float]:
    """Frame-wise variance of ``sum_k contributions_k`` where each unit contributes
    through the design of the frame it was drawn from.

    ``contributions`` are weighted values (``c_k = base_k * e_k``); they are
    converted back to per-unit values by dividing by the frame design weight.
    """
    contributions = np.asarray(contributions, dtype=float)
    parts = []
    for frame, mask, weights, strata in (
            ("A", sample.in_sample_A, sample.d_A, sample.stratum_A),
            ("B", sample.in_sample_B, sample.d_B, sample.stratum_B)):
        if not mask.any():
            parts.append(0.0)
            continue
        w = weights[mask]
        design = designs[frame]
        parts.append(design_variance_ht(
            contributions[mask] / w, w, design,
            None if strata is None else strata[mask]))
    return parts[0], parts[1]


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceEstimate:
    point: float
    variance: float
    method: str
    ci_level: float
    lb: float
    ub: float
    length: float
    components: tuple[float, float] | None = None

    @property
    def se(self) -> float:
        return math.sqrt(self.variance)

    def covers(self, value: float) -> bool:
        return self.lb <= value <= self.ub

    def as_dict(self) -> dict:
        return {"point": self.point, "variance": self.variance, "method": self.method,
                "ci_level": self.ci_level, "lb": self.lb, "ub": self.ub,
                "length": self.length}


def confidence_interval(point: float, variance: float, level: float = 0.95) -> tuple[float, float, float]:
    """Normal-theory interval ``point +/- z * sqrt(variance)``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    half = stats.norm.ppf(0.5 + level / 2.0) * math.sqrt(variance)
    return float(point - half), float(point + half), float(2.0 * half)


def _make_estimate(point, variance, method, level, components=None):
    lb, ub, length = confidence_interval(point, variance, level)
    return VarianceEstimate(point=float(point), variance=float(variance), method=method,
                            ci_level=level, lb=lb, ub=ub, length=length,
                            components=components)


def linearization_variance(base, spec, variable: str, designs: Mapping[str, FrameDesign],
                           point: float | None = None, level: float = 0.95) -> VarianceEstimate:
    """Residual-technique variance of a calibration estimator.

    Residuals come from the base-weighted least-squares fit of ``variable``
    on the constraint columns of ``spec``; the variance is that of the
    base-weighted residual total, frame A and frame B components summed.
    Works for both Hartley (``d°``) and single-frame (``d*``) base weights.

    ``point`` defaults to the GREG estimate.
    """
    from .calibration.solver import regression_fit

    sample = base.sample
    y = sample.variable(variable)
    beta, X, keep, d = regression_fit(base, spec, y)
    y = np.where(d != 0, y, 0.0)
    residuals = y - X[:, keep] @ beta
    contrib = np.where(d > 0, d * residuals, 0.0)
    comp = frame_variance(sample, contrib, designs)
    if point is None:
        point = float(np.dot(d, y) + np.dot(spec.targets[keep] - X[:, keep].T @ d, beta))
    return _make_estimate(point, comp[0] + comp[1], "linearization", level, comp)


# --------------------------------------------------------------------------
# Jackknife


class JackknifeError(RuntimeError):
    pass


def _jackknife_groups(sample: DualFrameSample, frame: str, design: FrameDesign):
    if frame == "A":
        mask, strata = sample.in_sample_A, sample.stratum_A
    else:
        mask, strata = sample.in_sample_B, sample.stratum_B
    idx = np.flatnonzero(mask)
    if design.stratified:
        if strata is None:
            raise VarianceError(f"stratified design for frame {frame} needs stratum ids")
        labels = strata[idx]
        return [(h, idx[labels == h]) for h in _ordered_unique(labels)]
    return [(None, idx)]


def _replicate(sample: DualFrameSample, frame: str, group_idx, drop: int) -> DualFrameSample:
    n_g = len(group_idx)
    factor = n_g / (n_g - 1.0)
    if frame == "A":
        d_A = sample.d_A.copy()
        d_A[group_idx] *= factor
        rescaled = sample.with_weights(d_A=d_A)
    else:
        d_B = sample.d_B.copy()
        d_B[group_idx] *= factor
        rescaled = sample.with_weights(d_B=d_B)
    keep = np.ones(len(sample), dtype=bool)
    keep[drop] = False
    return rescaled.take(keep)


def jackknife_variance(sample: DualFrameSample, estimator: Callable[[DualFrameSample], float],
                       designs: Mapping[str, FrameDesign], fpc: bool = False,
                       level: float = 0.95, point: float | None = None,
                       n_jobs: int | None = None) -> VarianceEstimate:
    """Delete-one jackknife, stratified when the frame design is stratified.

    ``estimator`` is re-run on every replicate sample, so calibration is
    re-solved each time.  Within the deleted unit's stratum (or frame, if
    unstratified) the remaining design weights are scaled by
    ``n_h / (n_h - 1)``.  With ``fpc`` the squared deviations in each group
    are shrunk by ``1 - mean(pi)`` over the group's sampled units.

    Raises
    ------
    JackknifeError
        When the estimator fails on a replicate; the message names the
        deleted unit.
    VarianceError
        On a stratum with a single sampled unit.
    """
    if point is None:
        point = float(estimator(sample))
    jobs = []
    groups = []
    for frame in ("A", "B"):
        weights = sample.d_A if frame == "A" else sample.d_B
        for label, idx in _jackknife_groups(sample, frame, designs[frame]):
            if len(idx) == 0:
                continue
            if len(idx) < 2:
                raise VarianceError(
                    f"frame {frame} stratum {label!r} has a single sampled unit")
            shrink = 1.0 - float(np.mean(1.0 / weights[idx])) if fpc else 1.0
            groups.append((frame, len(jobs), len(idx), shrink))
            jobs.extend((frame, idx, i) for i in idx)

    def run(job):
        frame, idx, i = job
        try:
            return float(estimator(_replicate(sample, frame, idx, i)))
        except Exception as exc:  # noqa: BLE001 - re-raised with unit identity
            raise JackknifeError(
                f"replicate deleting unit {sample.ids[i]!r} from frame {frame} failed: {exc}"
            ) from exc

    if n_jobs in (None, 1):
        values = [run(job) for job in jobs]
    else:
        from joblib import Parallel, delayed
        values = Parallel(n_jobs=n_jobs)(delayed(run)(job) for job in jobs)
    values = np.asarray(values)

    comps = {"A": 0.0, "B": 0.0}
    for frame, start, n_g, shrink in groups:
        block = values[start:start + n_g]
        mean = math.fsum(block) / n_g
        comps[frame] += shrink * (n_g - 1.0) / n_g * math.fsum((block - mean) ** 2)
    method = "jackknife_fpc" if fpc else "jackknife"
    return _make_estimate(point, comps["A"] + comps["B"], method, level,
                          (comps["A"], comps["B"]))
