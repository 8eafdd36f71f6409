"""Monte Carlo harness: repeated sampling from a fixed population."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..calibration import (CalibrationError, build_aux, calibrate,
                           calibrate_overlap_restricted)
from ..calibration.distances import DISTANCE_NAMES, get_distance
from ..data import DualFrameSample, FrameMeta
from ..estimators import (base_weights, domain_size_estimates, estimate_eta, hartley_weights,
                          sfrr_nab, single_frame_weights, weighted_total)
from ..variance import jackknife_variance, linearization_variance
from .population import Population, ScenarioConfig, generate_population
from .sampling import draw_sample, frame_designs

log = logging.getLogger(__name__)

SHORT_DISTANCE = {"euclidean": "EUC", "raking": "RAK", "logit": "LOG", "kullback_leibler": "KL"}
FAILURE_LIMIT = 0.01


class MonteCarloAbort(RuntimeError):
    """More than 1% of the replicates failed for some estimator."""


class EstimationFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimatorSpec:
    """One estimator of the study.

    ``kind`` is ``HAR``, ``SF``, ``SFRR`` or ``CAL``; ``restricted`` adds the
    common overlap-mean constraint to a dual-frame CAL estimator.
    """

    kind: str
    approach: str
    case: str | None = None
    distance: str | None = None
    restricted: bool = False

    @property
    def name(self) -> str:
        if self.kind != "CAL":
            return self.kind
        name = f"CAL-{SHORT_DISTANCE[self.distance]}"
        return name + "+R" if self.restricted else name

    @property
    def label(self) -> str:
        parts = [self.name, self.approach]
        if self.case is not None:
            parts.append(f"case{self.case}")
        return "/".join(parts)


def default_estimators(distances: Sequence[str] = DISTANCE_NAMES,
                       cases: Sequence[str] = ("1", "2", "3", "4"),
                       kinds: Sequence[str] = ("HAR", "SF", "SFRR", "CAL"),
                       overlap_constraint: bool = False) -> list[EstimatorSpec]:
    distances = [get_distance(d).kind for d in distances]
    out = []
    if "HAR" in kinds:
        out.append(EstimatorSpec("HAR", "dual"))
    if "SF" in kinds:
        out.append(EstimatorSpec("SF", "single"))
    if "SFRR" in kinds:
        out.append(EstimatorSpec("SFRR", "single"))
    if "CAL" in kinds:
        for case in cases:
            for approach in ("single", "dual"):
                for dist in distances:
                    out.append(EstimatorSpec("CAL", approach, str(case), dist))
    if overlap_constraint:
        for case in ("1", "3"):
            if str(case) not in [str(c) for c in cases]:
                continue
            for dist in ("kullback_leibler", "euclidean"):
                out.append(EstimatorSpec("CAL", "dual", case, dist, restricted=True))
    return out


# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReplicateContext:
    """Per-replicate quantities shared by all estimators.

    ``eta`` is the variance-based mixing constant using the known ``N_ab``;
    ``eta_no_ab`` replaces the domain shares with sample estimates and is
    used by the cases where ``N_ab`` is unknown.
    """

    sample: DualFrameSample
    meta: FrameMeta
    eta: float
    eta_no_ab: float
    x_vars: tuple[str, str] = ("x_A", "x_B")
    variable: str = "y"
    solver_options: dict = field(default_factory=dict)

    def eta_for(self, case) -> float:
        return self.eta_no_ab if str(case) in ("2", "4") else self.eta


def make_context(sample: DualFrameSample, designs, **kw) -> ReplicateContext:
    meta = sample.meta
    sizes = domain_size_estimates(sample, designs)
    eta = estimate_eta(meta, sizes)
    eta_no_ab = estimate_eta(FrameMeta(meta.N_A, meta.N_B), sizes)
    return ReplicateContext(sample, meta, eta, eta_no_ab, **kw)


def _check(result):
    if not result.converged:
        raise EstimationFailure(
            f"calibration did not converge (residual {result.max_constraint_residual:.3g})")
    return result


def estimator_function(spec: EstimatorSpec, ctx: ReplicateContext) -> Callable:
    """Return ``f(sample) -> (estimate, negative_weight_count)``.

    The constraint spec and ``eta`` are frozen from ``ctx`` so that the same
    function can be re-run on jackknife replicates.
    """
    meta, y, opts = ctx.meta, ctx.variable, ctx.solver_options
    if spec.kind == "HAR":
        eta = ctx.eta
        return lambda s: (weighted_total(hartley_weights(s, eta), y), 0)
    if spec.kind == "SF":
        return lambda s: (weighted_total(single_frame_weights(s), y), 0)
    if spec.kind == "SFRR":
        def sfrr(s):
            result = _check(calibrate(single_frame_weights(s), build_aux("2", meta),
                                      "raking", **opts))
            return weighted_total(result.weights, y), result.negative_weights
        return sfrr
    eta = ctx.eta_for(spec.case)
    if spec.restricted:
        x_vars = ctx.x_vars if spec.case == "3" else ()

        def restricted(s):
            result = _check(calibrate_overlap_restricted(
                s, meta, eta, y, spec.distance, x_vars, **opts))
            return weighted_total(result.weights, y), result.negative_weights
        return restricted
    aux = build_aux(spec.case, meta, eta, spec.approach, ctx.x_vars)

    def cal(s):
        result = _check(calibrate(base_weights(s, spec.approach, eta), aux, spec.distance,
                                  **opts))
        return weighted_total(result.weights, y), result.negative_weights
    return cal


def variance_estimate(spec: EstimatorSpec, ctx: ReplicateContext, designs, method: str,
                      point: float, level: float = 0.95):
    """Linearization or jackknife variance of a CAL estimator in ``ctx``."""
    if method == "linearization":
        if spec.kind != "CAL" or spec.restricted:
            raise ValueError("linearization is available for plain CAL estimators")
        eta = ctx.eta_for(spec.case)
        base = base_weights(ctx.sample, spec.approach, eta)
        aux = build_aux(spec.case, ctx.meta, eta, spec.approach, ctx.x_vars)
        return linearization_variance(base, aux, ctx.variable, designs, point, level)
    f = estimator_function(spec, ctx)
    return jackknife_variance(ctx.sample, lambda s: f(s)[0], designs,
                              fpc=(method == "jackknife_fpc"), level=level, point=point)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CIMetrics:
    length: float
    coverage: float
    inferior: float
    superior: float
    n: int


@dataclass(frozen=True)
class EstimatorSummary:
    spec: EstimatorSpec
    rb: float
    rmse: float
    ge: float | None
    n: int
    failures: int
    negative_weight_replicates: int
    ci: dict = field(default_factory=dict)
    estimates: np.ndarray | None = field(default=None, repr=False)

    @property
    def rmse100(self) -> float:
        """RMSE% multiplied by 100, the scale used in the result tables."""
        return 100.0 * self.rmse


@dataclass(frozen=True)
class MonteCarloReport:
    config: ScenarioConfig
    seed: int
    replicates: int
    Y: float
    N_A: int
    N_B: int
    N_ab: int
    summaries: tuple[EstimatorSummary, ...]
    variance_methods: tuple[str, ...] = ()
    ci_level: float = 0.95

    def get(self, name: str, approach: str, case: str | None = None) -> EstimatorSummary:
        for s in self.summaries:
            if s.spec.name == name and s.spec.approach == approach and s.spec.case == (
                    None if case is None else str(case)):
                return s
        raise KeyError(f"no estimator {name}/{approach}/{case}")


def relative_bias(estimates, Y) -> float:
    return float(np.mean(np.asarray(estimates) - Y) / Y * 100.0)


def relative_mse(estimates, Y) -> float:
    return float(np.mean((np.asarray(estimates) - Y) ** 2) / Y**2 * 100.0)


def gain_in_efficiency(rmse: float, rmse_sf: float) -> float:
    return (1.0 - rmse / rmse_sf) * 100.0


def _ci_metrics(bounds, Y) -> CIMetrics:
    b = np.asarray(bounds, dtype=float)
    lb, ub = b[:, 0], b[:, 1]
    n = len(b)
    inf = float(np.mean(Y < lb) * 100.0)
    sup = float(np.mean(Y > ub) * 100.0)
    return CIMetrics(float(np.mean(ub - lb)), 100.0 - inf - sup, inf, sup, n)


def run_replicate(population: Population, estimators: Sequence[EstimatorSpec],
                  seed: np.random.SeedSequence, variance_methods: Sequence[str] = (),
                  variance_for: Callable[[EstimatorSpec], bool] | None = None,
                  level: float = 0.95, solver_options: dict | None = None) -> list[dict]:
    """Draw one sample and evaluate every estimator on it.

    Each entry is ``{"estimate", "negative", "ci": {method: (lb, ub)}}`` or
    ``{"error": message}``.
    """
    rng = np.random.default_rng(seed)
    sample = draw_sample(population, rng)
    designs = frame_designs(population)
    ctx = make_context(sample, designs, solver_options=dict(solver_options or {}))
    out = []
    for spec in estimators:
        try:
            estimate, negative = estimator_function(spec, ctx)(sample)
            entry = {"estimate": float(estimate), "negative": int(negative), "ci": {}}
            if variance_methods and (variance_for is None or variance_for(spec)):
                for method in variance_methods:
                    v = variance_estimate(spec, ctx, designs, method, estimate, level)
                    entry["ci"][method] = (v.lb, v.ub)
        except (CalibrationError, EstimationFailure, ValueError, ArithmeticError,
                RuntimeError) as exc:
            entry = {"error": f"{type(exc).__name__}: {exc}"}
        out.append(entry)
    return out


def run_monte_carlo(config: ScenarioConfig, estimators: Sequence[EstimatorSpec] | None = None,
                    replicates: int = 1000, seed: int = 0,
                    variance_methods: Sequence[str] = (),
                    variance_for: Callable[[EstimatorSpec], bool] | None = None,
                    level: float = 0.95, n_jobs: int | None = None,
                    keep_estimates: bool = False,
                    solver_options: dict | None = None) -> MonteCarloReport:
    """Generate one population and evaluate ``estimators`` over ``replicates`` samples.

    The master ``seed`` is split with :class:`numpy.random.SeedSequence`:
    the first child drives the population, the second is spawned into one
    stream per replicate, so results do not depend on ``n_jobs``.

    Raises
    ------
    MonteCarloAbort
        If some estimator fails on more than 1% of the replicates.
    """
    estimators = list(estimators) if estimators is not None else default_estimators()
    pop_seed, rep_seed = np.random.SeedSequence(seed).spawn(2)
    population = generate_population(config, pop_seed)
    seeds = rep_seed.spawn(replicates)
    args = (estimators,)
    kw = dict(variance_methods=tuple(variance_methods), variance_for=variance_for,
              level=level, solver_options=solver_options)
    if n_jobs in (None, 1):
        results = [run_replicate(population, *args, s, **kw) for s in seeds]
    else:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs)(
            delayed(run_replicate)(population, *args, s, **kw) for s in seeds)

    Y = population.Y
    per_estimator = []
    for j, spec in enumerate(estimators):
        entries = [r[j] for r in results]
        good = [e for e in entries if "error" not in e]
        failures = len(entries) - len(good)
        if failures:
            first = next(e["error"] for e in entries if "error" in e)
            log.warning("%s: %d of %d replicates failed (first: %s)",
                        spec.label, failures, replicates, first)
        if failures > FAILURE_LIMIT * replicates:
            raise MonteCarloAbort(
                f"{spec.label}: {failures} of {replicates} replicates failed")
        per_estimator.append((spec, good, failures))

    rmse_sf = None
    for spec, good, _ in per_estimator:
        if spec.kind == "SF":
            rmse_sf = relative_mse([e["estimate"] for e in good], Y)
    summaries = []
    for spec, good, failures in per_estimator:
        est = np.array([e["estimate"] for e in good])
        rmse = relative_mse(est, Y)
        ci = {}
        for method in variance_methods:
            bounds = [e["ci"][method] for e in good if method in e["ci"]]
            if bounds:
                ci[method] = _ci_metrics(bounds, Y)
        summaries.append(EstimatorSummary(
            spec=spec, rb=relative_bias(est, Y), rmse=rmse,
            ge=None if rmse_sf is None else gain_in_efficiency(rmse, rmse_sf),
            n=len(est), failures=failures,
            negative_weight_replicates=int(sum(e["negative"] > 0 for e in good)),
            ci=ci, estimates=est if keep_estimates else None))
    return MonteCarloReport(config, seed, replicates, Y, population.N_A, population.N_B,
                            population.N_ab, tuple(summaries), tuple(variance_methods), level)


def format_number(value, digits: int = 3) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{value:.{digits}f}"
