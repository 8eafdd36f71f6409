"""Estimator-style wrappers around the functional API.

:class:`Calibrator` works on a plain design matrix and known totals, so it
can be used without the dual-frame data model.  :class:`DualFrameCalibration`
bundles base weights, the constraint spec and the solver for a
:class:`~dualcal.data.DualFrameSample`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .calibration import build_aux, build_overlap_mean_constraint, calibrate
from .calibration.closed_form import poststrat_closed_form
from .calibration.distances import get_distance
from .calibration.solver import CalibrationError, solve
from .data import DualFrameSample, FrameMeta, require_valid
from .estimators import base_weights, domain_size_estimates, estimate_eta, weighted_total
from .variance import default_designs, jackknife_variance, linearization_variance


def check_weights(sample_weight, n: int) -> np.ndarray:
    """Validate nonnegative finite weights of length ``n``."""
    w = check_array(np.asarray(sample_weight, dtype=float).reshape(-1, 1),
                    ensure_all_finite=True).ravel()
    check_consistent_length(w, np.empty(n))
    if np.any(w < 0):
        raise ValueError("sample_weight must be nonnegative")
    return w


def check_totals(totals, p: int) -> np.ndarray:
    t = check_array(np.asarray(totals, dtype=float).reshape(1, -1)).ravel()
    if len(t) != p:
        raise ValueError(f"expected {p} totals, got {len(t)}")
    return t


class Calibrator(TransformerMixin, BaseEstimator):
    """Minimum-distance calibration of weights to known column totals.

    Parameters
    ----------
    distance : str, default="euclidean"
        ``euclidean``, ``raking``, ``logit`` or ``kullback_leibler``.
    bounds : tuple of float, default=(0.3, 3.0)
        Ratio bounds ``(L, U)`` for the logit distance.
    tol : float, default=1e-8
    max_iter : int, default=100

    Attributes
    ----------
    lambda_ : ndarray of shape (n_features,)
    weights_ : ndarray of shape (n_samples,)
        Calibrated weights of the fitted rows.
    n_iter_ : int
    converged_ : bool
    residual_ : float
        Maximum relative constraint residual.

    Examples
    --------
    >>> import numpy as np
    >>> X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    >>> cal = Calibrator().fit(X, totals=[6.0, 8.0], sample_weight=[2.0, 2.0, 2.0])
    >>> np.allclose(cal.weights_ @ X, [6.0, 8.0])
    True
    """

    def __init__(self, distance="euclidean", bounds=(0.3, 3.0), tol=1e-8, max_iter=100):
        self.distance = distance
        self.bounds = bounds
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, totals, sample_weight=None):
        X = check_array(X, dtype=float)
        n, p = X.shape
        d = np.ones(n) if sample_weight is None else check_weights(sample_weight, n)
        t = check_totals(totals, p)
        self.distance_ = get_distance(self.distance, self.bounds)
        lam, it, res, ok = solve(d, X, t, self.distance_, self.tol, self.max_iter)
        self.lambda_ = lam
        self.n_iter_ = it
        self.residual_ = res
        self.converged_ = ok
        self.weights_ = d * self.distance_.F(X @ lam)
        self.n_features_in_ = p
        return self

    def transform(self, X):
        """Weight ratios ``F(x lambda)`` for the rows of ``X``."""
        check_is_fitted(self, "lambda_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.distance_.F(X @ self.lambda_)


class DualFrameCalibration(BaseEstimator):
    """Calibration estimator for a dual-frame sample.

    Parameters
    ----------
    approach : {"dual", "single"}
        Hartley base weights ``d°`` or single-frame weights ``d*``.
    aux_case : str
        Constraint case accepted by :func:`dualcal.calibration.build_aux`.
    distance : str
    eta : float or "estimate"
        Hartley mixing constant; ``"estimate"`` uses the variance-based choice.
    x_vars : sequence of str
        Numeric auxiliary variables needed by the aux case.
    group_var : str, optional
        Group variable for group post-stratification.
    overlap_variable : str, optional
        Add the common overlap-mean restriction for this variable (dual
        approach, cases 1 and 3); calibration then starts from the
        post-stratified weights.
    bounds, tol, max_iter
        Solver options.

    Attributes
    ----------
    weights_ : WeightVector
    eta_ : float or None
    result_ : CalibrationResult
    designs_ : dict
    """

    def __init__(self, approach="dual", aux_case="1", distance="euclidean", eta="estimate",
                 x_vars=(), group_var=None, overlap_variable=None, bounds=None, tol=1e-8,
                 max_iter=100):
        self.approach = approach
        self.aux_case = aux_case
        self.distance = distance
        self.eta = eta
        self.x_vars = x_vars
        self.group_var = group_var
        self.overlap_variable = overlap_variable
        self.bounds = bounds
        self.tol = tol
        self.max_iter = max_iter

    def _resolve_eta(self, sample: DualFrameSample, designs):
        if self.approach == "single":
            return None
        if self.eta != "estimate":
            return float(self.eta)
        meta = sample.meta
        if str(self.aux_case) in ("2", "4", "xa_zb", "groups_margins"):
            meta = FrameMeta(meta.N_A, meta.N_B)
        return estimate_eta(meta, domain_size_estimates(sample, designs))

    def fit(self, sample: DualFrameSample, designs=None):
        require_valid(sample, self.approach)
        self.designs_ = designs if designs is not None else default_designs(sample)
        self.eta_ = self._resolve_eta(sample, self.designs_)
        meta = sample.meta
        spec = build_aux(self.aux_case, meta, self.eta_, self.approach, self.x_vars,
                         self.group_var)
        if self.overlap_variable is not None:
            if self.approach != "dual":
                raise ValueError("the overlap-mean restriction needs the dual approach")
            spec = build_overlap_mean_constraint(spec, self.eta_, meta, self.overlap_variable)
            base = poststrat_closed_form(sample, meta, self.eta_)
        else:
            base = base_weights(sample, self.approach, self.eta_)
        self.spec_ = spec
        self.base_ = base
        self.result_ = calibrate(base, spec, self.distance, self.tol, self.max_iter, self.bounds)
        if not self.result_.converged:
            raise CalibrationError(
                f"calibration did not converge in {self.result_.iterations} iterations "
                f"(residual {self.result_.max_constraint_residual:.3g})")
        self.weights_ = self.result_.weights
        self.sample_ = sample
        return self

    def estimate(self, variable: str) -> float:
        """Calibrated total of ``variable``."""
        check_is_fitted(self, "weights_")
        return weighted_total(self.weights_, variable)

    def variance(self, variable: str, method: str = "linearization", level: float = 0.95,
                 n_jobs=None):
        """Variance and normal confidence interval of :meth:`estimate`.

        ``method`` is ``linearization``, ``jackknife`` or ``jackknife_fpc``.
        The jackknife refits with ``eta`` held at its full-sample value.
        """
        check_is_fitted(self, "weights_")
        point = self.estimate(variable)
        method = method.replace("-", "_")
        if method == "linearization":
            if self.overlap_variable is not None:
                raise ValueError("linearization is not available with the overlap restriction")
            return linearization_variance(self.base_, self.spec_, variable, self.designs_,
                                          point, level)
        if method not in ("jackknife", "jackknife_fpc"):
            raise ValueError(f"unknown variance method {method!r}")
        params = self.get_params()
        if self.approach == "dual":
            params["eta"] = self.eta_
        designs = self.designs_

        def refit(s):
            est = DualFrameCalibration(**params).fit(s, designs)
            return est.estimate(variable)

        return jackknife_variance(self.sample_, refit, designs, fpc=method == "jackknife_fpc",
                                  level=level, point=point, n_jobs=n_jobs)
