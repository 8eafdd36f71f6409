"""Damped Newton solver for the calibration equations.

The weights are ``w_k = d_k F(x_k lambda)`` and ``lambda`` solves
``sum_k d_k F(x_k lambda) x_k = t_x``.  Newton steps start from
``lambda = 0`` and are halved until the scores stay in the domain of ``F``
and the dual objective decreases enough.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..estimators import WeightVector
from .aux import AuxSpec
from .distances import Distance, get_distance

RANK_TOL = 1e-10


class CalibrationError(ValueError):
    """Infeasible or collinear constraints, or a step-damping failure."""


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Outcome of :func:`calibrate`.

    Attributes
    ----------
    weights : WeightVector
        Calibrated weights, tag ``"calibrated"``.
    lam : ndarray
        Lagrange multipliers, one per constraint column.  Columns dropped
        because their target is zero and unsupported get ``0``.
    iterations : int
    max_constraint_residual : float
        ``max_j |sum_k w_k x_kj - t_j| / max(1, |t_j|)``.
    converged : bool
    negative_weights : int
    dropped : tuple of str
        Names of constraint columns removed before solving.
    """

    weights: WeightVector
    lam: np.ndarray
    iterations: int
    max_constraint_residual: float
    converged: bool
    distance: Distance
    spec: AuxSpec
    base: WeightVector
    negative_weights: int = 0
    dropped: tuple = ()

    @property
    def ratios(self) -> np.ndarray:
        d = self.base.values
        out = np.full(len(d), np.nan)
        pos = d != 0
        out[pos] = self.weights.values[pos] / d[pos]
        return out

    def diagnostics(self) -> dict:
        return {"lambda": [float(v) for v in self.lam],
                "iterations": int(self.iterations),
                "max_constraint_residual": float(self.max_constraint_residual),
                "converged": bool(self.converged),
                "negative_weights": int(self.negative_weights),
                "dropped_columns": list(self.dropped)}


def check_rank(X: np.ndarray, d: np.ndarray, names) -> None:
    """Raise :class:`CalibrationError` when the weighted columns are rank deficient."""
    A = np.sqrt(np.maximum(d, 0.0))[:, None] * X
    norms = np.linalg.norm(A, axis=0)
    empty = [names[j] for j in np.flatnonzero(norms == 0)]
    if empty:
        raise CalibrationError(
            "infeasible or collinear constraints: no sample support for column(s) "
            + ", ".join(map(str, empty)))
    A = A / norms
    _, R, piv = linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * diag[0]))
    if rank < X.shape[1]:
        dependent = [names[j] for j in piv[rank:]]
        raise CalibrationError(
            "infeasible or collinear constraints: column(s) "
            + ", ".join(map(str, dependent)) + " linearly dependent on the others")


def _prune(d, X, t, names):
    """Drop zero-target columns that need no solving.

    A zero-target column with no positively weighted support is already
    satisfied.  A nonnegative zero-target column with support can only be met
    by zeroing the weights of the units it touches, which is done here.
    """
    d = d.copy()
    keep = np.ones(X.shape[1], dtype=bool)
    for j in range(X.shape[1]):
        if t[j] != 0:
            continue
        touched = X[:, j] != 0
        if not np.any(touched & (d > 0)):
            keep[j] = False
        elif np.all(X[:, j] >= 0):
            d[touched] = 0.0
            keep[j] = False
    dropped = tuple(names[j] for j in np.flatnonzero(~keep))
    return d, keep, dropped


def _newton_step(J, g):
    try:
        return linalg.solve(J, -g, assume_a="sym")
    except (linalg.LinAlgError, ValueError):
        # saturated logit weights make J singular; take the minimum-norm step
        return linalg.lstsq(J, -g)[0]


def solve(d, X, t, distance: Distance, tol: float = 1e-8, max_iter: int = 100,
          damping_floor: float = 2.0**-20, names=None):
    """Solve for ``lambda`` on plain arrays.

    Newton's method on the convex dual ``phi(lam) = sum_k d_k G(x_k lam) - lam't``,
    whose gradient is the constraint residual.  Steps are halved until the
    scores are valid for ``F`` and ``phi`` satisfies an Armijo decrease.

    Returns ``(lam, iterations, max_residual, converged)``.
    """
    p = X.shape[1]
    names = names or [f"x{j}" for j in range(p)]
    check_rank(X[d != 0], d[d != 0], names)
    scale = np.maximum(1.0, np.abs(t))

    def objective(lam, u):
        terms = d * distance.G(u)
        slack = 1e-13 * (np.sum(np.abs(terms)) + abs(float(lam @ t)))
        return float(np.sum(terms) - lam @ t), slack

    lam = np.zeros(p)
    u = X @ lam
    g = d * distance.F(u) @ X - t
    norm = float(np.max(np.abs(g / scale)))
    phi, _ = objective(lam, u)
    it = 0
    while it < max_iter and norm > tol:
        it += 1
        J = (X * (d * distance.dF(u))[:, None]).T @ X
        step = _newton_step(J, g)
        slope = float(g @ step)
        alpha = 1.0
        while True:
            cand = lam + alpha * step
            u_new = X @ cand
            if distance.valid(u_new):
                phi_new, slack = objective(cand, u_new)
                if phi_new <= phi + 1e-4 * alpha * slope + slack:
                    break
            alpha /= 2.0
            if alpha < damping_floor:
                raise CalibrationError(
                    "step damping floor reached: constraints look infeasible for "
                    f"the {distance.kind} distance")
        lam, u, phi = cand, u_new, phi_new
        g = d * distance.F(u) @ X - t
        norm = float(np.max(np.abs(g / scale)))
    if it == 0:
        it = 1
    elif norm <= tol:
        lam, norm = _polish(d, X, t, lam, norm, distance, scale)
    return lam, it, norm, norm <= tol


def _polish(d, X, t, lam, norm, distance, scale):
    # one extra Newton step past the tolerance; kept only if not worse
    u = X @ lam
    J = (X * (d * distance.dF(u))[:, None]).T @ X
    g = d * distance.F(u) @ X - t
    cand = lam + _newton_step(J, g)
    u_new = X @ cand
    if not distance.valid(u_new):
        return lam, norm
    n_new = float(np.max(np.abs((d * distance.F(u_new) @ X - t) / scale)))
    return (cand, n_new) if n_new <= norm else (lam, norm)


def calibrate(base: WeightVector, spec: AuxSpec, distance="euclidean", tol: float = 1e-8,
              max_iter: int = 100, bounds: tuple[float, float] | None = None,
              damping_floor: float = 2.0**-20) -> CalibrationResult:
    """Calibrate ``base`` weights to the totals of ``spec``.

    Parameters
    ----------
    base : WeightVector
        Starting weights (``d°`` for the dual approach, ``d*`` for the single one).
    spec : AuxSpec
    distance : str or Distance
        ``euclidean``, ``raking``, ``logit`` or ``kullback_leibler``.
    tol : float
        Convergence threshold on the relative constraint residual.
    max_iter : int
    bounds : (L, U), optional
        Logit ratio bounds, default ``(0.3, 3.0)``.

    Returns
    -------
    CalibrationResult
        ``converged`` is False when ``max_iter`` is exhausted.

    Raises
    ------
    CalibrationError
        Rank-deficient constraints or step damping below ``damping_floor``.
    """
    distance = get_distance(distance, bounds)
    X = spec.matrix(base.sample)
    t = np.asarray(spec.targets, dtype=float)
    d0 = np.asarray(base.values, dtype=float)
    if np.any(d0 < 0) or np.isnan(d0).any():
        raise CalibrationError("base weights must be nonnegative")
    if np.isnan(X[d0 != 0]).any():
        raise CalibrationError("constraint columns contain missing values")
    X = np.where(np.isnan(X), 0.0, X)
    d, keep, dropped = _prune(d0, X, t, spec.names)
    names = [n for n, k in zip(spec.names, keep) if k]
    lam = np.zeros(spec.p)
    if keep.any():
        lam_k, it, norm, ok = solve(d, X[:, keep], t[keep], distance, tol, max_iter,
                                    damping_floor, names)
        lam[keep] = lam_k
    else:
        it, norm, ok = 1, 0.0, True
    w = d * distance.F(X @ lam)
    full = float(np.max(np.abs((w @ X - t) / np.maximum(1.0, np.abs(t)))))
    ok = ok and full <= tol
    weights = WeightVector(w, base.sample, "calibrated", base.eta,
                           {"distance": distance.kind, "case": spec.case_tag,
                            "base": base.tag})
    return CalibrationResult(weights, lam, it, full, ok, distance, spec, base,
                             int(np.sum(w < 0)), dropped)


def regression_fit(base: WeightVector, spec: AuxSpec, y: np.ndarray):
    """Base-weighted least-squares fit of ``y`` on the constraint columns.

    Returns ``(beta, X, keep, d)``: coefficients for the kept columns, the
    full constraint matrix, the boolean mask of columns used and the base
    weights after the zero-target pruning done by :func:`calibrate`.
    """
    X = spec.matrix(base.sample)
    X = np.where(np.isnan(X), 0.0, X)
    t = np.asarray(spec.targets, dtype=float)
    d, keep, _ = _prune(np.asarray(base.values, dtype=float), X, t, spec.names)
    Xk = X[:, keep]
    y = np.asarray(y, dtype=float)
    used = d != 0
    if np.isnan(y[used]).any():
        raise ValueError("response missing on a unit with nonzero weight")
    names = [n for n, k in zip(spec.names, keep) if k]
    check_rank(Xk[used], d[used], names)
    M = (Xk[used] * d[used, None]).T @ Xk[used]
    b = (Xk[used] * d[used, None]).T @ y[used]
    beta = linalg.solve(M, b, assume_a="sym")
    return beta, X, keep, d
