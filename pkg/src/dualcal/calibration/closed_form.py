"""Closed-form calibration results used as cross-checks of the solver."""

from __future__ import annotations

import numpy as np

from ..data import DualFrameSample, FrameMeta, SampleValidationError
from ..estimators import (WeightVector, base_weights, check_eta, domain_size_estimates,
                          single_frame_weights)
from .aux import AuxSpec, group_labels
from .solver import regression_fit


def _cells(sample: DualFrameSample, approach: str):
    """(cell name, mask, population-size scope) for each post-stratum."""
    m = sample.masks
    if approach == "single":
        return [("a", m["a"], "a"), ("ab+ba", m["ab"] | m["ba"], "ab"), ("b", m["b"], "b")]
    return [("a", m["a"], "a"), ("ab", m["ab"], "ab"), ("ba", m["ba"], "ab"), ("b", m["b"], "b")]


def poststrat_closed_form(sample: DualFrameSample, meta: FrameMeta, eta: float | None = None,
                          grouping: str | None = None, approach: str = "dual") -> WeightVector:
    """Hajek-type weights of complete post-stratification.

    Within each domain (crossed with a group when ``grouping`` names a
    group variable) the base weights are scaled so that they add up to the
    known cell size: ``d_A N_a / N_a_hat`` on s_a, ``eta d_A N_ab / N_ab_hat``
    on s_ab, ``(1-eta) d_B N_ab / N_ba_hat`` on s_ba, ``d_B N_b / N_b_hat``
    on s_b.  The single approach uses ``d*`` and a merged overlap cell.

    Raises
    ------
    SampleValidationError
        On an empty cell or missing sizes.
    """
    if not meta.sizes_known:
        raise SampleValidationError("complete post-stratification needs N_A, N_B and N_ab")
    base = base_weights(sample, approach, None if approach == "single" else check_eta(eta))
    if approach == "dual":
        # the Hajek ratio is taken on design weights; eta only rescales
        raw = np.where(sample.in_sample_A, sample.d_A, sample.d_B)
    else:
        raw = single_frame_weights(sample).values
    share = {"a": 1.0, "ab+ba": 1.0, "b": 1.0}
    if approach == "dual":
        share.update(ab=eta, ba=1.0 - eta)

    labels = None if grouping is None else group_labels(sample.variable(grouping))
    groups = [None] if grouping is None else meta.groups()
    w = np.zeros(len(sample))
    covered = np.zeros(len(sample), dtype=bool)
    for g in groups:
        in_g = np.ones(len(sample), dtype=bool) if g is None else labels == g
        for name, mask, scope in _cells(sample, approach):
            cell = mask & in_g
            if g is None:
                size = meta.domain_size(scope)
            else:
                try:
                    size = float(meta.group_totals[(g, scope)])
                except KeyError:
                    raise SampleValidationError(
                        f"missing group total for group {g!r} scope {scope!r}") from None
            covered |= cell
            if share[name] == 0:
                continue
            est = float(raw[cell].sum())
            if est == 0:
                if size == 0:
                    continue
                where = name if g is None else f"{name} x group {g}"
                raise SampleValidationError(f"empty cell {where}: cannot post-stratify")
            w[cell] = share[name] * raw[cell] * size / est
    if not covered.all():
        bad = sample.ids[~covered][0]
        raise SampleValidationError(f"unit {bad!r} falls in no group with known totals")
    return WeightVector(w, sample, "calibrated", base.eta,
                        {"case": "closed_form", "base": base.tag})


def nab_calibrated(sample: DualFrameSample, meta: FrameMeta, eta: float) -> float:
    """Overlap size implied by Euclidean calibration on the frame margins.

    ``N_ab_w = N_abH (N_a N_B + N_b N_A - N_a N_b) / (N_a N_B_hat + N_b N_A_hat - N_a N_b)``
    with hats on the Horvitz-Thompson domain counts,
    ``N_abH = eta N_ab_hat + (1 - eta) N_ba_hat`` and Hartley frame sizes
    ``N_A_hat = N_a_hat + N_abH``, ``N_B_hat = N_b_hat + N_abH``.
    """
    eta = check_eta(eta)
    if meta.N_A is None or meta.N_B is None:
        raise SampleValidationError("missing N_A or N_B")
    s = domain_size_estimates(sample)
    H = eta * s.N_ab + (1.0 - eta) * s.N_ba
    NA_hat = s.N_a + H
    NB_hat = s.N_b + H
    num = s.N_a * meta.N_B + s.N_b * meta.N_A - s.N_a * s.N_b
    den = s.N_a * NB_hat + s.N_b * NA_hat - s.N_a * s.N_b
    if den == 0:
        raise ZeroDivisionError("zero denominator in the calibrated overlap size")
    return float(H * num / den)


def greg_estimate(base: WeightVector, spec: AuxSpec, variable) -> tuple[float, np.ndarray]:
    """Generalized regression estimate ``Y_base + (t_x - t_x_base) beta``.

    ``beta`` solves the base-weighted normal equations of ``variable`` on
    the constraint columns.  Equal to Euclidean calibration followed by a
    weighted total.
    """
    y = base.sample.variable(variable) if isinstance(variable, str) else np.asarray(variable, float)
    beta, X, keep, d = regression_fit(base, spec, y)
    used = d != 0
    Xk = X[used][:, keep]
    y_hat = float(np.dot(d[used], y[used]))
    t_hat = Xk.T @ d[used]
    estimate = y_hat + float(np.dot(spec.targets[keep] - t_hat, beta))
    return estimate, beta


def _domain_moments(d, x, y):
    n_hat = d.sum()
    if n_hat == 0:
        return 0.0, 0.0, 0.0, 0.0
    xm = np.dot(d, x) / n_hat
    ym = np.dot(d, y) / n_hat
    return xm, ym, float(np.dot(d, (x - xm) * (y - ym))), float(np.dot(d, (x - xm) ** 2))


def xa_combined_regression(sample: DualFrameSample, meta: FrameMeta, eta: float,
                           variable: str, x: str) -> tuple[float, float]:
    """Combined-regression form of Euclidean calibration with sizes and ``X_A`` known.

    Returns ``(estimate, beta_A)`` where ``estimate = Y_Haj + (X_A - X_A_Haj) beta_A``
    and ``beta_A`` pools the within-domain covariances of s_a, s_ab and
    s_ba with shares ``1``, ``eta`` and ``1 - eta``.
    """
    eta = check_eta(eta)
    if not meta.sizes_known:
        raise SampleValidationError("needs N_A, N_B and N_ab")
    X_A = meta.numeric_total(x, "A")
    m = sample.masks
    y = sample.variable(variable)
    xv = sample.variable(x)
    parts = [("a", sample.d_A, meta.N_a, 1.0), ("ab", sample.d_A, meta.N_ab, eta),
             ("ba", sample.d_B, meta.N_ab, 1.0 - eta)]
    sxy = sxx = sx2 = 0.0
    y_haj = x_haj = 0.0
    for label, weights, size, share in parts:
        mask = m[label]
        if share == 0:
            continue
        if not mask.any():
            raise SampleValidationError(f"domain {label} unsampled")
        xm, ym, cxy, cxx = _domain_moments(weights[mask], xv[mask], y[mask])
        sxy += share * cxy
        sxx += share * cxx
        sx2 += share * float(np.dot(weights[mask], xv[mask] ** 2))
        y_haj += share * size * ym
        x_haj += share * size * xm
    d_b = sample.d_B[m["b"]]
    if d_b.sum() == 0:
        raise SampleValidationError("domain b unsampled")
    y_haj += meta.N_b * np.dot(d_b, y[m["b"]]) / d_b.sum()
    if sxx <= 1e-12 * sx2:
        raise ZeroDivisionError("pooled variance of x_A is zero")
    beta = sxy / sxx
    return float(y_haj + (X_A - x_haj) * beta), float(beta)
