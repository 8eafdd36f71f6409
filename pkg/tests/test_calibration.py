import dataclasses

import numpy as np
import pytest
from scipy import optimize

from dualcal.calibration import (CalibrationError, build_aux, build_aux_case1, build_aux_case2,
                                 build_aux_case3, build_aux_case4, build_aux_x_whole,
                                 build_aux_xa, build_aux_xa_zb, build_group_poststrat,
                                 build_overlap_mean_constraint, calibrate,
                                 calibrate_overlap_restricted, get_distance, greg_estimate,
                                 nab_calibrated, poststrat_closed_form, xa_combined_regression)
from dualcal.data import FrameMeta, SampleValidationError
from dualcal.estimators import base_weights, hartley_weights, weighted_total

from conftest import four_row_sample

DISTANCES = ("euclidean", "raking", "logit", "kullback_leibler")


def rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


# -------------------------------------------------------------------- aux


def test_case1_targets():
    meta = FrameMeta(150, 130, 50)
    assert list(build_aux_case1(meta, 0.4).targets) == [100, 20, 30, 80]
    assert list(build_aux_case1(meta, approach="single").targets) == [100, 50, 80]
    assert build_aux_case1(meta, 1.0).targets[2] == 0.0


def test_case2_rows_and_targets():
    spec = build_aux_case2(FrameMeta(1309, 1251))
    X = spec.matrix(four_row_sample())
    np.testing.assert_array_equal(X, [[1, 0], [1, 1], [1, 1], [0, 1]])
    assert list(spec.targets) == [1309, 1251]


def test_numeric_columns_are_frame_gated():
    meta = FrameMeta(4, 4, 2, numeric_totals={("x", "A"): 1.0, ("x", "B"): 2.0,
                                              ("x", "U"): 3.0})
    s = four_row_sample(aux={"x": np.array([5.0, 7.0, 7.0, 9.0])})
    X3 = build_aux_case3(meta, 0.5, "x").matrix(s)
    np.testing.assert_array_equal(X3[1, 4:], [7, 7])
    np.testing.assert_array_equal(X3[:, 4], [5, 7, 7, 0])
    np.testing.assert_array_equal(X3[:, 5], [0, 7, 7, 9])
    assert build_aux_xa(meta, 0.5, "x").matrix(s)[3, -1] == 0
    np.testing.assert_array_equal(build_aux_x_whole(meta, 0.5, "x").matrix(s)[:, -1], [5, 7, 7, 9])
    assert list(build_aux_case4(meta, "x").targets) == [4, 4, 1.0, 2.0]
    assert list(build_aux_xa_zb(meta, "x", "x").targets) == [4, 4, 1.0, 2.0]


def test_missing_aux_value_is_reported():
    meta = FrameMeta(4, 4, 2, numeric_totals={("x", "A"): 1.0, ("x", "B"): 2.0})
    s = four_row_sample(aux={"x": np.array([5.0, np.nan, 7.0, 9.0])})
    with pytest.raises(SampleValidationError, match="u2"):
        build_aux_case3(meta, 0.5, "x").matrix(s)


def test_missing_sizes():
    with pytest.raises(SampleValidationError, match="N_ab"):
        build_aux_case1(FrameMeta(4, 4), 0.5)
    with pytest.raises(SampleValidationError):
        build_aux("3", FrameMeta(4, 4, 2), 0.5)
    with pytest.raises(ValueError):
        build_aux("7", FrameMeta(4, 4, 2), 0.5)


def with_groups(sample, rng):
    g = rng.integers(1, 3, size=len(sample)).astype(float)
    meta = sample.meta
    parts = {}
    for scope, size in (("a", meta.N_a), ("ab", meta.N_ab), ("b", meta.N_b)):
        first = round(size * 0.4)
        parts[("1", scope)] = first
        parts[("2", scope)] = size - first
    for h in ("1", "2"):
        parts[(h, "A")] = parts[(h, "a")] + parts[(h, "ab")]
        parts[(h, "B")] = parts[(h, "b")] + parts[(h, "ab")]
    meta = dataclasses.replace(meta, group_totals=parts)
    return dataclasses.replace(sample, aux={**sample.aux, "g": g}, meta=meta)


def test_group_single_group_is_case1(draw):
    sample, _ = draw
    meta = dataclasses.replace(sample.meta, group_totals={
        ("1", "a"): sample.meta.N_a, ("1", "ab"): sample.meta.N_ab, ("1", "b"): sample.meta.N_b})
    s = dataclasses.replace(sample, aux={**sample.aux, "g": np.ones(len(sample))}, meta=meta)
    grp = build_group_poststrat(meta, 0.4, "g")
    c1 = build_aux_case1(meta, 0.4)
    np.testing.assert_array_equal(grp.matrix(s), c1.matrix(s))
    np.testing.assert_array_equal(grp.targets, c1.targets)


def test_group_columns_and_closed_form(draw):
    sample, _ = draw
    s = with_groups(sample, np.random.default_rng(3))
    spec = build_group_poststrat(s.meta, 0.4, "g")
    X = spec.matrix(s)
    k = int(np.flatnonzero(s.domain == "ab")[0])
    h = str(int(s.variable("g")[k]))
    assert [spec.names[j] for j in np.flatnonzero(X[k])] == [f"ab|{h}"]
    closed = poststrat_closed_form(s, s.meta, 0.4, grouping="g")
    for dist in DISTANCES:
        res = calibrate(hartley_weights(s, 0.4), spec, dist)
        np.testing.assert_allclose(res.weights.values, closed.values, rtol=1e-10)


def test_group_margins_constraints(draw):
    sample, _ = draw
    s = with_groups(sample, np.random.default_rng(4))
    spec = build_group_poststrat(s.meta, None, "g", complete=False)
    res = calibrate(hartley_weights(s, 0.4), spec, "raking")
    np.testing.assert_allclose(spec.matrix(s).T @ res.weights.values, spec.targets, rtol=1e-9)


# ------------------------------------------------------------------ solver


def test_fixed_point_at_matching_targets(draw):
    sample, _ = draw
    base = hartley_weights(sample, 0.5)
    spec = build_aux_case1(sample.meta, 0.5)
    spec = dataclasses.replace(spec, targets=spec.matrix(sample).T @ base.values)
    for dist in DISTANCES:
        res = calibrate(base, spec, dist)
        assert res.iterations <= 1
        np.testing.assert_allclose(res.lam, 0.0, atol=1e-12)
        np.testing.assert_allclose(res.weights.values, base.values, rtol=1e-12)


def test_euclidean_matches_linear_solve(draw):
    sample, _ = draw
    base = hartley_weights(sample, 0.3)
    spec = build_aux_case3(sample.meta, 0.3, "x_A", "x_B")
    X = spec.matrix(sample)
    d = base.values
    lam = np.linalg.solve(X.T @ (d[:, None] * X), spec.targets - X.T @ d)
    expected = d * (1 + X @ lam)
    res = calibrate(base, spec, "euclidean")
    np.testing.assert_allclose(res.weights.values, expected, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("approach", ["dual", "single"])
def test_case1_distance_free(draw, approach):
    sample, _ = draw
    eta = 0.45 if approach == "dual" else None
    base = base_weights(sample, approach, eta)
    spec = build_aux_case1(sample.meta, eta, approach)
    closed = poststrat_closed_form(sample, sample.meta, eta, approach=approach)
    for dist in DISTANCES:
        res = calibrate(base, spec, dist)
        assert res.converged
        np.testing.assert_allclose(res.weights.values, closed.values, rtol=1e-10)


def test_eta_one_zero_target(draw):
    sample, _ = draw
    res = calibrate(hartley_weights(sample, 1.0), build_aux_case1(sample.meta, 1.0), "raking")
    assert res.converged
    assert np.all(res.weights.values[sample.masks["ba"]] == 0)


def test_logit_respects_bounds(draw):
    sample, _ = draw
    res = calibrate(hartley_weights(sample, 0.4),
                    build_aux_case3(sample.meta, 0.4, "x_A", "x_B"), "logit", bounds=(0.5, 2.0))
    assert res.converged
    r = res.ratios[np.isfinite(res.ratios)]
    assert r.min() > 0.5 and r.max() < 2.0


def test_infeasible_logit_does_not_converge(draw):
    sample, _ = draw
    spec = build_aux_case2(sample.meta)
    spec = dataclasses.replace(spec, targets=spec.targets * 5)
    res = calibrate(hartley_weights(sample, 0.4), spec, "logit")
    assert not res.converged


def test_collinear_constraints_raise(draw):
    sample, _ = draw
    spec = build_aux_case1(sample.meta, 0.5)
    spec = spec.extend(("dup",), (spec.columns[0],), [spec.targets[0]])
    with pytest.raises(CalibrationError, match="collinear"):
        calibrate(hartley_weights(sample, 0.5), spec)


def test_diagnostics(draw):
    sample, _ = draw
    res = calibrate(hartley_weights(sample, 0.5), build_aux_case2(sample.meta), "raking")
    diag = res.diagnostics()
    assert set(diag) == {"lambda", "iterations", "max_constraint_residual", "converged",
                         "negative_weights", "dropped_columns"}
    assert diag["max_constraint_residual"] < 1e-8 and diag["negative_weights"] == 0


def test_unknown_distance():
    with pytest.raises(ValueError):
        get_distance("hellinger")


# ------------------------------------------------------------- closed forms


def test_poststrat_arithmetic():
    # two s_ab units, d_A = 10, eta = 0.5, N_ab = 50: 0.5 * 10 * 50 / 20
    s = four_row_sample(d_A=np.array([5.0, 10.0, np.nan, np.nan]), meta=FrameMeta(55, 60, 50))
    s = s.take(np.array([0, 1, 1, 2, 3]))
    w = poststrat_closed_form(s, s.meta, 0.5).values
    np.testing.assert_allclose(w[1:3], [12.5, 12.5])
    assert w[0] == 5.0  # N_a_hat = N_a = 5 leaves s_a unchanged


def test_nab_direct_evaluation():
    s = four_row_sample(d_A=np.array([90.0, 45.0, np.nan, np.nan]),
                        d_B=np.array([np.nan, np.nan, 45.0, 70.0]),
                        meta=FrameMeta(140, 120))
    # H = 45, N_A_hat = 135, N_B_hat = 115
    expected = 45 * (90 * 120 + 70 * 140 - 90 * 70) / (90 * 115 + 70 * 135 - 90 * 70)
    assert nab_calibrated(s, s.meta, 0.5) == pytest.approx(expected, rel=1e-14)
    exact = four_row_sample(d_A=np.array([90.0, 45.0, np.nan, np.nan]),
                            d_B=np.array([np.nan, np.nan, 45.0, 70.0]), meta=FrameMeta(135, 115))
    assert nab_calibrated(exact, exact.meta, 0.5) == pytest.approx(45.0)


def test_nab_matches_case2_weights(draws):
    for sample, _ in draws:
        res = calibrate(hartley_weights(sample, 0.35), build_aux_case2(sample.meta))
        overlap = sample.masks["ab"] | sample.masks["ba"]
        assert rel(nab_calibrated(sample, sample.meta, 0.35),
                   res.weights.values[overlap].sum()) < 1e-8


def test_greg_matches_euclidean(draws):
    for sample, _ in draws[:5]:
        base = hartley_weights(sample, 0.6)
        spec = build_aux_case3(sample.meta, 0.6, "x_A", "x_B")
        est, _ = greg_estimate(base, spec, "y")
        cal = weighted_total(calibrate(base, spec).weights, "y")
        assert abs(est - cal) / abs(cal) < 1e-10


def test_greg_perfect_fit_and_hajek(draw):
    sample, _ = draw
    base = hartley_weights(sample, 0.5)
    spec = build_aux_case3(sample.meta, 0.5, "x_A", "x_B")
    X = spec.matrix(sample)
    beta = np.array([1.0, 2.0, -1.0, 3.0, 0.5, 0.25])
    est, b = greg_estimate(base, spec, X @ beta)
    np.testing.assert_allclose(b, beta, rtol=1e-8)
    assert est == pytest.approx(spec.targets @ beta, rel=1e-12)
    N = sample.meta.N
    one = spec.__class__(("1",), (lambda s: np.ones(len(s)),), np.array([N]), "n")
    y = sample.variable("y")
    est1, _ = greg_estimate(base, one, "y")
    assert est1 == pytest.approx(N * base.values @ y / base.values.sum(), rel=1e-12)


def test_xa_regression(draws):
    for sample, _ in draws[:5]:
        est, _ = xa_combined_regression(sample, sample.meta, 0.4, "y", "x_A")
        cal = calibrate(hartley_weights(sample, 0.4), build_aux_xa(sample.meta, 0.4, "x_A"))
        assert rel(est, weighted_total(cal.weights, "y")) < 1e-10


def test_xa_regression_degenerate(draw):
    sample, _ = draw
    s = dataclasses.replace(sample, aux={**sample.aux, "c": np.full(len(sample), 3.0)},
                            meta=dataclasses.replace(sample.meta, numeric_totals={
                                **sample.meta.numeric_totals, ("c", "A"): 3.0 * 1309}))
    with pytest.raises(ZeroDivisionError):
        xa_combined_regression(s, s.meta, 0.4, "y", "c")
    s2 = dataclasses.replace(sample, aux={**sample.aux, "yy": sample.variable("y")},
                             meta=dataclasses.replace(sample.meta, numeric_totals={
                                 **sample.meta.numeric_totals, ("yy", "A"): 1.0}))
    assert xa_combined_regression(s2, s2.meta, 0.4, "y", "yy")[1] == pytest.approx(1.0)


# ---------------------------------------------------- overlap restriction


def test_overlap_mean_constraint_holds(draw):
    sample, _ = draw
    eta, meta = 0.4, sample.meta
    res = calibrate_overlap_restricted(sample, meta, eta, "y")
    assert res.converged
    w, y, m = res.weights.values, sample.variable("y"), sample.masks
    mean_ab = w[m["ab"]] @ y[m["ab"]] / (eta * meta.N_ab)
    mean_ba = w[m["ba"]] @ y[m["ba"]] / ((1 - eta) * meta.N_ab)
    assert mean_ab == pytest.approx(mean_ba, rel=1e-9)


def test_overlap_constraint_inactive_when_means_agree():
    s = four_row_sample().take(np.array([0, 1, 1, 2, 2, 3]))
    s = dataclasses.replace(s, y={"y": np.array([1.0, 4.0, 6.0, 5.0, 5.0, 4.0])})
    spec = build_overlap_mean_constraint(build_aux_case1(s.meta, 0.5), 0.5, s.meta, "y")
    start = poststrat_closed_form(s, s.meta, 0.5)
    res = calibrate(start, spec, "kullback_leibler")
    assert abs(res.lam[-1]) < 1e-12
    assert res.max_constraint_residual < 1e-12


def primal_kl(d, X, t):
    """Direct SLSQP minimisation of sum d log(d/w) + w - d subject to X'w = t."""
    scale = d.mean()
    dd, tt = d / scale, t / scale

    def f(w):
        return float(np.sum(dd * np.log(dd / w) + w - dd))

    def grad(w):
        return 1.0 - dd / w

    cons = {"type": "eq", "fun": lambda w: X.T @ w - tt, "jac": lambda w: X.T}
    out = optimize.minimize(f, dd, jac=grad, constraints=[cons], method="SLSQP",
                            bounds=[(1e-9, None)] * len(d),
                            options={"ftol": 1e-14, "maxiter": 500})
    assert out.success
    return out.x * scale


@pytest.mark.filterwarnings("ignore:Values in x were outside bounds")
def test_restricted_kl_matches_primal_optimizer(draw):
    sample, _ = draw
    rng = np.random.default_rng(8)
    keep = np.concatenate([rng.choice(np.flatnonzero(sample.domain == dom), 4, replace=False)
                           for dom in ("a", "ab", "ba", "b")])
    small = sample.take(np.sort(keep))
    eta = 0.4
    res = calibrate_overlap_restricted(small, small.meta, eta, "y")
    start = poststrat_closed_form(small, small.meta, eta)
    spec = build_overlap_mean_constraint(build_aux_case1(small.meta, eta), eta, small.meta, "y")
    w = primal_kl(start.values, spec.matrix(small), spec.targets)
    np.testing.assert_allclose(res.weights.values, w, rtol=1e-5)
    assert weighted_total(res.weights, "y") == pytest.approx(w @ small.variable("y"), rel=1e-7)


def test_overlap_constraint_rejects_other_cases():
    with pytest.raises(ValueError):
        build_overlap_mean_constraint(build_aux_case2(FrameMeta(4, 4, 2)), 0.5,
                                      FrameMeta(4, 4, 2), "y")
