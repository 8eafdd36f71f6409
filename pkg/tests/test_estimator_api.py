import numpy as np
import pytest
from sklearn.base import clone

from dualcal.calibration import CalibrationError, build_aux_case3, calibrate
from dualcal.estimator import Calibrator, DualFrameCalibration
from dualcal.estimators import hartley_weights, weighted_total


def test_calibrator_hits_totals():
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(30), rng.normal(5, 1, 30)])
    d = rng.uniform(1, 3, 30)
    t = X.T @ d * np.array([1.05, 0.97])
    for dist in ("euclidean", "raking", "logit", "kullback_leibler"):
        cal = Calibrator(distance=dist).fit(X, totals=t, sample_weight=d)
        assert cal.converged_
        np.testing.assert_allclose(cal.weights_ @ X, t, rtol=1e-9)
        np.testing.assert_allclose(cal.transform(X) * d, cal.weights_, rtol=1e-12)


def test_calibrator_validation():
    X = np.ones((3, 1))
    with pytest.raises(ValueError):
        Calibrator().fit(X, totals=[1.0, 2.0])
    with pytest.raises(ValueError):
        Calibrator().fit(X, totals=[3.0], sample_weight=[1.0, -1.0, 1.0])
    cal = Calibrator().fit(X, totals=[3.0])
    with pytest.raises(ValueError):
        cal.transform(np.ones((2, 2)))


def test_calibrator_params_and_clone():
    cal = Calibrator(distance="logit", bounds=(0.5, 2.0))
    assert clone(cal).get_params()["bounds"] == (0.5, 2.0)


def test_dual_frame_estimator_matches_functional(draw):
    sample, designs = draw
    est = DualFrameCalibration(aux_case="3", x_vars=("x_A", "x_B"), distance="raking",
                               eta=0.4).fit(sample, designs)
    res = calibrate(hartley_weights(sample, 0.4),
                    build_aux_case3(sample.meta, 0.4, "x_A", "x_B"), "raking")
    assert est.estimate("y") == pytest.approx(weighted_total(res.weights, "y"), rel=1e-12)


def test_dual_frame_eta_estimated(draw):
    sample, designs = draw
    est = DualFrameCalibration(aux_case="1").fit(sample, designs)
    assert 0.0 < est.eta_ < 1.0
    single = DualFrameCalibration(approach="single", aux_case="1").fit(sample, designs)
    assert single.eta_ is None


def test_dual_frame_variance_keeps_params(draw):
    sample, designs = draw
    est = DualFrameCalibration(aux_case="1", eta="estimate").fit(sample, designs)
    lin = est.variance("y", "linearization")
    jk = est.variance("y", "jackknife-fpc")
    assert est.get_params()["eta"] == "estimate"
    assert lin.variance > 0 and jk.variance > 0
    with pytest.raises(ValueError):
        est.variance("y", "bootstrap")


def test_dual_frame_nonconvergence(draw):
    sample, designs = draw
    est = DualFrameCalibration(aux_case="2", distance="logit", bounds=(0.9999, 1.0001), eta=0.5)
    with pytest.raises(CalibrationError):
        est.fit(sample, designs)


def test_overlap_restriction_option(draw):
    sample, designs = draw
    est = DualFrameCalibration(aux_case="1", distance="kullback_leibler", eta=0.4,
                               overlap_variable="y").fit(sample, designs)
    assert est.result_.converged
    with pytest.raises(ValueError):
        est.variance("y", "linearization")
