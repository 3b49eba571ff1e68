import json

import numpy as np
import pytest

from pvanomaly.detectors import KINDS, REGISTRY, DetectorOptions, Orientation, fit_detector, load_detector
from pvanomaly.errors import FrameTooShort, SchemaMismatch

FAST = DetectorOptions(seed=3, window_len=4, epochs=2, hidden=(8,), dae_hidden=(6,),
                       iforest_trees=10, rf_trees=5, ocsvm_max_train=150)

EXPECTED = {
    "nn": (Orientation.LOW_IS_ANOMALOUS, "pdf-quantile", True),
    "dae": (Orientation.LOW_IS_ANOMALOUS, "pdf-quantile", True),
    "ocsvm": (Orientation.LOW_IS_ANOMALOUS, "median-minus-3sigma", True),
    "iforest": (Orientation.LOW_IS_ANOMALOUS, "median-minus-3sigma", True),
    "corrupt-rf": (Orientation.HIGH_IS_ANOMALOUS, "fixed-probability", False),
    "pca-ch": (Orientation.HIGH_IS_ANOMALOUS, "outside-hull", False),
    "ipca": (Orientation.HIGH_IS_ANOMALOUS, "mean-plus-3sigma", False),
}


@pytest.fixture(scope="module")
def Z():
    rng = np.random.default_rng(0)
    t = np.arange(300)
    base = np.c_[np.sin(t / 10), np.cos(t / 10), np.sin(t / 7)]
    return base + 0.05 * rng.normal(size=base.shape)


@pytest.fixture(scope="module")
def fitted(Z):
    return {k: fit_detector(k, Z, FAST) for k in KINDS}


def test_registry_covers_seven_kinds():
    assert set(REGISTRY) == set(KINDS) == set(EXPECTED)


@pytest.mark.parametrize("kind", KINDS)
def test_class_contract(kind):
    cls = REGISTRY[kind]
    assert (cls.orientation, cls.rule, cls.normalized) == EXPECTED[kind]


@pytest.mark.parametrize("kind", KINDS)
def test_score_shapes_and_history(kind, fitted, Z):
    det = fitted[kind]
    h = det.required_history()
    assert h == {"nn": 4, "dae": 3}.get(kind, 0)
    s = det.score(Z)
    assert s.shape == (Z.shape[0] - h,)
    assert np.all(np.isfinite(s))
    rows = np.array([h, h + 5, 299])
    np.testing.assert_array_equal(det.score(Z, rows), s[rows - h])
    if h:
        with pytest.raises(FrameTooShort):
            det.score(Z, np.array([h - 1]))
    with pytest.raises(SchemaMismatch):
        det.score(Z[:, :2])


@pytest.mark.parametrize("kind", KINDS)
def test_serialization_round_trip(kind, fitted, Z):
    det = fitted[kind]
    back = load_detector(det.to_json())
    assert type(back) is type(det)
    np.testing.assert_array_equal(back.score(Z), det.score(Z))
    np.testing.assert_array_equal(back.train_scores, det.train_scores)
    assert back.to_json() == det.to_json()


@pytest.mark.parametrize("kind", KINDS)
def test_fit_is_deterministic(kind, fitted, Z):
    again = fit_detector(kind, Z, FAST)
    assert again.to_json() == fitted[kind].to_json()


def test_outlier_scores_more_anomalous(fitted, Z):
    row = 200
    # push along the least-variance direction, off every fitted subspace
    weakest = np.linalg.svd(Z - Z.mean(axis=0))[2][-1]
    far = Z.copy()
    far[row] += 8.0 * weakest
    # corrupt-rf learns "pulled toward zero", not "far away"
    shrunk = Z.copy()
    shrunk[row] *= [1.0, 0.0, 0.0]
    for kind, det in fitted.items():
        bad = shrunk if kind == "corrupt-rf" else far
        s = det.score(bad, np.array([row - 40, row]))
        graded = -s if det.orientation is Orientation.LOW_IS_ANOMALOUS else s
        assert graded[1] > graded[0], kind


def test_pca_hull_train_scores_are_zero(fitted, Z):
    assert np.all(fitted["pca-ch"].score(Z) == 0)


def test_residual_holdout_threshold(fitted):
    nn = fitted["nn"]
    rho = nn.state["residual"].threshold
    assert rho == np.quantile(nn.train_scores, 0.001, method="lower")


def test_ocsvm_subsample_cap(fitted):
    assert len(fitted["ocsvm"].model.dual_coeffs) <= 150


def test_load_detector_rejects_foreign_docs(fitted):
    with pytest.raises(SchemaMismatch):
        load_detector({"detector": "svm"})
    doc = json.loads(fitted["ipca"].to_json())
    doc["model"]["kind"] = "pca-ch"
    with pytest.raises(SchemaMismatch):
        load_detector(doc)
    with pytest.raises(ValueError):
        fit_detector("knn", np.zeros((3, 2)))
