import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from shieldlab.data import synth_shapes
from shieldlab.errors import ShapeError
from shieldlab.estimator import ShieldClassifier, check_image_array, check_labels


@pytest.fixture(scope="module")
def fitted():
    ds = synth_shapes(20, classes=("bar", "blob"), size=8, noise=0.1, seed=0)
    labels = np.where(ds.labels == 0, 5, 9)  # non-contiguous label space
    clf = ShieldClassifier(epochs=8, lambda_pct=10.0, grid_rows=4, grid_cols=4,
                           lr=5e-3, random_state=1)
    return clf.fit(ds.images, labels), ds, labels


def test_get_set_params_roundtrip():
    clf = ShieldClassifier(epochs=3, lambda_pct=7.5)
    params = clf.get_params()
    assert params["epochs"] == 3 and params["lambda_pct"] == 7.5
    clf.set_params(epochs=5)
    assert clf.epochs == 5


def test_clone_preserves_params():
    clf = ShieldClassifier(lambda_pct=12.0, shield_weight=0.5, random_state=7)
    twin = clone(clf)
    assert twin.get_params() == clf.get_params()


def test_fit_predict_original_label_space(fitted):
    clf, ds, labels = fitted
    assert np.array_equal(clf.classes_, [5, 9])
    preds = clf.predict(ds.images)
    assert set(np.unique(preds)) <= {5, 9}
    assert (preds == labels).mean() >= 0.9


def test_predict_proba_rows_sum_to_one(fitted):
    clf, ds, _ = fitted
    probs = clf.predict_proba(ds.images[:5])
    assert probs.shape == (5, 2)
    assert np.all(np.abs(probs.sum(axis=1) - 1.0) < 1e-12)


def test_score_is_accuracy(fitted):
    clf, ds, labels = fitted
    expected = (clf.predict(ds.images) == labels).mean()
    assert clf.score(ds.images, labels) == expected


def test_grayscale_3d_input_accepted(fitted):
    clf, ds, _ = fitted
    squeezed = ds.images[:4, 0]  # (n, h, w)
    probs = clf.predict_proba(squeezed)
    assert probs.shape == (4, 2)


def test_unfitted_predict_raises():
    with pytest.raises(NotFittedError):
        ShieldClassifier().predict(np.zeros((2, 1, 8, 8)))


def test_fit_rejects_single_class():
    X = np.zeros((4, 1, 8, 8))
    with pytest.raises(ValueError, match="2 classes"):
        ShieldClassifier(epochs=1).fit(X, np.zeros(4))


def test_check_image_array_validation():
    with pytest.raises(ShapeError):
        check_image_array(np.zeros((4, 8)))
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        check_image_array(np.full((2, 1, 4, 4), 2.0))
    with pytest.raises(ValueError, match="finite"):
        check_image_array(np.full((2, 1, 4, 4), np.nan))
    coerced = check_image_array(np.zeros((2, 4, 4)))
    assert coerced.shape == (2, 1, 4, 4)


def test_check_image_array_shape_guard(fitted):
    clf, _, _ = fitted
    with pytest.raises(ShapeError, match="expects"):
        clf.predict_proba(np.zeros((2, 1, 16, 16)))


def test_check_labels_validation():
    with pytest.raises(ShapeError):
        check_labels(np.zeros((3, 2)), 3)
    with pytest.raises(ShapeError):
        check_labels(np.zeros(4), 3)


def test_estimator_deterministic_per_random_state():
    ds = synth_shapes(10, classes=("bar", "blob"), size=8, noise=0.1, seed=2)
    a = ShieldClassifier(epochs=3, random_state=3).fit(ds.images, ds.labels)
    b = ShieldClassifier(epochs=3, random_state=3).fit(ds.images, ds.labels)
    assert np.array_equal(a.predict_proba(ds.images), b.predict_proba(ds.images))
