"""scikit-learn style front door for occlusion-consistency training.

ShieldClassifier wraps the seeded training pipeline behind the usual
fit / predict / predict_proba / score surface so it composes with
sklearn tooling (clone, get_params, CV loops). X is a stack of images,
(n, channels, height, width) or (n, height, width) for grayscale, with
values in [0, 1].
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .data import Dataset
from .errors import ShapeError
from .shield import ShieldConfig
from .training import OptimizerConfig, RunManifest, train


def check_image_array(X, expected_shape=None) -> np.ndarray:
    """Coerce to (n, c, h, w) float64, check finiteness and the [0, 1] range."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[:, None, :, :]
    if X.ndim != 4:
        raise ShapeError(f"X must be (n, c, h, w) or (n, h, w), got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError(f"image values must lie in [0, 1], got range "
                         f"[{X.min()}, {X.max()}]")
    if expected_shape is not None and tuple(X.shape[1:]) != tuple(expected_shape):
        raise ShapeError(f"images have shape {X.shape[1:]}, the fitted model "
                         f"expects {tuple(expected_shape)}")
    return X


def check_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ShapeError(f"y must be a length-{n_samples} vector, got shape {y.shape}")
    return y


class ShieldClassifier(BaseEstimator, ClassifierMixin):
    """Image classifier trained with masked-input consistency regularization.

    Parameters mirror the experiment pipeline: `lambda_pct` is the
    percentage of grid segments hidden per example, `shield_weight`
    scales the regularization term (0 disables it), and the remaining
    knobs configure the optimizer and the validation-split training loop.
    """

    def __init__(self, arch: str = "mlp", epochs: int = 30, batch_size: int = 32,
                 lambda_pct: float = 10.0, shield_weight: float = 1.0,
                 grid_rows: int = 8, grid_cols: int = 8, lr: float = 1e-3,
                 weight_decay: float = 1e-4, val_fraction: float = 0.1,
                 random_state: int = 0):
        self.arch = arch
        self.epochs = epochs
        self.batch_size = batch_size
        self.lambda_pct = lambda_pct
        self.shield_weight = shield_weight
        self.grid_rows = grid_rows
        self.grid_cols = grid_cols
        self.lr = lr
        self.weight_decay = weight_decay
        self.val_fraction = val_fraction
        self.random_state = random_state

    def _manifest(self) -> RunManifest:
        return RunManifest(
            dataset_id="fit", model_id=self.arch, seed=self.random_state,
            shield=ShieldConfig(lambda_pct=self.lambda_pct, grid_rows=self.grid_rows,
                                grid_cols=self.grid_cols, weight=self.shield_weight),
            optimizer=OptimizerConfig(lr=self.lr, weight_decay=self.weight_decay),
            epochs=self.epochs, batch_size=self.batch_size,
            train_fraction=1.0 - self.val_fraction)

    def fit(self, X, y) -> "ShieldClassifier":
        X = check_image_array(X)
        y = check_labels(y, X.shape[0])
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes to fit")
        dataset = Dataset("fit", X, encoded, num_classes=len(self.classes_))
        self.model_, self.train_log_ = train(self._manifest(), dataset)
        self.input_shape_ = tuple(X.shape[1:])
        self.n_features_in_ = int(np.prod(self.input_shape_))
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError("this ShieldClassifier is not fitted; call fit first")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_image_array(X, expected_shape=self.input_shape_)
        return self.model_.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
