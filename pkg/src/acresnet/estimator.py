"""Scikit-learn style wrapper so the networks compose with sklearn tooling
(pipelines, cross-validation, grid search)."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import autodiff as ad
from . import data as dp
from . import training as tr
from .model import ModelSpec, build_model


class ResidualNetClassifier(BaseEstimator, ClassifierMixin):
    """Residual-network image classifier for 3x32x32 inputs.

    Parameters mirror TrainConfig; ``variant`` selects the classic
    identity-shortcut blocks or the accumulated-residual blocks.
    """

    def __init__(self, depth=8, variant="classic", epochs=10, batch_size=128,
                 learning_rate=0.1, momentum=0.9, weight_decay=1e-4,
                 milestones=(), augment=False, seed=0):
        self.depth = depth
        self.variant = variant
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.milestones = milestones
        self.augment = augment
        self.seed = seed

    def _as_images(self, X):
        X = check_array(X, allow_nd=True, dtype=np.float32)
        if X.ndim == 2 and X.shape[1] == 3 * 32 * 32:
            X = X.reshape(-1, 3, 32, 32)
        if X.ndim != 4 or X.shape[1:] != (3, 32, 32):
            raise ValueError(f"expected (n, 3, 32, 32) or (n, 3072) input, got {X.shape}")
        return X

    def fit(self, X, y):
        X_checked, y = check_X_y(X, y, allow_nd=True)
        X = self._as_images(X_checked)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        spec = ModelSpec(depth=self.depth, variant=self.variant,
                         num_classes=max(2, len(self.classes_)))
        train_ds = dp.Dataset(X, encoded.astype(np.int64), split="train")
        self.stats_ = dp.compute_channel_stats(X)
        config = tr.TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, base_lr=self.learning_rate,
            momentum=self.momentum, weight_decay=self.weight_decay,
            milestones=tuple(self.milestones), seed=self.seed, augment=self.augment)
        model = build_model(spec, seed=self.seed)
        # the training set doubles as the validation split for metrics
        self.model_, self.metrics_ = tr.train(model, train_ds, train_ds, config,
                                              stats=self.stats_)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = dp.normalize(self._as_images(X), self.stats_)
        out = []
        with ad.no_grad():
            for start in range(0, len(X), 256):
                logits = self.model_.forward(
                    ad.Variable(X[start : start + 256].astype(np.float32)),
                    training=False)
                out.append(logits.value)
        return np.concatenate(out)

    def predict_proba(self, X):
        z = self.decision_function(X)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        idx = self.decision_function(X).argmax(axis=1)
        return self.classes_[np.minimum(idx, len(self.classes_) - 1)]
