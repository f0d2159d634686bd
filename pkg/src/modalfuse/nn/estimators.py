"""Scikit-learn style wrapper around the neural-network engine.

Sequences are ragged, so ``X`` is a list of (T_i, dim) arrays for the
sequence architectures (or a plain 2-D matrix for MLP); sklearn's own array
validation is deliberately not applied to the ragged case. ``transform``
exposes penultimate features, which makes the SVM head swap a two-step
pipeline: fit this estimator, then fit an SVM on ``transform(X)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .models import ModelSpec
from .train import TrainConfig, extract_features, predict_logits, train


class NeuralNetEstimator(ClassifierMixin, BaseEstimator):
    """fit/predict/transform facade over one architecture branch."""

    def __init__(
        self,
        architecture: str = "mlp",
        head: str = "binary",
        n_classes: int = 2,
        hidden_widths: tuple[int, ...] = (32,),
        n_filters: int = 16,
        kernel_size: int = 2,
        lstm_hidden: int = 16,
        activation: str = "relu",
        epochs: int = 50,
        batch_size: int = 16,
        learning_rate: float = 1e-3,
        optimizer: str = "adam",
        early_stop_patience: int | None = None,
        seed: int = 0,
    ):
        self.architecture = architecture
        self.head = head
        self.n_classes = n_classes
        self.hidden_widths = hidden_widths
        self.n_filters = n_filters
        self.kernel_size = kernel_size
        self.lstm_hidden = lstm_hidden
        self.activation = activation
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.early_stop_patience = early_stop_patience
        self.seed = seed

    def _as_samples(self, X) -> list[np.ndarray]:
        if isinstance(X, np.ndarray) and X.ndim == 2 and self.architecture == "mlp":
            return [np.asarray(row, dtype=np.float64) for row in X]
        return [np.asarray(x, dtype=np.float64) for x in X]

    def fit(self, X, y, dev=None):
        samples = self._as_samples(X)
        y = np.asarray(y)
        input_dim = samples[0].shape[-1]
        spec = ModelSpec(
            architecture=self.architecture,
            input_dim=input_dim,
            head=self.head,
            n_classes=self.n_classes,
            hidden_widths=tuple(self.hidden_widths),
            n_filters=self.n_filters,
            kernel_size=self.kernel_size,
            lstm_hidden=self.lstm_hidden,
            activation=self.activation,
        )
        config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            early_stop_patience=self.early_stop_patience,
            seed=self.seed,
        )
        if self.head == "regression":
            targets = y.astype(np.float64)
        else:
            targets = y.astype(np.int64)
            self.classes_ = np.arange(spec.out_dim)
        self.model_ = train(spec, list(zip(samples, targets)), config, dev_data=dev)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return np.stack([predict_logits(self.model_, x) for x in self._as_samples(X)])

    def predict(self, X):
        check_is_fitted(self, "model_")
        logits = self.decision_function(X)
        if self.head == "regression":
            return logits[:, 0]
        return np.argmax(logits, axis=1)

    def transform(self, X):
        """Penultimate features for every sample (the SVM-swap export)."""
        check_is_fitted(self, "model_")
        return extract_features(self.model_, self._as_samples(X))
